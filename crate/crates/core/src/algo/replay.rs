use rand::Rng;

use crate::error::{Error, Result};

/// Fixed-capacity ring buffer; once full, each push overwrites the oldest item.
#[derive(Debug, Clone)]
pub struct ReplayBuffer<T> {
    items: Vec<T>,
    capacity: usize,
    next: usize,
}

impl<T> ReplayBuffer<T> {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::invalid("replay capacity must be >= 1"));
        }
        Ok(Self {
            items: Vec::with_capacity(capacity.min(1 << 16)),
            capacity,
            next: 0,
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn push(&mut self, item: T) {
        if self.items.len() < self.capacity {
            self.items.push(item);
        } else {
            self.items[self.next] = item;
        }
        self.next = (self.next + 1) % self.capacity;
    }

    /// `batch` uniform draws with replacement.
    pub fn sample<R: Rng + ?Sized>(&self, batch: usize, rng: &mut R) -> Vec<&T> {
        if self.items.is_empty() {
            return Vec::new();
        }
        (0..batch)
            .map(|_| &self.items[rng.random_range(0..self.items.len())])
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use proptest::prelude::*;

    #[test]
    fn overwrites_oldest() {
        let mut b = ReplayBuffer::new(3).unwrap();
        for i in 0..5 {
            b.push(i);
        }
        let mut all: Vec<i32> = b.items.clone();
        all.sort();
        assert_eq!(all, vec![2, 3, 4]);
        assert!(ReplayBuffer::<i32>::new(0).is_err());
        assert!(ReplayBuffer::<i32>::new(2).unwrap().sample(4, &mut rng::stream(0, &[])).is_empty());
    }

    proptest! {
        #[test]
        fn never_exceeds_capacity(cap in 1usize..50, pushes in 0usize..200) {
            let mut b = ReplayBuffer::new(cap).unwrap();
            for i in 0..pushes {
                b.push(i);
                prop_assert!(b.len() <= cap);
            }
            prop_assert_eq!(b.len(), pushes.min(cap));
        }
    }
}
