//! Diagonal Gaussian policy head over the two raw action dimensions.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

/// Lower bound on the standard deviation, in units of the action half-width.
pub const STD_FLOOR: f64 = 1e-3;

const HALF_LN_TWO_PI: f64 = 0.918_938_533_204_672_8;

pub fn gaussian_log_density(x: f64, mean: f64, std: f64) -> f64 {
    let z = (x - mean) / std;
    -0.5 * z * z - std.ln() - HALF_LN_TWO_PI
}

/// Distribution parameters decoded from the four actor outputs
/// `[mean_relay, mean_power, log_std_relay, log_std_power]`.
///
/// Each dimension `d` with scale `(center, half_width)` gets
/// `mean = center + half_width * tanh(o_d)` and
/// `std = half_width * max(exp(o_{d+2}), STD_FLOOR)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianHead {
    pub mean: [f64; 2],
    pub std: [f64; 2],
    floored: [bool; 2],
    /// `d mean / d o` per dimension.
    mean_slope: [f64; 2],
}

impl GaussianHead {
    pub const OUTPUTS: usize = 4;

    pub fn from_outputs(outputs: &[f64], scale: [(f64, f64); 2]) -> Self {
        debug_assert_eq!(outputs.len(), Self::OUTPUTS);
        let mut head = GaussianHead {
            mean: [0.0; 2],
            std: [0.0; 2],
            floored: [false; 2],
            mean_slope: [0.0; 2],
        };
        for d in 0..2 {
            let (center, hw) = scale[d];
            let t = outputs[d].tanh();
            head.mean[d] = center + hw * t;
            head.mean_slope[d] = hw * (1.0 - t * t);
            let e = outputs[d + 2].exp();
            head.floored[d] = !(e > STD_FLOOR);
            head.std[d] = hw * e.max(STD_FLOOR);
        }
        head
    }

    /// Joint log-density of a raw action.
    pub fn log_prob(&self, x: [f64; 2]) -> f64 {
        (0..2).map(|d| gaussian_log_density(x[d], self.mean[d], self.std[d])).sum()
    }

    /// Gradient of [`GaussianHead::log_prob`] with respect to the four raw
    /// network outputs.
    pub fn log_prob_grad(&self, x: [f64; 2]) -> [f64; 4] {
        let mut g = [0.0; 4];
        for d in 0..2 {
            let z = (x[d] - self.mean[d]) / self.std[d];
            g[d] = z / self.std[d] * self.mean_slope[d];
            g[d + 2] = if self.floored[d] { 0.0 } else { z * z - 1.0 };
        }
        g
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> [f64; 2] {
        let mut x = [0.0; 2];
        for d in 0..2 {
            let n: f64 = StandardNormal.sample(rng);
            x[d] = self.mean[d] + self.std[d] * n;
        }
        x
    }
}

/// Samples a raw action and returns it with its log-density.
pub fn log_prob_and_sample<R: Rng + ?Sized>(head: &GaussianHead, rng: &mut R) -> ([f64; 2], f64) {
    let x = head.sample(rng);
    (x, head.log_prob(x))
}
