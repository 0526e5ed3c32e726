use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::NetworkConfig;
use crate::error::{Error, Result};

/// Per-element variance `h_0 * d^-alpha` of a link at distance `d`.
pub fn link_variance(path_loss_constant: f64, path_loss_exponent: f64, distance: f64) -> f64 {
    path_loss_constant * distance.powf(-path_loss_exponent)
}

/// Draws `n` i.i.d. circularly-symmetric complex Gaussian elements with
/// total variance `variance` (each of the real and imaginary parts has
/// variance `variance / 2`).
pub fn sample_channel<R: Rng + ?Sized>(rng: &mut R, variance: f64, n: usize) -> Result<Vec<Complex64>> {
    if n == 0 {
        return Err(Error::invalid("channel vector length must be >= 1"));
    }
    let mut out = vec![Complex64::new(0.0, 0.0); n];
    sample_channel_into(rng, variance, &mut out)?;
    Ok(out)
}

pub fn sample_channel_into<R: Rng + ?Sized>(rng: &mut R, variance: f64, out: &mut [Complex64]) -> Result<()> {
    if !(variance.is_finite() && variance > 0.0) {
        return Err(Error::invalid(format!("channel variance must be > 0, got {variance}")));
    }
    if out.is_empty() {
        return Err(Error::invalid("channel vector length must be >= 1"));
    }
    let sd = (variance / 2.0).sqrt();
    for h in out.iter_mut() {
        let re: f64 = StandardNormal.sample(rng);
        let im: f64 = StandardNormal.sample(rng);
        *h = Complex64::new(sd * re, sd * im);
    }
    Ok(())
}

pub fn squared_norm(h: &[Complex64]) -> f64 {
    h.iter().map(|c| c.norm_sqr()).sum()
}

/// One snapshot of every source-relay and relay-destination channel vector.
#[derive(Debug, Clone)]
pub struct ChannelRealization {
    pub source_relay: Vec<Vec<Complex64>>,
    pub relay_destination: Vec<Vec<Complex64>>,
}

impl ChannelRealization {
    pub fn sample<R: Rng + ?Sized>(
        rng: &mut R,
        network: &NetworkConfig,
        d_sk: &[f64],
        d_kd: &[f64],
    ) -> Result<Self> {
        if d_sk.len() != network.relays || d_kd.len() != network.relays {
            return Err(Error::Shape {
                context: "relay distances",
                expected: network.relays,
                got: d_sk.len().min(d_kd.len()),
            });
        }
        let var = |d: f64| link_variance(network.path_loss_constant, network.path_loss_exponent, d);
        let mut source_relay = Vec::with_capacity(network.relays);
        let mut relay_destination = Vec::with_capacity(network.relays);
        for k in 0..network.relays {
            source_relay.push(sample_channel(rng, var(d_sk[k]), network.source_antennas)?);
            relay_destination.push(sample_channel(rng, var(d_kd[k]), network.destination_antennas)?);
        }
        Ok(Self {
            source_relay,
            relay_destination,
        })
    }

    pub fn gains(&self, relay: usize) -> (f64, f64) {
        (
            squared_norm(&self.source_relay[relay]),
            squared_norm(&self.relay_destination[relay]),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    #[test]
    fn unit_variance_norm_mean() {
        let mut r = rng::stream(11, &[]);
        let h = sample_channel(&mut r, 1.0, 1_000_000).unwrap();
        let mean = squared_norm(&h) / h.len() as f64;
        assert!((mean - 1.0).abs() < 0.01, "mean {mean}");
    }

    #[test]
    fn expected_norm_is_length_times_variance() {
        let mut r = rng::stream(12, &[]);
        let draws = 200_000;
        let total: f64 = (0..draws)
            .map(|_| squared_norm(&sample_channel(&mut r, 0.25, 4).unwrap()))
            .sum();
        let mean = total / draws as f64;
        // std of ||h||^2 is 0.5 here, so the standard error is ~1.1e-3
        assert!((mean - 1.0).abs() < 0.01, "mean {mean}");
    }

    #[test]
    fn real_and_imaginary_parts_split_the_variance() {
        let mut r = rng::stream(13, &[]);
        let h = sample_channel(&mut r, 2.0, 400_000).unwrap();
        let n = h.len() as f64;
        let var_re = h.iter().map(|c| c.re * c.re).sum::<f64>() / n;
        let var_im = h.iter().map(|c| c.im * c.im).sum::<f64>() / n;
        let mean_re = h.iter().map(|c| c.re).sum::<f64>() / n;
        assert!((var_re - 1.0).abs() < 0.01);
        assert!((var_im - 1.0).abs() < 0.01);
        assert!(mean_re.abs() < 0.01);
    }

    #[test]
    fn deterministic_under_fixed_seed() {
        let a = sample_channel(&mut rng::stream(5, &[]), 1.0, 1).unwrap();
        let b = sample_channel(&mut rng::stream(5, &[]), 1.0, 1).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_bad_arguments() {
        let mut r = rng::stream(1, &[]);
        assert!(matches!(sample_channel(&mut r, 0.0, 3), Err(Error::InvalidArgument(_))));
        assert!(matches!(sample_channel(&mut r, -1.0, 3), Err(Error::InvalidArgument(_))));
        assert!(matches!(sample_channel(&mut r, 1.0, 0), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn realization_shapes_follow_antenna_counts() {
        let net = NetworkConfig::default();
        let mut r = rng::stream(3, &[]);
        let real = ChannelRealization::sample(&mut r, &net, &[30.0, 40.0, 50.0], &[70.0, 60.0, 50.0]).unwrap();
        assert_eq!(real.source_relay.len(), 3);
        assert_eq!(real.source_relay[0].len(), net.source_antennas);
        assert_eq!(real.relay_destination[2].len(), net.destination_antennas);
        let (g1, g2) = real.gains(1);
        assert!(g1.is_finite() && g1 >= 0.0 && g2.is_finite() && g2 >= 0.0);
    }
}
