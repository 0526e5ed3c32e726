use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How the two per-hop threshold tests combine into an outage event.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutageMode {
    /// Outage only when both hops miss their thresholds.
    And,
    /// Outage when either hop misses its threshold (conventional DF outage).
    #[default]
    Or,
}

/// Achievable rate `log2(1 + power * gain / noise)` in bits/s/Hz.
pub fn mutual_information(power: f64, gain: f64, noise: f64) -> Result<f64> {
    if !(noise > 0.0) {
        return Err(Error::invalid(format!("noise power must be > 0, got {noise}")));
    }
    if power < 0.0 || gain < 0.0 {
        return Err(Error::invalid("power and gain must be non-negative"));
    }
    Ok((power * gain / noise).ln_1p() / std::f64::consts::LN_2)
}

/// Returns 1 on outage, 0 otherwise.
pub fn outage_indicator(i_k: f64, i_d: f64, lambda_k: f64, lambda_d: f64, mode: OutageMode) -> u8 {
    let relay_fails = i_k < lambda_k;
    let destination_fails = i_d < lambda_d;
    let outage = match mode {
        OutageMode::And => relay_fails && destination_fails,
        OutageMode::Or => relay_fails || destination_fails,
    };
    u8::from(outage)
}

/// Exact outage probability of a single-antenna Rayleigh link, where the
/// channel gain is exponential with mean `sigma2`.
pub fn closed_form_outage(power: f64, lambda: f64, sigma2: f64, noise: f64) -> Result<f64> {
    if !(sigma2 > 0.0 && noise > 0.0) || power < 0.0 || lambda < 0.0 {
        return Err(Error::invalid("closed_form_outage: invalid argument"));
    }
    if lambda == 0.0 {
        return Ok(0.0);
    }
    if power == 0.0 {
        return Ok(1.0);
    }
    let snr_needed = lambda.exp2() - 1.0;
    Ok(-(-snr_needed * noise / (power * sigma2)).exp_m1())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{sample_channel, squared_norm};
    use crate::rng;

    #[test]
    fn mutual_information_examples() {
        assert_eq!(mutual_information(0.0, 5.0, 0.001).unwrap(), 0.0);
        let v = mutual_information(0.05, 2.0, 0.001).unwrap();
        assert!((v - 101f64.log2()).abs() < 1e-12);
        assert!((v - 6.6582).abs() < 1e-4);
        assert!((mutual_information(0.001, 1.0, 0.001).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn mutual_information_rejects_bad_noise() {
        assert!(mutual_information(1.0, 1.0, 0.0).is_err());
        assert!(mutual_information(1.0, 1.0, -1.0).is_err());
    }

    #[test]
    fn mutual_information_is_monotone() {
        let mut prev = 0.0;
        for i in 1..50 {
            let v = mutual_information(i as f64 * 0.01, 1.5, 0.01).unwrap();
            assert!(v > prev);
            prev = v;
        }
    }

    #[test]
    fn outage_truth_table() {
        assert_eq!(outage_indicator(0.5, 0.5, 1.0, 1.0, OutageMode::And), 1);
        assert_eq!(outage_indicator(2.0, 2.0, 1.0, 1.0, OutageMode::And), 0);
        assert_eq!(outage_indicator(0.5, 2.0, 1.0, 1.0, OutageMode::And), 0);
        assert_eq!(outage_indicator(0.5, 2.0, 1.0, 1.0, OutageMode::Or), 1);
        assert_eq!(outage_indicator(2.0, 0.5, 1.0, 1.0, OutageMode::Or), 1);
        assert_eq!(outage_indicator(2.0, 2.0, 1.0, 1.0, OutageMode::Or), 0);
        // zero thresholds never produce outage
        assert_eq!(outage_indicator(0.0, 0.0, 0.0, 0.0, OutageMode::Or), 0);
    }

    #[test]
    fn closed_form_examples() {
        let p = closed_form_outage(0.05, 1.0, 1.0, 0.001).unwrap();
        assert!((p - (1.0 - (-0.02f64).exp())).abs() < 1e-15);
        assert!((p - 0.019801).abs() < 1e-6);
        assert_eq!(closed_form_outage(0.05, 0.0, 1.0, 0.001).unwrap(), 0.0);
        assert_eq!(closed_form_outage(0.0, 1.0, 1.0, 0.001).unwrap(), 1.0);
        assert!(closed_form_outage(1e12, 1.0, 1.0, 0.001).unwrap() < 1e-12);
    }

    #[test]
    fn monte_carlo_matches_closed_form() {
        let mut r = rng::stream(99, &[]);
        let (power, lambda, sigma2, noise) = (0.05, 1.0, 1.0, 0.001);
        let n = 1_000_000;
        let mut outages = 0usize;
        for _ in 0..n {
            let h = sample_channel(&mut r, sigma2, 1).unwrap();
            let rate = mutual_information(power, squared_norm(&h), noise).unwrap();
            outages += usize::from(rate < lambda);
        }
        let p = closed_form_outage(power, lambda, sigma2, noise).unwrap();
        let freq = outages as f64 / n as f64;
        let se = (p * (1.0 - p) / n as f64).sqrt();
        assert!((freq - p).abs() < 3.0 * se, "freq {freq} vs {p} (se {se})");
    }
}
