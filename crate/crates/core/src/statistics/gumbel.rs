use crate::error::{Error, Result};
use crate::statistics::ks::{ks_statistic, KsResult};

/// Gumbel law P[max <= z] = exp(-(c / lambda) e^{-lambda z}) with lambda fixed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GumbelFit {
    pub lambda: f64,
    pub c_hat: f64,
    pub ks: KsResult,
}

pub fn gumbel_cdf(z: f64, lambda: f64, c: f64) -> f64 {
    (-(c / lambda) * (-lambda * z).exp()).exp()
}

/// Maximum-likelihood fit of c: c_hat = lambda N / sum_j e^{-lambda z_j}.
pub fn fit_gumbel(samples: &[f64], lambda: f64) -> Result<GumbelFit> {
    if samples.len() < 200 || samples.iter().any(|z| !z.is_finite()) {
        return Err(Error::InsufficientData(format!("gumbel fit needs >= 200 finite samples, got {}", samples.len())));
    }
    if !(lambda > 0.0) {
        return Err(Error::OutOfDomain(format!("gumbel fit needs lambda > 0, got {lambda}")));
    }
    let lo = samples.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = samples.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if lo == hi {
        return Err(Error::Degenerate("all maxima are equal".into()));
    }
    // log sum e^{-lambda z}, shifted by the smallest sample
    let s: f64 = samples.iter().map(|&z| (-lambda * (z - lo)).exp()).sum();
    let log_c = (lambda * samples.len() as f64).ln() - (s.ln() - lambda * lo);
    let c_hat = log_c.exp();
    let ks = ks_statistic(samples, |z| gumbel_cdf(z, lambda, c_hat));
    Ok(GumbelFit { lambda, c_hat, ks })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use rand::Rng;

    fn draw(n: usize, lambda: f64, c: f64, seed: u64) -> Vec<f64> {
        let mut rng = stream(seed, 0);
        // inverse of exp(-(c/lambda) e^{-lambda z})
        (0..n).map(|_| ((c / lambda) / -(rng.random::<f64>()).ln()).ln() / lambda).collect()
    }

    #[test]
    fn standard_gumbel_recovers_c_one() {
        let f = fit_gumbel(&draw(5000, 1.0, 1.0, 1), 1.0).unwrap();
        assert!((f.c_hat - 1.0).abs() < 0.06, "{}", f.c_hat);
        assert!(f.ks.p > 0.01);
    }

    #[test]
    fn bias_is_small_at_ten_thousand() {
        for (lambda, c) in [(2.0, 0.3), (0.5, 4.0)] {
            let f = fit_gumbel(&draw(10_000, lambda, c, 7), lambda).unwrap();
            assert!((f.c_hat / c - 1.0).abs() < 0.04, "{lambda} {c}: {}", f.c_hat);
        }
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(fit_gumbel(&[1.0; 300], 1.0), Err(Error::Degenerate(_))));
        assert!(fit_gumbel(&[1.0; 20], 1.0).is_err());
        assert!(fit_gumbel(&draw(300, 1.0, 1.0, 2), -1.0).is_err());
    }
}
