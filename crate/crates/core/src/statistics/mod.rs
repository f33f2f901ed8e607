//! Estimators and tests built on simulation output.

pub mod estimate;
pub mod experiments;
pub mod gumbel;
pub mod ks;
pub mod regression;

pub use estimate::{estimate_c, estimate_c_direct, CEstimate};
pub use experiments::{
    boundary_decay_test, intensity_check, superposability_test, BoundaryReport, BoundaryVerdict, IntensityCheck,
    SuperposabilityReport,
};
pub use gumbel::{fit_gumbel, gumbel_cdf, GumbelFit};
pub use ks::{ks_statistic, ks_two_sample, KsResult};
pub use regression::{speed_fit, speed_fit_clustered, SpeedFit};

/// Wilson score interval for `k` successes out of `n` at normal quantile `z`.
pub fn wilson_interval(k: u64, n: u64, z: f64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let nf = n as f64;
    let p = k as f64 / nf;
    let z2 = z * z;
    let denom = 1.0 + z2 / nf;
    let center = (p + z2 / (2.0 * nf)) / denom;
    let half = z * (p * (1.0 - p) / nf + z2 / (4.0 * nf * nf)).sqrt() / denom;
    ((center - half).max(0.0), (center + half).min(1.0))
}

pub(crate) fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Mean after dropping the `frac` share of values from each end.
pub fn trimmed_mean(values: &[f64], frac: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let k = (frac * v.len() as f64).floor() as usize;
    let kept = &v[k..v.len() - k];
    if kept.is_empty() {
        return f64::NAN;
    }
    mean(kept)
}
