//! Equilibrium experiments: superposability of the limit process and decay
//! of the exponential moment on the boundary.

use std::fmt;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::ClusterModel;
use crate::rng::{derive_seed, stream};
use crate::simulator::{GenerationSummary, ScenarioConfig, WindowedSampler, DEFAULT_POPULATION_CAP};
use crate::statistics::estimate::{estimate_c, CEstimate, EstimateOptions};
use crate::statistics::ks::{ks_two_sample, KsResult};
use crate::statistics::regression::weighted_slope;

pub const DEFAULT_BURN_IN: u32 = 20;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SuperposabilityReport {
    pub u: f64,
    pub ks: KsResult,
}

/// The shift u with e^{lambda u} = e^{lambda u1} + e^{lambda u2}.
pub fn merged_shift(lambda: f64, u1: f64, u2: f64) -> f64 {
    let hi = u1.max(u2);
    hi + (1.0 + (-lambda * (u1 - u2).abs()).exp()).ln() / lambda
}

/// Two-sample KS between maxima of T_{u1} pi' + T_{u2} pi'' and of T_u pi,
/// all taken at generation `burn_in`.
pub fn superposability_test(
    model: &ClusterModel,
    lambda: f64,
    u1: f64,
    u2: f64,
    reps: u64,
    burn_in: u32,
    seed: u64,
) -> Result<SuperposabilityReport> {
    let u = merged_shift(lambda, u1, u2);
    let pairs: Vec<(f64, f64)> = (0..reps)
        .into_par_iter()
        .map_init(
            || WindowedSampler::new(model, lambda, 1.0, burn_in, 1e-6, DEFAULT_POPULATION_CAP),
            |sampler, i| {
                let sampler = sampler.as_mut().map_err(|e| Error::OutOfDomain(e.to_string()))?;
                let mut rng = stream(seed, i);
                let (m1, _) = sampler.sample_max(burn_in, &mut rng)?;
                let (m2, _) = sampler.sample_max(burn_in, &mut rng)?;
                let (m, _) = sampler.sample_max(burn_in, &mut rng)?;
                Ok(((u1 + m1).max(u2 + m2), u + m))
            },
        )
        .collect::<Result<_>>()?;
    let (merged, single): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
    Ok(SuperposabilityReport { u, ks: ks_two_sample(&merged, &single) })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundaryVerdict {
    DecayConsistent,
    Plateau,
    Inconclusive,
}

impl fmt::Display for BoundaryVerdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BoundaryVerdict::DecayConsistent => "decay-consistent",
            BoundaryVerdict::Plateau => "plateau",
            BoundaryVerdict::Inconclusive => "inconclusive",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryReport {
    pub t: f64,
    pub points: Vec<CEstimate>,
    /// Weighted least-squares slope of c_hat against n, over its standard error.
    pub trend_z: f64,
    pub verdict: BoundaryVerdict,
}

/// One-sided 1% normal quantile.
const Z_99: f64 = 2.326;

/// Weighted least-squares slope of c_hat against n over its standard error.
fn trend(points: &[CEstimate]) -> f64 {
    let rows: Vec<(f64, f64, f64)> =
        points.iter().map(|p| (f64::from(p.n), p.c_hat, 1.0 / p.se.max(1e-12).powi(2))).collect();
    match weighted_slope(&rows) {
        Some((slope, se)) if se > 0.0 => slope / se,
        Some((slope, _)) => slope.signum() * f64::INFINITY,
        None => 0.0,
    }
}

/// c_n(t) over `n_list`, a trend statistic and a verdict.
pub fn boundary_decay_test(
    model: &ClusterModel,
    t: f64,
    n_list: &[u32],
    reps: u64,
    seed: u64,
    opts: &EstimateOptions,
) -> Result<BoundaryReport> {
    if n_list.len() < 2 || n_list.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::OutOfDomain("n_list must be strictly increasing with at least two entries".into()));
    }
    let points = n_list
        .iter()
        .enumerate()
        .map(|(i, &n)| estimate_c(model, t, n, reps, derive_seed(seed, i as u64), opts))
        .collect::<Result<Vec<_>>>()?;
    let trend_z = trend(&points);
    let decreasing = points.windows(2).all(|w| w[1].c_hat < w[0].c_hat);
    let (first, last) = (points[0], points[points.len() - 1]);
    // the smallest n is burn-in for the plateau check: c_n may still be
    // converging there without decaying to zero
    let tail = if points.len() >= 3 { &points[1..] } else { &points[..] };
    let verdict = if decreasing && first.ci.0 > last.ci.1 && trend_z < -Z_99 {
        BoundaryVerdict::DecayConsistent
    } else if tail.windows(2).all(|w| w[0].overlaps(&w[1])) && last.c_hat > 0.0 && trend(tail) > -Z_99 {
        BoundaryVerdict::Plateau
    } else {
        BoundaryVerdict::Inconclusive
    };
    Ok(BoundaryReport { t, points, trend_z, verdict })
}

/// Per-bin comparison of mean counts with the equilibrium intensity.
#[derive(Debug, Clone, PartialEq)]
pub struct IntensityCheck {
    pub expected: Vec<f64>,
    pub mean: Vec<f64>,
    pub se: Vec<f64>,
    /// Bins whose mean is within 4 standard errors of the expectation.
    pub within: usize,
}

impl IntensityCheck {
    pub fn fraction_within(&self) -> f64 {
        self.within as f64 / self.expected.len() as f64
    }
}

/// Compare generation `gen` of each run with c e^{-lambda u} du, bin by bin.
/// The standard error uses the Poisson variance of the expected count
/// when the sample variance is zero.
pub fn intensity_check(runs: &[Vec<GenerationSummary>], config: &ScenarioConfig, gen: usize) -> IntensityCheck {
    let (a, b) = config.obs_window;
    let bins = config.bins;
    let width = (b - a) / bins as f64;
    let (lambda, c) = (config.lambda, config.c_mult);
    let reps = runs.len() as f64;
    let mut chk = IntensityCheck { expected: vec![], mean: vec![], se: vec![], within: 0 };
    for i in 0..bins {
        let lo = a + width * i as f64;
        let want = c * (-lambda * lo).exp() * -(-lambda * width).exp_m1() / lambda;
        let counts: Vec<f64> = runs.iter().map(|r| r[gen].histogram[i] as f64).collect();
        let m = counts.iter().sum::<f64>() / reps;
        let var = counts.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (reps - 1.0).max(1.0);
        let se = (if var > 0.0 { var } else { want }).sqrt() / reps.sqrt();
        if (m - want).abs() <= 4.0 * se {
            chk.within += 1;
        }
        chk.expected.push(want);
        chk.mean.push(m);
        chk.se.push(se);
    }
    chk
}

/// (replicate, generation, value) triples for a per-generation statistic,
/// skipping generations where it is undefined.
pub fn series(runs: &[Vec<GenerationSummary>], f: impl Fn(&GenerationSummary) -> Option<f64>) -> Vec<(usize, f64, f64)> {
    let mut out = Vec::new();
    for (r, rows) in runs.iter().enumerate() {
        out.extend(rows.iter().filter_map(|g| f(g).map(|v| (r, f64::from(g.gen_index), v))));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{CountLaw, DisplacementLaw};

    #[test]
    fn equal_shifts_merge_by_log_two() {
        for lambda in [0.5, 1.0, 2.0] {
            assert!((merged_shift(lambda, 0.3, 0.3) - (0.3 + 2f64.ln() / lambda)).abs() < 1e-12);
        }
        let u = merged_shift(1.5, -1.0, 2.0);
        assert!(((1.5 * u).exp() - (-1.5f64).exp() - 3f64.exp()).abs() < 1e-9);
    }

    #[test]
    fn frozen_model_is_superposable() {
        let m = ClusterModel::iid(CountLaw::Fixed(1), DisplacementLaw::Atoms(vec![(0.0, 1.0)])).unwrap();
        let mut low = 0;
        for k in 0..20 {
            let r = superposability_test(&m, 1.0, 0.0, 0.5, 300, 5, k).unwrap();
            if r.ks.p < 0.05 {
                low += 1;
            }
        }
        assert!(low <= 4, "{low}");
    }

    #[test]
    fn n_zero_is_one() {
        let m = ClusterModel::unit_time_bbm(-(2f64.sqrt())).unwrap();
        let e = estimate_c(&m, 2f64.sqrt(), 0, 100, 1, &EstimateOptions::default()).unwrap();
        assert!((e.c_hat - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_unsorted_list() {
        let m = ClusterModel::unit_time_bbm(-1.5).unwrap();
        assert!(boundary_decay_test(&m, 2.0, &[5, 5], 10, 1, &EstimateOptions::default()).is_err());
    }
}
