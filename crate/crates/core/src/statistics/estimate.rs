//! Estimators of c_n(t) = e^{-n phi(t)} E[e^{t max chi_n}].
//!
//! The main estimator tilts a single ancestor's walk by e^{t x - n phi(t)}:
//! by the many-to-one identity, c_n(t) equals the tilted probability that
//! the spine is the highest particle of generation n. That is a Bernoulli
//! mean, so the estimate has bounded variance even where e^{t max} is
//! heavy-tailed. `estimate_c_direct` is the plain average kept for
//! comparison on small instances.

use rand::Rng;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::ClusterModel;
use crate::rng::{derive_seed, stream};
use crate::simulator::{step, Particle, ParticleGeneration};
use crate::spine::SpineTree;
use crate::statistics::{mean, trimmed_mean};

pub const BOOTSTRAP_RESAMPLES: usize = 1000;
/// Two-sided coverage of the reported intervals.
pub const CI_LEVEL: f64 = 0.99;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CEstimate {
    pub t: f64,
    pub n: u32,
    pub reps: u64,
    pub c_hat: f64,
    /// Percentile bootstrap interval.
    pub ci: (f64, f64),
    pub se: f64,
    /// 1% trimmed mean, diagnostic only.
    pub trimmed: f64,
}

impl CEstimate {
    /// log c_hat / n with the interval mapped through the same transform.
    pub fn log_rate(&self) -> (f64, (f64, f64)) {
        let nf = f64::from(self.n.max(1));
        (self.c_hat.ln() / nf, (self.ci.0.ln() / nf, self.ci.1.ln() / nf))
    }

    pub fn overlaps(&self, other: &CEstimate) -> bool {
        self.ci.0 <= other.ci.1 && other.ci.0 <= self.ci.1
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimateOptions {
    pub eps_prune: f64,
    pub node_cap: usize,
}

impl Default for EstimateOptions {
    fn default() -> Self {
        EstimateOptions { eps_prune: 1e-6, node_cap: 5_000_000 }
    }
}

/// Percentile bootstrap interval for the mean of `values`.
pub fn bootstrap_mean_ci<R: Rng + ?Sized>(values: &[f64], resamples: usize, level: f64, rng: &mut R) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mut means: Vec<f64> = (0..resamples)
        .map(|_| (0..n).map(|_| values[rng.random_range(0..n)]).sum::<f64>() / n as f64)
        .collect();
    percentile_interval(&mut means, level)
}

fn percentile_interval(draws: &mut [f64], level: f64) -> (f64, f64) {
    draws.sort_by(f64::total_cmp);
    let k = draws.len();
    let alpha = (1.0 - level) / 2.0;
    let lo = ((alpha * k as f64).floor() as usize).min(k - 1);
    let hi = (((1.0 - alpha) * k as f64).ceil() as usize).saturating_sub(1).min(k - 1);
    (draws[lo], draws[hi])
}

/// c_n(t) by the spine identity; replicate i runs on stream (seed, i).
pub fn estimate_c(model: &ClusterModel, t: f64, n: u32, reps: u64, seed: u64, opts: &EstimateOptions) -> Result<CEstimate> {
    if reps == 0 {
        return Err(Error::InsufficientData("estimate_c needs at least one replicate".into()));
    }
    let hits = (0..reps)
        .into_par_iter()
        .map_init(
            || (SpineTree::new(model, t, n, opts.eps_prune, opts.node_cap), Vec::new()),
            |(tree, leaves), i| {
                let mut rng = stream(seed, i);
                leaves.clear();
                tree.grow(0.0, n, 0.0, &mut rng, leaves).map(|r| u64::from(r.is_some()))
            },
        )
        .try_reduce(|| 0, |a, b| Ok(a + b))?;
    let p = hits as f64 / reps as f64;
    // resampling a 0/1 sample is a binomial draw
    let mut rng = stream(derive_seed(seed, 0xb007), 0);
    let binom = Binomial::new(reps, p).map_err(|e| Error::OutOfDomain(e.to_string()))?;
    let mut draws: Vec<f64> =
        (0..BOOTSTRAP_RESAMPLES).map(|_| binom.sample(&mut rng) as f64 / reps as f64).collect();
    let (lo, hi) = percentile_interval(&mut draws, CI_LEVEL);
    let k = (0.01 * reps as f64).floor() as u64;
    // trimming k from each end of the sorted 0/1 sample
    let kept = reps - 2 * k.min(reps / 2);
    let trimmed = if kept == 0 {
        f64::NAN
    } else {
        let ones = hits.saturating_sub(k).min(kept);
        ones as f64 / kept as f64
    };
    Ok(CEstimate {
        t,
        n,
        reps,
        c_hat: p,
        ci: (lo, hi),
        se: (p * (1.0 - p) / reps as f64).sqrt(),
        trimmed,
    })
}

/// Largest generation-n position of a walk started from one particle at 0,
/// or None when the line dies out.
pub fn sample_single_max<R: Rng + ?Sized>(model: &ClusterModel, n: u32, cap: usize, rng: &mut R) -> Result<Option<f64>> {
    let mut gen = ParticleGeneration {
        gen_index: 0,
        particles: vec![Particle { pos: 0.0, root: 0 }],
        root_positions: vec![0.0],
    };
    for _ in 0..n {
        gen = step(gen, model, rng, None, cap)?;
        if gen.particles.is_empty() {
            return Ok(None);
        }
    }
    Ok(gen.particles.iter().map(|p| p.pos).reduce(f64::max))
}

/// c_n(t) as the plain average of e^{t max chi_n - n phi(t)} over forward runs.
pub fn estimate_c_direct(model: &ClusterModel, t: f64, n: u32, reps: u64, seed: u64, cap: usize) -> Result<CEstimate> {
    if reps == 0 {
        return Err(Error::InsufficientData("estimate_c_direct needs at least one replicate".into()));
    }
    let shift = f64::from(n) * model.log_laplace(t);
    let values: Vec<f64> = (0..reps)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream(seed, i);
            Ok(match sample_single_max(model, n, cap, &mut rng)? {
                Some(m) => (t * m - shift).exp(),
                None => 0.0,
            })
        })
        .collect::<Result<_>>()?;
    let mut rng = stream(derive_seed(seed, 0xb007), 0);
    let ci = bootstrap_mean_ci(&values, BOOTSTRAP_RESAMPLES, CI_LEVEL, &mut rng);
    let c_hat = mean(&values);
    let var = values.iter().map(|v| (v - c_hat).powi(2)).sum::<f64>() / (values.len().max(2) - 1) as f64;
    Ok(CEstimate {
        t,
        n,
        reps,
        c_hat,
        ci,
        se: (var / reps as f64).sqrt(),
        trimmed: trimmed_mean(&values, 0.01),
    })
}
