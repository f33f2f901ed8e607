//! Monte Carlo of the generation process pi_n started from a Poisson process
//! of intensity c e^{-lambda u} du.
//!
//! Two engines share the summary format. The forward engine seeds a
//! certified window, then branches and prunes generation by generation. The
//! windowed engine samples each generation on its own, exactly, by growing
//! spines backward from the points of the observation half-line; it needs no
//! seed truncation and copes with populations the forward engine cannot hold.

pub mod windowed;

use std::fmt;

use rand::Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;

use crate::analytics::{legendre, truncation_bound};
use crate::error::{Error, Result};
use crate::model::ClusterModel;
use crate::rng::stream;

pub use windowed::WindowedSampler;

pub const DEFAULT_POPULATION_CAP: usize = 100_000_000;
pub const DEFAULT_BINS: usize = 50;
/// Above this many expected seeds the automatic engine choice goes windowed.
pub const AUTO_FORWARD_SEED_LIMIT: f64 = 1e5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Engine {
    Forward,
    Windowed,
    Auto,
}

impl fmt::Display for Engine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Engine::Forward => "forward",
            Engine::Windowed => "windowed",
            Engine::Auto => "auto",
        })
    }
}

impl std::str::FromStr for Engine {
    type Err = Error;

    fn from_str(s: &str) -> Result<Engine> {
        match s {
            "forward" => Ok(Engine::Forward),
            "windowed" => Ok(Engine::Windowed),
            "auto" => Ok(Engine::Auto),
            _ => Err(Error::OutOfDomain(format!("unknown engine {s:?}"))),
        }
    }
}

/// Which future generations a pruned particle must be unable to reach.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PruneHorizon {
    /// Only the last generation is observed.
    FinalGeneration,
    /// Every remaining generation is observed.
    EveryGeneration,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub model: ClusterModel,
    pub lambda: f64,
    pub c_mult: f64,
    pub n_gens: u32,
    pub obs_window: (f64, f64),
    /// Seeds are drawn on [L, R]; unbounded for the windowed engine.
    pub seed_window: (f64, f64),
    pub eps_trunc: f64,
    pub eps_prune: f64,
    pub rng_seed: u64,
    pub replicates: u32,
    pub bins: usize,
    pub population_cap: usize,
    pub engine: Engine,
    /// Set when lambda < 0 was normalized by reflecting space; all positions
    /// are then reported in reflected coordinates.
    pub mirrored: bool,
}

impl ScenarioConfig {
    /// Defaults for everything but the model and lambda.
    pub fn new(model: ClusterModel, lambda: f64) -> Self {
        ScenarioConfig {
            model,
            lambda,
            c_mult: 1.0,
            n_gens: 20,
            obs_window: (-5.0, 5.0),
            seed_window: (f64::NEG_INFINITY, f64::INFINITY),
            eps_trunc: 1e-3,
            eps_prune: 1e-6,
            rng_seed: 0,
            replicates: 1,
            bins: DEFAULT_BINS,
            population_cap: DEFAULT_POPULATION_CAP,
            engine: Engine::Auto,
            mirrored: false,
        }
    }

    /// Validate, reflect when lambda < 0, resolve the engine and certify the
    /// seed window for the forward engine.
    pub fn prepare(mut self) -> Result<Self> {
        let (a, b) = self.obs_window;
        if !(a < b) || !a.is_finite() || !b.is_finite() {
            return Err(Error::OutOfDomain(format!("observation window [{a}, {b}] is not a finite interval")));
        }
        if !(self.c_mult > 0.0) || !self.c_mult.is_finite() {
            return Err(Error::OutOfDomain(format!("c_mult must be positive, got {}", self.c_mult)));
        }
        if !(self.eps_trunc > 0.0 && self.eps_trunc < 1.0) || !(0.0..1.0).contains(&self.eps_prune) {
            return Err(Error::OutOfDomain("eps budgets must lie in (0, 1)".into()));
        }
        if self.bins == 0 || self.replicates == 0 {
            return Err(Error::OutOfDomain("bins and replicates must be positive".into()));
        }
        if !self.lambda.is_finite() || self.lambda == 0.0 {
            return Err(Error::OutOfDomain(format!("simulation needs a nonzero lambda, got {}", self.lambda)));
        }
        if self.lambda < 0.0 && !self.mirrored {
            self.model = self.model.mirrored();
            self.lambda = -self.lambda;
            self.obs_window = (-b, -a);
            self.mirrored = true;
        }
        let window = window_for(
            &self.model,
            self.lambda,
            self.c_mult,
            self.n_gens,
            self.obs_window,
            self.eps_trunc,
        );
        self.engine = match (self.engine, &window) {
            (Engine::Auto, Ok((l, r))) if expected_seeds(self.lambda, self.c_mult, *l, *r) <= AUTO_FORWARD_SEED_LIMIT => {
                Engine::Forward
            }
            (Engine::Auto, _) => Engine::Windowed,
            (e, _) => e,
        };
        match self.engine {
            Engine::Forward => self.seed_window = window?,
            _ => self.seed_window = (f64::NEG_INFINITY, f64::INFINITY),
        }
        Ok(self)
    }
}

fn expected_seeds(lambda: f64, c_mult: f64, l: f64, r: f64) -> f64 {
    if lambda == 0.0 {
        return c_mult * (r - l);
    }
    // c (e^{-lambda L} - e^{-lambda R}) / lambda, computed without cancellation
    c_mult * (-lambda * l).exp() * -(-lambda * (r - l)).exp_m1() / lambda
}

/// Seed window [L, R]: seeds right of R have expected count <= eps/2, and the
/// first-moment bound on particles reaching the window from seeds left of L
/// is <= eps/2. L is the largest such value, found by bisection.
pub fn window_for(
    model: &ClusterModel,
    lambda: f64,
    c_mult: f64,
    n_gens: u32,
    obs_window: (f64, f64),
    eps_trunc: f64,
) -> Result<(f64, f64)> {
    if !(lambda > 0.0) {
        return Err(Error::OutOfDomain(format!("seed window needs lambda > 0, got {lambda}")));
    }
    let (a, b) = obs_window;
    let half = eps_trunc / 2.0;
    let r = ((c_mult / (lambda * half)).ln() / lambda).max(b);
    let ok = |l: f64| truncation_bound(model, lambda, c_mult, l, n_gens, a).is_ok_and(|v| v <= half);
    if ok(a) {
        return Ok((a, r));
    }
    // largest L that passes: double the distance below a, then bisect
    let mut d = 1.0;
    while !ok(a - d) {
        d *= 2.0;
        if d > 1_048_576.0 {
            return Err(Error::Infeasible(format!(
                "no seed window certifies truncation error {eps_trunc} for {n_gens} generations"
            )));
        }
    }
    let (mut lo, mut hi) = (a - d, a - d / 2.0);
    if d == 1.0 {
        hi = a;
    }
    while hi - lo > 1e-6 * hi.abs().max(1.0) {
        let mid = 0.5 * (lo + hi);
        if ok(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok((lo, r))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Particle {
    pub pos: f64,
    pub root: u32,
}

/// One generation: live particles tagged with the index of their seed.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleGeneration {
    pub gen_index: u32,
    pub particles: Vec<Particle>,
    pub root_positions: Vec<f64>,
}

/// Poisson seeds on the configured window with density proportional to e^{-lambda u}.
pub fn seed_initial<R: Rng + ?Sized>(config: &ScenarioConfig, rng: &mut R) -> Result<ParticleGeneration> {
    let (l, r) = config.seed_window;
    if !(l < r) || !l.is_finite() || !r.is_finite() {
        return Err(Error::OutOfDomain(format!("seed window [{l}, {r}] is not a finite interval")));
    }
    let lambda = config.lambda;
    let mean = expected_seeds(lambda, config.c_mult, l, r);
    if !(mean <= config.population_cap as f64) {
        return Err(Error::PopulationCap { count: mean.min(usize::MAX as f64) as usize, cap: config.population_cap });
    }
    let count = if mean > 0.0 { Poisson::new(mean).expect("finite positive mean").sample(rng) as usize } else { 0 };
    let span = -(-lambda * (r - l)).exp_m1();
    let root_positions: Vec<f64> = (0..count)
        .map(|_| {
            let v: f64 = rng.random();
            if lambda == 0.0 {
                l + v * (r - l)
            } else {
                // inverse of the truncated exponential CDF
                l - (-v * span).ln_1p() / lambda
            }
        })
        .collect();
    let particles = root_positions.iter().enumerate().map(|(i, &pos)| Particle { pos, root: i as u32 }).collect();
    Ok(ParticleGeneration { gen_index: 0, particles, root_positions })
}

/// Replace every particle by an independent cluster; particles strictly
/// below `prune_level` are dropped first.
pub fn step<R: Rng + ?Sized>(
    gen: ParticleGeneration,
    model: &ClusterModel,
    rng: &mut R,
    prune_level: Option<f64>,
    cap: usize,
) -> Result<ParticleGeneration> {
    let mut next = Vec::with_capacity(gen.particles.len() * 2);
    let mut buf = Vec::new();
    for p in &gen.particles {
        if prune_level.is_some_and(|lvl| p.pos < lvl) {
            continue;
        }
        buf.clear();
        model.sample_into(p.pos, rng, &mut buf);
        next.extend(buf.iter().map(|&pos| Particle { pos, root: p.root }));
        if next.len() > cap {
            return Err(Error::PopulationCap { count: next.len(), cap });
        }
    }
    Ok(ParticleGeneration { gen_index: gen.gen_index + 1, particles: next, root_positions: gen.root_positions })
}

/// Largest level x* such that `current_count` particles below it have
/// expected descendants in [a_obs, inf) at most eps_prune / n_gens. With
/// m = n_gens - gen_index generations left, one particle at x contributes
/// e^{-m I((a_obs - x)/m)} for `FinalGeneration`, or the sum of
/// e^{-i I((a_obs - x)/i)} over i = 1..m for `EveryGeneration`; a term whose
/// required speed is below phi'(0) counts as 1.
pub fn prune_level_for(
    model: &ClusterModel,
    gen_index: u32,
    n_gens: u32,
    a_obs: f64,
    eps_prune: f64,
    current_count: usize,
    horizon: PruneHorizon,
) -> Option<f64> {
    if !(eps_prune > 0.0) || gen_index > n_gens {
        return None;
    }
    let m = n_gens - gen_index;
    if m == 0 {
        return Some(a_obs);
    }
    let log_ratio = (current_count.max(1) as f64 * f64::from(n_gens) / eps_prune).ln();
    let slope0 = model.phi_prime(0.0);
    let term = |i: u32, x: f64| -> f64 {
        let fi = f64::from(i);
        let z = (a_obs - x) / fi;
        if z < slope0 {
            1.0
        } else {
            (-fi * legendre(model, z)).exp()
        }
    };
    let bound = |x: f64| -> f64 {
        match horizon {
            PruneHorizon::FinalGeneration => term(m, x),
            PruneHorizon::EveryGeneration => (1..=m).map(|i| term(i, x)).sum(),
        }
    };
    let ok = |x: f64| bound(x).ln() <= -log_ratio;
    if ok(a_obs) {
        return Some(a_obs);
    }
    let mut d = 1.0;
    while !ok(a_obs - d) {
        d *= 2.0;
        if d > 1_048_576.0 {
            return None;
        }
    }
    let (mut lo, mut hi) = (a_obs - d, a_obs - d / 2.0);
    if d == 1.0 {
        hi = a_obs;
    }
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if ok(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Some(lo)
}

/// Per-generation record.
#[derive(Debug, Clone, PartialEq)]
pub struct GenerationSummary {
    pub gen_index: u32,
    pub count_in_obs: u64,
    pub max_pos: Option<f64>,
    pub leader_root_pos: Option<f64>,
    pub histogram: Vec<u64>,
}

/// Counts in equal bins of the closed window, maximum and its seed.
pub fn summarize(gen: &ParticleGeneration, obs_window: (f64, f64), bins: usize) -> GenerationSummary {
    let (a, b) = obs_window;
    let width = (b - a) / bins as f64;
    let mut histogram = vec![0u64; bins];
    let mut best: Option<&Particle> = None;
    for p in &gen.particles {
        if p.pos >= a && p.pos <= b {
            let i = (((p.pos - a) / width) as usize).min(bins - 1);
            histogram[i] += 1;
        }
        if best.is_none_or(|q| p.pos > q.pos) {
            best = Some(p);
        }
    }
    GenerationSummary {
        gen_index: gen.gen_index,
        count_in_obs: histogram.iter().sum(),
        max_pos: best.map(|p| p.pos),
        leader_root_pos: best.map(|p| gen.root_positions[p.root as usize]),
        histogram,
    }
}

/// One replicate on stream (rng_seed, replicate): summaries for gens 0..=n_gens.
pub fn run_replicate(config: &ScenarioConfig, replicate: u64) -> Result<Vec<GenerationSummary>> {
    let mut rng = stream(config.rng_seed, replicate);
    match config.engine {
        Engine::Windowed => run_windowed(config, &mut rng),
        _ => run_forward(config, &mut rng),
    }
}

fn run_forward<R: Rng + ?Sized>(config: &ScenarioConfig, rng: &mut R) -> Result<Vec<GenerationSummary>> {
    let mut gen = seed_initial(config, rng)?;
    let mut out = Vec::with_capacity(config.n_gens as usize + 1);
    out.push(summarize(&gen, config.obs_window, config.bins));
    for j in 0..config.n_gens {
        let level = prune_level_for(
            &config.model,
            j,
            config.n_gens,
            config.obs_window.0,
            config.eps_prune,
            gen.particles.len(),
            PruneHorizon::EveryGeneration,
        );
        gen = step(gen, &config.model, rng, level, config.population_cap)?;
        out.push(summarize(&gen, config.obs_window, config.bins));
    }
    Ok(out)
}

fn run_windowed<R: Rng + ?Sized>(config: &ScenarioConfig, rng: &mut R) -> Result<Vec<GenerationSummary>> {
    let mut sampler = WindowedSampler::new(
        &config.model,
        config.lambda,
        config.c_mult,
        config.n_gens,
        config.eps_prune,
        config.population_cap,
    )?;
    (0..=config.n_gens)
        .map(|n| {
            let gen = sampler.sample_generation(n, config.obs_window.0, true, rng)?;
            Ok(summarize(&gen, config.obs_window, config.bins))
        })
        .collect()
}

/// All replicates, in parallel; the result is independent of scheduling.
pub fn run_replicates(config: &ScenarioConfig) -> Result<Vec<Vec<GenerationSummary>>> {
    (0..u64::from(config.replicates)).into_par_iter().map(|i| run_replicate(config, i)).collect()
}
