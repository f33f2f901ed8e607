//! Kallenberg's backward tree: the tilted ancestor walk of a typical particle,
//! the reduced-Palm siblings met along the way, and their forward-branched
//! descendants (cousins) at the present generation.

use std::fmt;

use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{draw_displacement, AtomTable, ClusterModel, ClusterSample, DisplacementLaw};
use crate::rng::stream;
use crate::spine::{Explorer, PruneTable, Scan};
use crate::statistics::{regression::weighted_slope, wilson_interval};

/// The displacement law reweighted by e^{lambda u} and normalized.
#[derive(Debug, Clone, PartialEq)]
pub struct TiltedStepLaw {
    base: DisplacementLaw,
    lambda: f64,
    law: DisplacementLaw,
    table: Option<AtomTable>,
}

impl TiltedStepLaw {
    pub(crate) fn new(base: &DisplacementLaw, lambda: f64) -> Self {
        let law = match base {
            DisplacementLaw::Gaussian { mean, var } => DisplacementLaw::Gaussian { mean: mean + lambda * var, var: *var },
            DisplacementLaw::TwoPoint { a, b, p } => {
                let w = tilt_weights(&[(*a, *p), (*b, 1.0 - p)], lambda);
                DisplacementLaw::TwoPoint { a: *a, b: *b, p: w[0].1 }
            }
            DisplacementLaw::Atoms(list) => DisplacementLaw::Atoms(tilt_weights(list, lambda)),
        };
        let table = law.atoms().map(|a| AtomTable::new(&a));
        TiltedStepLaw { base: base.clone(), lambda, law, table }
    }

    pub fn base(&self) -> &DisplacementLaw {
        &self.base
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn law(&self) -> &DisplacementLaw {
        &self.law
    }

    pub fn total_mass(&self) -> f64 {
        match &self.law {
            DisplacementLaw::Gaussian { .. } => 1.0,
            DisplacementLaw::TwoPoint { .. } => 1.0,
            DisplacementLaw::Atoms(list) => list.iter().map(|a| a.1).sum(),
        }
    }

    pub fn mean(&self) -> f64 {
        match &self.law {
            DisplacementLaw::Gaussian { mean, .. } => *mean,
            DisplacementLaw::TwoPoint { a, b, p } => p * a + (1.0 - p) * b,
            DisplacementLaw::Atoms(list) => list.iter().map(|&(v, w)| v * w).sum(),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        draw_displacement(&self.law, self.table.as_ref(), rng)
    }
}

fn tilt_weights(atoms: &[(f64, f64)], lambda: f64) -> Vec<(f64, f64)> {
    let top = atoms.iter().filter(|a| a.1 > 0.0).map(|a| lambda * a.0).fold(f64::NEG_INFINITY, f64::max);
    let raw: Vec<f64> = atoms.iter().map(|&(v, w)| if w > 0.0 { w * (lambda * v - top).exp() } else { 0.0 }).collect();
    let z: f64 = raw.iter().sum();
    atoms.iter().zip(raw).map(|(&(v, _), w)| (v, w / z)).collect()
}

/// Tilted step law D(du) = e^{lambda u} J(du) for a root lambda.
pub fn tilted_step(model: &ClusterModel, lambda: f64) -> Result<TiltedStepLaw> {
    let disp = model.displacement_law().ok_or(Error::UnsupportedModel("the backward tree (bbm cluster)"))?;
    let phi = model.log_laplace(lambda);
    if !(phi.abs() <= crate::analytics::IS_ROOT_TOL) {
        return Err(Error::NotARoot { lambda, phi });
    }
    Ok(TiltedStepLaw::new(disp, lambda))
}

/// Reduced Palm cluster: size-biased count minus one, i.i.d. displacements.
pub fn palm_siblings<R: Rng + ?Sized>(model: &ClusterModel, rng: &mut R) -> Result<ClusterSample> {
    let count = model.count_law().ok_or(Error::UnsupportedModel("palm siblings (bbm cluster)"))?;
    let k = count.sample_size_biased(rng);
    let displacements = (1..k).map(|_| model.sample_displacement(rng)).collect();
    Ok(ClusterSample { displacements })
}

/// One realization of the backward tree down to depth `n_max`.
#[derive(Debug, Clone, PartialEq)]
pub struct BackwardTreeSample {
    /// Ancestor offsets S_1..S_n; the level-n ancestor sits at -S_n.
    pub s: Vec<f64>,
    /// Number of siblings at each level.
    pub k: Vec<u32>,
    /// rho_n([a, inf)); `None` once the cousin population hit the cap.
    pub rho: Vec<Option<u64>>,
    /// 1{rho_n([a, inf)) > 0}; truncated levels count as hits.
    pub hit: Vec<bool>,
    /// First level whose cousin count was truncated.
    pub truncated_at: Option<u32>,
}

impl BackwardTreeSample {
    pub fn depth(&self) -> usize {
        self.s.len()
    }
}

/// Knobs for cousin exploration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BackwardOptions {
    /// First-moment threshold below which a cousin subtree is skipped.
    pub eps_prune: f64,
    /// Node expansions allowed per sibling subtree.
    pub node_cap: usize,
}

impl Default for BackwardOptions {
    fn default() -> Self {
        BackwardOptions { eps_prune: 1e-9, node_cap: 2_000_000 }
    }
}

pub fn sample_backward_tree<R: Rng + ?Sized>(
    model: &ClusterModel,
    lambda: f64,
    n_max: u32,
    a: f64,
    opts: &BackwardOptions,
    rng: &mut R,
) -> Result<BackwardTreeSample> {
    let step = tilted_step(model, lambda)?;
    let table = PruneTable::new(model, n_max, opts.eps_prune);
    let mut explorer = Explorer::new(model, table, opts.node_cap);
    let mut sample = BackwardTreeSample {
        s: Vec::with_capacity(n_max as usize),
        k: Vec::with_capacity(n_max as usize),
        rho: Vec::with_capacity(n_max as usize),
        hit: Vec::with_capacity(n_max as usize),
        truncated_at: None,
    };
    let mut s = 0.0;
    for n in 1..=n_max {
        s += step.sample(rng);
        let sibs = palm_siblings(model, rng)?;
        sample.s.push(s);
        sample.k.push(sibs.displacements.len() as u32);
        if sample.truncated_at.is_some() {
            sample.rho.push(None);
            sample.hit.push(true);
            continue;
        }
        let mut total = 0u64;
        let mut truncated = false;
        for &z in &sibs.displacements {
            match explorer.scan(-s + z, n - 1, a, f64::INFINITY, rng, None) {
                Ok(Scan::Complete { count, .. }) => total += count,
                Ok(Scan::Exceeded) => unreachable!("ceiling is infinite"),
                Err(Error::PopulationCap { .. }) => {
                    truncated = true;
                    break;
                }
                Err(e) => return Err(e),
            }
        }
        if truncated {
            sample.truncated_at = Some(n);
            sample.rho.push(None);
            sample.hit.push(true);
        } else {
            sample.rho.push(Some(total));
            sample.hit.push(total > 0);
        }
    }
    Ok(sample)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stability {
    StableConsistent,
    UnstableConsistent,
    Inconclusive,
}

impl fmt::Display for Stability {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stability::StableConsistent => "stable-consistent",
            Stability::UnstableConsistent => "unstable-consistent",
            Stability::Inconclusive => "inconclusive",
        })
    }
}

/// Estimated hit probabilities per depth and the resulting verdict.
#[derive(Debug, Clone)]
pub struct StabilityReport {
    pub replicates: usize,
    pub hits: Vec<u64>,
    pub p_hat: Vec<f64>,
    /// 99% Wilson intervals.
    pub ci: Vec<(f64, f64)>,
    pub partial_sums: Vec<f64>,
    /// Slope of log p_hat against depth, with its standard error.
    pub slope: Option<(f64, f64)>,
    pub fit_range: Option<(u32, u32)>,
    pub truncated: usize,
    pub verdict: Stability,
    pub samples: Vec<BackwardTreeSample>,
}

const Z99_ONE_SIDED: f64 = 2.326_347_874_040_841;
const Z99_TWO_SIDED: f64 = 2.575_829_303_548_901;

/// Sample `replicates` backward trees (replicate i uses stream (seed, i)) and
/// turn the hit frequencies into a stability verdict.
pub fn stability_diagnostic(
    model: &ClusterModel,
    lambda: f64,
    n_max: u32,
    a: f64,
    replicates: usize,
    seed: u64,
    opts: &BackwardOptions,
) -> Result<StabilityReport> {
    tilted_step(model, lambda)?;
    let samples: Vec<BackwardTreeSample> = (0..replicates)
        .into_par_iter()
        .map(|i| sample_backward_tree(model, lambda, n_max, a, opts, &mut stream(seed, i as u64)))
        .collect::<Result<_>>()?;
    Ok(summarize(samples, n_max))
}

fn summarize(samples: Vec<BackwardTreeSample>, n_max: u32) -> StabilityReport {
    let reps = samples.len();
    let depth = n_max as usize;
    let mut hits = vec![0u64; depth];
    for s in &samples {
        for (h, &x) in hits.iter_mut().zip(&s.hit) {
            *h += u64::from(x);
        }
    }
    let p_hat: Vec<f64> = hits.iter().map(|&h| h as f64 / reps.max(1) as f64).collect();
    let ci: Vec<(f64, f64)> = hits.iter().map(|&h| wilson_interval(h, reps as u64, Z99_TWO_SIDED)).collect();
    let partial_sums = p_hat
        .iter()
        .scan(0.0, |acc, &p| {
            *acc += p;
            Some(*acc)
        })
        .collect();
    let truncated = samples.iter().filter(|s| s.truncated_at.is_some()).count();

    // longest run of consecutive depths with at least one hit
    let (mut best, mut cur_start) = (None::<(usize, usize)>, None::<usize>);
    for i in 0..=depth {
        let positive = i < depth && hits[i] > 0;
        match (positive, cur_start) {
            (true, None) => cur_start = Some(i),
            (false, Some(st)) => {
                if best.map_or(true, |(b0, b1)| i - st > b1 - b0) {
                    best = Some((st, i));
                }
                cur_start = None;
            }
            _ => {}
        }
    }
    let mut slope = None;
    let mut fit_range = None;
    if let Some((lo, hi)) = best.filter(|(lo, hi)| hi - lo >= 3) {
        let pts: Vec<(f64, f64, f64)> = (lo..hi)
            .map(|i| {
                let p = p_hat[i];
                // delta-method weight: 1 / Var(log p_hat)
                let w = reps as f64 * p / (1.0 - p).max(1.0 / reps as f64);
                ((i + 1) as f64, p.ln(), w)
            })
            .collect();
        if let Some(fit) = weighted_slope(&pts) {
            slope = Some(fit);
            fit_range = Some((lo as u32 + 1, hi as u32));
        }
    }
    let stable = if hits.iter().all(|&h| h == 0) {
        true
    } else {
        slope.is_some_and(|(b, se)| b + Z99_ONE_SIDED * se < 0.0)
    };
    let tail = depth - depth / 3;
    let unstable = depth >= 3 && ci[tail..].iter().all(|&(lo, _)| lo > 0.05);
    let verdict = match (stable, unstable) {
        (true, false) => Stability::StableConsistent,
        (false, true) => Stability::UnstableConsistent,
        _ => Stability::Inconclusive,
    };
    StabilityReport { replicates: reps, hits, p_hat, ci, partial_sums, slope, fit_range, truncated, verdict, samples }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytics::find_roots;
    use crate::model::CountLaw;

    fn gauss2() -> ClusterModel {
        ClusterModel::iid(CountLaw::Fixed(2), DisplacementLaw::Gaussian { mean: -2.0, var: 1.0 }).unwrap()
    }

    #[test]
    fn gaussian_tilt_mean_is_phi_prime() {
        let lp = 2.0 + (4.0 - 2.0 * 2f64.ln()).sqrt();
        let m = gauss2();
        let law = tilted_step(&m, lp).unwrap();
        assert!((law.mean() - (-2.0 + lp)).abs() < 1e-12);
        assert!((law.mean() - m.phi_prime(lp)).abs() < 1e-10);
        assert!((law.mean() - 1.6167).abs() < 1e-3);
    }

    #[test]
    fn two_point_tilt_reweights_atoms() {
        let m = ClusterModel::iid(CountLaw::Fixed(2), DisplacementLaw::TwoPoint { a: -1.0, b: 1.0, p: 0.5 }).unwrap();
        // phi(t) = ln 2 + ln cosh t never vanishes; use an unchecked tilt at t = 0.7
        let law = TiltedStepLaw::new(m.displacement_law().unwrap(), 0.7);
        let (ea, eb) = ((-0.7f64).exp(), 0.7f64.exp());
        match law.law() {
            DisplacementLaw::TwoPoint { p, .. } => assert!((p - ea / (ea + eb)).abs() < 1e-15),
            other => panic!("{other:?}"),
        }
        assert!((law.total_mass() - 1.0).abs() < 1e-12);
        assert!((law.mean() - m.phi_prime(0.7)).abs() < 1e-12);
        assert!(matches!(tilted_step(&m, 0.7), Err(Error::NotARoot { .. })));
    }

    #[test]
    fn atom_tilt_mean_matches_phi_prime_at_root() {
        let m = ClusterModel::iid(CountLaw::Poisson(1.5), DisplacementLaw::Atoms(vec![(-2.0, 0.5), (-0.5, 0.3), (1.0, 0.2)])).unwrap();
        for r in find_roots(&m).unwrap() {
            let law = tilted_step(&m, r).unwrap();
            assert!((law.total_mass() - 1.0).abs() < 1e-12);
            assert!((law.mean() - m.phi_prime(r)).abs() < 1e-10);
        }
    }

    #[test]
    fn critical_zero_tilt_is_identity() {
        let m = ClusterModel::iid(CountLaw::Fixed(1), DisplacementLaw::Gaussian { mean: 0.3, var: 2.0 }).unwrap();
        let law = tilted_step(&m, 0.0).unwrap();
        assert_eq!(law.law(), m.displacement_law().unwrap());
    }

    #[test]
    fn bbm_is_rejected() {
        let m = ClusterModel::unit_time_bbm(-1.5).unwrap();
        assert!(matches!(tilted_step(&m, 2.0), Err(Error::UnsupportedModel(_))));
        assert!(matches!(palm_siblings(&m, &mut stream(0, 0)), Err(Error::UnsupportedModel(_))));
    }

    #[test]
    fn palm_sibling_counts() {
        let mut rng = stream(3, 0);
        let fixed2 = gauss2();
        let fixed1 = ClusterModel::iid(CountLaw::Fixed(1), DisplacementLaw::Gaussian { mean: 0.0, var: 1.0 }).unwrap();
        for _ in 0..100 {
            assert_eq!(palm_siblings(&fixed2, &mut rng).unwrap().displacements.len(), 1);
            assert!(palm_siblings(&fixed1, &mut rng).unwrap().displacements.is_empty());
        }
        // reduced Palm of a Poisson cluster is Poisson again: chi-square on counts 0..=4, 5+
        let m = 1.3;
        let pois = ClusterModel::iid(CountLaw::Poisson(m), DisplacementLaw::Gaussian { mean: 0.0, var: 1.0 }).unwrap();
        let draws = 50_000;
        let mut freq = [0u64; 6];
        for _ in 0..draws {
            let k = palm_siblings(&pois, &mut rng).unwrap().displacements.len();
            freq[k.min(5)] += 1;
        }
        let mut pmf = [0.0; 6];
        for k in 0..5 {
            pmf[k] = CountLaw::Poisson(m).pmf(k as u64);
        }
        pmf[5] = 1.0 - pmf[..5].iter().sum::<f64>();
        let chi2: f64 = freq.iter().zip(&pmf).map(|(&o, &p)| (o as f64 - draws as f64 * p).powi(2) / (draws as f64 * p)).sum();
        // 5 degrees of freedom, 1% critical value
        assert!(chi2 < 15.086, "chi2 = {chi2}");
    }

    #[test]
    fn frozen_tree_has_no_siblings() {
        let m = ClusterModel::iid(CountLaw::Fixed(1), DisplacementLaw::Atoms(vec![(0.0, 1.0)])).unwrap();
        let s = sample_backward_tree(&m, 0.0, 10, -1.0, &BackwardOptions::default(), &mut stream(0, 0)).unwrap();
        assert!(s.k.iter().all(|&k| k == 0));
        assert!(s.hit.iter().all(|&h| !h));
        assert!(s.s.iter().all(|&x| x == 0.0));
        let r = stability_diagnostic(&m, 0.0, 10, -1.0, 50, 1, &BackwardOptions::default()).unwrap();
        assert_eq!(r.verdict, Stability::StableConsistent);
        assert!(r.p_hat.iter().all(|&p| p == 0.0));
    }

    #[test]
    fn ancestor_walk_speed_is_phi_prime() {
        let m = gauss2();
        let lp = 2.0 + (4.0 - 2.0 * 2f64.ln()).sqrt();
        let opts = BackwardOptions::default();
        let n = 50usize;
        let ends: Vec<f64> = (0..1000)
            .map(|i| {
                // a high level keeps cousin exploration trivial
                sample_backward_tree(&m, lp, n as u32, 1e3, &opts, &mut stream(9, i)).unwrap().s[n - 1] / n as f64
            })
            .collect();
        let mean = ends.iter().sum::<f64>() / ends.len() as f64;
        let sd = (ends.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (ends.len() - 1) as f64).sqrt();
        let se = sd / (ends.len() as f64).sqrt();
        assert!((mean - m.phi_prime(lp)).abs() < 4.0 * se, "{mean} vs {}", m.phi_prime(lp));
    }

    #[test]
    fn verdicts_for_persistent_and_extinct_roots() {
        let m = gauss2();
        let r = find_roots(&m).unwrap();
        let opts = BackwardOptions::default();
        let persistent = stability_diagnostic(&m, r[1], 20, -8.0, 400, 2, &opts).unwrap();
        assert_eq!(persistent.verdict, Stability::StableConsistent, "{:?}", persistent.p_hat);
        let extinct = stability_diagnostic(&m, r[0], 9, -8.0, 200, 2, &opts).unwrap();
        assert_eq!(extinct.verdict, Stability::UnstableConsistent, "{:?}", extinct.p_hat);
    }
}
