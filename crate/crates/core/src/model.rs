//! Cluster distributions: the offspring point process that replaces each
//! particle once per generation, together with the closed-form log-Laplace
//! transform of its intensity.

use std::fmt;

use rand::Rng;
use rand_distr::{Distribution, Exp1, Geometric, Poisson, StandardNormal};

use crate::error::{Error, Result};

/// Offspring-count law on {0, 1, 2, ...}.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CountLaw {
    Fixed(u32),
    Poisson(f64),
    /// Number of failures before the first success, success probability `p`.
    Geometric(f64),
}

impl CountLaw {
    pub fn mean(&self) -> f64 {
        match *self {
            CountLaw::Fixed(k) => k as f64,
            CountLaw::Poisson(m) => m,
            CountLaw::Geometric(p) => (1.0 - p) / p,
        }
    }

    pub fn second_moment(&self) -> f64 {
        match *self {
            CountLaw::Fixed(k) => (k as f64).powi(2),
            CountLaw::Poisson(m) => m + m * m,
            CountLaw::Geometric(p) => {
                let q = 1.0 - p;
                q / (p * p) + q * q / (p * p)
            }
        }
    }

    pub fn pmf(&self, k: u64) -> f64 {
        match *self {
            CountLaw::Fixed(j) => f64::from(u8::from(k == u64::from(j))),
            CountLaw::Poisson(m) => {
                let lk: f64 = (1..=k).map(|i| (i as f64).ln()).sum();
                (k as f64 * m.ln() - m - lk).exp()
            }
            CountLaw::Geometric(p) => p * (1.0 - p).powi(k as i32),
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match *self {
            CountLaw::Fixed(k) => k >= 1,
            CountLaw::Poisson(m) => m.is_finite() && m > 0.0,
            CountLaw::Geometric(p) => p.is_finite() && p > 0.0 && p < 1.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidModel(format!("count law {self:?} must have positive finite mean")))
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        match *self {
            CountLaw::Fixed(k) => u64::from(k),
            CountLaw::Poisson(m) => Poisson::new(m).expect("validated").sample(rng) as u64,
            CountLaw::Geometric(p) => Geometric::new(p).expect("validated").sample(rng),
        }
    }

    /// Draw from the size-biased law `P[N' = k] = k P[N = k] / E[N]`.
    pub fn sample_size_biased<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        match *self {
            CountLaw::Fixed(k) => u64::from(k),
            CountLaw::Poisson(m) => 1 + Poisson::new(m).expect("validated").sample(rng) as u64,
            CountLaw::Geometric(p) => {
                let g = Geometric::new(p).expect("validated");
                1 + g.sample(rng) + g.sample(rng)
            }
        }
    }
}

/// Real-valued displacement law with a closed-form moment generating function.
#[derive(Debug, Clone, PartialEq)]
pub enum DisplacementLaw {
    Gaussian { mean: f64, var: f64 },
    TwoPoint { a: f64, b: f64, p: f64 },
    Atoms(Vec<(f64, f64)>),
}

impl DisplacementLaw {
    /// Atom list for discrete laws (zero-probability atoms dropped).
    pub fn atoms(&self) -> Option<Vec<(f64, f64)>> {
        match self {
            DisplacementLaw::Gaussian { .. } => None,
            DisplacementLaw::TwoPoint { a, b, p } => Some(
                [(*a, *p), (*b, 1.0 - *p)].into_iter().filter(|&(_, w)| w > 0.0).collect(),
            ),
            DisplacementLaw::Atoms(list) => {
                Some(list.iter().copied().filter(|&(_, w)| w > 0.0).collect())
            }
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            DisplacementLaw::Gaussian { mean, var } => {
                if !mean.is_finite() || !var.is_finite() || *var <= 0.0 {
                    return Err(Error::InvalidModel(format!(
                        "gaussian needs finite mean and variance > 0, got ({mean}, {var})"
                    )));
                }
            }
            DisplacementLaw::TwoPoint { a, b, p } => {
                if !a.is_finite() || !b.is_finite() || !(0.0..=1.0).contains(p) {
                    return Err(Error::InvalidModel(format!(
                        "two-point law needs finite values and p in [0,1], got ({a}, {b}, {p})"
                    )));
                }
            }
            DisplacementLaw::Atoms(list) => {
                if list.is_empty() {
                    return Err(Error::InvalidModel("atom list is empty".into()));
                }
                if list.iter().any(|&(v, w)| !v.is_finite() || !w.is_finite() || w < 0.0) {
                    return Err(Error::InvalidModel("atoms need finite values and nonnegative weights".into()));
                }
                let total: f64 = list.iter().map(|&(_, w)| w).sum();
                if (total - 1.0).abs() > 1e-9 {
                    return Err(Error::InvalidModel(format!("atom probabilities sum to {total}, not 1")));
                }
            }
        }
        Ok(())
    }

    fn mirrored(&self) -> Self {
        match self {
            DisplacementLaw::Gaussian { mean, var } => DisplacementLaw::Gaussian { mean: -mean, var: *var },
            DisplacementLaw::TwoPoint { a, b, p } => DisplacementLaw::TwoPoint { a: -a, b: -b, p: *p },
            DisplacementLaw::Atoms(list) => DisplacementLaw::Atoms(list.iter().map(|&(v, w)| (-v, w)).collect()),
        }
    }
}

/// Precomputed sampler for a discrete displacement law.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct AtomTable {
    pub values: Vec<f64>,
    pub probs: Vec<f64>,
    cumulative: Vec<f64>,
}

impl AtomTable {
    pub fn new(atoms: &[(f64, f64)]) -> Self {
        let total: f64 = atoms.iter().map(|a| a.1).sum();
        let mut acc = 0.0;
        let mut cumulative = Vec::with_capacity(atoms.len());
        for &(_, w) in atoms {
            acc += w / total;
            cumulative.push(acc);
        }
        AtomTable {
            values: atoms.iter().map(|a| a.0).collect(),
            probs: atoms.iter().map(|a| a.1 / total).collect(),
            cumulative,
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.random();
        let i = self.cumulative.partition_point(|&c| c <= u);
        self.values[i.min(self.values.len() - 1)]
    }

    /// log E[e^{tX}] by log-sum-exp.
    pub fn log_mgf(&self, t: f64) -> f64 {
        let m = self.values.iter().map(|&v| t * v).fold(f64::NEG_INFINITY, f64::max);
        let s: f64 = self.values.iter().zip(&self.probs).map(|(&v, &p)| p * (t * v - m).exp()).sum();
        m + s.ln()
    }

    /// d/dt log E[e^{tX}]: the mean of the exponentially tilted atoms.
    pub fn tilted_mean(&self, t: f64) -> f64 {
        let m = self.values.iter().map(|&v| t * v).fold(f64::NEG_INFINITY, f64::max);
        let (mut num, mut den) = (0.0, 0.0);
        for (&v, &p) in self.values.iter().zip(&self.probs) {
            let w = p * (t * v - m).exp();
            num += w * v;
            den += w;
        }
        num / den
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Kind {
    Iid { count: CountLaw, disp: DisplacementLaw, table: Option<AtomTable> },
    /// Binary branching at rate 1 with Brownian lines of the given drift, run for unit time.
    UnitTimeBbm { drift: f64 },
}

/// The cluster point process: offspring count plus displacements, or unit-time BBM.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterModel {
    kind: Kind,
}

/// One realization of the cluster: displacements relative to the parent.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ClusterSample {
    pub displacements: Vec<f64>,
}

impl ClusterModel {
    pub fn iid(count: CountLaw, disp: DisplacementLaw) -> Result<Self> {
        count.validate()?;
        disp.validate()?;
        let table = disp.atoms().map(|a| AtomTable::new(&a));
        Ok(ClusterModel { kind: Kind::Iid { count, disp, table } })
    }

    pub fn unit_time_bbm(drift: f64) -> Result<Self> {
        if !drift.is_finite() {
            return Err(Error::InvalidModel(format!("bbm drift must be finite, got {drift}")));
        }
        Ok(ClusterModel { kind: Kind::UnitTimeBbm { drift } })
    }

    pub fn is_bbm(&self) -> bool {
        matches!(self.kind, Kind::UnitTimeBbm { .. })
    }

    pub fn bbm_drift(&self) -> Option<f64> {
        match self.kind {
            Kind::UnitTimeBbm { drift } => Some(drift),
            Kind::Iid { .. } => None,
        }
    }

    pub fn count_law(&self) -> Option<CountLaw> {
        match &self.kind {
            Kind::Iid { count, .. } => Some(*count),
            Kind::UnitTimeBbm { .. } => None,
        }
    }

    pub fn displacement_law(&self) -> Option<&DisplacementLaw> {
        match &self.kind {
            Kind::Iid { disp, .. } => Some(disp),
            Kind::UnitTimeBbm { .. } => None,
        }
    }

    pub(crate) fn atom_table(&self) -> Option<&AtomTable> {
        match &self.kind {
            Kind::Iid { table, .. } => table.as_ref(),
            Kind::UnitTimeBbm { .. } => None,
        }
    }

    /// The reflected model (all displacements negated), so that phi(t) becomes phi(-t).
    pub fn mirrored(&self) -> Self {
        match &self.kind {
            Kind::Iid { count, disp, .. } => ClusterModel::iid(*count, disp.mirrored()).expect("mirror of a valid model"),
            Kind::UnitTimeBbm { drift } => ClusterModel { kind: Kind::UnitTimeBbm { drift: -drift } },
        }
    }

    /// J(R) = E[number of offspring].
    pub fn intensity_mass(&self) -> f64 {
        match &self.kind {
            Kind::Iid { count, .. } => count.mean(),
            Kind::UnitTimeBbm { .. } => std::f64::consts::E,
        }
    }

    /// Coefficients `(a2, a1, a0)` when phi is the quadratic `a2 t^2 + a1 t + a0`.
    pub(crate) fn quadratic(&self) -> Option<(f64, f64, f64)> {
        match &self.kind {
            Kind::Iid { count, disp: DisplacementLaw::Gaussian { mean, var }, .. } => {
                Some((var / 2.0, *mean, count.mean().ln()))
            }
            Kind::UnitTimeBbm { drift } => Some((0.5, *drift, 1.0)),
            _ => None,
        }
    }

    /// phi(t) = log of the integral of e^{tu} against the intensity J.
    pub fn log_laplace(&self, t: f64) -> f64 {
        if let Some((a2, a1, a0)) = self.quadratic() {
            return a2 * t * t + a1 * t + a0;
        }
        match &self.kind {
            Kind::Iid { count, table: Some(table), .. } => count.mean().ln() + table.log_mgf(t),
            _ => unreachable!("non-quadratic models are atomic"),
        }
    }

    /// phi'(t), exact.
    pub fn phi_prime(&self, t: f64) -> f64 {
        if let Some((a2, a1, _)) = self.quadratic() {
            return 2.0 * a2 * t + a1;
        }
        self.atom_table().expect("atomic").tilted_mean(t)
    }

    /// Closure of the range of phi': `(inf, sup)`, infinite for Gaussian-type laws.
    pub fn phi_prime_range(&self) -> (f64, f64) {
        match self.atom_table() {
            Some(table) => {
                let lo = table.values.iter().copied().fold(f64::INFINITY, f64::min);
                let hi = table.values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                (lo, hi)
            }
            None => (f64::NEG_INFINITY, f64::INFINITY),
        }
    }

    /// Mass of the extreme atom at `hi` or `lo` (for the Legendre transform at the range boundary).
    pub(crate) fn edge_atom_mass(&self, upper: bool) -> f64 {
        let table = self.atom_table().expect("atomic");
        let (lo, hi) = self.phi_prime_range();
        let edge = if upper { hi } else { lo };
        table.values.iter().zip(&table.probs).filter(|(&v, _)| v == edge).map(|(_, &p)| p).sum()
    }

    /// True when the intensity lives on [0, inf) or (-inf, 0].
    pub fn is_one_sided(&self) -> bool {
        let (lo, hi) = self.phi_prime_range();
        lo >= 0.0 || hi <= 0.0
    }

    /// Draw one cluster.
    pub fn sample_cluster<R: Rng + ?Sized>(&self, rng: &mut R) -> ClusterSample {
        let mut displacements = Vec::new();
        self.sample_into(0.0, rng, &mut displacements);
        ClusterSample { displacements }
    }

    /// Append the offspring of a parent at `origin` to `out`.
    pub fn sample_into<R: Rng + ?Sized>(&self, origin: f64, rng: &mut R, out: &mut Vec<f64>) {
        match &self.kind {
            Kind::Iid { count, disp, table } => {
                let k = count.sample(rng);
                for _ in 0..k {
                    out.push(origin + draw_displacement(disp, table.as_ref(), rng));
                }
            }
            Kind::UnitTimeBbm { drift } => sample_bbm(*drift, origin, 1.0, rng, out),
        }
    }

    /// One draw from the displacement law (IID models only).
    pub(crate) fn sample_displacement<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match &self.kind {
            Kind::Iid { disp, table, .. } => draw_displacement(disp, table.as_ref(), rng),
            Kind::UnitTimeBbm { .. } => unreachable!("bbm has no displacement law"),
        }
    }
}

pub(crate) fn draw_displacement<R: Rng + ?Sized>(disp: &DisplacementLaw, table: Option<&AtomTable>, rng: &mut R) -> f64 {
    match disp {
        DisplacementLaw::Gaussian { mean, var } => {
            let z: f64 = StandardNormal.sample(rng);
            mean + var.sqrt() * z
        }
        _ => table.expect("atomic law has a table").sample(rng),
    }
}

/// Leaves of a rate-1 binary branching Brownian motion with the given drift,
/// started from one particle at `origin` and run for `duration`.
///
/// Event driven: each line draws an exponential clock; if it rings before the
/// residual time runs out the line moves to the split time and forks.
pub fn sample_bbm<R: Rng + ?Sized>(drift: f64, origin: f64, duration: f64, rng: &mut R, out: &mut Vec<f64>) {
    let mut stack = vec![(origin, duration)];
    while let Some((x, rem)) = stack.pop() {
        let tau: f64 = Exp1.sample(rng);
        let dt = tau.min(rem);
        let z: f64 = StandardNormal.sample(rng);
        let y = x + drift * dt + dt.sqrt() * z;
        if tau >= rem {
            out.push(y);
        } else {
            stack.push((y, rem - tau));
            stack.push((y, rem - tau));
        }
    }
}

impl fmt::Display for CountLaw {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CountLaw::Fixed(k) => write!(f, "Fixed({k})"),
            CountLaw::Poisson(m) => write!(f, "Poisson({m})"),
            CountLaw::Geometric(p) => write!(f, "Geometric({p})"),
        }
    }
}

impl fmt::Display for ClusterModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            Kind::Iid { count, disp, .. } => match disp {
                DisplacementLaw::Gaussian { mean, var } => write!(f, "{count}+Gaussian({mean},{var})"),
                DisplacementLaw::TwoPoint { a, b, p } => write!(f, "{count}+TwoPoint({a},{b},{p})"),
                DisplacementLaw::Atoms(list) => {
                    write!(f, "{count}+Atoms(")?;
                    for (i, (v, w)) in list.iter().enumerate() {
                        if i > 0 {
                            write!(f, ",")?;
                        }
                        write!(f, "{v}:{w}")?;
                    }
                    write!(f, ")")
                }
            },
            Kind::UnitTimeBbm { drift } => write!(f, "UnitTimeBBM(drift={drift})"),
        }
    }
}
