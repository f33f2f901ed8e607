//! Spine decomposition under an exponential tilt, and pruned best-first
//! exploration of sibling subtrees.
//!
//! Under the measure weighted by e^{t X_v - n phi(t)} a distinguished line
//! (the spine) moves with the tilted step law while the rest of each cluster
//! keeps its original law. For i.i.d. clusters the other members are a
//! size-biased count minus one of untilted displacements; for unit-time BBM
//! the spine is a Brownian motion with drift shifted by t that sheds
//! siblings at rate 2.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};

use crate::analytics::{beta0, level_crossing};
use crate::backward_tree::TiltedStepLaw;
use crate::error::{Error, Result};
use crate::model::{draw_displacement, sample_bbm, AtomTable, ClusterModel, CountLaw, DisplacementLaw};

#[derive(Debug, Clone)]
enum SpineKind {
    Iid { count: CountLaw, base: DisplacementLaw, table: Option<AtomTable>, tilted: TiltedStepLaw },
    Bbm { drift: f64, tilt: f64 },
}

#[derive(Debug, Clone)]
pub(crate) struct Spine {
    kind: SpineKind,
}

impl Spine {
    pub fn new(model: &ClusterModel, t: f64) -> Spine {
        let kind = match (model.bbm_drift(), model.count_law(), model.displacement_law()) {
            (Some(drift), _, _) => SpineKind::Bbm { drift, tilt: t },
            (None, Some(count), Some(base)) => SpineKind::Iid {
                count,
                base: base.clone(),
                table: model.atom_table().cloned(),
                tilted: TiltedStepLaw::new(base, t),
            },
            _ => unreachable!("a model is either bbm or iid"),
        };
        Spine { kind }
    }

    /// One spine generation. Returns the spine displacement and appends the
    /// other cluster members, relative to the same parent, to `siblings`.
    pub fn step<R: Rng + ?Sized>(&self, rng: &mut R, siblings: &mut Vec<f64>) -> f64 {
        match &self.kind {
            SpineKind::Iid { count, base, table, tilted } => {
                let k = count.sample_size_biased(rng);
                for _ in 1..k {
                    siblings.push(draw_displacement(base, table.as_ref(), rng));
                }
                tilted.sample(rng)
            }
            SpineKind::Bbm { drift, tilt } => {
                let z: f64 = StandardNormal.sample(rng);
                let end = drift + tilt + z;
                // births at rate 2 along a Brownian bridge from 0 to `end`
                let (mut s, mut pos) = (0.0f64, 0.0f64);
                loop {
                    let gap: f64 = Exp1.sample(rng);
                    let next = s + gap / 2.0;
                    if next >= 1.0 {
                        break;
                    }
                    let frac = (next - s) / (1.0 - s);
                    let var = (next - s) * (1.0 - next) / (1.0 - s);
                    let w: f64 = StandardNormal.sample(rng);
                    pos += frac * (end - pos) + var.sqrt() * w;
                    s = next;
                    sample_bbm(*drift, pos, 1.0 - s, rng, siblings);
                }
                end
            }
        }
    }
}

/// Per-depth pruning distances for exploring subtrees against a target level.
///
/// `offset(m)` is the largest distance below the target at which a particle
/// with `m` generations left still has first-moment bound
/// e^{-m I(D/m)} >= delta of reaching it.
#[derive(Debug, Clone)]
pub(crate) struct PruneTable {
    offsets: Vec<f64>,
}

impl PruneTable {
    pub fn new(model: &ClusterModel, max_m: u32, delta: f64) -> Self {
        let log_budget = -delta.ln();
        let slope0 = model.phi_prime(0.0);
        let offsets = (0..=max_m)
            .map(|m| {
                if m == 0 {
                    return 0.0;
                }
                if !(delta > 0.0) {
                    return f64::INFINITY;
                }
                let mf = f64::from(m);
                match level_crossing(model, log_budget / mf) {
                    Some(z) => mf * z,
                    None => mf * slope0,
                }
            })
            .collect();
        PruneTable { offsets }
    }

    /// No pruning at all.
    #[cfg(test)]
    pub fn disabled(max_m: u32) -> Self {
        PruneTable { offsets: vec![f64::INFINITY; max_m as usize + 1] }
    }

    #[inline]
    pub fn keeps(&self, y: f64, m: u32, target: f64) -> bool {
        m == 0 || target - y <= self.offsets[m as usize]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Scan {
    /// A leaf strictly above the ceiling was found; exploration stopped.
    Exceeded,
    /// Everything reachable was explored.
    Complete { ties: u32, count: u64 },
}

/// Positions that agree to this relative tolerance count as a tie for the maximum.
pub(crate) fn tie_tolerance(x: f64) -> f64 {
    1e-9 * x.abs().max(1.0)
}

/// A node waiting to be expanded, ordered by `y + m * speed`.
#[derive(Debug, Clone, Copy)]
struct Node {
    key: f64,
    y: f64,
    m: u32,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Node {}

impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Node {
    fn cmp(&self, other: &Self) -> Ordering {
        // larger key first, then fewer generations left
        self.key.total_cmp(&other.key).then(other.m.cmp(&self.m))
    }
}

/// Keys use a speed this far below that of the maximum, which favours
/// finishing a path over opening new ones.
const SPEED_MARGIN: f64 = 0.5;

/// Best-first explorer of the descendants of a set of particles.
///
/// Nodes are expanded in order of `y + m * speed`, `speed` being the speed
/// of the maximum less a margin, so a leaf above the ceiling is usually met
/// early.
pub(crate) struct Explorer<'m> {
    model: &'m ClusterModel,
    table: PruneTable,
    node_cap: usize,
    speed: f64,
    heap: BinaryHeap<Node>,
    buf: Vec<f64>,
}

impl<'m> Explorer<'m> {
    pub fn new(model: &'m ClusterModel, table: PruneTable, node_cap: usize) -> Self {
        let b = beta0(model);
        let speed = if b.is_finite() { b } else { model.phi_prime(0.0) } - SPEED_MARGIN;
        Explorer { model, table, node_cap, speed, heap: BinaryHeap::new(), buf: Vec::new() }
    }

    /// Explore descendants of `start` after `m` generations. See `scan_many`.
    pub fn scan<R: Rng + ?Sized>(
        &mut self,
        start: f64,
        m: u32,
        floor: f64,
        ceiling: f64,
        rng: &mut R,
        leaves: Option<&mut Vec<f64>>,
    ) -> Result<Scan> {
        self.scan_many(&[(start, m)], floor, ceiling, rng, leaves)
    }

    /// Explore the descendants of each `(start, m)` after `m` generations.
    /// Subtrees unlikely to reach `floor` are skipped; leaves at or above
    /// `floor` are counted and optionally stored. Returns early once a leaf
    /// exceeds `ceiling`.
    pub fn scan_many<R: Rng + ?Sized>(
        &mut self,
        starts: &[(f64, u32)],
        floor: f64,
        ceiling: f64,
        rng: &mut R,
        mut leaves: Option<&mut Vec<f64>>,
    ) -> Result<Scan> {
        let tol = tie_tolerance(ceiling);
        let (mut ties, mut count, mut expanded) = (0u32, 0u64, 0usize);
        self.heap.clear();
        let speed = self.speed;
        let node = |y: f64, m: u32| Node { key: y + f64::from(m) * speed, y, m };
        for &(y, m) in starts {
            if self.table.keeps(y, m, floor) {
                self.heap.push(node(y, m));
            }
        }
        while let Some(Node { y, m: k, .. }) = self.heap.pop() {
            if k == 0 {
                if y > ceiling + tol {
                    return Ok(Scan::Exceeded);
                }
                if y >= ceiling - tol {
                    ties += 1;
                }
                if y >= floor {
                    count += 1;
                    if let Some(out) = leaves.as_deref_mut() {
                        out.push(y);
                    }
                }
                continue;
            }
            expanded += 1;
            if expanded > self.node_cap {
                return Err(Error::PopulationCap { count: expanded, cap: self.node_cap });
            }
            self.buf.clear();
            self.model.sample_into(y, rng, &mut self.buf);
            for &c in &self.buf {
                if self.table.keeps(c, k - 1, floor) {
                    self.heap.push(node(c, k - 1));
                }
            }
        }
        Ok(Scan::Complete { ties, count })
    }
}

/// A spine whose generation-n position is given, grown backward level by
/// level together with its siblings' subtrees.
pub(crate) struct SpineTree<'m> {
    spine: Spine,
    explorer: Explorer<'m>,
    sibs: Vec<f64>,
    starts: Vec<(f64, u32)>,
}

impl<'m> SpineTree<'m> {
    pub fn new(model: &'m ClusterModel, t: f64, max_n: u32, delta: f64, node_cap: usize) -> Self {
        let table = PruneTable::new(model, max_n, delta);
        SpineTree {
            spine: Spine::new(model, t),
            explorer: Explorer::new(model, table, node_cap),
            sibs: Vec::new(),
            starts: Vec::new(),
        }
    }

    /// Grow the tree of a spine ending at `x` after `n` generations and keep
    /// it only if the spine is the tree's highest particle (ties resolved by
    /// a fair lottery). On acceptance returns the ancestor position x - S_n;
    /// descendants at or above `floor` are appended to `leaves`, completely
    /// so only on acceptance.
    pub fn grow<R: Rng + ?Sized>(
        &mut self,
        x: f64,
        n: u32,
        floor: f64,
        rng: &mut R,
        leaves: &mut Vec<f64>,
    ) -> Result<Option<f64>> {
        let mut pos = x;
        self.starts.clear();
        for level in (1..=n).rev() {
            self.sibs.clear();
            let step = self.spine.step(rng, &mut self.sibs);
            let parent = pos - step;
            self.starts.extend(self.sibs.iter().map(|&d| (parent + d, n - level)));
            pos = parent;
        }
        let ties = match self.explorer.scan_many(&self.starts, floor, x, rng, Some(leaves))? {
            Scan::Exceeded => return Ok(None),
            Scan::Complete { ties, .. } => ties,
        };
        if ties > 0 && rng.random::<f64>() * f64::from(ties + 1) >= 1.0 {
            return Ok(None);
        }
        Ok(Some(pos))
    }
}
