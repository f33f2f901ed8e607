//! Exact single-generation sampler.
//!
//! Pairs (seed, generation-n descendant) form a Poisson process whose
//! particle coordinate x has intensity c e^{n phi(lambda)} e^{-lambda x}; given
//! x, the line from the seed to the particle is a spine with the tilted step
//! law and untilted siblings. Candidates are drawn from the top down and a
//! candidate is kept only when its spine is the highest particle of its own
//! tree, so each tree is kept exactly once, through its maximum. Keeping
//! every candidate above `a` yields all trees reaching [a, inf); the first
//! kept candidate is the maximum of the whole generation.

use rand::Rng;
use rand_distr::{Distribution, Exp1};

use crate::error::{Error, Result};
use crate::model::ClusterModel;
use crate::simulator::{Particle, ParticleGeneration};
use crate::spine::SpineTree;

pub struct WindowedSampler<'m> {
    lambda: f64,
    log_mass: f64,
    phi_lambda: f64,
    max_n: u32,
    tree: SpineTree<'m>,
    candidate_cap: usize,
    leaves: Vec<f64>,
}

impl<'m> WindowedSampler<'m> {
    /// `eps_prune` is the first-moment threshold below which a sibling
    /// subtree is not explored; `cap` bounds both the candidates per
    /// generation and the nodes explored per subtree.
    pub fn new(model: &'m ClusterModel, lambda: f64, c_mult: f64, max_n: u32, eps_prune: f64, cap: usize) -> Result<Self> {
        if !(lambda > 0.0) {
            return Err(Error::OutOfDomain(format!("the windowed engine needs lambda > 0, got {lambda}")));
        }
        Ok(WindowedSampler {
            lambda,
            log_mass: (c_mult / lambda).ln(),
            phi_lambda: model.log_laplace(lambda),
            max_n,
            tree: SpineTree::new(model, lambda, max_n, eps_prune, cap),
            candidate_cap: cap,
            leaves: Vec::new(),
        })
    }

    /// Generation `n` restricted to [a, inf). With `with_max` the overall
    /// maximum is found even when it lies below `a`; its tree then
    /// contributes that single particle.
    pub fn sample_generation<R: Rng + ?Sized>(
        &mut self,
        n: u32,
        a: f64,
        with_max: bool,
        rng: &mut R,
    ) -> Result<ParticleGeneration> {
        if n > self.max_n {
            return Err(Error::OutOfDomain(format!("generation {n} beyond the sampler depth {}", self.max_n)));
        }
        let log_mass = self.log_mass + f64::from(n) * self.phi_lambda;
        let mut gen = ParticleGeneration { gen_index: n, particles: Vec::new(), root_positions: Vec::new() };
        let mut gamma = 0.0;
        let mut found = false;
        let mut candidates = 0usize;
        loop {
            // the k-th highest point solves (c/lambda) e^{n phi} e^{-lambda x} = Gamma_k
            let e: f64 = Exp1.sample(rng);
            gamma += e;
            let x = (log_mass - gamma.ln()) / self.lambda;
            if x < a && (found || !with_max) {
                break;
            }
            candidates += 1;
            if candidates > self.candidate_cap {
                return Err(Error::PopulationCap { count: candidates, cap: self.candidate_cap });
            }
            let floor = if x >= a { a } else { x };
            self.leaves.clear();
            let Some(root) = self.tree.grow(x, n, floor, rng, &mut self.leaves)? else {
                continue;
            };
            let id = gen.root_positions.len() as u32;
            gen.root_positions.push(root);
            gen.particles.push(Particle { pos: x, root: id });
            if x >= a {
                gen.particles.extend(self.leaves.iter().filter(|&&y| y >= a).map(|&pos| Particle { pos, root: id }));
            }
            found = true;
        }
        Ok(gen)
    }

    /// Maximum of generation n and the seed it descends from.
    pub fn sample_max<R: Rng + ?Sized>(&mut self, n: u32, rng: &mut R) -> Result<(f64, f64)> {
        let gen = self.sample_generation(n, f64::INFINITY, true, rng)?;
        let p = gen.particles[0];
        Ok((p.pos, gen.root_positions[p.root as usize]))
    }
}
