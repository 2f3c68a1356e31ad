use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use super::adapt::{DualAveraging, DualAveragingOptions, VarianceEstimator, WarmupSchedule};
use super::nuts::{nuts_transition, NutsOptions};
use super::{LogDensity, Point, SamplerError};
use crate::rng::derive_seed;

const REJITTER_ATTEMPTS: usize = 100;

#[derive(Debug, Clone, PartialEq)]
pub struct ChainConfig {
    pub chains: usize,
    pub warmup: usize,
    /// Post-warmup transitions summed over all chains, before thinning.
    pub total_post_warmup: usize,
    pub thin: usize,
    pub seed: u64,
    pub target_accept: f64,
    pub max_tree_depth: usize,
    /// Skip adaptation and use this step size with a unit metric.
    pub fixed_step: Option<f64>,
}

impl Default for ChainConfig {
    fn default() -> Self {
        ChainConfig {
            chains: 4,
            warmup: 1000,
            total_post_warmup: 4000,
            thin: 1,
            seed: 1,
            target_accept: 0.8,
            max_tree_depth: 10,
            fixed_step: None,
        }
    }
}

impl ChainConfig {
    pub fn validate(&self) -> Result<(), SamplerError> {
        let fail = |m: &str| Err(SamplerError::Config(m.to_string()));
        if self.chains == 0 || self.warmup == 0 || self.total_post_warmup == 0 || self.thin == 0 {
            return fail("chains, warmup, iterations and thin must be positive");
        }
        if !self.total_post_warmup.is_multiple_of(self.chains) {
            return fail("total post-warmup iterations must be divisible by the number of chains");
        }
        if !self.per_chain_post_warmup().is_multiple_of(self.thin) {
            return fail("thin must divide the per-chain post-warmup iterations");
        }
        if !(self.target_accept > 0.0 && self.target_accept < 1.0) {
            return fail("target acceptance must lie in (0, 1)");
        }
        if self.max_tree_depth == 0 {
            return fail("max tree depth must be positive");
        }
        if let Some(s) = self.fixed_step {
            if !(s > 0.0 && s.is_finite()) {
                return fail("fixed step must be positive");
            }
        }
        Ok(())
    }

    pub fn per_chain_post_warmup(&self) -> usize {
        self.total_post_warmup / self.chains
    }

    pub fn retained_per_chain(&self) -> usize {
        self.per_chain_post_warmup() / self.thin
    }
}

/// Adaptation outcome and post-warmup behaviour of one chain.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainStats {
    pub step_size: f64,
    /// Adapted inverse metric (posterior variance estimates).
    pub inv_mass: Vec<f64>,
    pub mean_accept_stat: f64,
    pub mean_tree_depth: f64,
    pub divergences: usize,
    pub max_depth_hits: usize,
}

/// Constrained-scale draws, `chains x iterations x parameters`.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorDraws {
    names: Vec<String>,
    n_chains: usize,
    n_iterations: usize,
    data: Vec<f64>,
    stats: Vec<ChainStats>,
}

impl PosteriorDraws {
    /// Assembles draws from per-chain row-major `iterations x parameters` blocks.
    pub fn from_chains(
        names: Vec<String>,
        chains: Vec<Vec<f64>>,
        stats: Vec<ChainStats>,
    ) -> Result<Self, SamplerError> {
        let p = names.len();
        let n_chains = chains.len();
        if n_chains == 0 || p == 0 {
            return Err(SamplerError::Config("empty draws".into()));
        }
        let len = chains[0].len();
        if !len.is_multiple_of(p) || chains.iter().any(|c| c.len() != len) {
            return Err(SamplerError::Config("ragged chains".into()));
        }
        let stats = if stats.is_empty() {
            vec![
                ChainStats {
                    step_size: f64::NAN,
                    inv_mass: Vec::new(),
                    mean_accept_stat: f64::NAN,
                    mean_tree_depth: f64::NAN,
                    divergences: 0,
                    max_depth_hits: 0,
                };
                n_chains
            ]
        } else {
            stats
        };
        Ok(PosteriorDraws {
            names,
            n_chains,
            n_iterations: len / p,
            data: chains.concat(),
            stats,
        })
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn n_chains(&self) -> usize {
        self.n_chains
    }

    pub fn n_iterations(&self) -> usize {
        self.n_iterations
    }

    pub fn n_params(&self) -> usize {
        self.names.len()
    }

    pub fn stats(&self) -> &[ChainStats] {
        &self.stats
    }

    pub fn divergence_count(&self) -> Vec<usize> {
        self.stats.iter().map(|s| s.divergences).collect()
    }

    pub fn param_index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    #[inline]
    pub fn get(&self, chain: usize, iteration: usize, param: usize) -> f64 {
        let p = self.names.len();
        self.data[(chain * self.n_iterations + iteration) * p + param]
    }

    /// All draws of one iteration, in parameter order.
    pub fn row(&self, chain: usize, iteration: usize) -> &[f64] {
        let p = self.names.len();
        let start = (chain * self.n_iterations + iteration) * p;
        &self.data[start..start + p]
    }

    /// Draws of one parameter, one vector per chain.
    pub fn chains_of(&self, param: usize) -> Vec<Vec<f64>> {
        (0..self.n_chains)
            .map(|c| (0..self.n_iterations).map(|i| self.get(c, i, param)).collect())
            .collect()
    }

    /// Draws of one parameter, chains concatenated in order.
    pub fn pooled(&self, param: usize) -> Vec<f64> {
        self.chains_of(param).concat()
    }
}

/// Runs all chains independently (in parallel) and gathers thinned,
/// constrained draws. Output depends only on `(model, config, inits)`.
pub fn run_chains<M: LogDensity>(
    model: &M,
    config: &ChainConfig,
    inits: &[Vec<f64>],
) -> Result<PosteriorDraws, SamplerError> {
    config.validate()?;
    if inits.len() != config.chains {
        return Err(SamplerError::Inits {
            expected: config.chains,
            got: inits.len(),
        });
    }
    let results: Vec<Result<(Vec<f64>, ChainStats), SamplerError>> = inits
        .par_iter()
        .enumerate()
        .map(|(chain, init)| run_chain(model, config, chain, init.clone()))
        .collect();
    let mut chains = Vec::with_capacity(config.chains);
    let mut stats = Vec::with_capacity(config.chains);
    for r in results {
        let (draws, s) = r?;
        chains.push(draws);
        stats.push(s);
    }
    PosteriorDraws::from_chains(model.param_names(), chains, stats)
}

/// Runs one chain; returns row-major `retained x parameters` constrained draws.
pub fn run_chain<M: LogDensity + ?Sized>(
    model: &M,
    config: &ChainConfig,
    chain: usize,
    init: Vec<f64>,
) -> Result<(Vec<f64>, ChainStats), SamplerError> {
    let dim = model.dim();
    if init.len() != dim {
        return Err(SamplerError::Config(format!(
            "initial state has {} coordinates, target has {dim}",
            init.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(&[config.seed, chain as u64]));

    let mut point = Point::new(model, init.clone());
    let mut attempts = 0;
    while !is_usable(&point) {
        if attempts == REJITTER_ATTEMPTS {
            return Err(SamplerError::BadInitialization { chain, attempts });
        }
        let jittered = init
            .iter()
            .map(|x| x + rng.random_range(-crate::model::JITTER..crate::model::JITTER))
            .collect();
        point = Point::new(model, jittered);
        attempts += 1;
    }

    let options = NutsOptions {
        max_tree_depth: config.max_tree_depth,
        ..NutsOptions::default()
    };
    let mut inv_mass = vec![1.0; dim];
    let mut step;

    if let Some(fixed) = config.fixed_step {
        step = fixed;
        for _ in 0..config.warmup {
            point = nuts_transition(model, &point, step, &inv_mass, &options, &mut rng).0;
        }
    } else {
        step = find_initial_step(model, &point, 1.0, &inv_mass, &mut rng)?;
        let schedule = WarmupSchedule::for_warmup(config.warmup);
        let mut da = DualAveraging::new(DualAveragingOptions::default(), config.target_accept, step);
        let mut variances = VarianceEstimator::new(dim);
        for i in 0..config.warmup {
            let (next, t) = nuts_transition(model, &point, step, &inv_mass, &options, &mut rng);
            point = next;
            step = da.update(t.accept_stat);
            if schedule.in_slow_window(i) {
                variances.add(&point.position);
            }
            if schedule.is_window_end(i) {
                inv_mass = variances.regularized_variance();
                variances.reset();
                step = find_initial_step(model, &point, step, &inv_mass, &mut rng)?;
                da.restart(step);
            }
        }
        step = da.final_step();
    }

    let post = config.per_chain_post_warmup();
    let mut draws = Vec::with_capacity(config.retained_per_chain() * dim);
    let mut constrained = Vec::with_capacity(dim);
    let mut accept_sum = 0.0;
    let mut depth_sum = 0usize;
    let mut divergences = 0;
    let mut max_depth_hits = 0;
    for i in 0..post {
        let (next, t) = nuts_transition(model, &point, step, &inv_mass, &options, &mut rng);
        point = next;
        accept_sum += t.accept_stat;
        depth_sum += t.depth;
        divergences += usize::from(t.divergent);
        max_depth_hits += usize::from(t.depth >= config.max_tree_depth);
        if (i + 1) % config.thin == 0 {
            model.constrain(&point.position, &mut constrained);
            draws.extend_from_slice(&constrained);
        }
    }
    Ok((
        draws,
        ChainStats {
            step_size: step,
            inv_mass,
            mean_accept_stat: accept_sum / post as f64,
            mean_tree_depth: depth_sum as f64 / post as f64,
            divergences,
            max_depth_hits,
        },
    ))
}

fn is_usable(point: &Point) -> bool {
    point.log_density.is_finite() && point.gradient.iter().all(|g| g.is_finite())
}

/// Doubles or halves the step until a single leapfrog step's acceptance
/// probability crosses 0.8.
fn find_initial_step<M: LogDensity + ?Sized, R: Rng + ?Sized>(
    model: &M,
    start: &Point,
    initial: f64,
    inv_mass: &[f64],
    rng: &mut R,
) -> Result<f64, SamplerError> {
    let log_target = 0.8f64.ln();
    let mut step = initial;
    let trial = |step: f64, rng: &mut R| {
        let mut z = start.clone();
        for (p, m) in z.momentum.iter_mut().zip(inv_mass) {
            let n: f64 = rng.sample(StandardNormal);
            *p = n / m.sqrt();
        }
        let h0 = z.hamiltonian(inv_mass);
        z.evolve(model, step, inv_mass);
        h0 - z.hamiltonian(inv_mass)
    };
    let increase = trial(step, rng) > log_target;
    for _ in 0..100 {
        step = if increase { 2.0 * step } else { 0.5 * step };
        if !(step > 1e-12 && step < 1e7) {
            return Err(SamplerError::StepSize(format!(
                "step size left the range (1e-12, 1e7): {step}"
            )));
        }
        let delta = trial(step, rng);
        if increase && !(delta > log_target) {
            // last step that still accepted well
            return Ok(0.5 * step);
        }
        if !increase && !(delta < log_target) {
            return Ok(step);
        }
    }
    Ok(step)
}
