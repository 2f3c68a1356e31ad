//! Gradient-based MCMC: leapfrog integration, the No-U-Turn sampler with
//! multinomial trajectory sampling, windowed warmup adaptation and
//! multi-chain orchestration.

mod adapt;
mod chains;
mod hamiltonian;
mod nuts;

pub use adapt::{DualAveraging, DualAveragingOptions, VarianceEstimator, WarmupSchedule};
pub use chains::{run_chain, run_chains, ChainConfig, ChainStats, PosteriorDraws};
pub use hamiltonian::{leapfrog, Point};
pub use nuts::{nuts_transition, NutsOptions, Transition};

use thiserror::Error;

/// A differentiable log density on an unconstrained space.
pub trait LogDensity: Sync {
    fn dim(&self) -> usize;

    /// Log density at `position`; writes the gradient into `gradient`.
    /// Non-finite values are treated as divergences by the sampler.
    fn log_density_gradient(&self, position: &[f64], gradient: &mut [f64]) -> f64;

    fn param_names(&self) -> Vec<String> {
        (0..self.dim()).map(|i| format!("theta[{}]", i + 1)).collect()
    }

    /// Maps an unconstrained position to the reported scale.
    fn constrain(&self, position: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.extend_from_slice(position);
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SamplerError {
    #[error("invalid chain configuration: {0}")]
    Config(String),
    #[error("warmup of {warmup} iterations is too short for the adaptation windows (need >= {needed})")]
    WarmupTooShort { warmup: usize, needed: usize },
    #[error("chain {chain}: initial log density not finite after {attempts} re-jitter attempts")]
    BadInitialization { chain: usize, attempts: usize },
    #[error("expected {expected} initial states, got {got}")]
    Inits { expected: usize, got: usize },
    #[error("step size search failed: {0}")]
    StepSize(String),
}
