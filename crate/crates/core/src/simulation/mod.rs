//! Monte Carlo study of the ISD regression and the Bayesian model across
//! the 2 x 2 x 2 x 2 design (repeated measures, sample size, effect size,
//! spread of the subject SDs).

mod metrics;
mod study;

pub use metrics::{
    aggregate, bias, coverage_and_power, read_records, relative_bias_pct, write_metrics, write_records,
    ParameterMetrics, SimMetrics,
};
pub use study::{
    fit_replication, run_study, Estimator, ReplicationRecord, StudyResult, FOCAL, PARAMETERS,
};

use rand::Rng;
use rand_distr::{Distribution, Gamma, Normal};
use thiserror::Error;

use crate::model::{BetweenData, ModelError, RepeatedData};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimulationError {
    #[error("standardized effects imply non-positive residual variance (a^2 + b^2 = {0})")]
    NonPositiveResidual(f64),
    #[error("invalid condition: {0}")]
    Condition(String),
    #[error("relative bias undefined for a true value of 0; use plain bias")]
    ZeroTruth,
    #[error("interval {index} has low {low} > high {high}")]
    InvertedInterval { index: usize, low: f64, high: f64 },
    #[error("length mismatch: {0}")]
    Length(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("i/o: {0}")]
    Io(String),
}

/// Spread of the subject SDs: `Gamma(4, 1)` ("low") or `Gamma(1, .25)` ("high").
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Variability {
    Low,
    High,
}

impl Variability {
    /// `(shape, rate)`
    pub fn gamma(self) -> (f64, f64) {
        match self {
            Variability::Low => (4.0, 1.0),
            Variability::High => (1.0, 0.25),
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Variability::Low => "low",
            Variability::High => "high",
        }
    }
}

/// One cell of the factorial design plus its MCMC schedule.
#[derive(Debug, Clone, PartialEq)]
pub struct SimCondition {
    /// Position in the standard grid; part of every replication seed.
    pub id: u64,
    pub k: usize,
    pub n_subjects: usize,
    pub alpha1_std: f64,
    pub alpha2_std: f64,
    pub gamma_shape: f64,
    pub gamma_rate: f64,
    pub replications: usize,
    pub chains: usize,
    pub warmup: usize,
    pub thin: usize,
    /// Post-warmup iterations across all chains, before thinning.
    pub total_iterations: usize,
}

pub const GRID_ALPHA2: f64 = 0.3;
/// Replications per condition unless overridden.
pub const DEFAULT_REPLICATIONS: usize = 100;

impl SimCondition {
    pub fn new(
        id: u64,
        k: usize,
        n_subjects: usize,
        alpha1_std: f64,
        gamma_shape: f64,
        gamma_rate: f64,
        replications: usize,
    ) -> Result<Self, SimulationError> {
        if k < 2 || n_subjects < 5 {
            return Err(SimulationError::Condition(
                "need k >= 2 repeated measures and at least 5 subjects".into(),
            ));
        }
        if !(gamma_shape > 0.0 && gamma_rate > 0.0) {
            return Err(SimulationError::Condition("gamma shape and rate must be positive".into()));
        }
        let ss = alpha1_std.powi(2) + GRID_ALPHA2.powi(2);
        if ss >= 1.0 {
            return Err(SimulationError::NonPositiveResidual(ss));
        }
        // 1000 retained draws: 250 per chain after thinning
        let thin = default_thin(k, gamma_shape, gamma_rate);
        Ok(SimCondition {
            id,
            k,
            n_subjects,
            alpha1_std,
            alpha2_std: GRID_ALPHA2,
            gamma_shape,
            gamma_rate,
            replications,
            chains: 4,
            warmup: 500,
            thin,
            total_iterations: 1000 * thin,
        })
    }

    /// A cell of the standard grid; the gamma moments are checked here.
    pub fn grid_cell(
        id: u64,
        k: usize,
        n_subjects: usize,
        alpha1_std: f64,
        variability: Variability,
        replications: usize,
    ) -> Result<Self, SimulationError> {
        let (shape, rate) = variability.gamma();
        let c = Self::new(id, k, n_subjects, alpha1_std, shape, rate, replications)?;
        let expected_sd = match variability {
            Variability::Low => 2.0,
            Variability::High => 4.0,
        };
        if (c.sigma_mean() - 4.0).abs() > 1e-12 || (c.sigma_sd() - expected_sd).abs() > 1e-12 {
            return Err(SimulationError::Condition("gamma moments off the design".into()));
        }
        Ok(c)
    }

    pub fn sigma_mean(&self) -> f64 {
        self.gamma_shape / self.gamma_rate
    }

    pub fn sigma_sd(&self) -> f64 {
        self.gamma_shape.sqrt() / self.gamma_rate
    }

    pub fn variability(&self) -> Option<Variability> {
        [Variability::Low, Variability::High]
            .into_iter()
            .find(|v| v.gamma() == (self.gamma_shape, self.gamma_rate))
    }

    /// Short key such as `a0.5_low_N250_k14`.
    pub fn key(&self) -> String {
        let var = self
            .variability()
            .map(|v| v.label().to_string())
            .unwrap_or_else(|| format!("g{}-{}", self.gamma_shape, self.gamma_rate));
        format!("a{}_{}_N{}_k{}", self.alpha1_std, var, self.n_subjects, self.k)
    }

    /// Unstandardized true coefficients `(alpha1, alpha2)`.
    pub fn true_alphas(&self) -> Result<(f64, f64), SimulationError> {
        unstandardize(self.alpha1_std, self.alpha2_std, self.sigma_sd(), 1.0)
    }
}

/// Thinning schedule: 4 (k = 5) or 2 (k = 14) for high spread, 10 for low.
fn default_thin(k: usize, shape: f64, rate: f64) -> usize {
    match Variability::High.gamma() == (shape, rate) {
        true if k <= 5 => 4,
        true => 2,
        false => 10,
    }
}

/// The 16 standard conditions, ordered effect size, spread (low, high),
/// N (80, 250), k (5, 14), matching the published table layout.
pub fn paper_grid(replications: usize) -> Vec<SimCondition> {
    let mut out = Vec::with_capacity(16);
    for alpha1 in [0.2, 0.5] {
        for var in [Variability::Low, Variability::High] {
            for n in [80, 250] {
                for k in [5, 14] {
                    let id = out.len() as u64;
                    out.push(
                        SimCondition::grid_cell(id, k, n, alpha1, var, replications)
                            .expect("standard grid is valid"),
                    );
                }
            }
        }
    }
    out
}

/// Finds a paper-grid cell by its [`SimCondition::key`].
pub fn paper_condition(key: &str, replications: usize) -> Option<SimCondition> {
    paper_grid(replications).into_iter().find(|c| c.key() == key)
}

/// Converts standardized effects of two independent predictors on an
/// outcome with unit residual variance into raw-scale coefficients:
/// `Var(Y) = 1 / (1 - a^2 - b^2)`, `alpha = std * SD(Y) / SD(predictor)`.
pub fn unstandardize(
    alpha1_std: f64,
    alpha2_std: f64,
    sd_sigma_j: f64,
    sd_mu_j: f64,
) -> Result<(f64, f64), SimulationError> {
    let ss = alpha1_std.powi(2) + alpha2_std.powi(2);
    if ss >= 1.0 {
        return Err(SimulationError::NonPositiveResidual(ss));
    }
    let sd_y = (1.0 / (1.0 - ss)).sqrt();
    Ok((alpha1_std * sd_y / sd_sigma_j, alpha2_std * sd_y / sd_mu_j))
}

/// True data-generating values for one dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct TrueParams {
    pub alpha1: f64,
    pub alpha2: f64,
    pub intercept: f64,
    pub sigma_j: Vec<f64>,
    pub mu_j: Vec<f64>,
}

/// Latent subject means and SDs plus outcomes, without repeated measures.
pub fn generate_latent<R: Rng + ?Sized>(
    cond: &SimCondition,
    n_subjects: usize,
    rng: &mut R,
) -> Result<(TrueParams, Vec<f64>), SimulationError> {
    let (alpha1, alpha2) = cond.true_alphas()?;
    let std_normal = Normal::new(0.0, 1.0).expect("valid normal");
    let gamma = Gamma::new(cond.gamma_shape, 1.0 / cond.gamma_rate)
        .map_err(|e| SimulationError::Condition(e.to_string()))?;
    let mu_j: Vec<f64> = (0..n_subjects).map(|_| std_normal.sample(rng)).collect();
    let sigma_j: Vec<f64> = (0..n_subjects).map(|_| gamma.sample(rng)).collect();
    let y = (0..n_subjects)
        .map(|j| alpha1 * sigma_j[j] + alpha2 * mu_j[j] + std_normal.sample(rng))
        .collect();
    Ok((
        TrueParams {
            alpha1,
            alpha2,
            intercept: 0.0,
            sigma_j,
            mu_j,
        },
        y,
    ))
}

/// A simulated dataset with its generating values.
#[derive(Debug, Clone, PartialEq)]
pub struct SimDataset {
    pub repeated: RepeatedData,
    pub between: BetweenData,
    pub truth: TrueParams,
}

/// Draws `mu_j ~ N(0, 1)`, `sigma_j ~ Gamma(shape, rate)`, `k` values
/// `V_ij ~ N(mu_j, sigma_j)` per subject and
/// `Y_j ~ N(alpha1 sigma_j + alpha2 mu_j, 1)`.
pub fn generate_dataset<R: Rng + ?Sized>(
    cond: &SimCondition,
    rng: &mut R,
) -> Result<SimDataset, SimulationError> {
    let n = cond.n_subjects;
    let (alpha1, alpha2) = cond.true_alphas()?;
    let std_normal = Normal::new(0.0, 1.0).expect("valid normal");
    let gamma = Gamma::new(cond.gamma_shape, 1.0 / cond.gamma_rate)
        .map_err(|e| SimulationError::Condition(e.to_string()))?;
    let mu_j: Vec<f64> = (0..n).map(|_| std_normal.sample(rng)).collect();
    let sigma_j: Vec<f64> = (0..n).map(|_| gamma.sample(rng)).collect();
    let mut subject = Vec::with_capacity(n * cond.k);
    let mut value = Vec::with_capacity(n * cond.k);
    for j in 0..n {
        for _ in 0..cond.k {
            subject.push(j);
            value.push(mu_j[j] + sigma_j[j] * std_normal.sample(rng));
        }
    }
    let y: Vec<f64> = (0..n)
        .map(|j| alpha1 * sigma_j[j] + alpha2 * mu_j[j] + std_normal.sample(rng))
        .collect();
    Ok(SimDataset {
        repeated: RepeatedData::new(subject, value, None)?,
        between: BetweenData::new(y, None, None)?,
        truth: TrueParams {
            alpha1,
            alpha2,
            intercept: 0.0,
            sigma_j,
            mu_j,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn null_effects_unstandardize_to_zero() {
        assert_eq!(unstandardize(0.0, 0.0, 4.0, 1.0).unwrap(), (0.0, 0.0));
    }

    #[test]
    fn closed_form_values() {
        let (a, b) = unstandardize(0.5, 0.3, 4.0, 1.0).unwrap();
        assert_relative_eq!(a, 0.5 / 0.66f64.sqrt() / 4.0, epsilon = 1e-15);
        assert!((a - 0.1539).abs() < 5e-5 && (b - 0.3693).abs() < 5e-5);
        let (a, _) = unstandardize(0.2, 0.3, 2.0, 1.0).unwrap();
        assert!((a - 0.10721).abs() < 5e-6, "{a}");
    }

    #[test]
    fn impossible_effects() {
        assert!(matches!(
            unstandardize(0.9, 0.5, 1.0, 1.0),
            Err(SimulationError::NonPositiveResidual(_))
        ));
    }

    #[test]
    fn grid_layout_and_schedule() {
        let grid = paper_grid(10);
        assert_eq!(grid.len(), 16);
        assert_eq!(grid[0].key(), "a0.2_low_N80_k5");
        assert_eq!(grid[15].key(), "a0.5_high_N250_k14");
        for c in &grid {
            let expected = match (c.variability().unwrap(), c.k) {
                (Variability::High, 5) => 4,
                (Variability::High, _) => 2,
                (Variability::Low, _) => 10,
            };
            assert_eq!(c.thin, expected);
            assert_eq!(c.total_iterations / c.chains / c.thin, 250);
            assert_eq!(c.warmup, 500);
        }
        assert!(paper_condition("a0.5_low_N80_k5", 1).is_some());
        assert!(paper_condition("bogus", 1).is_none());
    }
}
