use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{aggregate, SimMetrics};
use super::{generate_dataset, SimCondition, SimulationError};
use crate::baseline::isd_model;
use crate::diagnostics::convergence_report;
use crate::inference::summarize;
use crate::model::{initialize, Design, PriorConfig, VariabilityModel};
use crate::rng::derive_seed;
use crate::sampler::{run_chains, ChainConfig};

/// Focal parameter for the effective-sample-size filter.
pub const FOCAL: &str = "Yalpha[1]";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Estimator {
    /// Individual-SD regression.
    Isdm,
    /// Bayesian location-scale model.
    Bayes,
}

impl Estimator {
    pub fn label(self) -> &'static str {
        match self {
            Estimator::Isdm => "isdm",
            Estimator::Bayes => "bayes",
        }
    }
}

/// One `(condition, replication, parameter)` outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationRecord {
    pub condition: String,
    pub condition_id: u64,
    pub estimator: Estimator,
    pub replication: usize,
    pub parameter: String,
    pub estimate: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub converged: bool,
    pub ess_focal: Option<f64>,
    pub truth: f64,
}

pub const PARAMETERS: [&str; 3] = ["alpha1", "alpha2", "intercept"];

#[derive(Debug, Clone, PartialEq)]
pub struct StudyResult {
    pub records: Vec<ReplicationRecord>,
    pub metrics: Vec<SimMetrics>,
}

fn chain_config(cond: &SimCondition, seed: u64) -> ChainConfig {
    ChainConfig {
        chains: cond.chains,
        warmup: cond.warmup,
        total_post_warmup: cond.total_iterations,
        thin: cond.thin,
        seed,
        ..ChainConfig::default()
    }
}

/// Generates and fits one replication. Sampler failures are recorded as
/// non-converged rows rather than returned as errors.
pub fn fit_replication(
    cond: &SimCondition,
    estimator: Estimator,
    replication: usize,
    study_seed: u64,
) -> Result<Vec<ReplicationRecord>, SimulationError> {
    let seed = derive_seed(&[study_seed, cond.id, replication as u64]);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = generate_dataset(cond, &mut rng)?;
    let truths = [data.truth.alpha1, data.truth.alpha2, data.truth.intercept];
    let record = |i: usize, est: f64, lo: f64, hi: f64, converged: bool, ess: Option<f64>| {
        ReplicationRecord {
            condition: cond.key(),
            condition_id: cond.id,
            estimator,
            replication,
            parameter: PARAMETERS[i].to_string(),
            estimate: est,
            ci_low: lo,
            ci_high: hi,
            converged,
            ess_focal: ess,
            truth: truths[i],
        }
    };

    match estimator {
        Estimator::Isdm => {
            let fit = isd_model(&data.repeated, &data.between, 0.95)
                .map_err(|e| SimulationError::Condition(e.to_string()))?;
            // columns: intercept, ISD, mean
            Ok([1usize, 2, 0]
                .iter()
                .enumerate()
                .map(|(i, &c)| record(i, fit.coefs[c], fit.ci_low[c], fit.ci_high[c], true, None))
                .collect())
        }
        Estimator::Bayes => {
            let failed = || {
                (0..3)
                    .map(|i| record(i, f64::NAN, f64::NAN, f64::NAN, false, None))
                    .collect()
            };
            let design = Design::v_to_y(true);
            let model = VariabilityModel::new(
                data.repeated.clone(),
                data.between.clone(),
                design,
                PriorConfig::default(),
            )?;
            let config = chain_config(cond, derive_seed(&[seed, 1]));
            let inits: Result<Vec<Vec<f64>>, _> = (0..config.chains)
                .map(|c| {
                    let mut r = ChaCha8Rng::seed_from_u64(derive_seed(&[seed, 2, c as u64]));
                    initialize(&data.repeated, &data.between, design, &mut r)
                })
                .collect();
            let Ok(inits) = inits else {
                return Ok(failed());
            };
            let Ok(draws) = run_chains(&model, &config, &inits) else {
                return Ok(failed());
            };
            let Ok(report) = convergence_report(&draws, FOCAL) else {
                return Ok(failed());
            };
            let mut out = Vec::with_capacity(3);
            for (i, name) in ["Yalpha[1]", "Yalpha[2]", "YB[1]"].iter().enumerate() {
                let p = draws.param_index(name).expect("model parameter");
                let s = summarize(name, &draws.pooled(p), 0.95)
                    .map_err(|e| SimulationError::Condition(e.to_string()))?;
                out.push(record(
                    i,
                    s.mean,
                    s.ci_low,
                    s.ci_high,
                    report.converged,
                    Some(report.focal_ess),
                ));
            }
            Ok(out)
        }
    }
}

/// Runs every replication of every condition (in parallel) and aggregates.
///
/// Records are ordered condition, replication, parameter; each replication
/// draws from its own seed so results do not depend on scheduling or on
/// the total replication count.
pub fn run_study(
    conditions: &[SimCondition],
    estimator: Estimator,
    study_seed: u64,
) -> Result<StudyResult, SimulationError> {
    let jobs: Vec<(&SimCondition, usize)> = conditions
        .iter()
        .flat_map(|c| (0..c.replications).map(move |r| (c, r)))
        .collect();
    let results: Vec<Result<Vec<ReplicationRecord>, SimulationError>> = jobs
        .par_iter()
        .map(|(c, r)| fit_replication(c, estimator, *r, study_seed))
        .collect();
    let mut records = Vec::with_capacity(jobs.len() * 3);
    for r in results {
        records.extend(r?);
    }
    let metrics = aggregate(conditions, &records);
    Ok(StudyResult { records, metrics })
}
