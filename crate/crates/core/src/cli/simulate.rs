use std::collections::BTreeSet;

use super::output::{ensure_dir, num, write_csv};
use super::{CliError, EstimatorArg, SimulateArgs, EXIT_OK};
use crate::simulation::{
    paper_condition, paper_grid, run_study, write_metrics, write_records, Estimator, SimCondition,
    SimMetrics,
};

/// Expands `paper-grid` and condition keys; unknown or repeated keys are
/// usage errors.
pub fn resolve_conditions(keys: &[String], replications: usize) -> Result<Vec<SimCondition>, CliError> {
    let mut out: Vec<SimCondition> = Vec::new();
    for key in keys {
        let expanded = if key == "paper-grid" {
            paper_grid(replications)
        } else {
            vec![paper_condition(key, replications).ok_or_else(|| {
                CliError::Usage(format!(
                    "unknown condition '{key}' (expected 'paper-grid' or keys like a0.5_high_N250_k14)"
                ))
            })?]
        };
        out.extend(expanded);
    }
    let mut seen = BTreeSet::new();
    for c in &out {
        if !seen.insert(c.id) {
            return Err(CliError::Usage(format!("condition '{}' listed twice", c.key())));
        }
    }
    Ok(out)
}

fn sim_err(e: impl std::fmt::Display) -> CliError {
    CliError::Simulation(e.to_string())
}

pub fn simulate_command(args: &SimulateArgs) -> Result<i32, CliError> {
    if args.replications == 0 {
        return Err(CliError::Usage("--replications must be positive".into()));
    }
    let mut conditions = resolve_conditions(&args.conditions, args.replications)?;
    for c in &mut conditions {
        if let Some(v) = args.chains {
            c.chains = v;
        }
        if let Some(v) = args.warmup {
            c.warmup = v;
        }
        if let Some(v) = args.iter {
            c.total_iterations = v;
        }
        if let Some(v) = args.thin {
            c.thin = v;
        }
    }
    let estimator = match args.estimator {
        EstimatorArg::Bayes => Estimator::Bayes,
        EstimatorArg::Isdm => Estimator::Isdm,
    };
    let result = run_study(&conditions, estimator, args.seed).map_err(sim_err)?;
    let out = &args.out;
    ensure_dir(out)?;
    write_records(&out.join("records.csv"), &result.records).map_err(sim_err)?;
    write_metrics(&out.join("metrics.csv"), &result.metrics).map_err(sim_err)?;
    write_tables(out, &result.metrics)?;
    println!(
        "{} condition(s), {} record(s) written to {}",
        result.metrics.len(),
        result.records.len(),
        out.display()
    );
    Ok(EXIT_OK)
}

/// One row per condition, mirroring the layout of the published tables.
fn write_tables(dir: &std::path::Path, metrics: &[SimMetrics]) -> Result<(), CliError> {
    let table = |name: &str, cols: &[&str], f: &dyn Fn(&SimMetrics) -> Vec<f64>| {
        let mut header = vec!["condition"];
        header.extend_from_slice(cols);
        write_csv(
            &dir.join(name),
            &header,
            metrics.iter().map(|m| {
                let mut row = vec![m.condition.clone()];
                row.extend(f(m).into_iter().map(num));
                row
            }),
        )
    };
    table(
        "table1_convergence.csv",
        &["convergence_rate", "sufficient_ess_rate"],
        &|m| vec![m.convergence_rate, m.sufficient_ess_rate],
    )?;
    table(
        "table2_relative_bias.csv",
        &["alpha1", "alpha2"],
        &|m| vec![m.alpha1.relative_bias_pct, m.alpha2.relative_bias_pct],
    )?;
    table(
        "table3_coverage.csv",
        &["alpha1", "alpha2"],
        &|m| vec![m.alpha1.coverage, m.alpha2.coverage],
    )?;
    table(
        "table4_power.csv",
        &["alpha1", "alpha2"],
        &|m| vec![m.alpha1.power, m.alpha2.power],
    )?;
    table(
        "supplement_intercept.csv",
        &["bias_x100", "coverage"],
        &|m| vec![100.0 * m.intercept_bias, m.intercept_coverage],
    )
}
