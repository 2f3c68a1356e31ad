use std::path::Path;

use serde::Serialize;

use super::study::{Estimator, ReplicationRecord};
use super::{SimCondition, SimulationError};
use crate::diagnostics::FOCAL_ESS_MIN;

/// Mean of `(estimate - truth) / truth * 100`.
pub fn relative_bias_pct(estimates: &[f64], truth: f64) -> Result<f64, SimulationError> {
    if truth == 0.0 {
        return Err(SimulationError::ZeroTruth);
    }
    Ok(mean(estimates.iter().map(|e| (e - truth) / truth * 100.0)))
}

/// Mean of `estimate - truth`.
pub fn bias(estimates: &[f64], truth: f64) -> f64 {
    mean(estimates.iter().map(|e| e - truth))
}

/// Fraction of closed intervals containing `truth`, and fraction excluding 0.
pub fn coverage_and_power(
    ci_lows: &[f64],
    ci_highs: &[f64],
    truth: f64,
) -> Result<(f64, f64), SimulationError> {
    if ci_lows.len() != ci_highs.len() {
        return Err(SimulationError::Length(format!(
            "{} lower vs {} upper bounds",
            ci_lows.len(),
            ci_highs.len()
        )));
    }
    for (index, (lo, hi)) in ci_lows.iter().zip(ci_highs).enumerate() {
        if lo > hi {
            return Err(SimulationError::InvertedInterval {
                index,
                low: *lo,
                high: *hi,
            });
        }
    }
    let n = ci_lows.len() as f64;
    let covered = ci_lows
        .iter()
        .zip(ci_highs)
        .filter(|(lo, hi)| **lo <= truth && truth <= **hi)
        .count() as f64;
    let excludes_zero = ci_lows
        .iter()
        .zip(ci_highs)
        .filter(|(lo, hi)| !(**lo <= 0.0 && 0.0 <= **hi))
        .count() as f64;
    Ok((covered / n, excludes_zero / n))
}

fn mean(it: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = it.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        s / n as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ParameterMetrics {
    pub relative_bias_pct: f64,
    pub coverage: f64,
    pub power: f64,
}

/// Aggregated outcome of one condition for one estimator.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimMetrics {
    pub condition: String,
    pub condition_id: u64,
    pub estimator: Option<Estimator>,
    pub replications: usize,
    /// Replications that passed the convergence and focal-ESS filters.
    pub n_used: usize,
    pub convergence_rate: f64,
    pub sufficient_ess_rate: f64,
    pub alpha1: ParameterMetrics,
    pub alpha2: ParameterMetrics,
    pub intercept_bias: f64,
    pub intercept_coverage: f64,
}

fn usable(r: &ReplicationRecord) -> bool {
    r.converged && r.ess_focal.is_none_or(|e| e >= FOCAL_ESS_MIN)
}

fn parameter_metrics(rows: &[&ReplicationRecord]) -> ParameterMetrics {
    if rows.is_empty() {
        return ParameterMetrics {
            relative_bias_pct: f64::NAN,
            coverage: f64::NAN,
            power: f64::NAN,
        };
    }
    let truth = rows[0].truth;
    let est: Vec<f64> = rows.iter().map(|r| r.estimate).collect();
    let lo: Vec<f64> = rows.iter().map(|r| r.ci_low).collect();
    let hi: Vec<f64> = rows.iter().map(|r| r.ci_high).collect();
    let (coverage, power) = coverage_and_power(&lo, &hi, truth).unwrap_or((f64::NAN, f64::NAN));
    ParameterMetrics {
        relative_bias_pct: relative_bias_pct(&est, truth).unwrap_or(f64::NAN),
        coverage,
        power,
    }
}

/// Per-condition metrics from stored records, in `conditions` order.
///
/// Convergence counts every replication; bias, coverage and power use only
/// replications that converged and (when recorded) reached the focal ESS.
pub fn aggregate(conditions: &[SimCondition], records: &[ReplicationRecord]) -> Vec<SimMetrics> {
    conditions
        .iter()
        .map(|c| {
            let rows: Vec<&ReplicationRecord> =
                records.iter().filter(|r| r.condition_id == c.id).collect();
            let focal: Vec<&ReplicationRecord> =
                rows.iter().copied().filter(|r| r.parameter == "alpha1").collect();
            let reps = focal.len();
            let frac = |n: usize| if reps == 0 { f64::NAN } else { n as f64 / reps as f64 };
            let converged = focal.iter().filter(|r| r.converged).count();
            let sufficient = focal
                .iter()
                .filter(|r| r.ess_focal.is_none_or(|e| e >= FOCAL_ESS_MIN))
                .count();
            let used = |name: &str| -> Vec<&ReplicationRecord> {
                rows.iter()
                    .copied()
                    .filter(|r| r.parameter == name && usable(r))
                    .collect()
            };
            let intercept = used("intercept");
            let (icov, _) = if intercept.is_empty() {
                (f64::NAN, f64::NAN)
            } else {
                let lo: Vec<f64> = intercept.iter().map(|r| r.ci_low).collect();
                let hi: Vec<f64> = intercept.iter().map(|r| r.ci_high).collect();
                coverage_and_power(&lo, &hi, intercept[0].truth).unwrap_or((f64::NAN, f64::NAN))
            };
            SimMetrics {
                condition: c.key(),
                condition_id: c.id,
                estimator: focal.first().map(|r| r.estimator),
                replications: reps,
                n_used: used("alpha1").len(),
                convergence_rate: frac(converged),
                sufficient_ess_rate: frac(sufficient),
                alpha1: parameter_metrics(&used("alpha1")),
                alpha2: parameter_metrics(&used("alpha2")),
                intercept_bias: if intercept.is_empty() {
                    f64::NAN
                } else {
                    bias(
                        &intercept.iter().map(|r| r.estimate).collect::<Vec<_>>(),
                        intercept[0].truth,
                    )
                },
                intercept_coverage: icov,
            }
        })
        .collect()
}

fn io_err(e: impl std::fmt::Display) -> SimulationError {
    SimulationError::Io(e.to_string())
}

/// Per-replication record file (header row, comma-delimited).
pub fn write_records(path: &Path, records: &[ReplicationRecord]) -> Result<(), SimulationError> {
    let mut w = csv::Writer::from_path(path).map_err(io_err)?;
    for r in records {
        w.serialize(r).map_err(io_err)?;
    }
    w.flush().map_err(io_err)
}

pub fn read_records(path: &Path) -> Result<Vec<ReplicationRecord>, SimulationError> {
    let mut r = csv::Reader::from_path(path).map_err(io_err)?;
    r.deserialize().map(|row| row.map_err(io_err)).collect()
}

#[derive(Serialize)]
struct MetricRow<'a> {
    condition: &'a str,
    estimator: &'a str,
    parameter: &'a str,
    relative_bias_pct: Option<f64>,
    bias_x100: Option<f64>,
    coverage: f64,
    power: Option<f64>,
    convergence_rate: f64,
    sufficient_ess_rate: f64,
    n_used: usize,
    replications: usize,
}

/// Metric table, condition-major and parameter-minor.
pub fn write_metrics(path: &Path, metrics: &[SimMetrics]) -> Result<(), SimulationError> {
    let mut w = csv::Writer::from_path(path).map_err(io_err)?;
    for m in metrics {
        let est = m.estimator.map_or("", |e| e.label());
        let base = |parameter, rb, b, coverage, power| MetricRow {
            condition: &m.condition,
            estimator: est,
            parameter,
            relative_bias_pct: rb,
            bias_x100: b,
            coverage,
            power,
            convergence_rate: m.convergence_rate,
            sufficient_ess_rate: m.sufficient_ess_rate,
            n_used: m.n_used,
            replications: m.replications,
        };
        for (name, p) in [("alpha1", &m.alpha1), ("alpha2", &m.alpha2)] {
            w.serialize(base(name, Some(p.relative_bias_pct), None, p.coverage, Some(p.power)))
                .map_err(io_err)?;
        }
        w.serialize(base(
            "intercept",
            None,
            Some(100.0 * m.intercept_bias),
            m.intercept_coverage,
            None,
        ))
        .map_err(io_err)?;
    }
    w.flush().map_err(io_err)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn relative_bias_examples() {
        assert_eq!(relative_bias_pct(&[0.3, 0.3], 0.3).unwrap(), 0.0);
        assert_relative_eq!(relative_bias_pct(&[1.2 * 0.4; 3], 0.4).unwrap(), 20.0, epsilon = 1e-12);
        assert_eq!(relative_bias_pct(&[0.1], 0.0), Err(SimulationError::ZeroTruth));
    }

    #[test]
    fn coverage_examples() {
        assert_eq!(coverage_and_power(&[-1.0, 0.5], &[1.0, 2.0], 0.7).unwrap(), (1.0, 0.5));
        assert_eq!(coverage_and_power(&[-1.0, 2.0], &[1.0, 3.0], 2.5).unwrap(), (0.5, 0.5));
        // closed intervals
        assert_eq!(coverage_and_power(&[2.5], &[3.0], 2.5).unwrap().0, 1.0);
        assert!(matches!(
            coverage_and_power(&[1.0], &[0.0], 0.5),
            Err(SimulationError::InvertedInterval { index: 0, .. })
        ));
    }
}
