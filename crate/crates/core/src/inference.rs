//! Posterior summaries, empirical p-values and product-of-coefficients
//! indirect effects.

use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum InferenceError {
    #[error("need at least {needed} draws, got {got}")]
    TooFewDraws { needed: usize, got: usize },
    #[error("credible level must lie in (0, 1), got {0}")]
    Level(f64),
    #[error("draw vectors have different lengths ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("non-finite draw")]
    NonFinite,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParameterSummary {
    pub name: String,
    pub mean: f64,
    pub median: f64,
    pub sd: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub p_value: f64,
}

/// Type-7 quantile (linear interpolation between order statistics) of sorted data.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Mean, median, SD, central credible interval and empirical p-value.
pub fn summarize(name: &str, draws: &[f64], ci_level: f64) -> Result<ParameterSummary, InferenceError> {
    if draws.len() < 2 {
        return Err(InferenceError::TooFewDraws {
            needed: 2,
            got: draws.len(),
        });
    }
    if !(ci_level > 0.0 && ci_level < 1.0) {
        return Err(InferenceError::Level(ci_level));
    }
    if draws.iter().any(|x| !x.is_finite()) {
        return Err(InferenceError::NonFinite);
    }
    let n = draws.len() as f64;
    let mean = draws.iter().sum::<f64>() / n;
    let sd = (draws.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    let mut sorted = draws.to_vec();
    sorted.sort_by(f64::total_cmp);
    let tail = (1.0 - ci_level) / 2.0;
    Ok(ParameterSummary {
        name: name.to_string(),
        mean,
        median: quantile_sorted(&sorted, 0.5),
        sd,
        ci_low: quantile_sorted(&sorted, tail),
        ci_high: quantile_sorted(&sorted, 1.0 - tail),
        p_value: empirical_pvalue(draws),
    })
}

/// `2 * min(prop(theta <= 0), prop(theta > 0))`, capped at 1.
///
/// All-zero draw vectors return 1: the raw formula would give 0 and signal
/// a spurious effect.
pub fn empirical_pvalue(draws: &[f64]) -> f64 {
    if draws.is_empty() {
        return f64::NAN;
    }
    if draws.iter().all(|x| *x == 0.0) {
        return 1.0;
    }
    let n = draws.len();
    let at_or_below = draws.iter().filter(|x| **x <= 0.0).count();
    (2.0 * at_or_below.min(n - at_or_below) as f64 / n as f64).min(1.0)
}

/// Formats a p-value, reporting zero as `< 1/draws`.
pub fn format_pvalue(p: f64, n_draws: usize) -> String {
    if p == 0.0 {
        format!("< {}", 1.0 / n_draws as f64)
    } else {
        format!("{p}")
    }
}

/// Summary of the per-draw product `a * b` of jointly drawn coefficients.
pub fn indirect_effect(
    name: &str,
    a_draws: &[f64],
    b_draws: &[f64],
    ci_level: f64,
) -> Result<ParameterSummary, InferenceError> {
    if a_draws.len() != b_draws.len() {
        return Err(InferenceError::LengthMismatch(a_draws.len(), b_draws.len()));
    }
    let product: Vec<f64> = a_draws.iter().zip(b_draws).map(|(a, b)| a * b).collect();
    summarize(name, &product, ci_level)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn four_draws() {
        let s = summarize("x", &[1.0, 2.0, 3.0, 4.0], 0.95).unwrap();
        assert_eq!(s.mean, 2.5);
        assert_eq!(s.median, 2.5);
    }

    #[test]
    fn constant_draws() {
        let s = summarize("x", &[3.5; 10], 0.95).unwrap();
        assert_eq!((s.mean, s.median, s.sd, s.ci_low, s.ci_high), (3.5, 3.5, 0.0, 3.5, 3.5));
    }

    #[test]
    fn errors() {
        assert!(summarize("x", &[], 0.95).is_err());
        assert!(summarize("x", &[1.0, 2.0], 1.0).is_err());
        assert_eq!(
            indirect_effect("ab", &[1.0], &[1.0, 2.0], 0.95).unwrap_err(),
            InferenceError::LengthMismatch(1, 2)
        );
    }

    #[test]
    fn pvalue_formula() {
        assert_eq!(empirical_pvalue(&[1.0, 2.0, 3.0, -1.0]), 0.5);
        assert_eq!(empirical_pvalue(&[0.5; 8000]), 0.0);
        assert_eq!(format_pvalue(0.0, 8000), "< 0.000125");
        assert_eq!(empirical_pvalue(&[-1.0, 1.0, -2.0, 2.0]), 1.0);
        assert_eq!(empirical_pvalue(&[0.0; 5]), 1.0);
    }

    #[test]
    fn product_of_coefficients() {
        let s = indirect_effect("ab", &[1.0, 2.0], &[3.0, 4.0], 0.95).unwrap();
        assert_eq!(s.mean, 5.5);
        let zero = indirect_effect("ab", &[0.0; 4], &[1.0, -2.0, 3.0, 4.0], 0.95).unwrap();
        assert_eq!(zero.mean, 0.0);
        assert_eq!(zero.p_value, 1.0);
    }

    #[test]
    fn type7_quantiles() {
        let sorted = [1.0, 2.0, 3.0, 4.0, 10.0];
        assert_relative_eq!(quantile_sorted(&sorted, 0.25), 2.0);
        assert_relative_eq!(quantile_sorted(&sorted, 0.9), 7.6, epsilon = 1e-12);
    }
}
