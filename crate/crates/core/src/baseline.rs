//! Classical variability estimators and the individual-SD regression
//! comparator (ordinary least squares with normal-theory intervals).

use nalgebra::{DMatrix, DVector};
use statrs::distribution::{ContinuousCDF, StudentsT};
use thiserror::Error;

use crate::model::{BetweenData, RepeatedData};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BaselineError {
    #[error("undefined ISD: need at least 2 observations, got {0}")]
    UndefinedIsd(usize),
    #[error("undefined RMSSD: no pair of successive observations")]
    NoSuccessivePair,
    #[error("collinear design")]
    Collinear,
    #[error("need more rows ({rows}) than columns ({cols})")]
    TooFewRows { rows: usize, cols: usize },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("subjects with fewer than 2 observations: {0:?}")]
    ShortSeries(Vec<usize>),
    #[error("confidence level must lie in (0, 1), got {0}")]
    Level(f64),
}

/// Individual standard deviation (sample SD, `n - 1` denominator).
pub fn isd(series: &[f64]) -> Result<f64, BaselineError> {
    if series.len() < 2 {
        return Err(BaselineError::UndefinedIsd(series.len()));
    }
    let n = series.len() as f64;
    let mean = series.iter().sum::<f64>() / n;
    Ok((series.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt())
}

/// ISD of the residuals from a per-subject least-squares fit on `covariates`
/// (intercept added), e.g. a time column for a linear trend.
pub fn isd_detrended(series: &[f64], covariates: &[Vec<f64>]) -> Result<f64, BaselineError> {
    let n = series.len();
    let p = covariates.len() + 1;
    if covariates.iter().any(|c| c.len() != n) {
        return Err(BaselineError::Dimension("covariate length".into()));
    }
    if n < 2 {
        return Err(BaselineError::UndefinedIsd(n));
    }
    if n < p {
        return Err(BaselineError::TooFewRows { rows: n, cols: p });
    }
    let x = DMatrix::from_fn(n, p, |r, c| if c == 0 { 1.0 } else { covariates[c - 1][r] });
    let y = DVector::from_column_slice(series);
    let (beta, _) = least_squares(&x, &y)?;
    let resid: Vec<f64> = (&y - &x * beta).iter().copied().collect();
    isd(&resid)
}

/// QR least squares for `rows >= cols`; returns the coefficients and `R`.
fn least_squares(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
) -> Result<(DVector<f64>, DMatrix<f64>), BaselineError> {
    let (rows, cols) = x.shape();
    let qr = x.clone().qr();
    let r = qr.r();
    let max_diag = r.diagonal().iter().fold(0.0f64, |m, d| m.max(d.abs()));
    let tol = max_diag * rows.max(cols) as f64 * f64::EPSILON * 16.0;
    if r.diagonal().iter().any(|d| d.abs() <= tol) {
        return Err(BaselineError::Collinear);
    }
    let qty = qr.q().transpose() * y;
    let beta = r
        .solve_upper_triangular(&qty)
        .ok_or(BaselineError::Collinear)?;
    Ok((beta, r))
}

/// Root mean square of successive differences; `None` marks a missing
/// observation, and pairs touching one are dropped.
pub fn rmssd(series: &[Option<f64>]) -> Result<f64, BaselineError> {
    let diffs: Vec<f64> = series
        .windows(2)
        .filter_map(|w| match (w[0], w[1]) {
            (Some(a), Some(b)) => Some(b - a),
            _ => None,
        })
        .collect();
    if diffs.is_empty() {
        return Err(BaselineError::NoSuccessivePair);
    }
    Ok((diffs.iter().map(|d| d * d).sum::<f64>() / diffs.len() as f64).sqrt())
}

/// RMSSD for observations at integer time points; pairs whose times are
/// not consecutive are dropped.
pub fn rmssd_indexed(times: &[i64], values: &[f64]) -> Result<f64, BaselineError> {
    if times.len() != values.len() {
        return Err(BaselineError::Dimension("times and values differ in length".into()));
    }
    let mut obs: Vec<(i64, f64)> = times.iter().copied().zip(values.iter().copied()).collect();
    obs.sort_by_key(|o| o.0);
    let diffs: Vec<f64> = obs
        .windows(2)
        .filter(|w| w[1].0 - w[0].0 == 1)
        .map(|w| w[1].1 - w[0].1)
        .collect();
    if diffs.is_empty() {
        return Err(BaselineError::NoSuccessivePair);
    }
    Ok((diffs.iter().map(|d| d * d).sum::<f64>() / diffs.len() as f64).sqrt())
}

#[derive(Debug, Clone, PartialEq)]
pub struct OlsFit {
    pub coefs: Vec<f64>,
    pub standard_errors: Vec<f64>,
    pub ci_low: Vec<f64>,
    pub ci_high: Vec<f64>,
    pub residual_sd: f64,
    pub df: usize,
}

/// Least squares via Householder QR with Student-t intervals.
/// `x` must already contain the intercept column.
pub fn ols_fit(x: &DMatrix<f64>, y: &[f64], ci_level: f64) -> Result<OlsFit, BaselineError> {
    let (rows, cols) = x.shape();
    if y.len() != rows {
        return Err(BaselineError::Dimension(format!(
            "{} responses for {rows} rows",
            y.len()
        )));
    }
    if rows <= cols {
        return Err(BaselineError::TooFewRows { rows, cols });
    }
    if !(ci_level > 0.0 && ci_level < 1.0) {
        return Err(BaselineError::Level(ci_level));
    }
    let yv = DVector::from_column_slice(y);
    let (beta, r) = least_squares(x, &yv)?;
    let resid = &yv - x * &beta;
    let df = rows - cols;
    let sigma2 = resid.norm_squared() / df as f64;
    let r_inv = r
        .solve_upper_triangular(&DMatrix::identity(cols, cols))
        .ok_or(BaselineError::Collinear)?;
    let t = StudentsT::new(0.0, 1.0, df as f64)
        .expect("positive degrees of freedom")
        .inverse_cdf(1.0 - (1.0 - ci_level) / 2.0);
    let mut standard_errors = Vec::with_capacity(cols);
    for i in 0..cols {
        let diag: f64 = r_inv.row(i).iter().map(|v| v * v).sum();
        standard_errors.push((sigma2 * diag).sqrt());
    }
    let coefs: Vec<f64> = beta.iter().copied().collect();
    Ok(OlsFit {
        ci_low: coefs.iter().zip(&standard_errors).map(|(b, s)| b - t * s).collect(),
        ci_high: coefs.iter().zip(&standard_errors).map(|(b, s)| b + t * s).collect(),
        coefs,
        standard_errors,
        residual_sd: sigma2.sqrt(),
        df,
    })
}

/// Per-subject ISDs and means.
pub fn subject_moments(repeated: &RepeatedData) -> Result<(Vec<f64>, Vec<f64>), BaselineError> {
    let counts = repeated.counts();
    let short: Vec<usize> = counts
        .iter()
        .enumerate()
        .filter(|(_, c)| **c < 2)
        .map(|(j, _)| j)
        .collect();
    if !short.is_empty() {
        return Err(BaselineError::ShortSeries(short));
    }
    let mut isds = Vec::with_capacity(counts.len());
    let mut means = Vec::with_capacity(counts.len());
    for j in 0..counts.len() {
        let s = repeated.series(j);
        means.push(s.iter().sum::<f64>() / s.len() as f64);
        isds.push(isd(&s)?);
    }
    Ok((isds, means))
}

/// The ISD model: regress the outcome on `[1, covariates, ISD_j, mean_j]`.
/// Coefficient order follows the columns.
pub fn isd_model(
    repeated: &RepeatedData,
    between: &BetweenData,
    ci_level: f64,
) -> Result<OlsFit, BaselineError> {
    if repeated.n_subjects() != between.n_subjects() {
        return Err(BaselineError::Dimension(format!(
            "{} subjects in repeated data, {} in between data",
            repeated.n_subjects(),
            between.n_subjects()
        )));
    }
    let (isds, means) = subject_moments(repeated)?;
    let covs = between.covariates();
    let k = covs.ncols();
    let x = DMatrix::from_fn(between.n_subjects(), k + 3, |r, c| match c {
        0 => 1.0,
        c if c <= k => covs.row(r)[c - 1],
        c if c == k + 1 => isds[r],
        _ => means[r],
    });
    ols_fit(&x, between.outcome(), ci_level)
}
