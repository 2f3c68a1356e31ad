use nalgebra::{DMatrix, DVector};
use rand::Rng;

use super::params::{Layout, MediationBlock, ParameterState};
use super::{BetweenData, Design, ModelError, RepeatedData};

/// Half-width of the uniform jitter applied to every unconstrained coordinate.
pub const JITTER: f64 = 0.5;

/// Deterministic start values from subject moments and least-squares fits.
///
/// Subjects with fewer than two observations, or with zero spread, start at
/// the pooled within-subject SD.
pub fn start_values(
    repeated: &RepeatedData,
    between: &BetweenData,
    design: Design,
) -> Result<ParameterState, ModelError> {
    let n = repeated.n_subjects();
    if between.n_subjects() != n {
        return Err(ModelError::Dimension(format!(
            "{n} subjects in repeated data, {} in between data",
            between.n_subjects()
        )));
    }
    if design.is_mediation() && between.mediator().is_none() {
        return Err(ModelError::MissingMediator);
    }

    let values = repeated.values();
    let means: Vec<f64> = (0..n)
        .map(|j| {
            let rows = repeated.rows_of(j);
            rows.iter().map(|&i| values[i]).sum::<f64>() / rows.len() as f64
        })
        .collect();

    // within-level fixed effects from the subject-demeaned regression
    let p = repeated.covariates().ncols();
    let v_coefs = if p == 0 {
        Vec::new()
    } else {
        within_coefficients(repeated, &means)?
    };
    let residual = |i: usize| {
        let x = repeated.covariates().row(i);
        values[i] - x.iter().zip(&v_coefs).map(|(a, b)| a * b).sum::<f64>()
    };
    let mut mu_j = vec![0.0; n];
    let mut sd_j = vec![f64::NAN; n];
    let mut pooled_ss = 0.0;
    let mut pooled_df = 0usize;
    for j in 0..n {
        let rows = repeated.rows_of(j);
        let r: Vec<f64> = rows.iter().map(|&i| residual(i)).collect();
        let m = r.iter().sum::<f64>() / r.len() as f64;
        mu_j[j] = m;
        if r.len() >= 2 {
            let ss: f64 = r.iter().map(|x| (x - m).powi(2)).sum();
            pooled_ss += ss;
            pooled_df += r.len() - 1;
            sd_j[j] = (ss / (r.len() - 1) as f64).sqrt();
        }
    }
    let pooled = if pooled_df > 0 {
        (pooled_ss / pooled_df as f64).sqrt()
    } else {
        0.0
    };
    if !(pooled > 0.0) {
        return Err(ModelError::DegenerateData);
    }
    for s in &mut sd_j {
        if !(*s > 0.0) {
            *s = pooled;
        }
    }

    let mu_mu = mean(&mu_j);
    let sigma_mu = {
        let s = sample_sd(&mu_j);
        if s > 0.0 {
            s
        } else {
            pooled
        }
    };
    let m = mean(&sd_j);
    // method of moments, spread floored at 10% of the mean
    let var = sample_sd(&sd_j).powi(2).max((0.1 * m).powi(2));
    let gamma_shape = m * m / var;
    let gamma_rate = m / var;

    let covs = between.covariates();
    let mut base_cols: Vec<Vec<f64>> = (0..covs.ncols()).map(|c| covs.column(c)).collect();
    let mut latent_cols = vec![sd_j.clone()];
    if design.use_latent_mean {
        latent_cols.push(mu_j.clone());
    }
    base_cols.extend(latent_cols.iter().cloned());

    let mediation = if design.is_mediation() {
        let m_obs = between.mediator().expect("checked above");
        let (coefs, sd) = regression_start(m_obs, &base_cols);
        let n_cov = covs.ncols();
        Some(MediationBlock {
            m_coefs: coefs[..=n_cov].to_vec(),
            m_alpha: coefs[n_cov + 1..].to_vec(),
            sigma_m: sd,
            y_on_m: 0.0,
        })
    } else {
        None
    };

    let mut y_cols = base_cols.clone();
    if let Some(m_obs) = between.mediator().filter(|_| design.is_mediation()) {
        y_cols.push(m_obs.to_vec());
    }
    let (y_fit, sigma_y) = regression_start(between.outcome(), &y_cols);
    let n_cov = covs.ncols();
    let y_coefs = y_fit[..=n_cov].to_vec();
    let y_alpha = y_fit[n_cov + 1..n_cov + 1 + design.n_latent()].to_vec();
    let mediation = mediation.map(|mut block| {
        block.y_on_m = y_fit[n_cov + 1 + design.n_latent()];
        block
    });

    Ok(ParameterState {
        mu_mu,
        sigma_mu,
        gamma_shape,
        gamma_rate,
        v_covariate_coefs: v_coefs,
        mu_j,
        sigma_j: sd_j,
        y_coefs,
        y_alpha,
        sigma_y,
        mediation,
    })
}

/// Start values plus independent uniform jitter of `±JITTER` on every
/// unconstrained coordinate. Returns the unconstrained vector.
pub fn initialize<R: Rng + ?Sized>(
    repeated: &RepeatedData,
    between: &BetweenData,
    design: Design,
    rng: &mut R,
) -> Result<Vec<f64>, ModelError> {
    let start = start_values(repeated, between, design)?;
    let layout = Layout::new(
        repeated.n_subjects(),
        repeated.covariates().ncols(),
        between.covariates().ncols(),
        design,
    );
    let mut theta = start.unconstrain(&layout)?;
    jitter(&mut theta, rng);
    Ok(theta)
}

pub fn jitter<R: Rng + ?Sized>(theta: &mut [f64], rng: &mut R) {
    for t in theta.iter_mut() {
        *t += rng.random_range(-JITTER..JITTER);
    }
}

fn within_coefficients(repeated: &RepeatedData, means: &[f64]) -> Result<Vec<f64>, ModelError> {
    let covs = repeated.covariates();
    let p = covs.ncols();
    let n = repeated.n_subjects();
    let mut xbar = vec![vec![0.0; p]; n];
    for (j, xb) in xbar.iter_mut().enumerate() {
        let rows = repeated.rows_of(j);
        for &i in rows {
            for (a, b) in xb.iter_mut().zip(covs.row(i)) {
                *a += b / rows.len() as f64;
            }
        }
    }
    let obs = repeated.n_observations();
    let x = DMatrix::from_fn(obs, p, |i, c| {
        covs.row(i)[c] - xbar[repeated.subjects()[i]][c]
    });
    let y = DVector::from_fn(obs, |i, _| {
        repeated.values()[i] - means[repeated.subjects()[i]]
    });
    // covariates that are constant within every subject carry no within information
    match x.clone().svd(true, true).solve(&y, 1e-10) {
        Ok(b) if b.iter().all(|v| v.is_finite()) => Ok(b.iter().copied().collect()),
        _ => Err(ModelError::RankDeficient("within-level".into())),
    }
}

/// Least squares with intercept; falls back to intercept-only when the
/// design is not estimable. Returns coefficients and a positive residual SD.
fn regression_start(y: &[f64], columns: &[Vec<f64>]) -> (Vec<f64>, f64) {
    let n = y.len();
    let p = columns.len() + 1;
    let x = DMatrix::from_fn(n, p, |r, c| if c == 0 { 1.0 } else { columns[c - 1][r] });
    let yv = DVector::from_column_slice(y);
    if n > p {
        if let Ok(b) = x.clone().svd(true, true).solve(&yv, 1e-10) {
            let resid = &yv - &x * &b;
            let sd = (resid.norm_squared() / (n - p) as f64).sqrt();
            if b.iter().all(|v| v.is_finite()) && sd > 0.0 && sd.is_finite() {
                return (b.iter().copied().collect(), sd);
            }
        }
    }
    let mut coefs = vec![0.0; p];
    coefs[0] = mean(y);
    let sd = sample_sd(y);
    (coefs, if sd > 0.0 { sd } else { 1.0 })
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

fn sample_sd(x: &[f64]) -> f64 {
    if x.len() < 2 {
        return 0.0;
    }
    let m = mean(x);
    (x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (x.len() - 1) as f64).sqrt()
}
