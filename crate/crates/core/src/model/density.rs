use std::f64::consts::PI;

use statrs::function::gamma::{digamma, ln_gamma};

use super::params::{Layout, LOG_RATE, LOG_SHAPE, LOG_SIGMA_MU, MU_MU};
use super::{BetweenData, Design, ModelError, PriorConfig, RepeatedData};
use crate::sampler::LogDensity;

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

/// Log-posterior broken down by contribution.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LogPosteriorTerms {
    /// `sum log N(V_ij | mu_j + x_ij'gamma, sigma_j)`
    pub observations: f64,
    /// `sum log N(mu_j | mu_mu, sigma_mu)`
    pub subject_means: f64,
    /// `sum log Gamma(sigma_j | shape, rate)`
    pub subject_sds: f64,
    pub outcome: f64,
    pub mediator: f64,
    pub priors: f64,
    /// Sum of the log-scale coordinates.
    pub jacobian: f64,
}

impl LogPosteriorTerms {
    pub fn total(&self) -> f64 {
        self.observations
            + self.subject_means
            + self.subject_sds
            + self.outcome
            + self.mediator
            + self.priors
            + self.jacobian
    }
}

/// Per-subject sufficient statistics, used when there are no within-level covariates.
#[derive(Debug, Clone)]
struct SubjectStats {
    count: f64,
    mean: f64,
    centered_ss: f64,
}

/// The hierarchical variability model bound to a dataset.
///
/// Log-density and gradient are pure functions of the unconstrained state,
/// so one model can be shared by reference across sampler threads.
#[derive(Debug, Clone)]
pub struct VariabilityModel {
    repeated: RepeatedData,
    between: BetweenData,
    design: Design,
    priors: PriorConfig,
    layout: Layout,
    stats: Vec<SubjectStats>,
    scale_log_norm: f64,
}

impl VariabilityModel {
    pub fn new(
        repeated: RepeatedData,
        between: BetweenData,
        design: Design,
        priors: PriorConfig,
    ) -> Result<Self, ModelError> {
        priors.validate()?;
        if repeated.n_subjects() != between.n_subjects() {
            return Err(ModelError::Dimension(format!(
                "{} subjects in repeated data, {} in between data",
                repeated.n_subjects(),
                between.n_subjects()
            )));
        }
        if design.is_mediation() && between.mediator().is_none() {
            return Err(ModelError::MissingMediator);
        }
        let layout = Layout::new(
            repeated.n_subjects(),
            repeated.covariates().ncols(),
            between.covariates().ncols(),
            design,
        );
        let stats = (0..repeated.n_subjects())
            .map(|j| {
                let series = repeated.series(j);
                let count = series.len() as f64;
                let mean = series.iter().sum::<f64>() / count;
                let centered_ss = series.iter().map(|v| (v - mean).powi(2)).sum();
                SubjectStats {
                    count,
                    mean,
                    centered_ss,
                }
            })
            .collect();
        // half-Cauchy truncated to the positive axis: normalizer P(X > 0)
        let tail = 0.5 + (priors.scale_prior_location / priors.scale_prior_scale).atan() / PI;
        let scale_log_norm = -(PI * priors.scale_prior_scale).ln() - tail.ln();
        Ok(VariabilityModel {
            repeated,
            between,
            design,
            priors,
            layout,
            stats,
            scale_log_norm,
        })
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn design(&self) -> Design {
        self.design
    }

    pub fn priors(&self) -> &PriorConfig {
        &self.priors
    }

    pub fn repeated(&self) -> &RepeatedData {
        &self.repeated
    }

    pub fn between(&self) -> &BetweenData {
        &self.between
    }

    pub fn dim(&self) -> usize {
        self.layout.dim()
    }

    fn check_state(&self, theta: &[f64]) -> Result<(), ModelError> {
        if theta.len() != self.layout.dim() {
            return Err(ModelError::Dimension(format!(
                "state has {} coordinates, model expects {}",
                theta.len(),
                self.layout.dim()
            )));
        }
        if let Some(i) = theta.iter().position(|t| !t.is_finite()) {
            return Err(ModelError::NonFinite(format!(
                "unconstrained coordinate {i} ({})",
                self.layout.names()[i]
            )));
        }
        Ok(())
    }

    pub fn log_posterior(&self, theta: &[f64]) -> Result<f64, ModelError> {
        Ok(self.terms(theta)?.total())
    }

    pub fn terms(&self, theta: &[f64]) -> Result<LogPosteriorTerms, ModelError> {
        self.check_state(theta)?;
        Ok(self.evaluate(theta, None))
    }

    pub fn grad_log_posterior(&self, theta: &[f64]) -> Result<Vec<f64>, ModelError> {
        self.check_state(theta)?;
        let mut grad = vec![0.0; theta.len()];
        self.evaluate(theta, Some(&mut grad));
        Ok(grad)
    }

    pub fn log_posterior_and_gradient(
        &self,
        theta: &[f64],
        grad: &mut [f64],
    ) -> Result<f64, ModelError> {
        self.check_state(theta)?;
        if grad.len() != theta.len() {
            return Err(ModelError::Dimension("gradient buffer length".into()));
        }
        Ok(self.evaluate(theta, Some(grad)).total())
    }

    fn normal_prior(&self, x: f64) -> (f64, f64) {
        let sd = self.priors.coef_sd;
        let z = (x - self.priors.coef_mean) / sd;
        (-HALF_LN_2PI - sd.ln() - 0.5 * z * z, -z / sd)
    }

    /// Half-Cauchy log density at `x > 0` and its derivative in `ln x`.
    fn scale_prior(&self, x: f64) -> (f64, f64) {
        let s = self.priors.scale_prior_scale;
        let z = (x - self.priors.scale_prior_location) / s;
        let one_z2 = 1.0 + z * z;
        (
            self.scale_log_norm - one_z2.ln(),
            -2.0 * z / (s * one_z2) * x,
        )
    }

    fn evaluate(&self, theta: &[f64], mut grad: Option<&mut [f64]>) -> LogPosteriorTerms {
        let layout = &self.layout;
        if let Some(g) = grad.as_deref_mut() {
            g.fill(0.0);
        }
        let mut terms = LogPosteriorTerms::default();

        let mu_mu = theta[MU_MU];
        let sigma_mu = theta[LOG_SIGMA_MU].exp();
        let shape = theta[LOG_SHAPE].exp();
        let rate = theta[LOG_RATE].exp();
        let gamma_coefs = &theta[layout.v_coefs()];
        let mu = &theta[layout.mu_j()];
        let log_sigma = &theta[layout.log_sigma_j()];
        let n = layout.n_subjects;
        let mu_off = layout.mu_j().start;
        let ls_off = layout.log_sigma_j().start;

        // observation likelihood
        if gamma_coefs.is_empty() {
            for j in 0..n {
                let st = &self.stats[j];
                let inv_var = (-2.0 * log_sigma[j]).exp();
                let dev = st.mean - mu[j];
                let ss = st.centered_ss + st.count * dev * dev;
                terms.observations += -st.count * (HALF_LN_2PI + log_sigma[j]) - 0.5 * ss * inv_var;
                if let Some(g) = grad.as_deref_mut() {
                    g[mu_off + j] += st.count * dev * inv_var;
                    g[ls_off + j] += -st.count + ss * inv_var;
                }
            }
        } else {
            let v_off = layout.v_coefs().start;
            let values = self.repeated.values();
            let covs = self.repeated.covariates();
            let mut sum_r = vec![0.0; n];
            let mut sum_r2 = vec![0.0; n];
            for (i, &j) in self.repeated.subjects().iter().enumerate() {
                let x = covs.row(i);
                let fixed: f64 = x.iter().zip(gamma_coefs).map(|(a, b)| a * b).sum();
                let r = values[i] - mu[j] - fixed;
                sum_r[j] += r;
                sum_r2[j] += r * r;
                if let Some(g) = grad.as_deref_mut() {
                    let w = r * (-2.0 * log_sigma[j]).exp();
                    for (k, xk) in x.iter().enumerate() {
                        g[v_off + k] += xk * w;
                    }
                }
            }
            for j in 0..n {
                let count = self.stats[j].count;
                let inv_var = (-2.0 * log_sigma[j]).exp();
                terms.observations +=
                    -count * (HALF_LN_2PI + log_sigma[j]) - 0.5 * sum_r2[j] * inv_var;
                if let Some(g) = grad.as_deref_mut() {
                    g[mu_off + j] += sum_r[j] * inv_var;
                    g[ls_off + j] += -count + sum_r2[j] * inv_var;
                }
            }
        }

        // subject means around the grand mean
        let inv_var_mu = 1.0 / (sigma_mu * sigma_mu);
        let mut ss_mu = 0.0;
        for j in 0..n {
            let d = mu[j] - mu_mu;
            ss_mu += d * d;
            if let Some(g) = grad.as_deref_mut() {
                g[mu_off + j] -= d * inv_var_mu;
                g[MU_MU] += d * inv_var_mu;
            }
        }
        terms.subject_means = -(n as f64) * (HALF_LN_2PI + theta[LOG_SIGMA_MU]) - 0.5 * ss_mu * inv_var_mu;
        if let Some(g) = grad.as_deref_mut() {
            g[LOG_SIGMA_MU] += -(n as f64) + ss_mu * inv_var_mu;
        }

        // gamma population of subject SDs
        let ln_rate = theta[LOG_RATE];
        let norm = shape * ln_rate - ln_gamma(shape);
        let mut sum_log_sigma = 0.0;
        let mut sum_sigma = 0.0;
        for j in 0..n {
            let s = log_sigma[j].exp();
            sum_log_sigma += log_sigma[j];
            sum_sigma += s;
            if let Some(g) = grad.as_deref_mut() {
                g[ls_off + j] += (shape - 1.0) - rate * s;
            }
        }
        terms.subject_sds = n as f64 * norm + (shape - 1.0) * sum_log_sigma - rate * sum_sigma;
        if let Some(g) = grad.as_deref_mut() {
            g[LOG_SHAPE] += shape * (n as f64 * (ln_rate - digamma(shape)) + sum_log_sigma);
            g[LOG_RATE] += n as f64 * shape - rate * sum_sigma;
        }

        // second stage
        let covs = self.between.covariates();
        let y_coefs = &theta[layout.y_coefs()];
        let y_alpha = &theta[layout.y_alpha()];
        let y_on_m = layout.y_on_m().map(|i| theta[i]);
        let mediator = self.between.mediator();
        let ls_y = theta[layout.log_sigma_y()];
        terms.outcome = self.regression_block(
            theta,
            grad.as_deref_mut(),
            self.between.outcome(),
            layout.y_coefs().start,
            y_coefs,
            layout.y_alpha().start,
            y_alpha,
            y_on_m.zip(layout.y_on_m()).zip(mediator),
            layout.log_sigma_y(),
            ls_y,
            covs,
        );
        if let (Some(mc), Some(ma), Some(sm), Some(m_obs)) =
            (layout.m_coefs(), layout.m_alpha(), layout.log_sigma_m(), mediator)
        {
            terms.mediator = self.regression_block(
                theta,
                grad.as_deref_mut(),
                m_obs,
                mc.start,
                &theta[mc.clone()],
                ma.start,
                &theta[ma.clone()],
                None,
                sm,
                theta[sm],
                covs,
            );
        }

        // priors on locations and coefficients
        let mut coef_indices: Vec<usize> = vec![MU_MU];
        coef_indices.extend(layout.v_coefs());
        coef_indices.extend(layout.y_coefs());
        coef_indices.extend(layout.y_alpha());
        coef_indices.extend(layout.y_on_m());
        if let (Some(mc), Some(ma)) = (layout.m_coefs(), layout.m_alpha()) {
            coef_indices.extend(mc);
            coef_indices.extend(ma);
        }
        for i in coef_indices {
            let (lp, d) = self.normal_prior(theta[i]);
            terms.priors += lp;
            if let Some(g) = grad.as_deref_mut() {
                g[i] += d;
            }
        }
        let mut scale_indices = vec![LOG_SIGMA_MU, LOG_SHAPE, LOG_RATE, layout.log_sigma_y()];
        scale_indices.extend(layout.log_sigma_m());
        for i in scale_indices {
            let (lp, d) = self.scale_prior(theta[i].exp());
            terms.priors += lp;
            if let Some(g) = grad.as_deref_mut() {
                g[i] += d;
            }
        }

        // log |d exp(u) / du| = u
        for i in layout.log_scale_indices() {
            terms.jacobian += theta[i];
            if let Some(g) = grad.as_deref_mut() {
                g[i] += 1.0;
            }
        }
        terms
    }

    /// Gaussian regression of `response` on `[1, covariates, sigma_j, (mu_j), (mediator)]`.
    #[allow(clippy::too_many_arguments)]
    fn regression_block(
        &self,
        theta: &[f64],
        mut grad: Option<&mut [f64]>,
        response: &[f64],
        coef_off: usize,
        coefs: &[f64],
        alpha_off: usize,
        alpha: &[f64],
        extra: Option<((f64, usize), &[f64])>,
        log_sd_index: usize,
        log_sd: f64,
        covs: &super::Covariates,
    ) -> f64 {
        let layout = &self.layout;
        let mu_off = layout.mu_j().start;
        let ls_off = layout.log_sigma_j().start;
        let inv_var = (-2.0 * log_sd).exp();
        let mut ss = 0.0;
        let n = response.len();
        for j in 0..n {
            let x = covs.row(j);
            let sigma_j = theta[ls_off + j].exp();
            let mu_j = theta[mu_off + j];
            let mut eta = coefs[0];
            for (c, xv) in coefs[1..].iter().zip(x) {
                eta += c * xv;
            }
            eta += alpha[0] * sigma_j;
            if alpha.len() > 1 {
                eta += alpha[1] * mu_j;
            }
            if let Some(((b, _), m)) = extra {
                eta += b * m[j];
            }
            let r = response[j] - eta;
            ss += r * r;
            if let Some(g) = grad.as_deref_mut() {
                let w = r * inv_var;
                g[coef_off] += w;
                for (k, xv) in x.iter().enumerate() {
                    g[coef_off + 1 + k] += w * xv;
                }
                g[alpha_off] += w * sigma_j;
                g[ls_off + j] += w * alpha[0] * sigma_j;
                if alpha.len() > 1 {
                    g[alpha_off + 1] += w * mu_j;
                    g[mu_off + j] += w * alpha[1];
                }
                if let Some(((_, b_index), m)) = extra {
                    g[b_index] += w * m[j];
                }
            }
        }
        if let Some(g) = grad {
            g[log_sd_index] += -(n as f64) + ss * inv_var;
        }
        -(n as f64) * (HALF_LN_2PI + log_sd) - 0.5 * ss * inv_var
    }
}

impl LogDensity for VariabilityModel {
    fn dim(&self) -> usize {
        self.layout.dim()
    }

    fn log_density_gradient(&self, position: &[f64], gradient: &mut [f64]) -> f64 {
        if position.iter().any(|t| !t.is_finite()) {
            return f64::NEG_INFINITY;
        }
        let lp = self.evaluate(position, Some(gradient)).total();
        if lp.is_nan() {
            f64::NEG_INFINITY
        } else {
            lp
        }
    }

    fn param_names(&self) -> Vec<String> {
        self.layout.names()
    }

    fn constrain(&self, position: &[f64], out: &mut Vec<f64>) {
        self.layout.constrain_flat(position, out);
    }
}
