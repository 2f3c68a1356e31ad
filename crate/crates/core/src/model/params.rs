use std::ops::Range;

use super::{Design, ModelError};

/// Position of every block inside the flat unconstrained vector.
///
/// Order: `mu_mu, ln sigma_mu, ln shape, ln rate, v_coefs, mu_j, ln sigma_j,
/// y_coefs, y_alpha, [y_on_m], ln sigma_y, [m_coefs, m_alpha, ln sigma_m]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layout {
    pub n_subjects: usize,
    pub n_v_covariates: usize,
    pub n_between_covariates: usize,
    pub design: Design,
}

pub(crate) const MU_MU: usize = 0;
pub(crate) const LOG_SIGMA_MU: usize = 1;
pub(crate) const LOG_SHAPE: usize = 2;
pub(crate) const LOG_RATE: usize = 3;

impl Layout {
    pub fn new(
        n_subjects: usize,
        n_v_covariates: usize,
        n_between_covariates: usize,
        design: Design,
    ) -> Self {
        Layout {
            n_subjects,
            n_v_covariates,
            n_between_covariates,
            design,
        }
    }

    pub fn v_coefs(&self) -> Range<usize> {
        4..4 + self.n_v_covariates
    }

    pub fn mu_j(&self) -> Range<usize> {
        let s = self.v_coefs().end;
        s..s + self.n_subjects
    }

    pub fn log_sigma_j(&self) -> Range<usize> {
        let s = self.mu_j().end;
        s..s + self.n_subjects
    }

    pub fn y_coefs(&self) -> Range<usize> {
        let s = self.log_sigma_j().end;
        s..s + 1 + self.n_between_covariates
    }

    pub fn y_alpha(&self) -> Range<usize> {
        let s = self.y_coefs().end;
        s..s + self.design.n_latent()
    }

    pub fn y_on_m(&self) -> Option<usize> {
        self.design.is_mediation().then(|| self.y_alpha().end)
    }

    pub fn log_sigma_y(&self) -> usize {
        self.y_alpha().end + usize::from(self.design.is_mediation())
    }

    pub fn m_coefs(&self) -> Option<Range<usize>> {
        self.design.is_mediation().then(|| {
            let s = self.log_sigma_y() + 1;
            s..s + 1 + self.n_between_covariates
        })
    }

    pub fn m_alpha(&self) -> Option<Range<usize>> {
        self.m_coefs().map(|r| r.end..r.end + self.design.n_latent())
    }

    pub fn log_sigma_m(&self) -> Option<usize> {
        self.m_alpha().map(|r| r.end)
    }

    pub fn dim(&self) -> usize {
        match self.log_sigma_m() {
            Some(i) => i + 1,
            None => self.log_sigma_y() + 1,
        }
    }

    /// Indices of log-transformed (positive) coordinates.
    pub fn log_scale_indices(&self) -> Vec<usize> {
        let mut out = vec![LOG_SIGMA_MU, LOG_SHAPE, LOG_RATE];
        out.extend(self.log_sigma_j());
        out.push(self.log_sigma_y());
        out.extend(self.log_sigma_m());
        out
    }

    /// Output labels for each coordinate, 1-based as in the R package.
    pub fn names(&self) -> Vec<String> {
        let mut names = vec![String::new(); self.dim()];
        names[MU_MU] = "VB[1]".into();
        names[LOG_SIGMA_MU] = "sigma_U".into();
        names[LOG_SHAPE] = "shape".into();
        names[LOG_RATE] = "rate".into();
        for (k, i) in self.v_coefs().enumerate() {
            names[i] = format!("VB[{}]", k + 2);
        }
        for (j, i) in self.mu_j().enumerate() {
            names[i] = format!("Est_U[{}]", j + 1);
        }
        for (j, i) in self.log_sigma_j().enumerate() {
            names[i] = format!("Est_Sigma[{}]", j + 1);
        }
        for (k, i) in self.y_coefs().enumerate() {
            names[i] = format!("YB[{}]", k + 1);
        }
        for (k, i) in self.y_alpha().enumerate() {
            names[i] = format!("Yalpha[{}]", k + 1);
        }
        if let Some(i) = self.y_on_m() {
            names[i] = "YMed".into();
        }
        names[self.log_sigma_y()] = "sigma_Y".into();
        if let (Some(mc), Some(ma), Some(sm)) = (self.m_coefs(), self.m_alpha(), self.log_sigma_m())
        {
            for (k, i) in mc.enumerate() {
                names[i] = format!("MB[{}]", k + 1);
            }
            for (k, i) in ma.enumerate() {
                names[i] = format!("Malpha[{}]", k + 1);
            }
            names[sm] = "sigma_M".into();
        }
        names
    }

    /// Maps an unconstrained vector to a constrained [`ParameterState`].
    pub fn constrain(&self, theta: &[f64]) -> Result<ParameterState, ModelError> {
        if theta.len() != self.dim() {
            return Err(ModelError::Dimension(format!(
                "state has {} coordinates, layout expects {}",
                theta.len(),
                self.dim()
            )));
        }
        let slice = |r: Range<usize>| theta[r].to_vec();
        let mediation = match (self.m_coefs(), self.m_alpha(), self.log_sigma_m(), self.y_on_m()) {
            (Some(mc), Some(ma), Some(sm), Some(b)) => Some(MediationBlock {
                m_coefs: slice(mc),
                m_alpha: slice(ma),
                sigma_m: theta[sm].exp(),
                y_on_m: theta[b],
            }),
            _ => None,
        };
        Ok(ParameterState {
            mu_mu: theta[MU_MU],
            sigma_mu: theta[LOG_SIGMA_MU].exp(),
            gamma_shape: theta[LOG_SHAPE].exp(),
            gamma_rate: theta[LOG_RATE].exp(),
            v_covariate_coefs: slice(self.v_coefs()),
            mu_j: slice(self.mu_j()),
            sigma_j: theta[self.log_sigma_j()].iter().map(|u| u.exp()).collect(),
            y_coefs: slice(self.y_coefs()),
            y_alpha: slice(self.y_alpha()),
            sigma_y: theta[self.log_sigma_y()].exp(),
            mediation,
        })
    }

    /// Writes the constrained value of every coordinate (same order as `names`).
    pub fn constrain_flat(&self, theta: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.extend_from_slice(theta);
        for i in self.log_scale_indices() {
            out[i] = theta[i].exp();
        }
    }
}

/// Mediator regression and the mediator's effect on the outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct MediationBlock {
    pub m_coefs: Vec<f64>,
    pub m_alpha: Vec<f64>,
    pub sigma_m: f64,
    pub y_on_m: f64,
}

/// Full parameter vector in constrained coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterState {
    pub mu_mu: f64,
    pub sigma_mu: f64,
    pub gamma_shape: f64,
    /// Rate parameterization: mean of the subject SDs is `shape / rate`.
    pub gamma_rate: f64,
    pub v_covariate_coefs: Vec<f64>,
    pub mu_j: Vec<f64>,
    pub sigma_j: Vec<f64>,
    /// Intercept followed by between-level covariate coefficients.
    pub y_coefs: Vec<f64>,
    /// Effect of `sigma_j`, then (optionally) of `mu_j`.
    pub y_alpha: Vec<f64>,
    pub sigma_y: f64,
    pub mediation: Option<MediationBlock>,
}

impl ParameterState {
    pub fn layout(&self) -> Layout {
        let design = Design {
            kind: if self.mediation.is_some() {
                super::DesignKind::VtoMtoY
            } else {
                super::DesignKind::VtoY
            },
            use_latent_mean: self.y_alpha.len() == 2,
        };
        Layout::new(
            self.mu_j.len(),
            self.v_covariate_coefs.len(),
            self.y_coefs.len().saturating_sub(1),
            design,
        )
    }

    fn check(&self, layout: &Layout) -> Result<(), ModelError> {
        let n = layout.n_subjects;
        let ok = self.mu_j.len() == n
            && self.sigma_j.len() == n
            && self.v_covariate_coefs.len() == layout.n_v_covariates
            && self.y_coefs.len() == layout.n_between_covariates + 1
            && self.y_alpha.len() == layout.design.n_latent()
            && self.mediation.is_some() == layout.design.is_mediation()
            && self.mediation.as_ref().is_none_or(|m| {
                m.m_coefs.len() == layout.n_between_covariates + 1
                    && m.m_alpha.len() == layout.design.n_latent()
            });
        if !ok {
            return Err(ModelError::Dimension(
                "parameter state does not match layout".into(),
            ));
        }
        let mut positives = vec![self.sigma_mu, self.gamma_shape, self.gamma_rate, self.sigma_y];
        positives.extend(&self.sigma_j);
        if let Some(m) = &self.mediation {
            positives.push(m.sigma_m);
        }
        if positives.iter().any(|p| !(*p > 0.0)) {
            return Err(ModelError::Constraint(
                "scale parameters must be strictly positive".into(),
            ));
        }
        Ok(())
    }

    /// Flattens to unconstrained coordinates in the given layout.
    pub fn unconstrain(&self, layout: &Layout) -> Result<Vec<f64>, ModelError> {
        self.check(layout)?;
        let mut theta = vec![0.0; layout.dim()];
        theta[MU_MU] = self.mu_mu;
        theta[LOG_SIGMA_MU] = self.sigma_mu.ln();
        theta[LOG_SHAPE] = self.gamma_shape.ln();
        theta[LOG_RATE] = self.gamma_rate.ln();
        theta[layout.v_coefs()].copy_from_slice(&self.v_covariate_coefs);
        theta[layout.mu_j()].copy_from_slice(&self.mu_j);
        for (t, s) in theta[layout.log_sigma_j()].iter_mut().zip(&self.sigma_j) {
            *t = s.ln();
        }
        theta[layout.y_coefs()].copy_from_slice(&self.y_coefs);
        theta[layout.y_alpha()].copy_from_slice(&self.y_alpha);
        theta[layout.log_sigma_y()] = self.sigma_y.ln();
        if let (Some(m), Some(mc), Some(ma), Some(sm), Some(b)) = (
            &self.mediation,
            layout.m_coefs(),
            layout.m_alpha(),
            layout.log_sigma_m(),
            layout.y_on_m(),
        ) {
            theta[mc].copy_from_slice(&m.m_coefs);
            theta[ma].copy_from_slice(&m.m_alpha);
            theta[sm] = m.sigma_m.ln();
            theta[b] = m.y_on_m;
        }
        Ok(theta)
    }
}
