use nalgebra::DMatrix;

use super::ModelError;

/// Row-major matrix of covariate values with column labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Covariates {
    names: Vec<String>,
    rows: usize,
    values: Vec<f64>,
}

impl Covariates {
    pub fn empty(rows: usize) -> Self {
        Covariates {
            names: Vec::new(),
            rows,
            values: Vec::new(),
        }
    }

    /// Builds a matrix from named columns of equal length.
    pub fn from_columns(names: Vec<String>, columns: Vec<Vec<f64>>) -> Result<Self, ModelError> {
        if names.len() != columns.len() {
            return Err(ModelError::Dimension(format!(
                "{} covariate names for {} columns",
                names.len(),
                columns.len()
            )));
        }
        let rows = columns.first().map_or(0, Vec::len);
        if columns.iter().any(|c| c.len() != rows) {
            return Err(ModelError::Dimension(
                "covariate columns have different lengths".into(),
            ));
        }
        let ncols = columns.len();
        let mut values = vec![0.0; rows * ncols];
        for (c, col) in columns.iter().enumerate() {
            for (r, v) in col.iter().enumerate() {
                values[r * ncols + c] = *v;
            }
        }
        Ok(Covariates {
            names,
            rows,
            values,
        })
    }

    pub fn nrows(&self) -> usize {
        self.rows
    }

    pub fn ncols(&self) -> usize {
        self.names.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        let p = self.ncols();
        &self.values[r * p..(r + 1) * p]
    }

    pub fn column(&self, c: usize) -> Vec<f64> {
        (0..self.rows).map(|r| self.row(r)[c]).collect()
    }

    /// Checks finiteness, rejects constant columns (intercepts are implicit)
    /// and verifies `[1 | X]` has full column rank.
    fn validate(&self, what: &str) -> Result<(), ModelError> {
        if let Some(i) = self.values.iter().position(|v| !v.is_finite()) {
            return Err(ModelError::NonFinite(format!(
                "{what} covariate at row {}, column '{}'",
                i / self.ncols() + 1,
                self.names[i % self.ncols()]
            )));
        }
        if self.ncols() == 0 {
            return Ok(());
        }
        for c in 0..self.ncols() {
            let first = self.row(0)[c];
            if (0..self.rows).all(|r| self.row(r)[c] == first) {
                return Err(ModelError::ConstantCovariate {
                    block: what.to_string(),
                    column: self.names[c].clone(),
                });
            }
        }
        let with_intercept = self.design_with_intercept();
        if rank(&with_intercept) < with_intercept.ncols() {
            return Err(ModelError::RankDeficient(what.to_string()));
        }
        Ok(())
    }

    /// `[1 | X]` as a dense matrix.
    pub fn design_with_intercept(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.rows, self.ncols() + 1, |r, c| {
            if c == 0 {
                1.0
            } else {
                self.row(r)[c - 1]
            }
        })
    }
}

fn rank(m: &DMatrix<f64>) -> usize {
    if m.nrows() < m.ncols() {
        return m.nrows();
    }
    let svd = m.clone().svd(false, false);
    let max = svd.singular_values.max();
    let tol = max * (m.nrows().max(m.ncols()) as f64) * f64::EPSILON;
    svd.singular_values.iter().filter(|s| **s > tol).count()
}

/// Long-format repeated measures `V_ij` with subject indices `0..N`.
#[derive(Debug, Clone, PartialEq)]
pub struct RepeatedData {
    subject: Vec<usize>,
    value: Vec<f64>,
    covariates: Covariates,
    n_subjects: usize,
    by_subject: Vec<Vec<usize>>,
}

impl RepeatedData {
    pub fn new(
        subject: Vec<usize>,
        value: Vec<f64>,
        covariates: Option<Covariates>,
    ) -> Result<Self, ModelError> {
        if subject.len() != value.len() {
            return Err(ModelError::Dimension(format!(
                "{} subject indices for {} values",
                subject.len(),
                value.len()
            )));
        }
        if value.is_empty() {
            return Err(ModelError::Dimension("no observations".into()));
        }
        if let Some(i) = value.iter().position(|v| !v.is_finite()) {
            return Err(ModelError::NonFinite(format!("value at observation {}", i + 1)));
        }
        let n_subjects = subject.iter().max().map_or(0, |m| m + 1);
        let mut by_subject = vec![Vec::new(); n_subjects];
        for (i, &s) in subject.iter().enumerate() {
            by_subject[s].push(i);
        }
        if let Some(j) = by_subject.iter().position(Vec::is_empty) {
            return Err(ModelError::MissingSubject(j));
        }
        let covariates = covariates.unwrap_or_else(|| Covariates::empty(value.len()));
        if covariates.nrows() != value.len() {
            return Err(ModelError::Dimension(format!(
                "{} covariate rows for {} observations",
                covariates.nrows(),
                value.len()
            )));
        }
        covariates.validate("within-level")?;
        Ok(RepeatedData {
            subject,
            value,
            covariates,
            n_subjects,
            by_subject,
        })
    }

    pub fn n_subjects(&self) -> usize {
        self.n_subjects
    }

    pub fn n_observations(&self) -> usize {
        self.value.len()
    }

    pub fn subjects(&self) -> &[usize] {
        &self.subject
    }

    pub fn values(&self) -> &[f64] {
        &self.value
    }

    pub fn covariates(&self) -> &Covariates {
        &self.covariates
    }

    /// Observation indices belonging to subject `j`, in input order.
    pub fn rows_of(&self, j: usize) -> &[usize] {
        &self.by_subject[j]
    }

    pub fn series(&self, j: usize) -> Vec<f64> {
        self.by_subject[j].iter().map(|&i| self.value[i]).collect()
    }

    pub fn counts(&self) -> Vec<usize> {
        self.by_subject.iter().map(Vec::len).collect()
    }
}

/// One row per subject: outcome, optional mediator and between-level covariates.
#[derive(Debug, Clone, PartialEq)]
pub struct BetweenData {
    outcome: Vec<f64>,
    mediator: Option<Vec<f64>>,
    covariates: Covariates,
}

impl BetweenData {
    pub fn new(
        outcome: Vec<f64>,
        mediator: Option<Vec<f64>>,
        covariates: Option<Covariates>,
    ) -> Result<Self, ModelError> {
        let n = outcome.len();
        if let Some(i) = outcome.iter().position(|v| !v.is_finite()) {
            return Err(ModelError::NonFinite(format!("outcome for subject {}", i + 1)));
        }
        if let Some(m) = &mediator {
            if m.len() != n {
                return Err(ModelError::Dimension(format!(
                    "{} mediator values for {n} subjects",
                    m.len()
                )));
            }
            if let Some(i) = m.iter().position(|v| !v.is_finite()) {
                return Err(ModelError::NonFinite(format!("mediator for subject {}", i + 1)));
            }
        }
        let covariates = covariates.unwrap_or_else(|| Covariates::empty(n));
        if covariates.nrows() != n {
            return Err(ModelError::Dimension(format!(
                "{} between-level covariate rows for {n} subjects",
                covariates.nrows()
            )));
        }
        covariates.validate("between-level")?;
        Ok(BetweenData {
            outcome,
            mediator,
            covariates,
        })
    }

    pub fn n_subjects(&self) -> usize {
        self.outcome.len()
    }

    pub fn outcome(&self) -> &[f64] {
        &self.outcome
    }

    pub fn mediator(&self) -> Option<&[f64]> {
        self.mediator.as_deref()
    }

    pub fn covariates(&self) -> &Covariates {
        &self.covariates
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum DesignKind {
    /// Latent variability (and mean) predict the outcome.
    VtoY,
    /// Latent variability (and mean) predict a mediator, which predicts the outcome.
    VtoMtoY,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Design {
    pub kind: DesignKind,
    pub use_latent_mean: bool,
}

impl Design {
    pub fn v_to_y(use_latent_mean: bool) -> Self {
        Design {
            kind: DesignKind::VtoY,
            use_latent_mean,
        }
    }

    pub fn v_to_m_to_y(use_latent_mean: bool) -> Self {
        Design {
            kind: DesignKind::VtoMtoY,
            use_latent_mean,
        }
    }

    pub fn is_mediation(&self) -> bool {
        self.kind == DesignKind::VtoMtoY
    }

    /// Number of latent predictors entering each second-stage regression.
    pub fn n_latent(&self) -> usize {
        if self.use_latent_mean {
            2
        } else {
            1
        }
    }

    pub fn label(&self) -> &'static str {
        match self.kind {
            DesignKind::VtoY => "V -> Y",
            DesignKind::VtoMtoY => "V -> M -> Y",
        }
    }
}

/// Normal priors on locations and coefficients, half-Cauchy priors on scales.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PriorConfig {
    pub coef_mean: f64,
    pub coef_sd: f64,
    pub scale_prior_location: f64,
    pub scale_prior_scale: f64,
}

impl Default for PriorConfig {
    fn default() -> Self {
        PriorConfig {
            coef_mean: 0.0,
            coef_sd: 1000.0,
            scale_prior_location: 0.0,
            scale_prior_scale: 10.0,
        }
    }
}

impl PriorConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        if !(self.coef_sd > 0.0 && self.coef_sd.is_finite()) {
            return Err(ModelError::InvalidPrior("coef_sd must be positive".into()));
        }
        if !(self.scale_prior_scale > 0.0 && self.scale_prior_scale.is_finite()) {
            return Err(ModelError::InvalidPrior(
                "scale_prior_scale must be positive".into(),
            ));
        }
        if !self.coef_mean.is_finite() || !self.scale_prior_location.is_finite() {
            return Err(ModelError::InvalidPrior("prior locations must be finite".into()));
        }
        Ok(())
    }
}
