//! Hierarchical location-scale model.
//!
//! Observations `V_ij ~ N(mu_j + x_ij'gamma, sigma_j)`, subject means
//! `mu_j ~ N(mu_mu, sigma_mu)`, subject SDs `sigma_j ~ Gamma(shape, rate)`,
//! and one or two second-stage Gaussian regressions in which the latent
//! `sigma_j` (and optionally `mu_j`) act as predictors. Every positive
//! parameter is sampled on the log scale.

mod data;
mod density;
mod init;
mod params;

pub use data::{BetweenData, Covariates, Design, DesignKind, PriorConfig, RepeatedData};
pub use density::{LogPosteriorTerms, VariabilityModel};
pub use init::{initialize, jitter, start_values, JITTER};
pub use params::{Layout, MediationBlock, ParameterState};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("non-finite input: {0}")]
    NonFinite(String),
    #[error("subject {0} has no observations")]
    MissingSubject(usize),
    #[error("{block} covariate '{column}' is constant; intercepts are implicit")]
    ConstantCovariate { block: String, column: String },
    #[error("{0} covariates are collinear")]
    RankDeficient(String),
    #[error("mediation design requires a mediator")]
    MissingMediator,
    #[error("invalid prior: {0}")]
    InvalidPrior(String),
    #[error("constraint violated: {0}")]
    Constraint(String),
    #[error("degenerate repeated data: no within-subject variation")]
    DegenerateData,
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn single(values: &[f64]) -> (RepeatedData, BetweenData) {
        let rep = RepeatedData::new(vec![0; values.len()], values.to_vec(), None).unwrap();
        let bet = BetweenData::new(vec![0.0], None, None).unwrap();
        (rep, bet)
    }

    #[test]
    fn single_observation_term_is_standard_normal_at_mean() {
        let (rep, bet) = single(&[0.0]);
        let model =
            VariabilityModel::new(rep, bet, Design::v_to_y(false), PriorConfig::default()).unwrap();
        let mut theta = vec![0.0; model.dim()];
        let layout = model.layout().clone();
        theta[layout.mu_j().start] = 0.0;
        theta[layout.log_sigma_j().start] = 0.0;
        let terms = model.terms(&theta).unwrap();
        assert_relative_eq!(terms.observations, -0.918_938_533_204_672_7, epsilon = 1e-12);
    }

    #[test]
    fn doubling_outcome_sd_with_zero_residuals_costs_n_ln2() {
        let rep = RepeatedData::new(vec![0, 0, 1, 1, 2, 2], vec![1., 2., 3., 5., 0., 1.], None)
            .unwrap();
        let layout = Layout::new(3, 0, 0, Design::v_to_y(true));
        let state = ParameterState {
            mu_mu: 1.0,
            sigma_mu: 1.0,
            gamma_shape: 2.0,
            gamma_rate: 1.0,
            v_covariate_coefs: vec![],
            mu_j: vec![1.5, 4.0, 0.5],
            sigma_j: vec![0.7, 1.4, 0.7],
            y_coefs: vec![0.5],
            y_alpha: vec![2.0, -1.0],
            sigma_y: 1.3,
            mediation: None,
        };
        let y: Vec<f64> = (0..3)
            .map(|j| 0.5 + 2.0 * state.sigma_j[j] - state.mu_j[j])
            .collect();
        let bet = BetweenData::new(y, None, None).unwrap();
        let model =
            VariabilityModel::new(rep, bet, Design::v_to_y(true), PriorConfig::default()).unwrap();
        let a = model.terms(&state.unconstrain(&layout).unwrap()).unwrap();
        let mut doubled = state.clone();
        doubled.sigma_y *= 2.0;
        let b = model.terms(&doubled.unconstrain(&layout).unwrap()).unwrap();
        assert_relative_eq!(a.outcome - b.outcome, 3.0 * 2f64.ln(), epsilon = 1e-12);
    }

    #[test]
    fn gradient_length_depends_on_design() {
        let rep = RepeatedData::new(vec![0, 0, 1, 1], vec![1., 2., 3., 5.], None).unwrap();
        let bet = BetweenData::new(vec![1.0, 2.0], Some(vec![0.5, 0.1]), None).unwrap();
        let simple = VariabilityModel::new(
            rep.clone(),
            bet.clone(),
            Design::v_to_y(true),
            PriorConfig::default(),
        )
        .unwrap();
        let med =
            VariabilityModel::new(rep, bet, Design::v_to_m_to_y(true), PriorConfig::default())
                .unwrap();
        let g1 = simple.grad_log_posterior(&vec![0.1; simple.dim()]).unwrap();
        let g2 = med.grad_log_posterior(&vec![0.1; med.dim()]).unwrap();
        assert_eq!(g2.len(), g1.len() + 1 + 1 + 2 + 1);
    }

    #[test]
    fn rejects_bad_states() {
        let (rep, bet) = single(&[0.0, 1.0]);
        let model =
            VariabilityModel::new(rep, bet, Design::v_to_y(true), PriorConfig::default()).unwrap();
        assert!(matches!(
            model.log_posterior(&[0.0; 3]),
            Err(ModelError::Dimension(_))
        ));
        let mut theta = vec![0.0; model.dim()];
        theta[2] = f64::NAN;
        assert!(matches!(
            model.log_posterior(&theta),
            Err(ModelError::NonFinite(_))
        ));
    }

    #[test]
    fn mediation_requires_mediator() {
        let (rep, bet) = single(&[0.0, 1.0]);
        let err = VariabilityModel::new(rep, bet, Design::v_to_m_to_y(true), PriorConfig::default())
            .unwrap_err();
        assert_eq!(err, ModelError::MissingMediator);
    }

    #[test]
    fn rejects_constant_covariate_columns() {
        let covs = Covariates::from_columns(vec!["one".into()], vec![vec![1.0, 1.0]]).unwrap();
        let err = BetweenData::new(vec![1.0, 2.0], None, Some(covs)).unwrap_err();
        assert!(matches!(err, ModelError::ConstantCovariate { .. }));
    }

    #[test]
    fn start_values_use_sample_moments() {
        let rep =
            RepeatedData::new(vec![0, 0, 0, 1, 1, 1, 2], vec![1., 2., 3., 0., 4., 2., 7.], None)
                .unwrap();
        let bet = BetweenData::new(vec![0.3, 1.0, -0.5], None, None).unwrap();
        let s = start_values(&rep, &bet, Design::v_to_y(true)).unwrap();
        assert_relative_eq!(s.mu_j[0], 2.0, epsilon = 1e-12);
        assert_relative_eq!(s.sigma_j[0], 1.0, epsilon = 1e-12);
        // single-observation subject gets the pooled SD: sqrt((2 + 8) / 4)
        assert_relative_eq!(s.sigma_j[2], (10.0f64 / 4.0).sqrt(), epsilon = 1e-12);
        assert!(s.gamma_shape > 0.0 && s.gamma_rate > 0.0);
    }

    #[test]
    fn degenerate_repeated_data_is_an_error() {
        let rep = RepeatedData::new(vec![0, 0, 1, 1], vec![3.0; 4], None).unwrap();
        let bet = BetweenData::new(vec![0.0, 1.0], None, None).unwrap();
        assert_eq!(
            start_values(&rep, &bet, Design::v_to_y(true)).unwrap_err(),
            ModelError::DegenerateData
        );
    }

    #[test]
    fn jitter_stays_within_half_unit() {
        let rep = RepeatedData::new(vec![0, 0, 1, 1], vec![1., 2., 3., 5.], None).unwrap();
        let bet = BetweenData::new(vec![1.0, 2.0], None, None).unwrap();
        let design = Design::v_to_y(true);
        let layout = Layout::new(2, 0, 0, design);
        let base = start_values(&rep, &bet, design).unwrap().unconstrain(&layout).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let theta = initialize(&rep, &bet, design, &mut rng).unwrap();
        for (a, b) in theta.iter().zip(&base) {
            assert!((a - b).abs() <= JITTER);
        }
    }

    #[test]
    fn layout_names_follow_block_order() {
        let layout = Layout::new(2, 1, 1, Design::v_to_m_to_y(true));
        let names = layout.names();
        assert_eq!(names.len(), layout.dim());
        assert_eq!(
            names,
            [
                "VB[1]", "sigma_U", "shape", "rate", "VB[2]", "Est_U[1]", "Est_U[2]",
                "Est_Sigma[1]", "Est_Sigma[2]", "YB[1]", "YB[2]", "Yalpha[1]", "Yalpha[2]",
                "YMed", "sigma_Y", "MB[1]", "MB[2]", "Malpha[1]", "Malpha[2]", "sigma_M"
            ]
        );
    }
}
