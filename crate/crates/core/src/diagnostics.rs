//! Convergence diagnostics: potential scale reduction factor and
//! variogram-based effective sample size.

use thiserror::Error;

use crate::sampler::PosteriorDraws;

/// Convergence is declared when every parameter's PSRF is below this.
pub const RHAT_THRESHOLD: f64 = 1.1;
/// Minimum effective sample size for the focal parameter.
pub const FOCAL_ESS_MIN: f64 = 200.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiagnosticsError {
    #[error("need at least {needed} chains, got {got}")]
    TooFewChains { needed: usize, got: usize },
    #[error("need at least {needed} draws per chain, got {got}")]
    TooFewDraws { needed: usize, got: usize },
    #[error("chains have unequal lengths")]
    UnequalChains,
    #[error("non-finite draw")]
    NonFinite,
    #[error("unknown parameter '{0}'")]
    UnknownParameter(String),
}

/// A diagnostic value, flagged when the within-chain variance is zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Diagnostic {
    pub value: f64,
    pub degenerate: bool,
}

struct Moments {
    m: usize,
    n: usize,
    within: f64,
    between: f64,
}

impl Moments {
    fn var_plus(&self) -> f64 {
        let n = self.n as f64;
        (n - 1.0) / n * self.within + self.between / n
    }
}

fn moments<C: AsRef<[f64]>>(
    chains: &[C],
    min_chains: usize,
    min_draws: usize,
) -> Result<Moments, DiagnosticsError> {
    let m = chains.len();
    if m < min_chains {
        return Err(DiagnosticsError::TooFewChains {
            needed: min_chains,
            got: m,
        });
    }
    let n = chains[0].as_ref().len();
    if chains.iter().any(|c| c.as_ref().len() != n) {
        return Err(DiagnosticsError::UnequalChains);
    }
    if n < min_draws {
        return Err(DiagnosticsError::TooFewDraws {
            needed: min_draws,
            got: n,
        });
    }
    if chains.iter().any(|c| c.as_ref().iter().any(|x| !x.is_finite())) {
        return Err(DiagnosticsError::NonFinite);
    }
    let means: Vec<f64> = chains
        .iter()
        .map(|c| c.as_ref().iter().sum::<f64>() / n as f64)
        .collect();
    let within = chains
        .iter()
        .zip(&means)
        .map(|(c, mean)| {
            c.as_ref().iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64
        })
        .sum::<f64>()
        / m as f64;
    let between = if m > 1 {
        let grand = means.iter().sum::<f64>() / m as f64;
        n as f64 * means.iter().map(|x| (x - grand).powi(2)).sum::<f64>() / (m - 1) as f64
    } else {
        0.0
    };
    Ok(Moments {
        m,
        n,
        within,
        between,
    })
}

/// Potential scale reduction factor `sqrt(var+ / W)` over whole chains.
pub fn psrf<C: AsRef<[f64]>>(chains: &[C]) -> Result<Diagnostic, DiagnosticsError> {
    let mo = moments(chains, 2, 2)?;
    if mo.within <= 0.0 {
        return Ok(Diagnostic {
            value: f64::INFINITY,
            degenerate: true,
        });
    }
    Ok(Diagnostic {
        value: (mo.var_plus() / mo.within).sqrt(),
        degenerate: false,
    })
}

/// PSRF after splitting every chain into two halves (middle draw dropped
/// for odd lengths).
pub fn psrf_split<C: AsRef<[f64]>>(chains: &[C]) -> Result<Diagnostic, DiagnosticsError> {
    let halves = split_chains(chains);
    psrf(&halves)
}

fn split_chains<C: AsRef<[f64]>>(chains: &[C]) -> Vec<Vec<f64>> {
    let mut out = Vec::with_capacity(2 * chains.len());
    for c in chains {
        let c = c.as_ref();
        let half = c.len() / 2;
        out.push(c[..half].to_vec());
        out.push(c[c.len() - half..].to_vec());
    }
    out
}

/// Effective sample size from the multi-chain variogram.
///
/// `rho_t = 1 - V_t / (2 var+)` where `V_t` is the mean squared lag-`t`
/// difference averaged over chains. Autocorrelations are summed over
/// adjacent pairs `(rho_2t, rho_2t+1)` until a pair sum turns negative; a
/// negative lag-1 autocorrelation truncates immediately. The result is
/// clipped to the total number of draws.
pub fn ess<C: AsRef<[f64]>>(chains: &[C]) -> Result<Diagnostic, DiagnosticsError> {
    let mo = moments(chains, 1, 4)?;
    let total = (mo.m * mo.n) as f64;
    let var_plus = mo.var_plus();
    if var_plus <= 0.0 {
        return Ok(Diagnostic {
            value: f64::NAN,
            degenerate: true,
        });
    }
    let rho = |t: usize| {
        let v_t = chains
            .iter()
            .map(|c| {
                let c = c.as_ref();
                c[t..]
                    .iter()
                    .zip(c)
                    .map(|(a, b)| (a - b).powi(2))
                    .sum::<f64>()
                    / (mo.n - t) as f64
            })
            .sum::<f64>()
            / mo.m as f64;
        1.0 - v_t / (2.0 * var_plus)
    };
    let rho1 = rho(1);
    let mut sum = 0.0;
    if rho1 >= 0.0 {
        sum = rho1;
        let mut t = 1;
        while 2 * t + 1 < mo.n {
            let pair = rho(2 * t) + rho(2 * t + 1);
            if pair < 0.0 {
                break;
            }
            sum += pair;
            t += 1;
        }
    }
    let tau = 1.0 + 2.0 * sum;
    let value = (total / tau).min(total);
    Ok(Diagnostic {
        value,
        degenerate: mo.within <= 0.0,
    })
}

/// Per-parameter PSRF/ESS and the convergence verdict for one fit.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagnosticsReport {
    pub names: Vec<String>,
    pub rhat: Vec<f64>,
    pub ess: Vec<f64>,
    pub converged: bool,
    pub max_rhat: f64,
    pub min_ess: f64,
    pub focal: String,
    pub focal_ess: f64,
    pub focal_ess_ok: bool,
}

impl DiagnosticsReport {
    /// Applies the thresholds to precomputed values.
    pub fn from_values(
        names: Vec<String>,
        rhat: Vec<f64>,
        ess: Vec<f64>,
        focal: &str,
    ) -> Result<Self, DiagnosticsError> {
        let fi = names
            .iter()
            .position(|n| n == focal)
            .ok_or_else(|| DiagnosticsError::UnknownParameter(focal.to_string()))?;
        // NaN (degenerate) counts as failing both thresholds
        let max_rhat = rhat
            .iter()
            .map(|r| if r.is_nan() { f64::INFINITY } else { *r })
            .fold(f64::NEG_INFINITY, f64::max);
        let min_ess = ess
            .iter()
            .map(|e| if e.is_nan() { 0.0 } else { *e })
            .fold(f64::INFINITY, f64::min);
        let focal_ess = ess[fi];
        Ok(DiagnosticsReport {
            converged: max_rhat < RHAT_THRESHOLD,
            max_rhat,
            min_ess,
            focal: focal.to_string(),
            focal_ess,
            focal_ess_ok: focal_ess >= FOCAL_ESS_MIN,
            names,
            rhat,
            ess,
        })
    }
}

/// PSRF (split if `split`) and ESS for every parameter.
pub fn convergence_report_with(
    draws: &PosteriorDraws,
    focal: &str,
    split: bool,
) -> Result<DiagnosticsReport, DiagnosticsError> {
    if draws.param_index(focal).is_none() {
        return Err(DiagnosticsError::UnknownParameter(focal.to_string()));
    }
    let mut rhat = Vec::with_capacity(draws.n_params());
    let mut effective = Vec::with_capacity(draws.n_params());
    for p in 0..draws.n_params() {
        let chains = draws.chains_of(p);
        let r = if split {
            psrf_split(&chains)?
        } else if chains.len() >= 2 {
            psrf(&chains)?
        } else {
            psrf_split(&chains)?
        };
        rhat.push(r.value);
        effective.push(ess(&chains)?.value);
    }
    DiagnosticsReport::from_values(draws.names().to_vec(), rhat, effective, focal)
}

/// Plain (non-split) PSRF and ESS for every parameter; single-chain fits
/// fall back to split halves.
pub fn convergence_report(
    draws: &PosteriorDraws,
    focal: &str,
) -> Result<DiagnosticsReport, DiagnosticsError> {
    convergence_report_with(draws, focal, false)
}
