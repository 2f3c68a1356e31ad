#![allow(dead_code)]

use std::collections::HashMap;

use statrs::distribution::{Cauchy, Continuous, Gamma, Normal};
use varbayes::model::{BetweenData, Covariates, Design, PriorConfig, RepeatedData, VariabilityModel};

/// Three subjects, unbalanced (3, 2, 4 observations).
pub fn repeated(with_covariate: bool) -> RepeatedData {
    let subject = vec![0, 0, 0, 1, 1, 2, 2, 2, 2];
    let value = vec![1.2, 0.4, 2.1, 3.3, 2.9, -0.5, 0.7, 0.1, 1.6];
    let covs = with_covariate.then(|| {
        Covariates::from_columns(
            vec!["time".into()],
            vec![vec![0.0, 1.0, 2.0, 0.0, 1.0, 0.0, 1.0, 2.0, 3.0]],
        )
        .unwrap()
    });
    RepeatedData::new(subject, value, covs).unwrap()
}

pub fn between(with_covariate: bool) -> BetweenData {
    let covs = with_covariate
        .then(|| Covariates::from_columns(vec!["sex".into()], vec![vec![0.0, 1.0, 1.0]]).unwrap());
    BetweenData::new(vec![0.8, 2.4, -0.3], Some(vec![1.5, -0.2, 0.9]), covs).unwrap()
}

pub fn designs() -> Vec<Design> {
    vec![
        Design::v_to_y(false),
        Design::v_to_y(true),
        Design::v_to_m_to_y(false),
        Design::v_to_m_to_y(true),
    ]
}

pub fn fixture(design: Design, within_cov: bool, between_cov: bool) -> VariabilityModel {
    VariabilityModel::new(
        repeated(within_cov),
        between(between_cov),
        design,
        PriorConfig::default(),
    )
    .unwrap()
}

fn is_log_scale(name: &str) -> bool {
    matches!(name, "sigma_U" | "shape" | "rate" | "sigma_Y" | "sigma_M") || name.starts_with("Est_Sigma[")
}

fn indexed(values: &HashMap<String, f64>, prefix: &str) -> Vec<f64> {
    let mut out = Vec::new();
    while let Some(v) = values.get(&format!("{prefix}[{}]", out.len() + 1)) {
        out.push(*v);
    }
    out
}

/// Log posterior evaluated term by term from library densities, reading the
/// parameter meaning from the output names only.
pub fn oracle_log_posterior(model: &VariabilityModel, theta: &[f64]) -> f64 {
    let names = model.layout().names();
    let mut jacobian = 0.0;
    let mut p: HashMap<String, f64> = HashMap::new();
    for (n, &t) in names.iter().zip(theta) {
        if is_log_scale(n) {
            jacobian += t;
            p.insert(n.clone(), t.exp());
        } else {
            p.insert(n.clone(), t);
        }
    }
    let rep = model.repeated();
    let bet = model.between();
    let vb = indexed(&p, "VB");
    let mu = indexed(&p, "Est_U");
    let sigma = indexed(&p, "Est_Sigma");
    let mut lp = 0.0;

    for i in 0..rep.n_observations() {
        let j = rep.subjects()[i];
        let fixed: f64 = rep.covariates().row(i).iter().zip(&vb[1..]).map(|(x, b)| x * b).sum();
        lp += Normal::new(mu[j] + fixed, sigma[j]).unwrap().ln_pdf(rep.values()[i]);
    }
    let mean_dist = Normal::new(vb[0], p["sigma_U"]).unwrap();
    let sd_dist = Gamma::new(p["shape"], p["rate"]).unwrap();
    for j in 0..mu.len() {
        lp += mean_dist.ln_pdf(mu[j]) + sd_dist.ln_pdf(sigma[j]);
    }

    let regression = |response: &[f64], coefs: &[f64], alpha: &[f64], extra: Option<(f64, &[f64])>, sd: f64| {
        let mut lp = 0.0;
        for j in 0..response.len() {
            let x = bet.covariates().row(j);
            let mut eta = coefs[0] + x.iter().zip(&coefs[1..]).map(|(a, b)| a * b).sum::<f64>();
            eta += alpha[0] * sigma[j];
            if alpha.len() > 1 {
                eta += alpha[1] * mu[j];
            }
            if let Some((b, m)) = extra {
                eta += b * m[j];
            }
            lp += Normal::new(eta, sd).unwrap().ln_pdf(response[j]);
        }
        lp
    };
    let med = p.get("YMed").copied().zip(bet.mediator());
    lp += regression(bet.outcome(), &indexed(&p, "YB"), &indexed(&p, "Yalpha"), med, p["sigma_Y"]);
    if let Some(sm) = p.get("sigma_M") {
        lp += regression(bet.mediator().unwrap(), &indexed(&p, "MB"), &indexed(&p, "Malpha"), None, *sm);
    }

    let coef_prior = Normal::new(0.0, 1000.0).unwrap();
    let scale_prior = Cauchy::new(0.0, 10.0).unwrap();
    for (n, v) in &p {
        if matches!(n.as_str(), "sigma_U" | "shape" | "rate" | "sigma_Y" | "sigma_M") {
            // half-Cauchy: twice the Cauchy density on the positive axis
            lp += scale_prior.ln_pdf(*v) + std::f64::consts::LN_2;
        } else if !n.starts_with("Est_") {
            lp += coef_prior.ln_pdf(*v);
        }
    }
    lp + jacobian
}

/// Central finite differences of the model's log posterior.
pub fn finite_difference(model: &VariabilityModel, theta: &[f64], h: f64) -> Vec<f64> {
    let mut t = theta.to_vec();
    (0..theta.len())
        .map(|i| {
            t[i] = theta[i] + h;
            let up = model.log_posterior(&t).unwrap();
            t[i] = theta[i] - h;
            let down = model.log_posterior(&t).unwrap();
            t[i] = theta[i];
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// `|a - b| / max(1, |a|, |b|)`, maximized over coordinates.
pub fn max_relative_error(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs() / 1f64.max(x.abs()).max(y.abs()))
        .fold(0.0, f64::max)
}

/// A random but well-scaled unconstrained state.
pub fn random_state<R: rand::Rng>(model: &VariabilityModel, rng: &mut R) -> Vec<f64> {
    (0..model.dim()).map(|_| rng.random_range(-1.0..1.0)).collect()
}

/// Writes `within.csv` and `between.csv` into `dir`.
pub fn write_csv_pair(dir: &std::path::Path, within: &str, between: &str) -> (std::path::PathBuf, std::path::PathBuf) {
    let w = dir.join("within.csv");
    let b = dir.join("between.csv");
    std::fs::write(&w, within).unwrap();
    std::fs::write(&b, between).unwrap();
    (w, b)
}

/// Planted values for the sleep-like fixture.
pub mod planted {
    pub const MU_MU: f64 = 9.04;
    pub const SIGMA_MU: f64 = 0.70;
    pub const SHAPE: f64 = 11.21;
    pub const RATE: f64 = 8.03;
    pub const SSQ: [f64; 4] = [-4.21, 0.86, 2.06, 1.13]; // intercept, sex, vTIB, mTIB
    pub const SSQ_SD: f64 = 2.53;
    pub const CESD: [f64; 5] = [13.46, 2.97, 1.42, -5.00, -1.76]; // intercept, sex, SSQ, vTIB, mTIB
    pub const CESD_SD: f64 = 7.14;
    pub const N: usize = 140;
}

/// Writes a sleep-like dataset: `within.csv` (id,TIB), `fit.csv`
/// (id,SSQ,sex) and `mediate.csv` (id,CESD,SSQ,sex). Subject 1 has one
/// day, subject 2 has fourteen.
pub fn write_sleep_fixture(dir: &std::path::Path, seed: u64) {
    use planted::*;
    use rand::{Rng, SeedableRng};
    use rand_distr::{Distribution, Gamma as GammaDist, Normal as NormalDist};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let gamma = GammaDist::new(SHAPE, 1.0 / RATE).unwrap();
    let z = NormalDist::new(0.0, 1.0).unwrap();
    let mut within = String::from("id,TIB\n");
    let mut fit = String::from("id,SSQ,sex\n");
    let mut med = String::from("id,CESD,SSQ,sex\n");
    for j in 0..N {
        let days = match j {
            0 => 1,
            1 => 14,
            _ if rng.random_bool(0.6) => 14,
            _ => rng.random_range(1..14),
        };
        let mu = MU_MU + SIGMA_MU * z.sample(&mut rng);
        let sigma = gamma.sample(&mut rng);
        for _ in 0..days {
            within.push_str(&format!("s{},{}\n", j + 1, mu + sigma * z.sample(&mut rng)));
        }
        let sex = if rng.random_bool(0.5) { 1.0 } else { 2.0 };
        let ssq = SSQ[0] + SSQ[1] * sex + SSQ[2] * sigma + SSQ[3] * mu + SSQ_SD * z.sample(&mut rng);
        let cesd = CESD[0] + CESD[1] * sex + CESD[2] * ssq + CESD[3] * sigma + CESD[4] * mu
            + CESD_SD * z.sample(&mut rng);
        fit.push_str(&format!("s{},{ssq},{sex}\n", j + 1));
        med.push_str(&format!("s{},{cesd},{ssq},{sex}\n", j + 1));
    }
    std::fs::write(dir.join("within.csv"), within).unwrap();
    std::fs::write(dir.join("fit.csv"), fit).unwrap();
    std::fs::write(dir.join("mediate.csv"), med).unwrap();
}

/// Runs the built binary; returns (exit code, stdout, stderr).
pub fn run_cli(args: &[&str]) -> (i32, String, String) {
    let out = std::process::Command::new(env!("CARGO_BIN_EXE_varbayes"))
        .args(args)
        .output()
        .unwrap();
    (
        out.status.code().unwrap_or(-1),
        String::from_utf8_lossy(&out.stdout).into_owned(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}
