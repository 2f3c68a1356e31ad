use statrs::distribution::{ContinuousCDF, Normal};
use varbayes::diagnostics::convergence_report;
use varbayes::sampler::{run_chain, run_chains, ChainConfig, LogDensity};

struct Gaussian {
    sd: Vec<f64>,
}

impl LogDensity for Gaussian {
    fn dim(&self) -> usize {
        self.sd.len()
    }

    fn log_density_gradient(&self, x: &[f64], g: &mut [f64]) -> f64 {
        let mut lp = 0.0;
        for i in 0..x.len() {
            let z = x[i] / self.sd[i];
            lp -= 0.5 * z * z;
            g[i] = -z / self.sd[i];
        }
        lp
    }
}

fn ks_statistic(mut draws: Vec<f64>, sd: f64) -> f64 {
    draws.sort_by(f64::total_cmp);
    let n = draws.len() as f64;
    let dist = Normal::new(0.0, sd).unwrap();
    draws
        .iter()
        .enumerate()
        .map(|(i, x)| {
            let f = dist.cdf(*x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

fn config(seed: u64) -> ChainConfig {
    ChainConfig {
        chains: 4,
        warmup: 1000,
        total_post_warmup: 8000,
        seed,
        ..ChainConfig::default()
    }
}

#[test]
fn standard_normal_ks_and_divergences() {
    let target = Gaussian { sd: vec![1.0] };
    let inits = vec![vec![0.5], vec![-1.0], vec![2.0], vec![0.0]];
    let draws = run_chains(&target, &config(3), &inits).unwrap();
    assert_eq!(draws.n_chains() * draws.n_iterations(), 8000);
    let ks = ks_statistic(draws.pooled(0), 1.0);
    assert!(ks < 0.03, "KS {ks}");
    let divergent: usize = draws.divergence_count().iter().sum();
    assert!((divergent as f64) < 0.01 * 8000.0, "{divergent} divergences");
}

#[test]
fn badly_scaled_gaussian_is_adapted() {
    let target = Gaussian {
        sd: vec![0.01, 0.1, 1.0, 10.0, 100.0],
    };
    let inits = vec![vec![0.0; 5]; 4];
    let draws = run_chains(&target, &config(8), &inits).unwrap();
    let report = convergence_report(&draws, "theta[1]").unwrap();
    assert!(report.max_rhat < 1.01, "{report:?}");
    for (p, sd) in target.sd.iter().enumerate() {
        let d = draws.pooled(p);
        let var = d.iter().map(|x| x * x).sum::<f64>() / d.len() as f64;
        assert!((var.sqrt() / sd - 1.0).abs() < 0.1, "param {p}: sd {}", var.sqrt());
    }
    for s in draws.stats() {
        // adapted inverse metric tracks the target variances
        let ratio = s.inv_mass[4] / s.inv_mass[0];
        assert!(ratio > 1e6 && ratio < 1e10, "{ratio}");
    }
}

#[test]
fn output_is_a_function_of_seed_config_and_inits() {
    let target = Gaussian { sd: vec![1.0, 3.0] };
    let inits = vec![vec![0.1, 0.2], vec![-0.3, 1.0]];
    let cfg = ChainConfig {
        chains: 2,
        warmup: 200,
        total_post_warmup: 400,
        ..ChainConfig::default()
    };
    let a = run_chains(&target, &cfg, &inits).unwrap();
    let b = run_chains(&target, &cfg, &inits).unwrap();
    assert_eq!(a, b);
    let other = run_chains(&target, &ChainConfig { seed: 2, ..cfg.clone() }, &inits).unwrap();
    assert_ne!(a.pooled(0), other.pooled(0));
}

#[test]
fn each_chain_is_independent_of_the_others() {
    let target = Gaussian { sd: vec![1.0, 3.0] };
    let inits = vec![vec![0.1, 0.2], vec![-0.3, 1.0], vec![2.0, -2.0]];
    let cfg = ChainConfig {
        chains: 3,
        warmup: 200,
        total_post_warmup: 300,
        ..ChainConfig::default()
    };
    let all = run_chains(&target, &cfg, &inits).unwrap();
    for (c, init) in inits.iter().enumerate() {
        let (alone, _) = run_chain(&target, &cfg, c, init.clone()).unwrap();
        let together: Vec<f64> = (0..all.n_iterations()).flat_map(|i| all.row(c, i).to_vec()).collect();
        assert_eq!(alone, together, "chain {c}");
    }
}

#[test]
fn thread_count_does_not_change_draws() {
    let target = Gaussian { sd: vec![1.0, 0.5] };
    let inits = vec![vec![0.0, 0.0]; 4];
    let cfg = ChainConfig {
        warmup: 150,
        total_post_warmup: 400,
        ..ChainConfig::default()
    };
    let pool = |n| rayon::ThreadPoolBuilder::new().num_threads(n).build().unwrap();
    let one = pool(1).install(|| run_chains(&target, &cfg, &inits).unwrap());
    let four = pool(4).install(|| run_chains(&target, &cfg, &inits).unwrap());
    assert_eq!(one, four);
}
