use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::ingest::{ingest, Dataset, IngestOptions};
use super::output::{ensure_dir, histogram, num, write_csv, write_json};
use super::{
    BaselineArgs, CliError, DesignArg, DiagnoseArgs, FitArgs, Format, EXIT_NOT_CONVERGED, EXIT_OK,
};
use crate::baseline::{isd_model, rmssd};
use crate::diagnostics::{convergence_report_with, DiagnosticsReport};
use crate::inference::{indirect_effect, summarize, ParameterSummary};
use crate::model::{initialize, Design, PriorConfig, VariabilityModel};
use crate::rng::derive_seed;
use crate::sampler::{run_chains, ChainConfig, PosteriorDraws};

const HISTOGRAM_BINS: usize = 20;

#[derive(Serialize)]
struct DesignInfo<'a> {
    kind: &'static str,
    label: &'static str,
    use_latent_mean: bool,
    outcome: &'a str,
    mediator: Option<&'a str>,
    focal: &'a str,
    ci_level: f64,
}

#[derive(Serialize)]
struct Settings {
    chains: usize,
    warmup: usize,
    iter: usize,
    thin: usize,
    seed: u64,
}

#[derive(Serialize)]
struct DiagnosticsInfo<'a> {
    max_rhat: f64,
    min_ess: f64,
    focal: &'a str,
    focal_ess: f64,
}

#[derive(Serialize)]
struct Summary<'a> {
    model: &'static str,
    design: DesignInfo<'a>,
    converged: bool,
    n_subjects: usize,
    n_observations: usize,
    settings: Settings,
    parameters: Vec<ParameterSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    indirect_effects: Option<Vec<ParameterSummary>>,
    diagnostics: DiagnosticsInfo<'a>,
}

fn sampler_err(e: impl std::fmt::Display) -> CliError {
    CliError::Sampler(e.to_string())
}

fn check_ci(ci: f64) -> Result<(), CliError> {
    if ci > 0.0 && ci < 1.0 {
        Ok(())
    } else {
        Err(CliError::Usage(format!("--ci must lie in (0, 1), got {ci}")))
    }
}

/// `fit` and `mediate`: sample, diagnose, summarize and write outputs.
pub fn fit_command(args: &FitArgs, default_design: DesignArg) -> Result<i32, CliError> {
    check_ci(args.ci)?;
    let design = match args.design.unwrap_or(default_design) {
        DesignArg::V2y => Design::v_to_y(args.use_latent_mean),
        DesignArg::V2m2y => Design::v_to_m_to_y(args.use_latent_mean),
    };
    let data = ingest(
        &args.within,
        &args.between,
        &IngestOptions {
            mediator: design.is_mediation(),
            within_covariates: args.within_covariates.clone(),
            between_covariates: args.between_covariates.clone(),
        },
    )?;
    let model = VariabilityModel::new(
        data.repeated.clone(),
        data.between.clone(),
        design,
        PriorConfig::default(),
    )
    .map_err(|e| CliError::Model(e.to_string()))?;
    if !model.layout().names().contains(&args.focal) {
        return Err(CliError::Usage(format!("unknown focal parameter '{}'", args.focal)));
    }
    let config = ChainConfig {
        chains: args.chain.chains,
        warmup: args.chain.warmup,
        total_post_warmup: args.chain.iter,
        thin: args.chain.thin,
        seed: args.chain.seed,
        ..ChainConfig::default()
    };
    config.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let inits = (0..config.chains)
        .map(|c| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(&[config.seed, 2, c as u64]));
            initialize(&data.repeated, &data.between, design, &mut rng)
        })
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| CliError::Model(e.to_string()))?;
    let draws = run_chains(&model, &config, &inits).map_err(sampler_err)?;
    let report = convergence_report_with(&draws, &args.focal, draws.n_chains() < 2)
        .map_err(|e| CliError::Diagnostics(e.to_string()))?;

    let parameters = (0..draws.n_params())
        .map(|p| summarize(&draws.names()[p], &draws.pooled(p), args.ci))
        .collect::<Result<Vec<_>, _>>()
        .map_err(sampler_err)?;
    let indirect_effects = if design.is_mediation() {
        let b = draws.pooled(draws.param_index("YMed").expect("mediation layout"));
        let mediator = data.mediator_name.as_deref().unwrap_or("M");
        let mut effects = Vec::new();
        for (k, latent) in ["Est_Sigma", "Est_U"].iter().take(design.n_latent()).enumerate() {
            let a = draws.pooled(
                draws
                    .param_index(&format!("Malpha[{}]", k + 1))
                    .expect("mediation layout"),
            );
            let name = format!("{latent} -> {mediator} -> {}", data.outcome_name);
            effects.push(indirect_effect(&name, &a, &b, args.ci).map_err(sampler_err)?);
        }
        Some(effects)
    } else {
        None
    };

    let out = &args.out;
    ensure_dir(out)?;
    let summary = Summary {
        model: "latent-variability",
        design: DesignInfo {
            kind: match design.is_mediation() {
                false => "v2y",
                true => "v2m2y",
            },
            label: design.label(),
            use_latent_mean: design.use_latent_mean,
            outcome: &data.outcome_name,
            mediator: data.mediator_name.as_deref(),
            focal: &args.focal,
            ci_level: args.ci,
        },
        converged: report.converged,
        n_subjects: data.repeated.n_subjects(),
        n_observations: data.repeated.n_observations(),
        settings: Settings {
            chains: config.chains,
            warmup: config.warmup,
            iter: config.total_post_warmup,
            thin: config.thin,
            seed: config.seed,
        },
        parameters,
        indirect_effects,
        diagnostics: DiagnosticsInfo {
            max_rhat: report.max_rhat,
            min_ess: report.min_ess,
            focal: &report.focal,
            focal_ess: report.focal_ess,
        },
    };
    write_json(&out.join("summary.json"), &summary)?;
    if args.format == Format::Csv {
        write_summary_csv(&out.join("summary.csv"), &summary)?;
    }
    write_diagnostics(&out.join("diagnostics.csv"), &report)?;
    write_sampler_stats(&out.join("sampler.csv"), &draws)?;
    if args.draws {
        write_draws(&out.join("draws.csv"), &draws)?;
    }
    write_plot_data(&out.join("plot"), &draws, &report, &data, args.ci)?;

    println!(
        "converged={} max_rhat={} min_ess={}",
        report.converged,
        num(report.max_rhat),
        num(report.min_ess)
    );
    Ok(if report.converged { EXIT_OK } else { EXIT_NOT_CONVERGED })
}

fn summary_row(kind: &str, s: &ParameterSummary) -> Vec<String> {
    vec![
        kind.to_string(),
        s.name.clone(),
        num(s.mean),
        num(s.median),
        num(s.sd),
        num(s.ci_low),
        num(s.ci_high),
        num(s.p_value),
    ]
}

fn write_summary_csv(path: &Path, summary: &Summary) -> Result<(), CliError> {
    let rows = summary
        .parameters
        .iter()
        .map(|s| summary_row("parameter", s))
        .chain(
            summary
                .indirect_effects
                .iter()
                .flatten()
                .map(|s| summary_row("indirect", s)),
        );
    write_csv(
        path,
        &["kind", "name", "mean", "median", "sd", "ci_low", "ci_high", "p_value"],
        rows,
    )
}

fn write_diagnostics(path: &Path, report: &DiagnosticsReport) -> Result<(), CliError> {
    write_csv(
        path,
        &["parameter", "rhat", "ess"],
        report
            .names
            .iter()
            .zip(&report.rhat)
            .zip(&report.ess)
            .map(|((n, r), e)| vec![n.clone(), num(*r), num(*e)]),
    )
}

fn write_sampler_stats(path: &Path, draws: &PosteriorDraws) -> Result<(), CliError> {
    write_csv(
        path,
        &[
            "chain",
            "step_size",
            "mean_accept_stat",
            "mean_tree_depth",
            "divergences",
            "max_depth_hits",
        ],
        draws.stats().iter().enumerate().map(|(c, s)| {
            vec![
                (c + 1).to_string(),
                num(s.step_size),
                num(s.mean_accept_stat),
                num(s.mean_tree_depth),
                s.divergences.to_string(),
                s.max_depth_hits.to_string(),
            ]
        }),
    )
}

/// `chain,iteration,<parameters...>` with 1-based chain and iteration.
pub(crate) fn write_draws(path: &Path, draws: &PosteriorDraws) -> Result<(), CliError> {
    let mut header = vec!["chain".to_string(), "iteration".to_string()];
    header.extend(draws.names().iter().cloned());
    let rows = (0..draws.n_chains()).flat_map(|c| {
        (0..draws.n_iterations()).map(move |i| {
            let mut row = vec![(c + 1).to_string(), (i + 1).to_string()];
            row.extend(draws.row(c, i).iter().map(|v| num(*v)));
            row
        })
    });
    write_csv(path, &header, rows)
}

fn write_histogram(path: &Path, values: &[f64]) -> Result<(), CliError> {
    write_csv(
        path,
        &["bin_low", "bin_high", "count"],
        histogram(values, HISTOGRAM_BINS)
            .into_iter()
            .map(|(lo, hi, c)| vec![num(lo), num(hi), c.to_string()]),
    )
}

fn write_plot_data(
    dir: &Path,
    draws: &PosteriorDraws,
    report: &DiagnosticsReport,
    data: &Dataset,
    ci: f64,
) -> Result<(), CliError> {
    ensure_dir(dir)?;
    write_histogram(&dir.join("rhat_hist.csv"), &report.rhat)?;
    write_histogram(&dir.join("ess_hist.csv"), &report.ess)?;

    let mut rows = Vec::with_capacity(data.ids.len());
    for (j, id) in data.ids.iter().enumerate() {
        let mut row = vec![id.clone()];
        for prefix in ["Est_Sigma", "Est_U"] {
            let name = format!("{prefix}[{}]", j + 1);
            let p = draws.param_index(&name).expect("subject parameter");
            let s = summarize(&name, &draws.pooled(p), ci).map_err(sampler_err)?;
            row.extend([num(s.median), num(s.ci_low), num(s.ci_high)]);
        }
        rows.push(row);
    }
    write_csv(
        &dir.join("subjects.csv"),
        &[
            "id",
            "sigma_median",
            "sigma_low",
            "sigma_high",
            "mu_median",
            "mu_low",
            "mu_high",
        ],
        rows,
    )?;

    let a1 = draws.param_index("Yalpha[1]").expect("outcome layout");
    let a2 = draws.param_index("Yalpha[2]");
    let mut header = vec!["chain", "iteration", "alpha1"];
    if a2.is_some() {
        header.push("alpha2");
    }
    let rows = (0..draws.n_chains()).flat_map(|c| {
        (0..draws.n_iterations()).map(move |i| {
            let mut row = vec![(c + 1).to_string(), (i + 1).to_string(), num(draws.get(c, i, a1))];
            if let Some(a2) = a2 {
                row.push(num(draws.get(c, i, a2)));
            }
            row
        })
    });
    write_csv(&dir.join("alpha_pairs.csv"), &header, rows)
}

/// Reads a draws file written by `fit --draws`.
pub fn read_draws(path: &Path) -> Result<PosteriorDraws, CliError> {
    let file = path.display().to_string();
    let err = |m: String| CliError::Ingest(format!("{file}: {m}"));
    let mut reader = csv::Reader::from_path(path).map_err(|e| err(e.to_string()))?;
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| err(e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    if header.len() < 3 || header[0] != "chain" || header[1] != "iteration" {
        return Err(err("expected header chain,iteration,<parameters...>".into()));
    }
    let mut chains: Vec<Vec<f64>> = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| err(e.to_string()))?;
        let line = rec.position().map_or(0, |p| p.line());
        let chain: usize = rec[0]
            .parse()
            .ok()
            .filter(|c| *c >= 1)
            .ok_or_else(|| err(format!("line {line}: bad chain index {:?}", &rec[0])))?;
        if chain > chains.len() + 1 || chain < chains.len() {
            return Err(err(format!("line {line}: chains must be contiguous and ordered")));
        }
        if chain > chains.len() {
            chains.push(Vec::new());
        }
        for (c, field) in rec.iter().enumerate().skip(2) {
            let v: f64 = field.parse().map_err(|_| {
                err(format!("line {line}: column '{}': cannot parse {field:?}", header[c]))
            })?;
            chains[chain - 1].push(v);
        }
    }
    PosteriorDraws::from_chains(header[2..].to_vec(), chains, Vec::new())
        .map_err(|e| err(e.to_string()))
}

/// Recomputes diagnostics from a draws file.
pub fn diagnose_command(args: &DiagnoseArgs) -> Result<i32, CliError> {
    let draws = read_draws(&args.draws)?;
    let report = convergence_report_with(&draws, &args.focal, args.split || draws.n_chains() < 2)
        .map_err(|e| CliError::Diagnostics(e.to_string()))?;
    ensure_dir(&args.out)?;
    write_diagnostics(&args.out.join("diagnostics.csv"), &report)?;
    println!(
        "converged={} max_rhat={} min_ess={}",
        report.converged,
        num(report.max_rhat),
        num(report.min_ess)
    );
    Ok(if report.converged { EXIT_OK } else { EXIT_NOT_CONVERGED })
}

#[derive(Serialize)]
struct Coefficient {
    name: String,
    estimate: f64,
    std_error: f64,
    ci_low: f64,
    ci_high: f64,
}

#[derive(Serialize)]
struct BaselineSummary {
    model: &'static str,
    n_subjects: usize,
    n_observations: usize,
    ci_level: f64,
    coefficients: Vec<Coefficient>,
    residual_sd: f64,
    df: usize,
}

/// Individual-SD regression plus per-subject ISD, mean and RMSSD.
pub fn baseline_command(args: &BaselineArgs) -> Result<i32, CliError> {
    check_ci(args.ci)?;
    let data = ingest(
        &args.within,
        &args.between,
        &IngestOptions {
            mediator: false,
            within_covariates: Some(Vec::new()),
            between_covariates: args.between_covariates.clone(),
        },
    )?;
    let fit = isd_model(&data.repeated, &data.between, args.ci)
        .map_err(|e| CliError::Model(e.to_string()))?;
    let mut names = vec!["intercept".to_string()];
    names.extend(data.between.covariates().names().iter().cloned());
    names.extend(["ISD".to_string(), "mean".to_string()]);
    let coefficients = names
        .into_iter()
        .enumerate()
        .map(|(i, name)| Coefficient {
            name,
            estimate: fit.coefs[i],
            std_error: fit.standard_errors[i],
            ci_low: fit.ci_low[i],
            ci_high: fit.ci_high[i],
        })
        .collect();
    ensure_dir(&args.out)?;
    write_json(
        &args.out.join("baseline.json"),
        &BaselineSummary {
            model: "isd-regression",
            n_subjects: data.repeated.n_subjects(),
            n_observations: data.repeated.n_observations(),
            ci_level: args.ci,
            coefficients,
            residual_sd: fit.residual_sd,
            df: fit.df,
        },
    )?;

    let mut rows = Vec::with_capacity(data.ids.len());
    for (j, id) in data.ids.iter().enumerate() {
        let s = data.repeated.series(j);
        let mean = s.iter().sum::<f64>() / s.len() as f64;
        let isd = crate::baseline::isd(&s).map_or(String::new(), num);
        let wrapped: Vec<Option<f64>> = s.iter().copied().map(Some).collect();
        let r = rmssd(&wrapped).map_or(String::new(), num);
        rows.push(vec![id.clone(), s.len().to_string(), num(mean), isd, r]);
    }
    write_csv(
        &args.out.join("subjects.csv"),
        &["id", "n", "mean", "isd", "rmssd"],
        rows,
    )?;
    Ok(EXIT_OK)
}
