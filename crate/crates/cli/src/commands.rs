//! The three subcommands: resolve the config, run, write artifacts.

use std::path::{Path, PathBuf};

use optithresh_core::evaluation::{
    compare_thresholds, comparison_markdown, tir_summary, ComparisonReport, NamedThresholds,
};
use optithresh_core::ingest::SubjectSeries;
use optithresh_core::optim::OptimizerConfig;
use optithresh_core::quantile::grid_probability;
use optithresh_core::simulation::{
    generate_two_populations, run_benchmark, BenchmarkConfig, BenchmarkMethod, BenchmarkReport,
    WeightScheme,
};
use optithresh_core::{
    linearized_quantile_grid, optimize as run_optimizer, Cohort, Error, LossKind, LossSpec,
    MemberKind, Method, OptimizationResult, QuantileSource, ThresholdSet,
};
use serde::Serialize;

use crate::config::{
    self, CandidateSpec, CsvInput, EvaluateConfig, EvaluateInput, InputSpec, OptimizeConfig,
};
use crate::error::{CliError, CliResult};
use crate::input::{read_csv, series_cohort, simulated_cohort, IngestionSummary};
use crate::output::{num, opt_num, Envelope, OutDir};
use crate::{Common, EvaluateArgs, OptimizeArgs, SimulateArgs};

const VERSION: &str = env!("CARGO_PKG_VERSION");
const DEFAULT_OUT: &str = "optithresh-out";

fn out_dir(common: &Common, from_file: Option<PathBuf>) -> CliResult<OutDir> {
    let path = common
        .out
        .clone()
        .or(from_file)
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));
    OutDir::create(&path)
}

/// The DE seed always follows the run seed.
fn sync_seed(optimizer: &mut OptimizerConfig, seed: u64) {
    if optimizer.de.seed != seed && optimizer.de.seed != 0 {
        log::warn!(
            "optimizer.de.seed {} is replaced by the run seed {seed}",
            optimizer.de.seed
        );
    }
    optimizer.de.seed = seed;
}

/// Names the setting most likely responsible for a failed search.
fn search_error(prefix: &str, e: Error) -> CliError {
    let field = match e {
        Error::NotACutoff(_) | Error::InvalidThresholds(_) => "fixed",
        Error::Incompatible(_) => "method",
        _ => "k",
    };
    let field = if prefix.is_empty() {
        field.to_string()
    } else {
        format!("{prefix}.{field}")
    };
    CliError::from_core(&field, e)
}

fn with_csv_path(current: Option<CsvInput>, path: &Path) -> CsvInput {
    match current {
        Some(c) => CsvInput {
            path: path.to_path_buf(),
            ..c
        },
        None => CsvInput::from_path(path),
    }
}

fn kind_name(c: &Cohort) -> &'static str {
    match c.kind() {
        MemberKind::Histogram => "histogram",
        MemberKind::Sample => "sample",
    }
}

fn subject_label(c: &Cohort, i: usize) -> String {
    c.members()[i]
        .subject_id()
        .map(str::to_string)
        .unwrap_or_else(|| format!("subject{i}"))
}

fn run_search(
    cohort: &mut Cohort,
    k: usize,
    loss: LossKind,
    method: Method,
    fixed: &ThresholdSet,
    optimizer: &OptimizerConfig,
    prefix: &str,
) -> CliResult<OptimizationResult> {
    let spec = LossSpec::new(loss, cohort.grid_size()).map_err(|e| CliError::from_core("grid_size", e))?;
    if loss == LossKind::L2 {
        cohort.cache_pairwise();
    }
    log::info!("running {method} with {loss} loss, k = {k}, on {} subjects", cohort.len());
    run_optimizer(cohort, k, &spec, method, fixed, optimizer).map_err(|e| search_error(prefix, e))
}

#[derive(Serialize)]
struct OptimizeBody<'a> {
    n_subjects: usize,
    representation: &'static str,
    result: &'a OptimizationResult,
}

#[derive(Serialize)]
struct IngestionBody<'a> {
    ingestion: &'a IngestionSummary,
}

pub fn optimize(args: &OptimizeArgs) -> CliResult<()> {
    let (mut cfg, file_out) = config::load::<OptimizeConfig>(args.common.config.as_deref())?;
    if let Some(p) = &args.input {
        let current = match cfg.input.take() {
            Some(InputSpec::Csv(c)) => Some(c),
            _ => None,
        };
        cfg.input = Some(InputSpec::Csv(with_csv_path(current, p)));
    }
    if let Some(l) = args.loss {
        cfg.loss = l;
    }
    if let Some(m) = args.method {
        cfg.method = m;
    }
    if let Some(k) = args.k {
        cfg.k = k;
    }
    if let Some(f) = &args.fixed {
        cfg.fixed = f.clone();
    }
    if let Some(g) = args.common.grid_size {
        cfg.grid_size = g;
    }
    if let Some(s) = args.common.seed {
        cfg.seed = s;
    }
    sync_seed(&mut cfg.optimizer, cfg.seed);
    let fixed = cfg.validate()?;
    let out = out_dir(&args.common, file_out)?;

    let (mut cohort, ingestion) = match cfg.input.as_ref().expect("validated") {
        InputSpec::Csv(c) => {
            if c.representation == config::Representation::Sample && cfg.method.is_discrete() {
                return Err(CliError::config(
                    "input.csv.representation",
                    format!("{} needs histogram input", cfg.method),
                ));
            }
            let (series, summary) = read_csv(c)?;
            (series_cohort(&series, c.representation, cfg.grid_size)?, Some(summary))
        }
        InputSpec::Simulation(s) => (simulated_cohort(s, cfg.method, cfg.seed, cfg.grid_size)?, None),
    };
    let result = run_search(&mut cohort, cfg.k, cfg.loss, cfg.method, &fixed, &cfg.optimizer, "")?;

    let envelope = |body| Envelope {
        command: "optimize",
        version: VERSION,
        seed: cfg.seed,
        config: &cfg,
        body,
    };
    out.json(
        "result.json",
        &envelope(OptimizeBody {
            n_subjects: cohort.len(),
            representation: kind_name(&cohort),
            result: &result,
        }),
    )?;
    if let Some(summary) = &ingestion {
        out.json("ingestion.json", &envelope_ingestion(&cfg, cfg.seed, "optimize", summary))?;
    }

    let tir = tir_summary(&cohort, &result.thresholds).map_err(|e| CliError::from_core("fixed", e))?;
    let mut header = vec!["subject_id".to_string()];
    header.extend(tir.range_labels.iter().cloned());
    let rows: Vec<Vec<String>> = tir
        .per_subject
        .iter()
        .enumerate()
        .map(|(i, comp)| {
            let mut r = vec![subject_label(&cohort, i)];
            r.extend(comp.iter().map(|&x| num(x)));
            r
        })
        .collect();
    out.csv("tir.csv", &header, &rows)?;

    let m = cohort.grid_size();
    let mut rows = Vec::with_capacity(cohort.len() * m);
    for (i, member) in cohort.members().iter().enumerate() {
        let id = subject_label(&cohort, i);
        let lin = linearized_quantile_grid(member, &result.thresholds, m)
            .map_err(|e| CliError::from_core("fixed", e))?;
        for (j, (q, ql)) in cohort.base_grid(i).iter().zip(lin.values()).enumerate() {
            rows.push(vec![id.clone(), num(grid_probability(j + 1, m)), num(*q), num(*ql)]);
        }
    }
    let header: Vec<String> = ["subject_id", "u", "q", "q_linearized"].map(String::from).to_vec();
    out.csv("quantiles.csv", &header, &rows)?;

    println!("thresholds: {:?}", result.thresholds.values());
    if let Some(r) = &result.rounded_up {
        println!("rounded up: {r:?}");
    }
    println!("{} loss: {}", result.loss_kind, result.loss);
    Ok(())
}

fn envelope_ingestion<'a, C: Serialize>(
    cfg: &'a C,
    seed: u64,
    command: &'static str,
    summary: &'a IngestionSummary,
) -> Envelope<'a, C, IngestionBody<'a>> {
    Envelope {
        command,
        version: VERSION,
        seed,
        config: cfg,
        body: IngestionBody { ingestion: summary },
    }
}

#[derive(Serialize)]
struct SimulateBody<'a> {
    report: &'a BenchmarkReport,
}

fn check_benchmark(cfg: &BenchmarkConfig) -> CliResult<()> {
    if cfg.reps == 0 {
        return Err(CliError::config("reps", "must be at least 1"));
    }
    if cfg.k == 0 {
        return Err(CliError::config("k", "must be at least 1"));
    }
    if cfg.noise_levels.is_empty() {
        return Err(CliError::config("noise_levels", "give at least one noise level"));
    }
    if cfg.methods.is_empty() || cfg.losses.is_empty() {
        return Err(CliError::config("methods", "give at least one method and one loss"));
    }
    if cfg.grid_size == 0 {
        return Err(CliError::config("grid_size", "must be at least 1"));
    }
    if cfg.methods.contains(&BenchmarkMethod::Oracle) && cfg.k > cfg.spec.base_thresholds.len() {
        return Err(CliError::config(
            "k",
            format!(
                "the oracle has only {} thresholds",
                cfg.spec.base_thresholds.len()
            ),
        ));
    }
    cfg.optimizer
        .de
        .validate()
        .map_err(|e| CliError::config("optimizer.de", e))?;
    cfg.pairs().map_err(|e| CliError::config("methods", e))?;
    cfg.validate().map_err(|e| CliError::from_core("spec", e))
}

pub fn simulate(args: &SimulateArgs) -> CliResult<()> {
    let (mut cfg, file_out) = config::load::<BenchmarkConfig>(args.common.config.as_deref())?;
    if let Some(l) = &args.loss {
        cfg.losses = l.clone();
    }
    if let Some(m) = &args.method {
        cfg.methods = m.clone();
    }
    if let Some(k) = args.k {
        cfg.k = k;
    }
    if let Some(r) = args.reps {
        cfg.reps = r;
    }
    if let Some(n) = &args.noise {
        cfg.noise_levels = n.clone();
    }
    if let Some(s) = args.setting {
        cfg.spec.weight_scheme = if s == 1 {
            WeightScheme::Setting1
        } else {
            WeightScheme::Setting2
        };
    }
    if let Some(g) = args.common.grid_size {
        cfg.grid_size = g;
    }
    if let Some(s) = args.common.seed {
        cfg.seed = s;
    }
    check_benchmark(&cfg)?;
    let out = out_dir(&args.common, file_out)?;
    let report = run_benchmark(&cfg).map_err(|e| CliError::from_core("spec", e))?;

    out.json(
        "benchmark.json",
        &Envelope {
            command: "simulate",
            version: VERSION,
            seed: cfg.seed,
            config: &cfg,
            body: SimulateBody { report: &report },
        },
    )?;

    let width = report
        .rows
        .iter()
        .map(|r| r.mean_thresholds.len())
        .max()
        .unwrap_or(0);
    let mut header: Vec<String> = ["noise_sd", "method", "loss"].map(String::from).to_vec();
    header.extend((1..=width).map(|d| format!("mean_t{d}")));
    header.extend((1..=width).map(|d| format!("se_t{d}")));
    header.extend(["mean_loss", "se_loss"].map(String::from));
    let rows: Vec<Vec<String>> = report
        .rows
        .iter()
        .map(|r| {
            let mut row = vec![num(r.noise_sd), r.method.to_string(), r.loss_kind.to_string()];
            row.extend((0..width).map(|d| opt_num(r.mean_thresholds.get(d).copied())));
            row.extend((0..width).map(|d| {
                opt_num(r.se_thresholds.as_ref().and_then(|s| s.get(d).copied()))
            }));
            row.push(num(r.mean_loss));
            row.push(opt_num(r.se_loss));
            row
        })
        .collect();
    out.csv("benchmark.csv", &header, &rows)?;

    let width = report
        .replications
        .iter()
        .map(|r| r.thresholds.len())
        .max()
        .unwrap_or(0);
    let mut header: Vec<String> = ["noise_sd", "method", "loss", "rep", "seed"]
        .map(String::from)
        .to_vec();
    header.extend((1..=width).map(|d| format!("t{d}")));
    header.push("loss_value".into());
    let rows: Vec<Vec<String>> = report
        .replications
        .iter()
        .map(|r| {
            let mut row = vec![
                num(r.noise_sd),
                r.method.to_string(),
                r.loss_kind.to_string(),
                r.rep.to_string(),
                r.seed.to_string(),
            ];
            row.extend((0..width).map(|d| opt_num(r.thresholds.get(d).copied())));
            row.push(num(r.loss));
            row
        })
        .collect();
    out.csv("replications.csv", &header, &rows)?;

    for r in &report.rows {
        println!(
            "noise {} {}/{}: thresholds {:?} loss {}",
            r.noise_sd, r.method, r.loss_kind, r.mean_thresholds, r.mean_loss
        );
    }
    Ok(())
}

/// Splits labeled subjects into the two groups; group A comes first.
fn split_groups(
    series: Vec<SubjectSeries>,
    groups: Option<&(String, String)>,
) -> CliResult<((String, String), Vec<SubjectSeries>, Vec<SubjectSeries>)> {
    for s in &series {
        if s.label.is_none() {
            return Err(CliError::Data(format!("subject `{}` has no label", s.subject_id)));
        }
    }
    let names = match groups {
        Some(g) => g.clone(),
        None => {
            let mut labels: Vec<&str> = series.iter().filter_map(|s| s.label.as_deref()).collect();
            labels.sort_unstable();
            labels.dedup();
            if labels.len() != 2 {
                return Err(CliError::Data(format!(
                    "expected two distinct labels, found {labels:?}; set input.csv.groups to pick two"
                )));
            }
            (labels[0].to_string(), labels[1].to_string())
        }
    };
    let (mut a, mut b) = (Vec::new(), Vec::new());
    for s in series {
        let l = s.label.as_deref().unwrap_or_default();
        if l == names.0 {
            a.push(s);
        } else if l == names.1 {
            b.push(s);
        } else {
            log::warn!("subject `{}` has label `{l}`, which is in neither group", s.subject_id);
        }
    }
    if a.is_empty() || b.is_empty() {
        return Err(CliError::Data(format!(
            "groups `{}` and `{}` must both have subjects",
            names.0, names.1
        )));
    }
    Ok((names, a, b))
}

#[derive(Serialize)]
struct EvaluateBody<'a> {
    groups: (&'a str, &'a str),
    candidate: Option<&'a OptimizationResult>,
    report: &'a ComparisonReport,
}

pub fn evaluate(args: &EvaluateArgs) -> CliResult<()> {
    let (mut cfg, file_out) = config::load::<EvaluateConfig>(args.common.config.as_deref())?;
    if let Some(p) = &args.input {
        let current = match cfg.input.take() {
            Some(EvaluateInput::Csv(c)) => Some(c),
            _ => None,
        };
        cfg.input = Some(EvaluateInput::Csv(with_csv_path(current, p)));
    }
    if args.synthetic && !matches!(cfg.input, Some(EvaluateInput::Synthetic(_))) {
        cfg.input = Some(EvaluateInput::Synthetic(Default::default()));
    }
    if args.loss.is_some() || args.method.is_some() || args.k.is_some() || args.fixed.is_some() {
        let c = cfg.candidate.get_or_insert_with(CandidateSpec::default);
        if let Some(l) = args.loss {
            c.loss = l;
        }
        if let Some(m) = args.method {
            c.method = m;
        }
        if let Some(k) = args.k {
            c.k = k;
        }
        if let Some(f) = &args.fixed {
            c.fixed = f.clone();
        }
    }
    if let Some(g) = args.common.grid_size {
        cfg.grid_size = g;
    }
    if let Some(s) = args.common.seed {
        cfg.seed = s;
    }
    sync_seed(&mut cfg.optimizer, cfg.seed);
    let (reference, fixed) = cfg.validate()?;
    let out = out_dir(&args.common, file_out)?;

    let (names, a, b, ingestion) = match cfg.input.as_ref().expect("validated") {
        EvaluateInput::Csv(c) => {
            let (series, summary) = read_csv(c)?;
            let (names, a, b) = split_groups(series, c.groups.as_ref())?;
            let a = series_cohort(&a, c.representation, cfg.grid_size)?;
            let b = series_cohort(&b, c.representation, cfg.grid_size)?;
            (names, a, b, Some(summary))
        }
        EvaluateInput::Synthetic(spec) => {
            let (a, b) = generate_two_populations(spec, cfg.seed)
                .map_err(|e| CliError::from_core("input.synthetic", e))?;
            let regrid = |c: Cohort| {
                c.with_grid_size(cfg.grid_size)
                    .map_err(|e| CliError::from_core("grid_size", e))
            };
            (
                ("narrow".to_string(), "wide".to_string()),
                regrid(a)?,
                regrid(b)?,
                None,
            )
        }
    };
    log::info!(
        "group A `{}`: {} subjects, group B `{}`: {} subjects",
        names.0,
        a.len(),
        names.1,
        b.len()
    );

    let mut sets = cfg.threshold_sets.clone();
    let candidate = match (&cfg.candidate, &fixed) {
        (Some(c), Some(fixed)) => {
            let mut combined = a.concat(&b).map_err(|e| CliError::from_core("input", e))?;
            let r = run_search(&mut combined, c.k, c.loss, c.method, fixed, &cfg.optimizer, "candidate")?;
            sets.push(NamedThresholds {
                name: c.name.clone(),
                thresholds: r.thresholds.clone(),
            });
            Some(r)
        }
        _ => None,
    };
    let report = compare_thresholds(&a, &b, &sets, reference, cfg.grid_size)
        .map_err(|e| CliError::from_core("threshold_sets", e))?;

    out.json(
        "evaluation.json",
        &Envelope {
            command: "evaluate",
            version: VERSION,
            seed: cfg.seed,
            config: &cfg,
            body: EvaluateBody {
                groups: (&names.0, &names.1),
                candidate: candidate.as_ref(),
                report: &report,
            },
        },
    )?;
    if let Some(summary) = &ingestion {
        out.json("ingestion.json", &envelope_ingestion(&cfg, cfg.seed, "evaluate", summary))?;
    }
    let header: Vec<String> = [
        "set",
        "thresholds",
        "l1",
        "l2",
        "l1_reduction_pct",
        "l2_reduction_pct",
        "range",
        "intercept",
        "slope",
        "decision_boundary",
        "accuracy",
    ]
    .map(String::from)
    .to_vec();
    let mut rows = Vec::new();
    for s in &report.sets {
        let t: Vec<String> = s.thresholds.values().iter().map(|&x| num(x)).collect();
        for r in &s.ranges {
            let c = r.classifier.as_ref();
            rows.push(vec![
                s.name.clone(),
                t.join(" "),
                num(s.l1),
                num(s.l2),
                num(s.l1_reduction_pct),
                num(s.l2_reduction_pct),
                r.label.clone(),
                opt_num(c.map(|c| c.intercept)),
                opt_num(c.map(|c| c.slope)),
                opt_num(c.and_then(|c| c.decision_boundary)),
                opt_num(c.map(|c| c.accuracy)),
            ]);
        }
    }
    out.csv("evaluation.csv", &header, &rows)?;
    out.text("evaluation.md", &comparison_markdown(&report))?;

    for s in &report.sets {
        println!(
            "{}: {:?} L1 {} ({:.1}%) L2 {} ({:.1}%)",
            s.name,
            s.thresholds.values(),
            s.l1,
            s.l1_reduction_pct,
            s.l2,
            s.l2_reduction_pct
        );
    }
    Ok(())
}
