//! Subcommands: each reads its inputs from, and writes its artifacts to, the
//! output directory.

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use log::{info, warn};
use serde::Serialize;

use regcert_core::certify::{CertificationResult, LambdaGrid};
use regcert_core::hitrun::AcceptStats;
use regcert_core::oracle::OracleResult;

use crate::bundle::DataBundle;
use crate::config::{self, ExperimentConfig, Overrides, Seeds};
use crate::error::{CliError, Result};
use crate::pipeline::{self, AnalyticCurves, Comparison, PipelineColumns, WallTimes};
use crate::plot::{self, Panel, Series, Style};
use crate::table::{fmt_f64, provenance, write_csv, Table};

pub const RESULTS_CSV: &str = "results.csv";
pub const PARTIAL_CSV: &str = "results_partial.csv";
pub const SUMMARY_JSON: &str = "summary.json";
pub const ANALYTIC_CSV: &str = "analytic.csv";
pub const ORACLE_CSV: &str = "oracle.csv";
pub const COMPARISON_CSV: &str = "comparison.csv";
pub const CONFIG_JSON: &str = "config.json";
pub const SIZE_SVG: &str = "size_credibility.svg";
pub const SHS_SVG: &str = "shs_vs_c.svg";

pub const RESULTS_COLUMNS: [&str; 10] = [
    "lambda",
    "u",
    "u_stderr",
    "s_rel",
    "C",
    "S_HS",
    "S_HS_stderr",
    "case",
    "s_rel_stderr",
    "C_stderr",
];
pub const ANALYTIC_COLUMNS: [&str; 4] = ["lambda", "s2_analytic", "u_analytic", "C_analytic"];
pub const ORACLE_COLUMNS: [&str; 8] = [
    "lambda",
    "s_abs",
    "s_abs_stderr",
    "C",
    "C_stderr",
    "n_in",
    "n_total",
    "usable",
];
pub const COMPARISON_COLUMNS: [&str; 11] = [
    "lambda",
    "C_pipeline",
    "C_pipeline_stderr",
    "C_oracle",
    "C_oracle_stderr",
    "z_C",
    "ratio",
    "ratio_stderr",
    "z_ratio",
    "n_in",
    "usable",
];

#[derive(Debug, Parser)]
#[command(
    name = "regcert",
    version,
    about = "Certify credible regions of quantum state tomography data"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Experiment config (JSON); defaults to the qubit Pauli-6 experiment.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Override one config field, e.g. `--set sampling.k_samples=50000`.
    #[arg(long = "set", global = true, value_name = "DOT.PATH=VALUE")]
    pub sets: Vec<String>,
    /// Output directory (overrides `output_dir`).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Derive every seed from this one.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a POVM, a true state and counts.
    Simulate,
    /// Fit, sample the credible regions and write size and credibility.
    Certify,
    /// Write the asymptotic Gaussian curves for the fitted data.
    Analytic,
    /// Brute-force MC filtering of the state space (D ≤ 3).
    Oracle,
    /// Render SVG plots from result CSVs.
    Plot {
        /// CSV files; defaults to results.csv and analytic.csv in the output directory.
        csv: Vec<PathBuf>,
    },
    /// Compare pipeline and oracle credibilities; exits 4 on disagreement.
    Compare {
        #[arg(long)]
        results: Option<PathBuf>,
        #[arg(long)]
        oracle: Option<PathBuf>,
    },
}

pub fn run(cli: Cli) -> Result<()> {
    let overrides = Overrides {
        sets: cli.sets.clone(),
        seed: cli.seed,
        out: cli.out.clone(),
    };
    let cfg = config::load(cli.config.as_deref(), &overrides)?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Config("--threads must be positive".into()));
        }
        builder = builder.num_threads(n);
    }
    let pool = builder
        .build()
        .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    pool.install(|| dispatch(&cli.command, &cfg))
}

fn dispatch(command: &Command, cfg: &ExperimentConfig) -> Result<()> {
    let dir = cfg.output_dir.as_path();
    match command {
        Command::Simulate => cmd_simulate(cfg, dir),
        Command::Certify => cmd_certify(cfg, dir),
        Command::Analytic => cmd_analytic(cfg, dir),
        Command::Oracle => cmd_oracle(cfg, dir),
        Command::Plot { csv } => cmd_plot(dir, csv),
        Command::Compare { results, oracle } => {
            let results = results.clone().unwrap_or_else(|| dir.join(RESULTS_CSV));
            let oracle = oracle.clone().unwrap_or_else(|| dir.join(ORACLE_CSV));
            cmd_compare(cfg, dir, &results, &oracle)
        }
    }
}

fn stamp(cfg: &ExperimentConfig) -> String {
    provenance(&cfg.hash(), &cfg.seeds)
}

fn write_config(cfg: &ExperimentConfig, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(CliError::io(dir))?;
    let path = dir.join(CONFIG_JSON);
    std::fs::write(&path, cfg.to_json() + "\n").map_err(CliError::io(&path))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).expect("summary serializes");
    std::fs::write(path, text + "\n").map_err(CliError::io(path))
}

fn load_bundle(cfg: &ExperimentConfig, dir: &Path) -> Result<DataBundle> {
    let bundle = DataBundle::read(dir)?;
    pipeline::check_bundle(cfg, &bundle)?;
    Ok(bundle)
}

pub fn cmd_simulate(cfg: &ExperimentConfig, dir: &Path) -> Result<()> {
    let bundle = pipeline::simulate(cfg)?;
    write_config(cfg, dir)?;
    bundle.write(dir)?;
    info!(
        "simulated D = {}, M = {}, N = {} into {}",
        cfg.dim_hilbert,
        bundle.meta.n_outcomes,
        bundle.counts.total(),
        dir.display()
    );
    Ok(())
}

#[derive(Serialize)]
struct Summary {
    version: &'static str,
    config_hash: String,
    seeds: Seeds,
    dim_hilbert: usize,
    n_outcomes: usize,
    n_total: u64,
    r_ml: Vec<f64>,
    rank: usize,
    eigenvalues: Vec<f64>,
    case: String,
    log_l_max: f64,
    mle_iterations: usize,
    grid_points: usize,
    k_samples: usize,
    membership_violations: u64,
    step_failures: u64,
    mean_shrinks: f64,
    wall_times: WallTimes,
    status: &'static str,
    error: Option<String>,
    failed_lambdas: Vec<f64>,
}

pub fn results_rows(res: &CertificationResult) -> Vec<Vec<String>> {
    let case = res.case.to_string();
    (0..res.grid.len())
        .map(|k| {
            vec![
                fmt_f64(res.grid.values()[k]),
                fmt_f64(res.u[k]),
                fmt_f64(res.u_stderr[k]),
                fmt_f64(res.s_rel[k]),
                fmt_f64(res.c[k]),
                fmt_f64(res.capacity_p2[k]),
                fmt_f64(res.capacity_p2_stderr[k]),
                case.clone(),
                fmt_f64(res.s_rel_stderr[k]),
                fmt_f64(res.c_stderr[k]),
            ]
        })
        .collect()
}

pub fn cmd_certify(cfg: &ExperimentConfig, dir: &Path) -> Result<()> {
    let bundle = load_bundle(cfg, dir)?;
    write_config(cfg, dir)?;
    let run = pipeline::certify(cfg, &bundle)?;
    let mut stats = AcceptStats::default();
    let mut failed = Vec::new();
    let mut first_error = None;
    for (p, &lambda) in run.points.iter().zip(run.grid.values()) {
        match p {
            Ok(p) => stats.merge(&p.stats),
            Err(e) => {
                failed.push(lambda);
                first_error.get_or_insert_with(|| e.to_string());
            }
        }
    }
    let assembled = match &run.result {
        Some(Err(e)) => {
            first_error.get_or_insert_with(|| e.to_string());
            None
        }
        Some(Ok(res)) => Some(res),
        None => None,
    };
    let fit = &run.fit;
    let summary = Summary {
        version: env!("CARGO_PKG_VERSION"),
        config_hash: cfg.hash(),
        seeds: cfg.seeds,
        dim_hilbert: cfg.dim_hilbert,
        n_outcomes: bundle.povm.n_outcomes(),
        n_total: bundle.counts.total(),
        r_ml: fit.estimate.r_ml.iter().copied().collect(),
        rank: fit.rank,
        eigenvalues: fit.eigenvalues.iter().copied().collect(),
        case: fit.case().to_string(),
        log_l_max: fit.estimate.log_l_max,
        mle_iterations: fit.iterations,
        grid_points: run.grid.len(),
        k_samples: cfg.sampling.k_samples,
        membership_violations: stats.containment_violations,
        step_failures: stats.failures,
        mean_shrinks: stats.mean_shrinks(),
        wall_times: run.times,
        status: if assembled.is_some() { "ok" } else { "failed" },
        error: first_error.clone(),
        failed_lambdas: failed,
    };
    write_json(&dir.join(SUMMARY_JSON), &summary)?;
    match assembled {
        Some(res) => {
            write_csv(
                &dir.join(RESULTS_CSV),
                &stamp(cfg),
                &RESULTS_COLUMNS,
                &results_rows(res),
            )?;
            info!(
                "certified {} grid points in {:.1} s; case {}, {} membership violations",
                res.grid.len(),
                run.times.total,
                res.case,
                stats.containment_violations
            );
            Ok(())
        }
        None => {
            // Flush whatever grid points did succeed before failing.
            let rows: Vec<Vec<String>> = run
                .points
                .iter()
                .zip(run.grid.values())
                .map(|(p, &lambda)| match p {
                    Ok(p) => vec![
                        fmt_f64(lambda),
                        fmt_f64(p.u.mean),
                        fmt_f64(p.u.stderr),
                        fmt_f64(p.capacity.mean),
                        fmt_f64(p.capacity.stderr),
                        "ok".into(),
                    ],
                    Err(e) => {
                        let nan = fmt_f64(f64::NAN);
                        vec![
                            fmt_f64(lambda),
                            nan.clone(),
                            nan.clone(),
                            nan.clone(),
                            nan,
                            e.to_string(),
                        ]
                    }
                })
                .collect();
            write_csv(
                &dir.join(PARTIAL_CSV),
                &stamp(cfg),
                &["lambda", "u", "u_stderr", "S_HS", "S_HS_stderr", "status"],
                &rows,
            )?;
            match run.into_result() {
                Err(e) => Err(e),
                Ok(_) => unreachable!("assembly failed"),
            }
        }
    }
}

pub fn analytic_rows(a: &AnalyticCurves) -> Vec<Vec<String>> {
    (0..a.lambda.len())
        .map(|k| {
            vec![
                fmt_f64(a.lambda[k]),
                fmt_f64(a.s2[k]),
                fmt_f64(a.u[k]),
                fmt_f64(a.c[k]),
            ]
        })
        .collect()
}

pub fn cmd_analytic(cfg: &ExperimentConfig, dir: &Path) -> Result<()> {
    let bundle = load_bundle(cfg, dir)?;
    let fit = pipeline::fit(cfg, &bundle)?;
    let curves = pipeline::analytic(cfg, &fit.estimate)?;
    write_csv(
        &dir.join(ANALYTIC_CSV),
        &stamp(cfg),
        &ANALYTIC_COLUMNS,
        &analytic_rows(&curves),
    )?;
    info!("analytic curves for case {} written", fit.case());
    Ok(())
}

pub fn oracle_rows(o: &OracleResult, min_yield: u64) -> Vec<Vec<String>> {
    let usable = o.usable(min_yield);
    (0..o.grid.len())
        .map(|k| {
            vec![
                fmt_f64(o.grid.values()[k]),
                fmt_f64(o.s_abs[k]),
                fmt_f64(o.s_abs_stderr[k]),
                fmt_f64(o.c[k]),
                fmt_f64(o.c_stderr[k]),
                o.n_in[k].to_string(),
                o.n_total.to_string(),
                usable[k].to_string(),
            ]
        })
        .collect()
}

pub fn cmd_oracle(cfg: &ExperimentConfig, dir: &Path) -> Result<()> {
    let bundle = load_bundle(cfg, dir)?;
    let fit = pipeline::fit(cfg, &bundle)?;
    let res = pipeline::oracle(cfg, &bundle, fit.estimate.log_l_max)?;
    write_csv(
        &dir.join(ORACLE_CSV),
        &stamp(cfg),
        &ORACLE_COLUMNS,
        &oracle_rows(&res, cfg.oracle.min_yield),
    )?;
    let usable = res
        .usable(cfg.oracle.min_yield)
        .iter()
        .filter(|u| **u)
        .count();
    info!(
        "oracle: {} samples, {usable} usable grid points",
        res.n_total
    );
    let results = dir.join(RESULTS_CSV);
    if results.exists() {
        cmd_compare(cfg, dir, &results, &dir.join(ORACLE_CSV))
    } else {
        Ok(())
    }
}

fn oracle_from_table(t: &Table) -> Result<OracleResult> {
    let lambda = t.floats("lambda")?;
    let n_in = t.floats("n_in")?.into_iter().map(|v| v as u64).collect();
    let n_total = t.floats("n_total")?.first().copied().unwrap_or(0.0) as u64;
    Ok(OracleResult {
        grid: LambdaGrid::new(lambda).map_err(|e| CliError::schema(&t.path, e.to_string()))?,
        s_abs: t.floats("s_abs")?,
        s_abs_stderr: t.floats("s_abs_stderr")?,
        c: t.floats("C")?,
        c_stderr: t.floats("C_stderr")?,
        n_total,
        n_in,
    })
}

fn pipeline_from_table(t: &Table) -> Result<PipelineColumns> {
    Ok(PipelineColumns {
        lambda: t.floats("lambda")?,
        c: t.floats("C")?,
        c_stderr: t.floats("C_stderr")?,
        s_rel: t.floats("s_rel")?,
        s_rel_stderr: t.floats("s_rel_stderr")?,
    })
}

pub fn comparison_rows(c: &Comparison) -> Vec<Vec<String>> {
    c.rows
        .iter()
        .map(|r| {
            vec![
                fmt_f64(r.lambda),
                fmt_f64(r.c_pipeline),
                fmt_f64(r.c_pipeline_stderr),
                fmt_f64(r.c_oracle),
                fmt_f64(r.c_oracle_stderr),
                fmt_f64(r.z_c),
                fmt_f64(r.ratio),
                fmt_f64(r.ratio_stderr),
                fmt_f64(r.z_ratio),
                r.n_in.to_string(),
                r.usable.to_string(),
            ]
        })
        .collect()
}

pub fn cmd_compare(
    cfg: &ExperimentConfig,
    dir: &Path,
    results: &Path,
    oracle: &Path,
) -> Result<()> {
    let p = pipeline_from_table(&Table::read(results)?)?;
    let o = oracle_from_table(&Table::read(oracle)?)?;
    let cmp = pipeline::compare(&p, &o, cfg.oracle.min_yield, cfg.oracle.z_max)?;
    std::fs::create_dir_all(dir).map_err(CliError::io(dir))?;
    write_csv(
        &dir.join(COMPARISON_CSV),
        &stamp(cfg),
        &COMPARISON_COLUMNS,
        &comparison_rows(&cmp),
    )?;
    let verdict = cmp.verdict();
    println!("{verdict}");
    if cmp.passed() {
        Ok(())
    } else {
        Err(CliError::Disagreement(verdict))
    }
}

fn points(x: &[f64], y: &[f64]) -> Vec<(f64, f64)> {
    x.iter().copied().zip(y.iter().copied()).collect()
}

pub fn cmd_plot(dir: &Path, csv: &[PathBuf]) -> Result<()> {
    let paths: Vec<PathBuf> = if csv.is_empty() {
        [RESULTS_CSV, ANALYTIC_CSV]
            .iter()
            .map(|f| dir.join(f))
            .filter(|p| p.exists())
            .collect()
    } else {
        csv.to_vec()
    };
    if paths.is_empty() {
        return Err(CliError::Config(format!(
            "no CSV files to plot in {}",
            dir.display()
        )));
    }
    let mut results = None;
    let mut analytic = None;
    for path in &paths {
        let t = Table::read(path)?;
        if t.rows.is_empty() {
            return Err(CliError::schema(path, "no rows to plot"));
        }
        if t.has_column("s2_analytic") {
            analytic = Some((t.floats("C_analytic")?, t.floats("s2_analytic")?));
        } else {
            let lambda = t.floats("lambda")?;
            results = Some((
                lambda,
                t.floats("s_rel")?,
                t.floats("C")?,
                t.floats("S_HS")?,
            ));
        }
    }
    std::fs::create_dir_all(dir).map_err(CliError::io(dir))?;
    let mut written = 0;
    if let Some((lambda, s_rel, c, _)) = &results {
        let panels = [
            Panel {
                title: "Size".into(),
                x_label: "λ".into(),
                y_label: "S_λ (relative)".into(),
                x_log: true,
                y_log: true,
                series: vec![Series {
                    label: "sampled".into(),
                    points: points(lambda, s_rel),
                    style: Style::Line,
                    color: "#1f77b4",
                }],
            },
            Panel {
                title: "Credibility".into(),
                x_label: "λ".into(),
                y_label: "C_λ".into(),
                x_log: true,
                y_log: false,
                series: vec![Series {
                    label: "sampled".into(),
                    points: points(lambda, c),
                    style: Style::Line,
                    color: "#d62728",
                }],
            },
        ];
        write_svg(&dir.join(SIZE_SVG), &panels)?;
        written += 1;
    }
    let mut series = Vec::new();
    if let Some((_, _, c, s_hs)) = &results {
        series.push(Series {
            label: "sampled".into(),
            points: points(c, s_hs),
            style: Style::Markers,
            color: "#1f77b4",
        });
    }
    if let Some((c, s2)) = &analytic {
        series.push(Series {
            label: "analytic".into(),
            points: points(c, s2),
            style: Style::Dashed,
            color: "black",
        });
    }
    if !series.is_empty() {
        let panel = Panel {
            title: "Hilbert–Schmidt capacity versus credibility".into(),
            x_label: "C_λ".into(),
            y_label: "S_HS".into(),
            x_log: false,
            y_log: true,
            series,
        };
        write_svg(&dir.join(SHS_SVG), &[panel])?;
        written += 1;
    }
    if written == 0 {
        warn!("nothing plotted");
    }
    Ok(())
}

fn write_svg(path: &Path, panels: &[Panel]) -> Result<()> {
    let svg =
        plot::render(panels).ok_or_else(|| CliError::schema(path, "no finite points to plot"))?;
    std::fs::write(path, svg).map_err(CliError::io(path))
}
