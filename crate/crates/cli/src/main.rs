//! `cqsim`: steady states, correlators and variational sweeps from the
//! command line.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use cqed_cmps::algebra;
use cqed_cmps::cavity;
use cqed_cmps::cmps::{self, CorrelationKind};
use cqed_cmps::measure::{self, NoiseModel};
use cqed_cmps::model::LiebLinigerParams;
use cqed_cmps::optimizer::{self, OptResult};
use serde_json::json;

use config::{ConfigError, Format, RunConfig, System, Taus};
use output::Sink;

#[derive(Parser, Debug)]
#[command(name = "cqsim", version, about = "cMPS simulation of cavity-QED output fields")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone, Default)]
struct Common {
    /// TOML run configuration; built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Interaction strength, overrides `model.v`.
    #[arg(long, global = true)]
    v: Option<f64>,
    /// Separations as START:STEP:END.
    #[arg(long, global = true)]
    taus: Option<String>,
    /// Worker threads for parallel evaluation.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Noise seed, overrides `noise.seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory; files go to stdout when neither this nor
    /// `output.dir` is set.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    format: Option<FormatArg>,
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum FormatArg {
    Csv,
    Json,
}

#[derive(ValueEnum, Debug, Clone, Copy, Default)]
enum KindArg {
    G1,
    #[default]
    G2,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Stationary state diagnostics of the configured system.
    Steady(#[command(flatten)] Common),
    /// Minimize the energy density at one interaction strength.
    Optimize(#[command(flatten)] Common),
    /// Minimize over `model.v_list` and emit g2 series per entry.
    Sweep(#[command(flatten)] Common),
    /// Correlation series, at the optimum for `--v` when given.
    Correlate {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value_t)]
        kind: KindArg,
    },
    /// Cooperativity and feasibility report.
    CheckCoop(#[command(flatten)] Common),
    /// Minimize with shot-noise-corrupted energy estimates.
    NoisyOptimize(#[command(flatten)] Common),
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Numerical(String),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Self::Usage(e.to_string())
    }
}

impl From<cqed_cmps::Error> for Failure {
    fn from(e: cqed_cmps::Error) -> Self {
        let mut msg = e.to_string();
        let mut source = std::error::Error::source(&e);
        while let Some(s) = source {
            msg.push_str(&format!(": {s}"));
            source = s.source();
        }
        Self::Numerical(msg)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Self::Usage(format!("output: {e}"))
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Numerical(msg)) => {
            eprintln!("numerical failure: {msg}");
            ExitCode::from(2)
        }
    }
}

fn resolve(common: &Common) -> Result<RunConfig, Failure> {
    let mut cfg = match &common.config {
        Some(path) => config::load_config(path)?,
        None => config::parse_config("")?,
    };
    if let Some(v) = common.v {
        cfg.model = LiebLinigerParams::new(v, cfg.model.mu()).map_err(|e| Failure::Usage(format!("--v: {e}")))?;
    }
    if let Some(t) = &common.taus {
        cfg.taus = Taus::parse(t).map_err(|e| Failure::Usage(format!("--taus: {e}")))?;
    }
    if let Some(seed) = common.seed {
        if let Some(n) = cfg.noise.as_mut() {
            n.seed = seed;
        }
    }
    if let Some(out) = &common.out {
        cfg.out_dir = Some(out.display().to_string());
    }
    if let Some(f) = common.format {
        cfg.format = match f {
            FormatArg::Csv => Format::Csv,
            FormatArg::Json => Format::Json,
        };
    }
    if let Some(jobs) = common.jobs {
        if jobs == 0 {
            return Err(Failure::Usage("--jobs must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| Failure::Usage(format!("--jobs: {e}")))?;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Steady(c) => steady(&resolve(&c)?),
        Command::Optimize(c) => optimize(&resolve(&c)?),
        Command::Sweep(c) => sweep(&resolve(&c)?),
        Command::Correlate { common, kind } => correlate(&resolve(&common)?, common.v.is_some(), kind),
        Command::CheckCoop(c) => check_coop(&resolve(&c)?),
        Command::NoisyOptimize(c) => noisy_optimize(&resolve(&c)?),
    }
}

fn steady(cfg: &RunConfig) -> Result<(), Failure> {
    let sink = Sink::new(cfg)?;
    let rep = cfg.space().rep(&cfg.start_point())?;
    let st = cmps::Stationary::of(&rep)?;
    let rho = &st.density;
    let residual = algebra::frobenius(&st.liouvillian.apply(rho.matrix()));
    let obs = cmps::observables_in(&rep, rho)?;
    let body = json!({
        "dim": rho.dim(),
        "trace": rho.matrix().trace().re,
        "residual": residual,
        "hermiticity_defect": algebra::hermiticity_defect(rho.matrix()),
        "min_eigenvalue": rho.min_eigenvalue(),
        "populations": rho.populations(),
        "observables": obs,
    });
    sink.json("steady.json", body)
}

fn summary_row(cfg: &RunConfig, v: f64, res: &OptResult) -> Result<serde_json::Value, Failure> {
    let obs = cmps::observables(&cfg.space().rep(&res.lambda_star)?)?;
    Ok(json!({
        "v": v,
        "f_star": res.f_star,
        "breakdown": {
            "T": res.breakdown.kinetic,
            "W": res.breakdown.interaction,
            "N": res.breakdown.chemical,
        },
        "lambda_star": res.lambda_star,
        "g2_0_normalized": obs.g2_zero / (obs.density * obs.density),
        "converged": res.converged,
        "iterations": res.iterations,
    }))
}

fn optimize(cfg: &RunConfig) -> Result<(), Failure> {
    let sink = Sink::new(cfg)?;
    let res = optimizer::minimize(&cfg.space(), &cfg.start_point(), &cfg.model, &cfg.optimizer)?;
    let row = summary_row(cfg, cfg.model.v(), &res)?;
    sink.json("summary.json", json!({ "results": [row] }))
}

fn sweep(cfg: &RunConfig) -> Result<(), Failure> {
    let v_list = cfg
        .v_list
        .clone()
        .ok_or_else(|| Failure::Usage("sweep needs model.v_list".into()))?;
    let sink = Sink::new(cfg)?;
    let space = cfg.space();
    let entries = optimizer::sweep(
        &space,
        &v_list,
        cfg.model.mu(),
        &cfg.start_point(),
        &cfg.optimizer,
        cfg.sweep_mode,
    )?;
    let taus = cfg.taus.values();
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for (i, e) in entries.iter().enumerate() {
        match &e.outcome {
            Ok(res) => {
                let mut row = summary_row(cfg, e.v, res)?;
                row["multi_start"] = json!(e.multi_start);
                rows.push(row);
                let rep = space.rep(&res.lambda_star)?;
                let series = cmps::g2(&rep, &taus)?;
                let n = cmps::observables(&rep)?.density;
                sink.series(&format!("g2_{i}_v{}", e.v), &series, n)?;
            }
            Err(err) => {
                log::error!("v = {}: {err}", e.v);
                rows.push(json!({ "v": e.v, "error": err.to_string() }));
                failures.push(e.v);
            }
        }
    }
    sink.json("summary.json", json!({ "results": rows }))?;
    if failures.is_empty() {
        Ok(())
    } else {
        Err(Failure::Numerical(format!("sweep entries failed at v = {failures:?}")))
    }
}

fn correlate(cfg: &RunConfig, optimize_first: bool, kind: KindArg) -> Result<(), Failure> {
    let sink = Sink::new(cfg)?;
    let space = cfg.space();
    let lambda = if optimize_first {
        optimizer::minimize(&space, &cfg.start_point(), &cfg.model, &cfg.optimizer)?.lambda_star
    } else {
        cfg.start_point()
    };
    let rep = space.rep(&lambda)?;
    let kind = match kind {
        KindArg::G1 => CorrelationKind::G1,
        KindArg::G2 => CorrelationKind::G2,
    };
    let st = cmps::Stationary::of(&rep)?;
    let series = st.correlation(&rep, kind, &cfg.taus.values())?;
    let n = cmps::observables_in(&rep, &st.density)?.density;
    sink.series("correlation", &series, n)
}

fn check_coop(cfg: &RunConfig) -> Result<(), Failure> {
    let System::Cavity { jc, .. } = &cfg.system else {
        return Err(Failure::Usage("check-coop needs mode = \"cavity\"".into()));
    };
    let sink = Sink::new(cfg)?;
    let report = cavity::cooperativity(jc.g, jc.kappa, jc.gamma)?;
    let truncation = cavity::truncation_converged(jc, cavity::TruncationObservable::Density, 1e-6).ok();
    sink.json(
        "coop.json",
        json!({
            "cooperativity": report.cooperativity,
            "feature_time": report.feature_time,
            "coherence_time": report.coherence_time,
            "feasible": report.feasible,
            "lossless": report.lossless,
            "converged_n_max": truncation,
        }),
    )
}

fn noisy_optimize(cfg: &RunConfig) -> Result<(), Failure> {
    let noise = cfg
        .noise
        .as_ref()
        .ok_or_else(|| Failure::Usage("noisy-optimize needs a [noise] table".into()))?;
    let sink = Sink::new(cfg)?;
    let nm = NoiseModel::new(noise.shots, noise.seed)?;
    let res = measure::noisy_minimize(
        &cfg.space(),
        &cfg.start_point(),
        &cfg.model,
        &cfg.optimizer,
        &nm,
        noise.offset,
    )?;
    let mut row = summary_row(cfg, cfg.model.v(), &res)?;
    row["stderr"] = json!(res.trace.iter().rev().find(|t| t.accepted).and_then(|t| t.stderr));
    sink.json("summary.json", json!({ "results": [row] }))
}
