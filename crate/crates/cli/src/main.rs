mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use aro_split::model::AroProblem;
use aro_split::routeplan::run_experiment;
use aro_split::splitter::{self, BnbDetector};
use aro_split::verify::{run_verify, Fault};
use aro_split::AroError;
use clap::{Args, Parser, Subcommand};

use config::{Command, RunConfig};

#[derive(Parser, Debug)]
#[command(
    name = "aro-split",
    version,
    about = "Adjustable robust optimization by partition splitting"
)]
struct Cli {
    /// TOML run configuration; command-line flags override its fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(flatten)]
    tol: TolFlags,
    #[command(subcommand)]
    command: Option<Sub>,
}

#[derive(Args, Debug, Default)]
struct TolFlags {
    #[arg(long, global = true)]
    feas: Option<f64>,
    #[arg(long, global = true)]
    gap: Option<f64>,
    #[arg(long, global = true)]
    pivot: Option<f64>,
    #[arg(long, global = true)]
    integrality: Option<f64>,
    #[arg(long, global = true)]
    lambda_threshold: Option<f64>,
    #[arg(long, global = true)]
    active: Option<f64>,
    #[arg(long, global = true)]
    dedup: Option<f64>,
}

#[derive(Subcommand, Debug)]
enum Sub {
    /// Split the uncertainty set of one problem file.
    Solve(SolveArgs),
    /// Run the robust shortest path benchmark and write CSV summaries.
    RppExperiment(ExperimentArgs),
    /// Run the property checks on the built-in fixtures.
    Verify(VerifyArgs),
}

#[derive(Args, Debug, Default)]
struct SolveArgs {
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long)]
    max_cells: Option<usize>,
    #[arg(long)]
    max_rounds: Option<usize>,
    /// Where to write the round trace (JSON). Defaults to `trace.json`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug, Default)]
struct ExperimentArgs {
    #[arg(long, value_delimiter = ',')]
    n: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    b: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    theta: Option<Vec<f64>>,
    #[arg(long)]
    instances: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_delimiter = ',')]
    target_cells: Option<Vec<usize>>,
    #[arg(long)]
    max_rounds: Option<usize>,
    /// Solve instances on all cores.
    #[arg(long)]
    parallel: bool,
    /// Output directory for runs.csv, summary.csv and curves.csv. Defaults to
    /// `results`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug, Default)]
struct VerifyArgs {
    /// Corrupt the node multipliers before auditing them.
    #[arg(long, value_enum)]
    inject_fault: Option<FaultArg>,
}

#[derive(Debug, Clone, Copy, clap::ValueEnum)]
enum FaultArg {
    WrongDual,
}

/// Exit statuses.
const EXIT_FAILED: u8 = 1;
const EXIT_INPUT: u8 = 2;
const EXIT_ASSUMPTION: u8 = 3;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &anyhow::Error) -> u8 {
    match e.chain().find_map(|c| c.downcast_ref::<AroError>()) {
        Some(AroError::Assumption { .. }) => EXIT_ASSUMPTION,
        Some(AroError::Parse(_) | AroError::Dimension(_) | AroError::Io(_)) => EXIT_INPUT,
        Some(_) => EXIT_FAILED,
        None if e.chain().any(|c| c.is::<toml::de::Error>()) => EXIT_INPUT,
        None => EXIT_FAILED,
    }
}

fn run(cli: Cli) -> anyhow::Result<u8> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    apply_tolerances(&mut cfg, &cli.tol);
    let sub = match (cli.command, cfg.command) {
        (Some(s), _) => s,
        (None, Some(Command::Solve)) => Sub::Solve(SolveArgs::default()),
        (None, Some(Command::RppExperiment)) => Sub::RppExperiment(ExperimentArgs::default()),
        (None, Some(Command::Verify)) => Sub::Verify(VerifyArgs::default()),
        (None, None) => {
            return Err(anyhow!(
                "no command given; use solve, rpp-experiment or verify"
            ))
        }
    };
    match sub {
        Sub::Solve(a) => {
            override_with(&mut cfg.input, a.input.map(Some));
            override_with(&mut cfg.max_cells, a.max_cells);
            override_with(&mut cfg.max_rounds, a.max_rounds);
            override_with(&mut cfg.out, a.out.map(Some));
            cfg.validate()?;
            cmd_solve(&cfg)
        }
        Sub::RppExperiment(a) => {
            override_with(&mut cfg.n, a.n);
            override_with(&mut cfg.b, a.b);
            override_with(&mut cfg.theta, a.theta);
            override_with(&mut cfg.instances, a.instances);
            override_with(&mut cfg.seed, a.seed);
            override_with(&mut cfg.target_cells, a.target_cells);
            override_with(&mut cfg.max_rounds, a.max_rounds);
            override_with(&mut cfg.out, a.out.map(Some));
            cfg.parallel |= a.parallel;
            cfg.validate()?;
            cmd_rpp_experiment(&cfg)
        }
        Sub::Verify(a) => {
            cfg.validate()?;
            let fault = match a.inject_fault {
                Some(FaultArg::WrongDual) => Fault::WrongDual,
                None => Fault::None,
            };
            cmd_verify(&cfg, fault)
        }
    }
}

fn override_with<T>(field: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *field = v;
    }
}

fn apply_tolerances(cfg: &mut RunConfig, flags: &TolFlags) {
    let t = &mut cfg.tolerances;
    override_with(&mut t.feas, flags.feas);
    override_with(&mut t.gap, flags.gap);
    override_with(&mut t.pivot, flags.pivot);
    override_with(&mut t.integrality, flags.integrality);
    override_with(&mut t.lambda_threshold, flags.lambda_threshold);
    override_with(&mut t.active, flags.active);
    override_with(&mut t.dedup, flags.dedup);
}

fn cmd_solve(cfg: &RunConfig) -> anyhow::Result<u8> {
    let input = cfg
        .input
        .as_deref()
        .ok_or_else(|| anyhow!("solve needs --input"))?;
    let problem =
        AroProblem::load(input).with_context(|| format!("cannot load {}", input.display()))?;
    let trace = splitter::run(&problem, &cfg.split(), &BnbDetector, &cfg.tolerances)?;
    let out = cfg
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from("trace.json"));
    write_json(&out, &trace)?;
    let last = trace.rounds.last().expect("a trace has at least one round");
    println!("rounds: {}", trace.rounds.len());
    println!("cells: {}", last.cells);
    println!("stop: {:?}", trace.stop);
    println!("t_bar: {}", last.t_bar);
    if let Some(tu) = last.t_underbar {
        println!("t_underbar: {tu}");
    }
    println!("trace: {}", out.display());
    Ok(0)
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> anyhow::Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text + "\n").with_context(|| format!("cannot write {}", path.display()))
}

fn cmd_rpp_experiment(cfg: &RunConfig) -> anyhow::Result<u8> {
    let result = run_experiment(&cfg.experiment(), &cfg.tolerances)?;
    let dir = cfg.out.clone().unwrap_or_else(|| PathBuf::from("results"));
    result.write_all(&dir)?;
    println!(
        "{:<6}{:<6}{:<16}{:>7}{:>12}{:>12}{:>12}",
        "N", "B", "method", "cells", "impr%", "expost%", "p"
    );
    for r in result.summary() {
        let method = match r.method.theta() {
            Some(t) => format!("heur({t})"),
            None => r.method.label().to_string(),
        };
        println!(
            "{:<6}{:<6}{:<16}{:>7}{:>12.3}{:>12}{:>12}",
            r.n,
            r.budget,
            method,
            r.target_cells,
            r.mean_impr_pct + 0.0,
            r.mean_impr_expost_pct
                .map(|v| format!("{:.3}", v + 0.0))
                .unwrap_or_default(),
            r.p_value_expost
                .map(|v| format!("{v:.2e}"))
                .unwrap_or_default()
        );
    }
    println!("wrote {}", dir.display());
    Ok(0)
}

fn cmd_verify(cfg: &RunConfig, fault: Fault) -> anyhow::Result<u8> {
    let checks = run_verify(&cfg.tolerances, fault)?;
    let mut failed = Vec::new();
    for c in &checks {
        println!(
            "{} {}: {}",
            if c.passed { "ok  " } else { "FAIL" },
            c.name,
            c.detail
        );
        if !c.passed {
            failed.push(c.name);
        }
    }
    if failed.is_empty() {
        println!("all {} checks passed", checks.len());
        Ok(0)
    } else {
        eprintln!("violated: {}", failed.join(", "));
        Ok(EXIT_FAILED)
    }
}
