//! `lowbound gen|run|check|plot-data`.

use std::ffi::OsString;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};
use lowbound_core::methods::Method;

use crate::check::{check_instance, CheckOptions};
use crate::config::{Cell, ExperimentConfig, MethodName};
use crate::experiment::{run_direct, run_experiment, run_lifted, RunOptions};
use crate::instance_file::{load_instance, serialize_instance, InstanceKind, SavedInstance};
use crate::report::{emit_plot_data, p_label, read_rows, write_report};

#[derive(Debug, Parser)]
#[command(name = "lowbound", version, about = "Build, sweep and verify resisting-oracle hard instances")]
pub struct Cli {
    /// Experiment config (TOML). Command-line flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Inner smoothing tolerance.
    #[arg(long, global = true)]
    pub tol: Option<f64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build a hard instance against one method and save it.
    Gen(GenArgs),
    /// Sweep the configured grid and write report.csv and timings.csv.
    Run,
    /// Run the invariant suite on a saved instance.
    Check(CheckArgs),
    /// Turn a report into whitespace-delimited plot data.
    PlotData(PlotArgs),
}

#[derive(Debug, clap::Args)]
pub struct GenArgs {
    /// Norm exponent; accepts `inf`.
    #[arg(long, default_value = "inf")]
    pub p: f64,
    #[arg(long)]
    pub n: usize,
    #[arg(long = "T", visible_alias = "horizon")]
    pub horizon: usize,
    #[arg(long, default_value_t = 2.0)]
    pub kappa: f64,
    #[arg(long = "L", default_value_t = 1.0)]
    pub lipschitz: f64,
    #[arg(long = "R", default_value_t = 1.0)]
    pub radius: f64,
    #[arg(long, value_enum, default_value = "cg")]
    pub method: MethodName,
    /// File name inside `--out`; derived from the parameters when omitted.
    #[arg(long)]
    pub name: Option<String>,
}

#[derive(Debug, clap::Args)]
pub struct CheckArgs {
    pub instance: PathBuf,
    /// Sampled pairs for the Hölder ratio.
    #[arg(long, default_value_t = 1000)]
    pub pairs: usize,
}

#[derive(Debug, clap::Args)]
pub struct PlotArgs {
    /// Report to read; defaults to `<out>/report.csv`.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

/// Parses `args` and runs the selected command.
pub fn run<I, T>(args: I) -> anyhow::Result<ExitCode>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            e.print()?;
            return Ok(ExitCode::from(code));
        }
    };
    execute(&cli)
}

/// Loads `--config` (or defaults) and applies the global overrides.
pub fn effective_config(cli: &Cli) -> anyhow::Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.out = out.clone();
    }
    if cli.tol.is_some() {
        cfg.tol = cli.tol;
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn execute(cli: &Cli) -> anyhow::Result<ExitCode> {
    let cfg = effective_config(cli)?;
    match &cli.command {
        Command::Gen(args) => {
            let path = generate(args, &cfg)?;
            println!("{}", path.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Run => {
            if cli.config.is_none() {
                bail!("`run` needs --config");
            }
            let report = run_experiment(&cfg)?;
            let (rows, timings) = write_report(&cfg.out, &report)?;
            let failed = report.rows.iter().filter(|r| !r.is_ok()).count();
            println!("{} rows ({failed} failed) -> {}, {}", report.rows.len(), rows.display(), timings.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Check(args) => {
            let inst = load_instance(&args.instance).with_context(|| format!("loading {}", args.instance.display()))?;
            let opts = CheckOptions { pairs: args.pairs, seed: cfg.seed, tol: cfg.tol.unwrap_or(1e-10) };
            let report = check_instance(&inst, &opts)?;
            println!("{report}");
            Ok(if report.passed() { ExitCode::SUCCESS } else { ExitCode::FAILURE })
        }
        Command::PlotData(args) => {
            let src = args.report.clone().unwrap_or_else(|| cfg.out.join(crate::report::REPORT_FILE));
            let rows = read_rows(&src)?;
            for path in emit_plot_data(&rows, &cfg.out)? {
                println!("{}", path.display());
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}

/// Builds the instance described by `args` and writes it under `cfg.out`.
pub fn generate(args: &GenArgs, cfg: &ExperimentConfig) -> anyhow::Result<PathBuf> {
    let cell = Cell {
        n: args.n,
        horizon: args.horizon,
        p: args.p,
        kappa: args.kappa,
        lipschitz: args.lipschitz,
        radius: args.radius,
    };
    let saved = build_instance(&cell, args.method, &RunOptions::from_config(cfg))?;
    std::fs::create_dir_all(&cfg.out).with_context(|| format!("creating {}", cfg.out.display()))?;
    let name = args.name.clone().unwrap_or_else(|| {
        format!(
            "instance_p{}_n{}_T{}_k{}_{}.txt",
            p_label(cell.p),
            cell.n,
            cell.horizon,
            cell.kappa,
            args.method.as_str()
        )
    });
    let path = cfg.out.join(name);
    serialize_instance(&saved, &path)?;
    Ok(path)
}

/// Runs one session for `cell` and packages it for saving.
pub fn build_instance(cell: &Cell, method: MethodName, opts: &RunOptions) -> anyhow::Result<SavedInstance> {
    cell.validate()?;
    if cell.p >= 2.0 {
        let out = run_direct(cell, method, opts.tol)?;
        let method_lipschitz = match out.method {
            Method::Accelerated { lipschitz } => Some(lipschitz),
            _ => None,
        };
        Ok(SavedInstance {
            method,
            method_lipschitz,
            ball_p: out.ball.space().p(),
            ball_radius: out.ball.radius(),
            kind: InstanceKind::Direct(out.instance),
        })
    } else {
        let out = run_lifted(cell, method, opts)?;
        let ball = out.instance.ball()?;
        Ok(SavedInstance {
            method,
            method_lipschitz: None,
            ball_p: ball.space().p(),
            ball_radius: ball.radius(),
            kind: InstanceKind::Lifted(out.instance),
        })
    }
}

/// Convenience for tests and scripts: `lowbound` with the given arguments.
pub fn run_args(args: &[&str]) -> anyhow::Result<ExitCode> {
    run(std::iter::once("lowbound").chain(args.iter().copied()))
}
