use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use lowthrust::mission::{builtin_names, load_mission};
use lowthrust::runner::{run, sweep, sweep_csv};
use lowthrust::{Command, ContinuationSchedule, MissionConfig, RunSettings, SweepParam};

/// Indirect low-thrust trajectory solver.
#[derive(Parser)]
#[command(name = "lowthrust", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Energy-optimal transfer.
    SolveEo(SolveArgs),
    /// Fuel-optimal transfer through smoothing continuation.
    SolveFo(SolveArgs),
    /// Time-optimal transfer with free final time.
    SolveTo(SolveArgs),
    /// Pin Γ_TR or β_t over a grid and record convergence effort.
    Sweep(SweepArgs),
    /// List the bundled missions.
    Missions,
}

#[derive(Args)]
struct Common {
    /// Mission JSON file or bundled mission name.
    mission: String,
    /// Output directory for artifacts.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Shooting tolerance (canonical max-norm).
    #[arg(long)]
    tol: Option<f64>,
    /// Number of smoothing steps from k = 0 to the final k.
    #[arg(long)]
    k_steps: Option<usize>,
    /// Eclipse continuation increment.
    #[arg(long)]
    deps: Option<f64>,
    /// Uniform trajectory samples.
    #[arg(long)]
    samples: Option<usize>,
}

#[derive(Args)]
struct SolveArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    pin_gamma_tr: Option<f64>,
    #[arg(long)]
    pin_beta_t: Option<f64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Param {
    GammaTr,
    BetaT,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, value_enum)]
    param: Param,
    /// Comma-separated values, or `start:stop:count`.
    #[arg(long)]
    grid: String,
}

fn parse_grid(s: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = s.split(':').collect();
    match parts.as_slice() {
        [a, b, n] => {
            let (a, b): (f64, f64) = (a.trim().parse()?, b.trim().parse()?);
            let n: usize = n.trim().parse()?;
            match n {
                0 => bail!("grid count must be at least 1"),
                1 => Ok(vec![a]),
                _ => Ok((0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect()),
            }
        }
        [_] => s
            .split(',')
            .map(|v| v.trim().parse::<f64>().with_context(|| format!("bad grid value `{v}`")))
            .collect(),
        _ => bail!("grid must be a comma list or start:stop:count"),
    }
}

fn settings(cfg: &MissionConfig, c: &Common) -> Result<RunSettings> {
    let mut s = RunSettings::from_config(cfg)?;
    if let Some(t) = c.tol {
        s.opts.tol = t;
    }
    if let Some(n) = c.samples {
        s.opts.samples = n;
    }
    let d_eps = match c.deps {
        Some(d) => d,
        None => s.schedule.eps_steps.first().copied().unwrap_or(0.1),
    };
    s.schedule = match c.k_steps {
        Some(n) => ContinuationSchedule::new(n, s.schedule.k_max(), d_eps)?,
        None => ContinuationSchedule::from_steps(s.schedule.k_steps.clone(), d_eps)?,
    };
    Ok(s)
}

fn solve(command: Command, args: &SolveArgs) -> Result<()> {
    let cfg = load_mission(&args.common.mission)?;
    let mut s = settings(&cfg, &args.common)?;
    s.pin_gamma_tr = args.pin_gamma_tr;
    s.pin_beta_t = args.pin_beta_t;
    let artifacts = run(command, &cfg, &s).with_context(|| format!("{} failed for {}", command.name(), cfg.name))?;
    if let Some(dir) = &args.common.out {
        artifacts.write(dir).with_context(|| format!("writing {}", dir.display()))?;
    }
    println!("{}", serde_json::to_string_pretty(&artifacts.summary)?);
    Ok(())
}

fn run_sweep(args: &SweepArgs) -> Result<()> {
    let cfg = load_mission(&args.common.mission)?;
    let s = settings(&cfg, &args.common)?;
    let grid = parse_grid(&args.grid)?;
    let param = match args.param {
        Param::GammaTr => SweepParam::GammaTr,
        Param::BetaT => SweepParam::BetaT,
    };
    let rows = sweep(param, &cfg, &grid, &s)?;
    let table = sweep_csv(&rows)?;
    match &args.common.out {
        Some(dir) => {
            std::fs::create_dir_all(dir)?;
            std::fs::write(dir.join("sweep.csv"), &table)?;
        }
        None => print!("{table}"),
    }
    if rows.iter().all(|r| !r.converged) {
        bail!("no sweep row converged");
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Cmd::SolveEo(a) => solve(Command::SolveEo, a),
        Cmd::SolveFo(a) => solve(Command::SolveFo, a),
        Cmd::SolveTo(a) => solve(Command::SolveTo, a),
        Cmd::Sweep(a) => run_sweep(a),
        Cmd::Missions => {
            builtin_names().for_each(|n| println!("{n}"));
            Ok(())
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
