use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use thz_noma::baselines::{falpha_grid, FalphaRow};
use thz_noma::harness::{emit_outputs, preset, run_experiment, ExperimentSpec, Preset, SolverKind};

#[derive(Parser)]
#[command(name = "thz-noma", version, about = "Monte Carlo experiments for NOMA over legacy THz beams")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Trials per sweep point.
    #[arg(long)]
    trials: Option<usize>,
    /// Master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (defaults to out/<experiment name>).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads; 0 uses every core.
    #[arg(long)]
    parallel: Option<usize>,
    /// Comma-separated subset of bb,cap,sca1,sca2,greedy,oracle.
    #[arg(long, value_delimiter = ',')]
    solvers: Option<Vec<SolverKind>>,
    /// Record wall-clock times; outputs are then no longer reproducible byte for byte.
    #[arg(long)]
    timing: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment described by a JSON spec file.
    Run {
        spec: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Iteration cap comparison over M.
    Table1 {
        #[command(flatten)]
        common: Common,
    },
    /// Sum rate against M for every solver.
    Fig1 {
        /// Edge of the square holding the secondary users (m).
        #[arg(long, default_value_t = 10.0)]
        rs: f64,
        /// Primary target rate (BPCU).
        #[arg(long, default_value_t = 1.0)]
        rbar: f64,
        #[command(flatten)]
        common: Common,
    },
    /// BB bound history and SCA-II trace on two instances.
    Fig2 {
        #[command(flatten)]
        common: Common,
    },
    /// Sum rate against K.
    Fig3 {
        #[command(flatten)]
        common: Common,
    },
    /// Sum rate against N.
    Fig4 {
        #[command(flatten)]
        common: Common,
    },
    /// Sum rate against the codebook size.
    Fig5 {
        #[command(flatten)]
        common: Common,
    },
    /// Scan the two-user power-split function and report where it peaks.
    Falpha {
        #[arg(long, default_value_t = 50)]
        nx: usize,
        #[arg(long, default_value_t = 50)]
        nbeta: usize,
        #[arg(long, default_value_t = 10_001)]
        nalpha: usize,
        /// CSV destination; prints a one-line verdict either way.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn apply(mut spec: ExperimentSpec, c: &Common) -> ExperimentSpec {
    if let Some(t) = c.trials {
        spec.trials = t;
    }
    if let Some(s) = c.seed {
        spec.base.seed = s;
    }
    if let Some(p) = c.parallel {
        spec.parallelism = p;
    }
    if let Some(s) = &c.solvers {
        spec.solvers = s.clone();
    }
    if c.timing {
        spec.timing = true;
    }
    if let Some(o) = &c.out {
        spec.output = Some(o.clone());
    }
    spec
}

fn run(spec: ExperimentSpec) -> Result<()> {
    let dir = spec
        .output
        .clone()
        .unwrap_or_else(|| PathBuf::from("out").join(&spec.name));
    let res = run_experiment(&spec).with_context(|| format!("running {}", spec.name))?;
    emit_outputs(&res, &dir)?;
    println!("{:>8}  {:<7} {:>6} {:>10} {:>8} {:>10}", "sweep", "solver", "n", "mean", "se", "iters");
    for r in &res.summary {
        println!(
            "{:>8}  {:<7} {:>6} {:>10.4} {:>8.4} {:>10.1}",
            r.sweep, r.solver, r.trials, r.mean, r.std_err, r.mean_iterations
        );
    }
    if !res.failures.is_empty() {
        eprintln!("{} solver failures, see failures.csv", res.failures.len());
    }
    println!("wrote {}", dir.display());
    Ok(())
}

fn falpha(nx: usize, nbeta: usize, nalpha: usize, out: Option<PathBuf>) -> Result<()> {
    if nx == 0 || nbeta < 2 || nalpha < 2 {
        bail!("need nx >= 1, nbeta >= 2 and nalpha >= 2");
    }
    let rows: Vec<FalphaRow> = falpha_grid(nx, nbeta, nalpha);
    if let Some(path) = out {
        let mut w = csv::Writer::from_path(&path).with_context(|| path.display().to_string())?;
        for r in &rows {
            w.serialize(r)?;
        }
        w.flush()?;
    }
    let off = rows.iter().filter(|r| r.argmax_alpha != 1.0).count();
    let negative = rows.iter().filter(|r| !(r.slope_sign > 0.0)).count();
    println!(
        "{} grid points: argmax away from alpha=1 at {off}, non-positive slope sign at {negative}",
        rows.len()
    );
    Ok(())
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match cli.command {
        Command::Run { spec, common } => run(apply(ExperimentSpec::from_json_file(&spec)?, &common)),
        Command::Table1 { common } => run(apply(preset(Preset::Table1), &common)),
        Command::Fig1 { rs, rbar, common } => run(apply(preset(Preset::Fig1 { r_s: rs, r_bar: rbar }), &common)),
        Command::Fig2 { common } => run(apply(preset(Preset::Fig2), &common)),
        Command::Fig3 { common } => run(apply(preset(Preset::Fig3), &common)),
        Command::Fig4 { common } => run(apply(preset(Preset::Fig4), &common)),
        Command::Fig5 { common } => run(apply(preset(Preset::Fig5), &common)),
        Command::Falpha { nx, nbeta, nalpha, out } => falpha(nx, nbeta, nalpha, out),
    }
}
