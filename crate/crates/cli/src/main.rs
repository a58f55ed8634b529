//! `nwos`: train neural Walk-on-Spheres solvers, estimate solutions pointwise,
//! evaluate checkpoints and run the control-recovery demo.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use nwos::trainer::ClockMode;

use config::{ConfigError, RunConfig, StepLimit, TrainerKind};

#[derive(Parser, Debug)]
#[command(name = "nwos", version, about = "Neural Walk-on-Spheres solvers for Poisson problems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train a network and write convergence.csv, checkpoint.bin and summary.json.
    Train {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        train: TrainFlags,
    },
    /// Plain Walk-on-Spheres estimates at the points of a CSV file.
    Estimate {
        #[command(flatten)]
        common: Common,
        /// CSV of evaluation points (spatial coordinates, then parameters).
        #[arg(long)]
        points: Option<PathBuf>,
    },
    /// Relative L2 error of a checkpoint against the analytic solution.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Uniform evaluation points.
        #[arg(long)]
        n_eval: Option<usize>,
    },
    /// Recover the optimal control from a trained parametric network.
    OptimizeControl {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        alpha: Option<f64>,
        /// Use the closed-form state map instead of a checkpoint.
        #[arg(long)]
        analytic: bool,
    },
}

#[derive(Args, Debug, Default)]
struct Common {
    /// TOML config file; flags override its values.
    #[arg(long, short)]
    config: Option<PathBuf>,
    #[arg(long)]
    problem: Option<String>,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (also settable through NWOS_OUTPUT_DIR).
    #[arg(long)]
    output_dir: Option<PathBuf>,
    /// Worker threads; 0 uses every core.
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    epsilon: Option<f64>,
    /// Jump limit per walk, or "inf".
    #[arg(long, value_parser = StepLimit::parse)]
    max_steps: Option<StepLimit>,
    /// Trajectories per point.
    #[arg(long)]
    n_traj: Option<usize>,
    #[arg(long)]
    control_variate: Option<bool>,
}

#[derive(Args, Debug, Default)]
struct TrainFlags {
    #[arg(long, value_enum)]
    trainer: Option<TrainerKind>,
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long)]
    budget_seconds: Option<f64>,
    /// Interior points per step.
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long)]
    boundary_batch: Option<usize>,
    #[arg(long)]
    boundary_weight: Option<f64>,
    #[arg(long)]
    buffer_size: Option<usize>,
    #[arg(long)]
    update_interval: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    width: Option<usize>,
    #[arg(long)]
    depth: Option<usize>,
    /// "wall" logs elapsed seconds; "off" logs zeros for reproducible CSVs.
    #[arg(long, value_parser = parse_clock)]
    clock: Option<ClockMode>,
    #[arg(long)]
    log_every: Option<usize>,
    /// Points for the final error measurement.
    #[arg(long)]
    eval_points: Option<usize>,
}

fn parse_clock(s: &str) -> Result<ClockMode, String> {
    match s {
        "wall" => Ok(ClockMode::Wall),
        "off" => Ok(ClockMode::Off),
        _ => Err(format!("expected \"wall\" or \"off\", got {s:?}")),
    }
}

fn base_config(common: &Common) -> anyhow::Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    macro_rules! set {
        ($($src:expr => $dst:expr),* $(,)?) => {$(
            if let Some(v) = $src.clone() {
                $dst = v;
            }
        )*};
    }
    set! {
        common.seed => cfg.seed,
        common.threads => cfg.threads,
    }
    if common.problem.is_some() {
        cfg.problem = common.problem.clone();
    }
    if common.dim.is_some() {
        cfg.dim = common.dim;
    }
    if common.output_dir.is_some() {
        cfg.output_dir = common.output_dir.clone();
    }
    if common.epsilon.is_some() {
        cfg.wos.epsilon = common.epsilon;
    }
    if common.max_steps.is_some() {
        cfg.wos.max_steps = common.max_steps.clone();
    }
    if common.n_traj.is_some() {
        cfg.wos.n_traj = common.n_traj;
    }
    if common.control_variate.is_some() {
        cfg.wos.control_variate = common.control_variate;
    }
    Ok(cfg)
}

fn apply_train_flags(cfg: &mut RunConfig, f: &TrainFlags) {
    let t = &mut cfg.train;
    if let Some(v) = f.trainer {
        cfg.trainer = v;
    }
    if let Some(v) = f.iterations {
        t.iterations = v;
    }
    if f.budget_seconds.is_some() {
        t.budget_seconds = f.budget_seconds;
    }
    if let Some(v) = f.batch {
        t.domain_batch = v;
    }
    if f.boundary_batch.is_some() {
        t.boundary_batch = f.boundary_batch;
    }
    if let Some(v) = f.boundary_weight {
        t.boundary_weight = v;
    }
    if f.buffer_size.is_some() {
        t.buffer_size = f.buffer_size;
    }
    if let Some(v) = f.update_interval {
        t.update_interval = v;
    }
    if let Some(v) = f.lr {
        t.learning_rate = v;
    }
    if let Some(v) = f.clock {
        t.clock = v;
    }
    if let Some(v) = f.log_every {
        t.log_every = v;
    }
    if let Some(v) = f.width {
        cfg.network.width = v;
    }
    if let Some(v) = f.depth {
        cfg.network.depth = v;
    }
    if let Some(v) = f.eval_points {
        cfg.eval_points = v;
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let (cfg, common) = match &cli.command {
        Command::Train { common, train } => {
            let mut cfg = base_config(common)?;
            apply_train_flags(&mut cfg, train);
            (cfg, common)
        }
        Command::Estimate { common, points } => {
            let mut cfg = base_config(common)?;
            if points.is_some() {
                cfg.points = points.clone();
            }
            (cfg, common)
        }
        Command::Eval { common, checkpoint, n_eval } => {
            let mut cfg = base_config(common)?;
            if checkpoint.is_some() {
                cfg.checkpoint = checkpoint.clone();
            }
            if let Some(n) = n_eval {
                cfg.eval_points = *n;
            }
            (cfg, common)
        }
        Command::OptimizeControl { common, checkpoint, alpha, analytic } => {
            let mut cfg = base_config(common)?;
            if checkpoint.is_some() {
                cfg.checkpoint = checkpoint.clone();
            }
            if let Some(a) = alpha {
                cfg.control.alpha = *a;
            }
            cfg.control.analytic |= *analytic;
            (cfg, common)
        }
    };
    if cfg.threads > 0 {
        rayon::ThreadPoolBuilder::new().num_threads(cfg.threads).build_global()?;
    }
    let out = cfg.output_dir(common.output_dir.as_deref());
    match cli.command {
        Command::Train { .. } => commands::run_train(&cfg, &out),
        Command::Estimate { .. } => commands::run_estimate(&cfg, &out),
        Command::Eval { .. } => commands::run_eval(&cfg, &out),
        Command::OptimizeControl { .. } => commands::run_optimize_control(&cfg, &out),
    }
}

fn is_config_error(err: &anyhow::Error) -> bool {
    err.chain().any(|e| {
        e.downcast_ref::<ConfigError>().is_some()
            || matches!(
                e.downcast_ref::<nwos::Error>(),
                Some(nwos::Error::InvalidConfig(_) | nwos::Error::UnknownProblem(_))
            )
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            if is_config_error(&err) {
                ExitCode::from(2)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}
