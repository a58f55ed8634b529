use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use ndarray::{s, Array2};
use nwos::benchmarks::control::{optimal_control, optimize_control, AnalyticSlice, ControlOptions};
use nwos::network::{load_checkpoint, save_checkpoint};
use nwos::trainer::{relative_l2_error, train_buffered, train_vanilla};
use nwos::{make_problem, wos_pointwise, Architecture, Network, Problem};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::{config_error, ConfigError, RunConfig, TrainerKind};

pub const CONVERGENCE_CSV: &str = "convergence.csv";
pub const CHECKPOINT: &str = "checkpoint.bin";
pub const SUMMARY_JSON: &str = "summary.json";
pub const ESTIMATES_CSV: &str = "estimates.csv";
pub const EVAL_JSON: &str = "eval.json";
pub const CONTROL_JSON: &str = "control.json";

fn problem(cfg: &RunConfig) -> Result<Problem> {
    let name = cfg.problem_name()?;
    make_problem(name, cfg.dim).map_err(|e| ConfigError(format!("problem: {e}")).into())
}

fn prepare_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("cannot create output directory {}", dir.display()))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
}

#[derive(Serialize)]
struct Summary<'a> {
    problem: &'a str,
    final_rel_l2: Option<f64>,
    mean_wos_steps: f64,
    wall_seconds: f64,
    iterations: usize,
    seed: u64,
    config_hash: String,
}

pub fn run_train(cfg: &RunConfig, out: &Path) -> Result<()> {
    let problem = problem(cfg)?;
    let train = cfg.train_config()?;
    let wos = cfg.train_wos()?;
    let arch = Architecture::new(problem.input_dim(), cfg.network.width, cfg.network.depth)
        .map_err(|e| ConfigError(format!("[network] {e}")))?;
    prepare_dir(out)?;

    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut net = Network::new(arch, &mut rng);
    let report = match cfg.trainer {
        TrainerKind::Buffered => train_buffered(&problem, &mut net, &train, &wos, &mut rng)?,
        TrainerKind::Vanilla => train_vanilla(&problem, &mut net, &train, &wos, &mut rng)?,
    };
    let final_rel_l2 = match problem.solution {
        Some(_) if cfg.eval_points > 0 => Some(relative_l2_error(&net, &problem, cfg.eval_points, &mut rng)?),
        _ => None,
    };
    let wall_seconds = started.elapsed().as_secs_f64();

    let mut csv = BufWriter::new(File::create(out.join(CONVERGENCE_CSV))?);
    report.log.write_csv(&mut csv)?;
    csv.flush()?;
    save_checkpoint(&out.join(CHECKPOINT), &net, cfg.seed, report.iterations as u64, Some(&problem.name))?;
    let summary = Summary {
        problem: &problem.name,
        final_rel_l2,
        mean_wos_steps: report.mean_wos_steps,
        wall_seconds,
        iterations: report.iterations,
        seed: cfg.seed,
        config_hash: cfg.hash(),
    };
    write_json(&out.join(SUMMARY_JSON), &summary)?;
    println!("{}", serde_json::to_string(&summary)?);
    Ok(())
}

/// Reads rows of comma-separated numbers, skipping `#` comments. The first
/// other line is taken as a header when it does not parse.
pub fn read_points(path: &Path, width: usize) -> Result<Array2<f64>> {
    let text = fs::read_to_string(path).with_context(|| format!("cannot read points file {}", path.display()))?;
    let mut values = Vec::new();
    let mut rows = 0;
    let mut first = true;
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let parsed: std::result::Result<Vec<f64>, _> = line.split(',').map(|v| v.trim().parse::<f64>()).collect();
        let header_allowed = std::mem::replace(&mut first, false);
        match parsed {
            Ok(row) if row.len() == width => {
                values.extend(row);
                rows += 1;
            }
            Ok(row) => {
                return config_error(format!(
                    "{}:{}: expected {width} columns, found {}",
                    path.display(),
                    lineno + 1,
                    row.len()
                ))
            }
            Err(_) if header_allowed => continue,
            Err(e) => return config_error(format!("{}:{}: {e}", path.display(), lineno + 1)),
        }
    }
    Ok(Array2::from_shape_vec((rows, width), values)?)
}

pub fn run_estimate(cfg: &RunConfig, out: &Path) -> Result<()> {
    let problem = problem(cfg)?;
    let wos = cfg.estimate_wos()?;
    let Some(points_path) = cfg.points.as_deref() else {
        return config_error("missing field `points`: pass --points FILE or set `points` in the config file");
    };
    let inputs = read_points(points_path, problem.input_dim())?;
    prepare_dir(out)?;
    let d = problem.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let params = (problem.param_dim() > 0).then(|| inputs.slice(s![.., d..]));
    let estimates = wos_pointwise(&problem, inputs.slice(s![.., ..d]), params, &wos, &mut rng)?;

    let path = out.join(ESTIMATES_CSV);
    let mut w = BufWriter::new(File::create(&path)?);
    let mut header: Vec<String> = (0..d).map(|i| format!("x{i}")).collect();
    header.extend((0..problem.param_dim()).map(|i| format!("c{i}")));
    header.extend(["estimate", "stderr", "mean_steps"].map(String::from));
    writeln!(w, "{}", header.join(","))?;
    for (row, e) in inputs.rows().into_iter().zip(&estimates) {
        let mut fields: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        fields.extend([e.mean.to_string(), e.std_err.to_string(), e.mean_steps.to_string()]);
        writeln!(w, "{}", fields.join(","))?;
    }
    w.flush()?;
    println!("wrote {} estimates to {}", estimates.len(), path.display());
    Ok(())
}

fn checkpoint_path(cfg: &RunConfig) -> Result<PathBuf> {
    match &cfg.checkpoint {
        Some(p) => Ok(p.clone()),
        None => config_error("missing field `checkpoint`: pass --checkpoint FILE"),
    }
}

#[derive(Serialize)]
struct EvalReport<'a> {
    problem: &'a str,
    rel_l2: f64,
    n_eval: usize,
    seed: u64,
}

pub fn run_eval(cfg: &RunConfig, out: &Path) -> Result<()> {
    let (header, net) = load_checkpoint(&checkpoint_path(cfg)?)?;
    let mut cfg = cfg.clone();
    if cfg.problem.is_none() {
        cfg.problem = header.problem.clone();
    }
    let problem = problem(&cfg)?;
    if net.input_dim() != problem.input_dim() {
        anyhow::bail!(
            "checkpoint expects {} inputs but problem {} has {}",
            net.input_dim(),
            problem.name,
            problem.input_dim()
        );
    }
    prepare_dir(out)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let rel_l2 = relative_l2_error(&net, &problem, cfg.eval_points, &mut rng)?;
    let report = EvalReport { problem: &problem.name, rel_l2, n_eval: cfg.eval_points, seed: cfg.seed };
    write_json(&out.join(EVAL_JSON), &report)?;
    println!("rel_l2 = {rel_l2}");
    Ok(())
}

#[derive(Serialize)]
struct ControlReport {
    control: [f64; 3],
    optimum: [f64; 3],
    relative_error: f64,
    objective: f64,
    iterations: usize,
    alpha: f64,
    surrogate: &'static str,
}

pub fn run_optimize_control(cfg: &RunConfig, out: &Path) -> Result<()> {
    let alpha = cfg.control.alpha;
    if !(alpha >= 0.0) || cfg.control.grid == 0 {
        return config_error("[control] alpha must be non-negative and grid at least 1");
    }
    let mut opts = ControlOptions {
        alpha,
        grid: cfg.control.grid,
        max_iterations: cfg.control.max_iterations,
        ..Default::default()
    };
    let result = if cfg.control.analytic {
        let pi = std::f64::consts::PI;
        opts.initial = [opts.initial[0], pi, pi];
        opts.free = [true, false, false];
        optimize_control(&AnalyticSlice, &opts)?
    } else {
        let (_, net) = load_checkpoint(&checkpoint_path(cfg)?)?;
        if net.input_dim() != 5 {
            anyhow::bail!("control surrogate must take (x0, x1, c1, c2, c3); checkpoint has {} inputs", net.input_dim());
        }
        optimize_control(&net, &opts)?
    };
    prepare_dir(out)?;
    let optimum = optimal_control(alpha);
    let num: f64 = result.control.iter().zip(&optimum).map(|(a, b)| (a - b).powi(2)).sum();
    let den: f64 = optimum.iter().map(|b| b * b).sum();
    let report = ControlReport {
        control: result.control,
        optimum,
        relative_error: (num / den).sqrt(),
        objective: result.objective,
        iterations: result.iterations,
        alpha,
        surrogate: if cfg.control.analytic { "analytic" } else { "network" },
    };
    write_json(&out.join(CONTROL_JSON), &report)?;
    println!("{}", serde_json::to_string(&report)?);
    Ok(())
}
