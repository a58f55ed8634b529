//! Batched Walk-on-Spheres.
//!
//! Every start point spawns `n_traj` trajectories. A trajectory at `x` with
//! `r = dist(x, ∂Ω)` stops once `r < ε` and is scored with `g(project(x))`;
//! otherwise a point `γ ~ U(B_r(x))` adds `−f(γ)·G̃_r(‖γ − x‖)` to the running
//! source sum and the walk jumps to a uniform point of `∂B_r(x)`. With a step
//! limit `K`, trajectories still outside the ε-shell after `K` jumps are
//! scored with the terminal model instead of the boundary data.
//!
//! Trajectories are split into fixed-size shards. Shard `s` draws from
//! `ChaCha8Rng(seed).set_stream(s)` where `seed` is taken from the caller's
//! RNG, so results do not depend on the number of worker threads.

use ndarray::{concatenate, Array2, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::benchmarks::Problem;
use crate::error::{Error, Result};
use crate::geometry::{Region, CLOSURE_TOLERANCE};
use crate::network::Network;
use crate::stochastic::{ball_radius, green_tilde_unchecked, unit_direction_into};

/// Hard cap on the length of an untruncated walk.
pub const DIVERGENCE_CAP: usize = 100_000;

/// Trajectories per RNG stream.
pub const SHARD_SIZE: usize = 1024;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WoSConfig {
    /// Width of the stopping shell around `∂Ω`.
    pub epsilon: f64,
    /// Jump limit `K`; `None` walks until the shell is reached.
    pub max_steps: Option<usize>,
    /// Trajectories per start point.
    pub n_traj: usize,
    pub use_control_variate: bool,
    /// Ball draws averaged per jump for the source term.
    pub interior_draws_per_step: usize,
}

impl Default for WoSConfig {
    fn default() -> Self {
        Self { epsilon: 1e-4, max_steps: None, n_traj: 1, use_control_variate: false, interior_draws_per_step: 1 }
    }
}

impl WoSConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0) || !self.epsilon.is_finite() {
            return Err(Error::InvalidConfig(format!("epsilon must be positive, got {}", self.epsilon)));
        }
        if self.n_traj == 0 || self.interior_draws_per_step == 0 {
            return Err(Error::InvalidConfig("n_traj and interior_draws_per_step must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TerminalKind {
    Boundary,
    Truncated,
}

/// State of a shard of trajectories advancing in lockstep. Finished walks
/// are masked out, never moved.
#[derive(Clone, Debug)]
pub struct WalkBatch {
    dim: usize,
    pub positions: Vec<f64>,
    pub source_acc: Vec<f64>,
    pub active: Vec<bool>,
    pub steps_taken: Vec<usize>,
    pub terminal_kind: Vec<TerminalKind>,
    pub first_offsets: Vec<f64>,
    /// Index of the start point (row of the start/parameter arrays) per trajectory.
    pub start_index: Vec<usize>,
}

impl WalkBatch {
    fn new(starts: &ArrayView2<f64>, n_traj: usize, range: std::ops::Range<usize>) -> Self {
        let dim = starts.ncols();
        let n = range.len();
        let mut positions = Vec::with_capacity(n * dim);
        let mut start_index = Vec::with_capacity(n);
        for t in range {
            let i = t / n_traj;
            start_index.push(i);
            positions.extend(starts.row(i).iter());
        }
        Self {
            dim,
            positions,
            source_acc: vec![0.0; n],
            active: vec![true; n],
            steps_taken: vec![0; n],
            terminal_kind: vec![TerminalKind::Boundary; n],
            first_offsets: vec![0.0; n * dim],
            start_index,
        }
    }

    pub fn len(&self) -> usize {
        self.active.len()
    }

    pub fn is_empty(&self) -> bool {
        self.active.is_empty()
    }

    fn run<R: Rng + ?Sized>(
        &mut self,
        problem: &Problem,
        params: &ArrayView2<f64>,
        cfg: &WoSConfig,
        rng: &mut R,
    ) -> Result<()> {
        let d = self.dim;
        let domain = &problem.domain;
        let limit = cfg.max_steps.unwrap_or(DIVERGENCE_CAP);
        let inv_draws = 1.0 / cfg.interior_draws_per_step as f64;
        let mut live: Vec<usize> = (0..self.len()).collect();
        let mut dir = vec![0.0; d];
        let mut gamma = vec![0.0; d];
        let mut step = 0usize;
        while !live.is_empty() {
            let mut keep = 0;
            for k in 0..live.len() {
                let j = live[k];
                let x = &mut self.positions[j * d..(j + 1) * d];
                let r = domain.distance(x);
                debug_assert!(r > -CLOSURE_TOLERANCE, "walk left the domain: dist = {r}");
                if r < cfg.epsilon {
                    self.active[j] = false;
                    self.terminal_kind[j] = TerminalKind::Boundary;
                    continue;
                }
                if step == limit {
                    if cfg.max_steps.is_none() {
                        return Err(Error::WalkDiverged { steps: step });
                    }
                    self.active[j] = false;
                    self.terminal_kind[j] = TerminalKind::Truncated;
                    continue;
                }
                if let Some(f) = &problem.source {
                    let c = params.row(self.start_index[j]);
                    let c = c.as_slice().expect("standard layout");
                    let mut acc = 0.0;
                    for _ in 0..cfg.interior_draws_per_step {
                        unit_direction_into(rng, &mut dir);
                        let rho = ball_radius(rng, r, d);
                        for ((gv, xv), dv) in gamma.iter_mut().zip(x.iter()).zip(&dir) {
                            *gv = xv + rho * dv;
                        }
                        acc += f(&gamma, c) * green_tilde_unchecked(r, rho, d);
                    }
                    self.source_acc[j] -= acc * inv_draws;
                }
                unit_direction_into(rng, &mut dir);
                for (xv, dv) in x.iter_mut().zip(&dir) {
                    *xv += r * dv;
                }
                if step == 0 {
                    for (o, dv) in self.first_offsets[j * d..(j + 1) * d].iter_mut().zip(&dir) {
                        *o = r * dv;
                    }
                }
                self.steps_taken[j] += 1;
                live[keep] = j;
                keep += 1;
            }
            live.truncate(keep);
            step += 1;
        }
        Ok(())
    }
}

/// Per-trajectory outcome of a batch of walks.
#[derive(Clone, Debug)]
pub struct WoSResult {
    pub n_starts: usize,
    pub n_traj: usize,
    /// One target per trajectory, grouped by start point.
    pub trajectory_targets: Vec<f64>,
    /// `ξ₁ − ξ₀` per trajectory (zero when the walk never jumped).
    pub first_step_offsets: Array2<f64>,
    /// Final position per trajectory (before projection).
    pub endpoints: Array2<f64>,
    pub truncated_mask: Vec<bool>,
    pub steps: Vec<usize>,
    pub mean_steps: f64,
}

/// Mean, standard error and mean walk length at one evaluation point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PointEstimate {
    pub mean: f64,
    pub std_err: f64,
    pub mean_steps: f64,
    pub n: usize,
}

impl WoSResult {
    fn group(&self, i: usize) -> &[f64] {
        &self.trajectory_targets[i * self.n_traj..(i + 1) * self.n_traj]
    }

    /// Regression target per start point: the mean over its trajectories.
    pub fn targets(&self) -> Vec<f64> {
        (0..self.n_starts).map(|i| self.group(i).iter().sum::<f64>() / self.n_traj as f64).collect()
    }

    /// Unbiased sample variance of the trajectory targets per start point.
    pub fn target_variances(&self) -> Vec<f64> {
        (0..self.n_starts)
            .map(|i| {
                let g = self.group(i);
                let n = g.len() as f64;
                let m = g.iter().sum::<f64>() / n;
                g.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1.0).max(1.0)
            })
            .collect()
    }

    pub fn estimates(&self) -> Vec<PointEstimate> {
        let vars = self.target_variances();
        (0..self.n_starts)
            .map(|i| {
                let n = self.n_traj;
                let steps = &self.steps[i * n..(i + 1) * n];
                PointEstimate {
                    mean: self.group(i).iter().sum::<f64>() / n as f64,
                    std_err: (vars[i] / n as f64).sqrt(),
                    mean_steps: steps.iter().sum::<usize>() as f64 / n as f64,
                    n,
                }
            })
            .collect()
    }
}

fn empty_params(n: usize) -> Array2<f64> {
    Array2::zeros((n, 0))
}

fn check_inputs(problem: &Problem, starts: &ArrayView2<f64>, params: &ArrayView2<f64>) -> Result<()> {
    if starts.ncols() != problem.dim() {
        return Err(Error::DimensionMismatch { expected: problem.dim(), found: starts.ncols() });
    }
    if params.ncols() != problem.param_dim() || params.nrows() != starts.nrows() {
        return Err(Error::DimensionMismatch { expected: problem.param_dim(), found: params.ncols() });
    }
    for row in starts.rows() {
        let x = row.as_slice().expect("standard layout");
        let excess = problem.domain.exterior_excess(x);
        if excess > CLOSURE_TOLERANCE || x.iter().any(|v| !v.is_finite()) {
            return Err(Error::OutsideDomain { excess });
        }
    }
    Ok(())
}

/// Runs `cfg.n_traj` walks from every row of `starts`.
///
/// `params` holds one parameter row per start for parametric problems and may
/// be `None` otherwise. `terminal_model` scores truncated walks (it sees the
/// spatial endpoint joined with the start's parameters) and provides the
/// control-variate gradient when `cfg.use_control_variate` is set. The model
/// is only evaluated, never differentiated with respect to its parameters.
pub fn walk<R: Rng + ?Sized>(
    problem: &Problem,
    starts: ArrayView2<f64>,
    params: Option<ArrayView2<f64>>,
    cfg: &WoSConfig,
    terminal_model: Option<&Network>,
    rng: &mut R,
) -> Result<WoSResult> {
    cfg.validate()?;
    let owned;
    let params = match params {
        Some(p) => p,
        None => {
            owned = empty_params(starts.nrows());
            owned.view()
        }
    };
    let starts = starts.as_standard_layout();
    let params = params.as_standard_layout();
    check_inputs(problem, &starts.view(), &params.view())?;
    if let Some(m) = terminal_model {
        if m.input_dim() != problem.input_dim() {
            return Err(Error::DimensionMismatch { expected: problem.input_dim(), found: m.input_dim() });
        }
    }
    if cfg.use_control_variate && terminal_model.is_none() {
        return Err(Error::InvalidConfig("control variates need a model for the gradient".into()));
    }

    let d = problem.dim();
    let n_starts = starts.nrows();
    let n_traj = cfg.n_traj;
    let total = n_starts * n_traj;
    let seed = rng.next_u64();
    let n_shards = total.div_ceil(SHARD_SIZE);
    let (sv, pv) = (starts.view(), params.view());

    let shards: Vec<WalkBatch> = (0..n_shards)
        .into_par_iter()
        .map(|s| {
            let mut shard_rng = ChaCha8Rng::seed_from_u64(seed);
            shard_rng.set_stream(s as u64);
            let mut batch = WalkBatch::new(&sv, n_traj, s * SHARD_SIZE..((s + 1) * SHARD_SIZE).min(total));
            batch.run(problem, &pv, cfg, &mut shard_rng)?;
            Ok(batch)
        })
        .collect::<Result<_>>()?;

    let mut targets = Vec::with_capacity(total);
    let mut offsets = Vec::with_capacity(total * d);
    let mut endpoints = Vec::with_capacity(total * d);
    let mut truncated = Vec::with_capacity(total);
    let mut steps = Vec::with_capacity(total);
    let mut proj = vec![0.0; d];
    for batch in &shards {
        for j in 0..batch.len() {
            let x = &batch.positions[j * d..(j + 1) * d];
            let i = batch.start_index[j];
            let is_trunc = batch.terminal_kind[j] == TerminalKind::Truncated;
            let y = if is_trunc {
                batch.source_acc[j]
            } else {
                problem.domain.project_into(x, &mut proj);
                let c = params.row(i);
                problem.boundary_at(&proj, c.as_slice().expect("standard layout")) + batch.source_acc[j]
            };
            targets.push(y);
            truncated.push(is_trunc);
            steps.push(batch.steps_taken[j]);
            endpoints.extend_from_slice(x);
            offsets.extend_from_slice(&batch.first_offsets[j * d..(j + 1) * d]);
        }
    }
    drop(shards);
    let endpoints = Array2::from_shape_vec((total, d), endpoints).expect("shape");
    let first_step_offsets = Array2::from_shape_vec((total, d), offsets).expect("shape");

    let trunc_idx: Vec<usize> = truncated.iter().enumerate().filter_map(|(t, &b)| b.then_some(t)).collect();
    if !trunc_idx.is_empty() {
        let model = terminal_model.ok_or(Error::MissingTerminalModel)?;
        let x = endpoints.select(Axis(0), &trunc_idx);
        let rows: Vec<usize> = trunc_idx.iter().map(|t| t / n_traj).collect();
        let c = params.select(Axis(0), &rows);
        let inputs = concatenate![Axis(1), x, c];
        let values = model.forward(inputs.view())?;
        for (&t, v) in trunc_idx.iter().zip(values.iter()) {
            targets[t] += v;
        }
    }

    if cfg.use_control_variate {
        let model = terminal_model.expect("checked above");
        let inputs = concatenate![Axis(1), starts.view(), params.view()];
        let grads = model.input_gradient(inputs.view())?;
        for (t, y) in targets.iter_mut().enumerate() {
            let g = grads.row(t / n_traj);
            let delta: f64 = first_step_offsets.row(t).iter().zip(g.iter()).map(|(o, gv)| o * gv).sum();
            *y -= delta;
        }
    }

    if let Some(bad) = targets.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("walk target {bad}")));
    }
    let mean_steps = if total == 0 { 0.0 } else { steps.iter().sum::<usize>() as f64 / total as f64 };
    Ok(WoSResult {
        n_starts,
        n_traj,
        trajectory_targets: targets,
        first_step_offsets,
        endpoints,
        truncated_mask: truncated,
        steps,
        mean_steps,
    })
}

/// [`walk`] with the first-jump control variate
/// `δⁿ = ∇v(x)·(ξ₁ⁿ − x)` subtracted from every trajectory target.
pub fn walk_with_control_variate<R: Rng + ?Sized>(
    problem: &Problem,
    starts: ArrayView2<f64>,
    params: Option<ArrayView2<f64>>,
    cfg: &WoSConfig,
    model: &Network,
    rng: &mut R,
) -> Result<WoSResult> {
    let cfg = WoSConfig { use_control_variate: true, ..cfg.clone() };
    walk(problem, starts, params, &cfg, Some(model), rng)
}

/// Trajectories walked per call when estimating a single point.
const POINTWISE_CHUNK: usize = 1 << 16;

/// Plain Monte Carlo estimate of `u` at each point: no model, no step limit.
pub fn wos_pointwise<R: Rng + ?Sized>(
    problem: &Problem,
    points: ArrayView2<f64>,
    params: Option<ArrayView2<f64>>,
    cfg: &WoSConfig,
    rng: &mut R,
) -> Result<Vec<PointEstimate>> {
    let base = WoSConfig { max_steps: None, use_control_variate: false, ..cfg.clone() };
    base.validate()?;
    let params = params.map(|p| p.to_owned()).unwrap_or_else(|| empty_params(points.nrows()));
    let mut out = Vec::with_capacity(points.nrows());
    for i in 0..points.nrows() {
        let x = points.slice(ndarray::s![i..i + 1, ..]);
        let c = params.slice(ndarray::s![i..i + 1, ..]);
        let (mut sum, mut sum2, mut steps) = (0.0, 0.0, 0usize);
        let mut done = 0;
        while done < cfg.n_traj {
            let chunk = (cfg.n_traj - done).min(POINTWISE_CHUNK);
            let res = walk(problem, x, Some(c), &WoSConfig { n_traj: chunk, ..base.clone() }, None, rng)?;
            for v in &res.trajectory_targets {
                sum += v;
                sum2 += v * v;
            }
            steps += res.steps.iter().sum::<usize>();
            done += chunk;
        }
        let n = done as f64;
        let mean = sum / n;
        let var = ((sum2 - n * mean * mean) / (n - 1.0).max(1.0)).max(0.0);
        out.push(PointEstimate { mean, std_err: (var / n).sqrt(), mean_steps: steps as f64 / n, n: done });
    }
    Ok(out)
}
