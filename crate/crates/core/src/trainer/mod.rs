//! Regression of a network onto Walk-on-Spheres targets.
//!
//! [`train_vanilla`] walks fresh interior points to the boundary every
//! iteration. [`train_buffered`] caches targets in a [`ReplayBuffer`], walks
//! only every `update_interval` iterations (truncating after `K` jumps and
//! scoring with a frozen copy of the network), and adds a penalty on fresh
//! boundary points.

mod buffer;

pub use buffer::ReplayBuffer;

use std::io::Write;
use std::time::Instant;

use ndarray::{concatenate, s, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::benchmarks::Problem;
use crate::error::{Error, Result};
use crate::network::{Adam, Network};
use crate::walker::{walk, WoSConfig};

/// Rows evaluated per forward pass when measuring errors.
const EVAL_CHUNK: usize = 1 << 14;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClockMode {
    /// Log elapsed wall-clock seconds and honour the time budget.
    #[default]
    Wall,
    /// Log zero seconds. Runs are then reproducible byte for byte.
    Off,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Upper bound on gradient steps `T`.
    pub iterations: usize,
    /// Interior points per step `m_d`.
    pub domain_batch: usize,
    /// Boundary points per step `m_b`; defaults to a tenth of the total batch.
    pub boundary_batch: Option<usize>,
    /// Penalty `β` on the boundary loss.
    pub boundary_weight: f64,
    /// Buffer capacity `B`; defaults to `10 · m_d`.
    pub buffer_size: Option<usize>,
    /// Gradient steps `L` between buffer updates.
    pub update_interval: usize,
    /// Share of `m_d` re-walked from older buffer entries at each update.
    pub refine_fraction: f64,
    pub learning_rate: f64,
    /// Factor applied to the learning rate over the full run.
    pub lr_decay: f64,
    /// Seed of record. Randomness comes from the RNG handed to the trainer.
    #[serde(skip)]
    pub seed: u64,
    pub budget_seconds: Option<f64>,
    pub clock: ClockMode,
    /// Steps between convergence log rows.
    pub log_every: usize,
    /// Held-out points for the logged error (0 disables it).
    pub eval_points: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            iterations: 10_000,
            domain_batch: 512,
            boundary_batch: None,
            boundary_weight: 1.0,
            buffer_size: None,
            update_interval: 100,
            refine_fraction: 0.5,
            learning_rate: 1e-3,
            lr_decay: 1e-2,
            seed: 0,
            budget_seconds: None,
            clock: ClockMode::Wall,
            log_every: 100,
            eval_points: 10_000,
        }
    }
}

impl TrainConfig {
    pub fn boundary_batch(&self) -> usize {
        self.boundary_batch.unwrap_or_else(|| self.domain_batch.div_ceil(9))
    }

    pub fn buffer_size(&self) -> usize {
        self.buffer_size.unwrap_or(10 * self.domain_batch)
    }

    /// Buffer entries re-walked per update.
    pub fn refine_count(&self) -> usize {
        let want = (self.refine_fraction * self.domain_batch as f64).round() as usize;
        want.min(self.buffer_size().saturating_sub(self.domain_batch))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if self.domain_batch == 0 {
            return bad("domain_batch must be at least 1");
        }
        if self.buffer_size() < self.domain_batch {
            return bad("buffer_size must be at least domain_batch");
        }
        if self.update_interval == 0 {
            return bad("update_interval must be at least 1");
        }
        if !(self.boundary_weight >= 0.0) || !self.boundary_weight.is_finite() {
            return bad("boundary_weight must be non-negative");
        }
        if !(0.0..=1.0).contains(&self.refine_fraction) {
            return bad("refine_fraction must lie in [0, 1]");
        }
        if !(self.learning_rate > 0.0) || !(self.lr_decay > 0.0) {
            return bad("learning_rate and lr_decay must be positive");
        }
        if self.log_every == 0 {
            return bad("log_every must be at least 1");
        }
        match (self.budget_seconds, self.clock) {
            (Some(b), _) if !(b > 0.0) => bad("budget_seconds must be positive"),
            (Some(_), ClockMode::Off) => bad("a time budget needs clock = \"wall\""),
            _ => Ok(()),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LogRow {
    pub iteration: usize,
    pub seconds: f64,
    pub loss: f64,
    /// `None` when the problem has no reference solution or evaluation is off.
    pub rel_l2: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ConvergenceLog {
    pub rows: Vec<LogRow>,
}

impl ConvergenceLog {
    pub const HEADER: &'static str = "iteration,seconds,loss,rel_l2";

    pub fn last(&self) -> Option<&LogRow> {
        self.rows.last()
    }

    /// CSV with shortest round-trip number formatting.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "{}", Self::HEADER)?;
        for r in &self.rows {
            match r.rel_l2 {
                Some(e) => writeln!(w, "{},{},{},{}", r.iteration, r.seconds, r.loss, e)?,
                None => writeln!(w, "{},{},{},", r.iteration, r.seconds, r.loss)?,
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainReport {
    pub log: ConvergenceLog,
    pub iterations: usize,
    /// Mean jumps per trajectory over every walk of the run.
    pub mean_wos_steps: f64,
    pub stopped_by_budget: bool,
}

/// `√(Σ(v − u)² / Σu²)` over `n_eval` uniform interior inputs.
pub fn relative_l2_error<R: Rng + ?Sized>(net: &Network, problem: &Problem, n_eval: usize, rng: &mut R) -> Result<f64> {
    if problem.solution.is_none() {
        return Err(Error::MissingSolution(problem.name.clone()));
    }
    let mut sums = (0.0, 0.0);
    let mut done = 0;
    while done < n_eval {
        let m = (n_eval - done).min(EVAL_CHUNK);
        let x = problem.sample_interior_inputs(rng, m)?;
        let part = error_sums(net, problem, x.view())?;
        sums.0 += part.0;
        sums.1 += part.1;
        done += m;
    }
    Ok((sums.0 / sums.1).sqrt())
}

/// `(Σ(v − u)², Σu²)` at the given inputs.
pub fn error_sums(net: &Network, problem: &Problem, inputs: ArrayView2<f64>) -> Result<(f64, f64)> {
    let mut num = 0.0;
    let mut den = 0.0;
    for start in (0..inputs.nrows()).step_by(EVAL_CHUNK) {
        let chunk = inputs.slice(s![start..(start + EVAL_CHUNK).min(inputs.nrows()), ..]);
        let v = net.forward(chunk)?;
        let u = problem.solution_values(chunk)?;
        for (a, b) in v.iter().zip(&u) {
            num += (a - b) * (a - b);
            den += b * b;
        }
    }
    Ok((num, den))
}

struct Session<'a> {
    problem: &'a Problem,
    cfg: &'a TrainConfig,
    started: Instant,
    eval_set: Option<ndarray::Array2<f64>>,
    log: ConvergenceLog,
    walked_steps: usize,
    walked_trajectories: usize,
}

impl<'a> Session<'a> {
    fn new<R: Rng + ?Sized>(problem: &'a Problem, net: &Network, cfg: &'a TrainConfig, rng: &mut R) -> Result<Self> {
        cfg.validate()?;
        if net.input_dim() != problem.input_dim() {
            return Err(Error::DimensionMismatch { expected: problem.input_dim(), found: net.input_dim() });
        }
        let eval_set = if problem.solution.is_some() && cfg.eval_points > 0 {
            Some(problem.sample_interior_inputs(rng, cfg.eval_points)?)
        } else {
            None
        };
        Ok(Self {
            problem,
            cfg,
            started: Instant::now(),
            eval_set,
            log: ConvergenceLog::default(),
            walked_steps: 0,
            walked_trajectories: 0,
        })
    }

    fn seconds(&self) -> f64 {
        match self.cfg.clock {
            ClockMode::Wall => self.started.elapsed().as_secs_f64(),
            ClockMode::Off => 0.0,
        }
    }

    fn out_of_time(&self) -> bool {
        self.cfg.budget_seconds.is_some_and(|b| self.started.elapsed().as_secs_f64() >= b)
    }

    fn record(&mut self, net: &Network, iteration: usize, loss: f64) -> Result<()> {
        let rel_l2 = match &self.eval_set {
            Some(x) => {
                let (num, den) = error_sums(net, self.problem, x.view())?;
                Some((num / den).sqrt())
            }
            None => None,
        };
        let seconds = self.seconds();
        self.log.rows.push(LogRow { iteration, seconds, loss, rel_l2 });
        Ok(())
    }

    fn count_walks(&mut self, steps: &[usize]) {
        self.walked_steps += steps.iter().sum::<usize>();
        self.walked_trajectories += steps.len();
    }

    fn finish(self, iterations: usize, stopped_by_budget: bool) -> TrainReport {
        let mean_wos_steps =
            if self.walked_trajectories == 0 { 0.0 } else { self.walked_steps as f64 / self.walked_trajectories as f64 };
        TrainReport { log: self.log, iterations, mean_wos_steps, stopped_by_budget }
    }
}

fn check_loss(loss: f64, iteration: usize) -> Result<()> {
    if loss.is_finite() && loss >= 0.0 {
        Ok(())
    } else {
        Err(Error::NonFinite(format!("training loss at iteration {iteration}")))
    }
}

/// Plain regression: every step walks `m_d` fresh points all the way to the
/// boundary (no step limit, no model, no variate) and takes one Adam step on
/// the mean squared error.
pub fn train_vanilla<R: Rng + ?Sized>(
    problem: &Problem,
    net: &mut Network,
    cfg: &TrainConfig,
    wos: &WoSConfig,
    rng: &mut R,
) -> Result<TrainReport> {
    let mut session = Session::new(problem, net, cfg, rng)?;
    let wos = WoSConfig { max_steps: None, use_control_variate: false, ..wos.clone() };
    let mut adam = Adam::new(net.params().len(), cfg.learning_rate, cfg.lr_decay, cfg.iterations as u64);
    let d = problem.dim();
    let mut last_loss = f64::NAN;
    let mut t = 0;
    let mut stopped = false;
    while t < cfg.iterations {
        if session.out_of_time() {
            stopped = true;
            break;
        }
        let x = problem.sample_interior_inputs(rng, cfg.domain_batch)?;
        let res = walk(problem, x.slice(s![.., ..d]), Some(x.slice(s![.., d..])), &wos, None, rng)?;
        session.count_walks(&res.steps);
        let (loss, grads) = net.loss_and_param_grads(x.view(), &res.targets())?;
        check_loss(loss, t)?;
        adam.step(net.params_mut(), &grads);
        last_loss = loss;
        t += 1;
        if t % cfg.log_every == 0 {
            session.record(net, t, loss)?;
        }
    }
    if session.log.last().is_none_or(|r| r.iteration != t) {
        session.record(net, t, last_loss)?;
    }
    Ok(session.finish(t, stopped))
}

/// Buffered regression with boundary penalty, step-limited walks scored by a
/// frozen network snapshot, and optional control variates.
pub fn train_buffered<R: Rng + ?Sized>(
    problem: &Problem,
    net: &mut Network,
    cfg: &TrainConfig,
    wos: &WoSConfig,
    rng: &mut R,
) -> Result<TrainReport> {
    let mut session = Session::new(problem, net, cfg, rng)?;
    wos.validate()?;
    let d = problem.dim();
    let m_d = cfg.domain_batch;
    let m_b = cfg.boundary_batch();
    let n_refine = cfg.refine_count();

    let init = problem.sample_boundary_inputs(rng, cfg.buffer_size());
    let values = problem.boundary_values(init.view());
    let mut buffer = ReplayBuffer::from_exact(init, values)?;

    let mut adam = Adam::new(net.params().len(), cfg.learning_rate, cfg.lr_decay, cfg.iterations as u64);
    let mut weights = vec![1.0 / m_d as f64; m_d];
    weights.extend(std::iter::repeat_n(cfg.boundary_weight / m_b.max(1) as f64, m_b));

    let mut last_loss = f64::NAN;
    let mut t = 0;
    let mut stopped = false;
    while t < cfg.iterations {
        if session.out_of_time() {
            stopped = true;
            break;
        }
        if t % cfg.update_interval == 0 {
            let snapshot = net.clone();
            let fresh = problem.sample_interior_inputs(rng, m_d)?;
            let refine = buffer.refinement_candidates(rng, n_refine, m_d);
            let starts = concatenate![Axis(0), fresh, buffer.inputs().select(Axis(0), &refine)];
            let res = walk(problem, starts.slice(s![.., ..d]), Some(starts.slice(s![.., d..])), wos, Some(&snapshot), rng)?;
            session.count_walks(&res.steps);
            let means = res.targets();
            for (k, &i) in refine.iter().enumerate() {
                buffer.merge(i, means[m_d + k], wos.n_traj)?;
            }
            buffer.replace_oldest(fresh.view(), &means[..m_d], wos.n_traj)?;
        }
        let (xb, yb) = buffer.sample(rng, m_d);
        let bnd = problem.sample_boundary_inputs(rng, m_b);
        let gb = problem.boundary_values(bnd.view());
        let x = concatenate![Axis(0), xb, bnd];
        let mut y = yb;
        y.extend(gb);
        let (loss, grads) = net.weighted_loss_and_grads(x.view(), &y, &weights)?;
        check_loss(loss, t)?;
        adam.step(net.params_mut(), &grads);
        last_loss = loss;
        t += 1;
        if t % cfg.log_every == 0 {
            session.record(net, t, loss)?;
        }
    }
    if session.log.last().is_none_or(|r| r.iteration != t) {
        session.record(net, t, last_loss)?;
    }
    Ok(session.finish(t, stopped))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::benchmarks::{laplace, poisson};
    use crate::geometry::HyperRectangle;
    use crate::network::Architecture;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn error_of_exact_zero_and_scaled_models() {
        // A single affine layer represents u = 2 x0 + 3 x1 - 1 exactly.
        let p = Problem::custom_box("affine", vec![0.0; 2], vec![1.0; 2], None, "2*x0 + 3*x1 - 1", Some("2*x0 + 3*x1 - 1"))
            .unwrap();
        let mut net = Network::zeros(Architecture::new(2, 0, 1).unwrap());
        assert_eq!(relative_l2_error(&net, &p, 1000, &mut rng(0)).unwrap(), 1.0);
        {
            let (mut w, mut b) = net.layer_mut(0);
            w[[0, 0]] = 2.0;
            w[[0, 1]] = 3.0;
            b[0] = -1.0;
        }
        assert!(relative_l2_error(&net, &p, 1000, &mut rng(0)).unwrap() < 1e-15);
        net.params_mut().iter_mut().for_each(|v| *v *= 1.01);
        assert!((relative_l2_error(&net, &p, 1000, &mut rng(0)).unwrap() - 0.01).abs() < 1e-12);
    }

    #[test]
    fn missing_solution_is_an_error() {
        let mut p = laplace(2).unwrap();
        p.solution = None;
        let net = Network::zeros(Architecture::new(2, 4, 2).unwrap());
        assert!(matches!(relative_l2_error(&net, &p, 10, &mut rng(0)), Err(Error::MissingSolution(_))));
    }

    #[test]
    fn config_defaults_and_validation() {
        let cfg = TrainConfig { domain_batch: 90, ..Default::default() };
        assert_eq!(cfg.boundary_batch(), 10);
        assert_eq!(cfg.buffer_size(), 900);
        assert_eq!(cfg.refine_count(), 45);
        assert!(TrainConfig { buffer_size: Some(10), ..cfg.clone() }.validate().is_err());
        assert!(TrainConfig { update_interval: 0, ..cfg.clone() }.validate().is_err());
        assert!(TrainConfig { boundary_weight: -1.0, ..cfg.clone() }.validate().is_err());
        assert!(TrainConfig { budget_seconds: Some(5.0), clock: ClockMode::Off, ..cfg.clone() }.validate().is_err());
        assert_eq!(TrainConfig { buffer_size: Some(100), ..cfg }.refine_count(), 10);
    }

    #[test]
    fn zero_iterations_leave_the_network_alone() {
        let p = laplace(2).unwrap();
        let mut net = Network::new(Architecture::new(2, 8, 3).unwrap(), &mut rng(1));
        let before = net.clone();
        let cfg = TrainConfig { iterations: 0, domain_batch: 16, eval_points: 100, ..Default::default() };
        let rep = train_vanilla(&p, &mut net, &cfg, &WoSConfig::default(), &mut rng(2)).unwrap();
        assert_eq!(net, before);
        assert_eq!(rep.iterations, 0);
        let rep = train_buffered(&p, &mut net, &cfg, &WoSConfig::default(), &mut rng(2)).unwrap();
        assert_eq!(net, before);
        assert_eq!(rep.log.rows.len(), 1);
    }

    #[test]
    fn constant_data_is_learned() {
        let c = -2.5;
        let p = Problem::constant(HyperRectangle::unit_cube(3).unwrap().into(), c);
        let mut net = Network::new(Architecture::new(3, 16, 2).unwrap(), &mut rng(3));
        let cfg = TrainConfig {
            iterations: 200,
            domain_batch: 64,
            learning_rate: 2e-2,
            lr_decay: 1.0,
            eval_points: 0,
            clock: ClockMode::Off,
            ..Default::default()
        };
        train_vanilla(&p, &mut net, &cfg, &WoSConfig::default(), &mut rng(4)).unwrap();
        let x = p.domain.sample_interior(&mut rng(5), 1000).unwrap();
        let v = net.forward(x.view()).unwrap();
        assert!(v.iter().all(|v| (v - c).abs() < c.abs() * 1e-2), "{:?}", v.iter().fold(0.0f64, |m, v| m.max((v - c).abs())));
    }

    #[test]
    fn logs_are_reproducible_without_a_clock() {
        let p = poisson(3).unwrap();
        let cfg = TrainConfig {
            iterations: 30,
            domain_batch: 32,
            update_interval: 10,
            log_every: 10,
            eval_points: 200,
            clock: ClockMode::Off,
            ..Default::default()
        };
        let wos = WoSConfig { max_steps: Some(5), n_traj: 4, use_control_variate: true, ..Default::default() };
        let run = || {
            let mut net = Network::new(Architecture::new(3, 8, 3).unwrap(), &mut rng(6));
            let rep = train_buffered(&p, &mut net, &cfg, &wos, &mut rng(7)).unwrap();
            let mut out = Vec::new();
            rep.log.write_csv(&mut out).unwrap();
            (String::from_utf8(out).unwrap(), net)
        };
        let (a, na) = run();
        let (b, nb) = run();
        assert_eq!(a, b);
        assert_eq!(na, nb);
        assert!(a.starts_with("iteration,seconds,loss,rel_l2\n10,0,"));
        assert_eq!(a.lines().count(), 4);
    }

    #[test]
    fn wall_clock_log_is_monotone() {
        let p = laplace(2).unwrap();
        let cfg = TrainConfig { iterations: 40, domain_batch: 32, log_every: 5, eval_points: 100, ..Default::default() };
        let mut net = Network::new(Architecture::new(2, 8, 3).unwrap(), &mut rng(8));
        let rep = train_buffered(&p, &mut net, &cfg, &WoSConfig { n_traj: 2, ..Default::default() }, &mut rng(9)).unwrap();
        assert_eq!(rep.log.rows.len(), 8);
        assert!(rep.log.rows.windows(2).all(|w| w[0].seconds <= w[1].seconds && w[0].iteration < w[1].iteration));
        assert!(rep.log.rows.iter().all(|r| r.loss.is_finite() && r.loss >= 0.0));
    }

    #[test]
    fn budget_stops_training() {
        let p = laplace(2).unwrap();
        let cfg = TrainConfig {
            iterations: usize::MAX / 2,
            domain_batch: 32,
            budget_seconds: Some(0.2),
            eval_points: 0,
            ..Default::default()
        };
        let mut net = Network::new(Architecture::new(2, 8, 3).unwrap(), &mut rng(8));
        let rep = train_vanilla(&p, &mut net, &cfg, &WoSConfig::default(), &mut rng(9)).unwrap();
        assert!(rep.stopped_by_budget);
        assert!(rep.iterations > 0);
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let p = laplace(3).unwrap();
        let mut net = Network::zeros(Architecture::new(2, 4, 2).unwrap());
        let err = train_buffered(&p, &mut net, &TrainConfig::default(), &WoSConfig::default(), &mut rng(0));
        assert!(matches!(err, Err(Error::DimensionMismatch { .. })));
    }
}
