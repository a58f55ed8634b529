//! Parametric Poisson family on the unit square and the reduced optimal
//! control problem built on it.
//!
//! For `c ∈ D = [0.5, 1] × [2.5, 3.5]²` the state solves `−Δu = m_c` with
//! `m_c(x) = c₁ sin(c₂x₀) sin(c₃x₁)` and `u = 0` on the boundary. The control
//! objective is
//! `J(c) = ½∫(u_c − u_d)² + (α/2)∫m_c²` with `u_d = sin(πx₀) sin(πx₁)/(2π²)`,
//! minimised at `c* = (1/(1 + 4απ⁴), π, π)`.

use std::f64::consts::PI;
use std::sync::Arc;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;

use super::{ParamBox, Problem};
use crate::error::{Error, Result};
use crate::geometry::HyperRectangle;
use crate::network::Network;
use crate::trainer::{train_buffered, TrainConfig, TrainReport};
use crate::walker::WoSConfig;

pub const CONTROL_LOWER: [f64; 3] = [0.5, 2.5, 2.5];
pub const CONTROL_UPPER: [f64; 3] = [1.0, 3.5, 3.5];

/// Sine modes kept in the reference solution.
const SERIES_TERMS: usize = 200;

pub fn control_box() -> ParamBox {
    ParamBox::new(CONTROL_LOWER.to_vec(), CONTROL_UPPER.to_vec()).expect("valid box")
}

pub fn control_source(x: &[f64], c: &[f64]) -> f64 {
    c[0] * (c[1] * x[0]).sin() * (c[2] * x[1]).sin()
}

pub fn target_state(x: &[f64]) -> f64 {
    (PI * x[0]).sin() * (PI * x[1]).sin() / (2.0 * PI * PI)
}

pub fn optimal_control(alpha: f64) -> [f64; 3] {
    [1.0 / (1.0 + 4.0 * alpha * PI.powi(4)), PI, PI]
}

fn sinc(t: f64) -> f64 {
    if t.abs() < 1e-8 {
        1.0 - t * t / 6.0
    } else {
        t.sin() / t
    }
}

/// `sinh(a·x)/sinh(a)` for `a > 0`, `x ∈ [0, 1]`, without overflow.
fn sinh_ratio(a: f64, x: f64) -> f64 {
    (a * (x - 1.0)).exp() * (-(-2.0 * a * x).exp_m1()) / (-(-2.0 * a).exp_m1())
}

/// Reference solution of `−Δu = m_c`, `u|∂Ω = 0` on the unit square.
///
/// `sin(c₃x₁)` is expanded in the sine basis `sin(lπx₁)`; each mode then has a
/// closed-form solution in `x₀`.
pub fn reference_solution(x: &[f64], c: &[f64]) -> f64 {
    let (c1, c2, c3) = (c[0], c[1], c[2]);
    let s2 = (c2 * x[0]).sin();
    let s2_end = c2.sin();
    let mut u = 0.0;
    for l in 1..=SERIES_TERMS {
        let lpi = l as f64 * PI;
        // 2∫₀¹ sin(c₃y) sin(lπy) dy
        let b = sinc(c3 - lpi) - sinc(c3 + lpi);
        let mode = (s2 - s2_end * sinh_ratio(lpi, x[0])) / (c2 * c2 + lpi * lpi);
        u += b * mode * (lpi * x[1]).sin();
    }
    c1 * u
}

/// The parametric family as a [`Problem`] over inputs `(x₀, x₁, c₁, c₂, c₃)`.
pub fn parametric_problem() -> Problem {
    Problem {
        name: "control".to_string(),
        domain: HyperRectangle::unit_cube(2).expect("valid square").into(),
        source: Some(Arc::new(|x: &[f64], c: &[f64]| -control_source(x, c))),
        boundary: Arc::new(|_, _| 0.0),
        solution: Some(Arc::new(reference_solution)),
        params: Some(control_box()),
    }
}

/// Buffered training over the whole family: every walk start carries its own
/// `c ~ U(D)`, held fixed along the trajectory.
pub fn train_parametric<R: Rng + ?Sized>(
    net: &mut Network,
    cfg: &TrainConfig,
    wos: &WoSConfig,
    rng: &mut R,
) -> Result<TrainReport> {
    train_buffered(&parametric_problem(), net, cfg, wos, rng)
}

/// A map `c ↦ u_c` that can be differentiated in `c`.
pub trait ControlSurrogate {
    /// Values `u_c(x)` at every row of `points` and `∂u_c/∂c` (one row per point).
    fn state_and_gradient(&self, points: ArrayView2<f64>, c: &[f64]) -> Result<(Array1<f64>, Array2<f64>)>;
}

impl ControlSurrogate for Network {
    fn state_and_gradient(&self, points: ArrayView2<f64>, c: &[f64]) -> Result<(Array1<f64>, Array2<f64>)> {
        let n = points.nrows();
        let d = points.ncols();
        let mut inputs = Array2::zeros((n, d + c.len()));
        inputs.slice_mut(ndarray::s![.., ..d]).assign(&points);
        for mut row in inputs.rows_mut() {
            row.slice_mut(ndarray::s![d..]).assign(&ndarray::aview1(c));
        }
        let (v, g) = self.value_and_input_gradient(inputs.view())?;
        Ok((v, g.slice(ndarray::s![.., d..]).to_owned()))
    }
}

/// Closed-form state on the slice `c₂ = c₃ = π`:
/// `u = c₁ sin(πx₀) sin(πx₁)/(2π²)`. Only `∂/∂c₁` is meaningful.
#[derive(Clone, Copy, Debug, Default)]
pub struct AnalyticSlice;

impl ControlSurrogate for AnalyticSlice {
    fn state_and_gradient(&self, points: ArrayView2<f64>, c: &[f64]) -> Result<(Array1<f64>, Array2<f64>)> {
        let n = points.nrows();
        let mut g = Array2::zeros((n, 3));
        let mut v = Array1::zeros(n);
        for (i, p) in points.rows().into_iter().enumerate() {
            let s = target_state(&[p[0], p[1]]);
            v[i] = c[0] * s;
            g[[i, 0]] = s;
        }
        Ok((v, g))
    }
}

/// Midpoint nodes of an `n × n` grid on the unit square.
pub fn midpoint_grid(n: usize) -> Array2<f64> {
    let h = 1.0 / n as f64;
    Array2::from_shape_fn((n * n, 2), |(k, j)| {
        let idx = if j == 0 { k / n } else { k % n };
        (idx as f64 + 0.5) * h
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct ControlOptions {
    pub alpha: f64,
    pub grid: usize,
    pub initial: [f64; 3],
    /// Coordinates of `c` the optimizer may move.
    pub free: [bool; 3],
    pub max_iterations: usize,
    pub tolerance: f64,
}

impl Default for ControlOptions {
    fn default() -> Self {
        Self {
            alpha: 1e-3,
            grid: 64,
            initial: [0.75, 3.0, 3.0],
            free: [true; 3],
            max_iterations: 2000,
            tolerance: 1e-10,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ControlResult {
    pub control: [f64; 3],
    pub objective: f64,
    pub iterations: usize,
}

/// Quadrature of the reduced objective and its gradient in `c`.
pub fn control_objective<S: ControlSurrogate + ?Sized>(
    surrogate: &S,
    grid: ArrayView2<f64>,
    c: &[f64; 3],
    alpha: f64,
) -> Result<(f64, [f64; 3])> {
    let w = 1.0 / grid.nrows() as f64;
    let (u, du) = surrogate.state_and_gradient(grid, c)?;
    let mut j = 0.0;
    let mut grad = [0.0; 3];
    for (k, p) in grid.axis_iter(Axis(0)).enumerate() {
        let (x, y) = (p[0], p[1]);
        let (sx, sy) = ((c[1] * x).sin(), (c[2] * y).sin());
        let m = c[0] * sx * sy;
        let dm = [sx * sy, c[0] * x * (c[1] * x).cos() * sy, c[0] * sx * y * (c[2] * y).cos()];
        let r = u[k] - target_state(&[x, y]);
        j += 0.5 * w * (r * r + alpha * m * m);
        for a in 0..3 {
            grad[a] += w * (r * du[[k, a]] + alpha * m * dm[a]);
        }
    }
    if !j.is_finite() || grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::NonFinite(format!("control objective at c = {c:?}")));
    }
    Ok((j, grad))
}

/// Projected gradient descent with Armijo backtracking over `D`.
pub fn optimize_control<S: ControlSurrogate + ?Sized>(surrogate: &S, opts: &ControlOptions) -> Result<ControlResult> {
    let grid = midpoint_grid(opts.grid);
    let bounds = control_box();
    let mut c = opts.initial;
    bounds.clamp(&mut c);
    let (mut j, mut g) = control_objective(surrogate, grid.view(), &c, opts.alpha)?;
    let mut t = 1.0;
    let mut iterations = 0;
    while iterations < opts.max_iterations {
        iterations += 1;
        let mut moved = false;
        for _ in 0..60 {
            let mut trial = c;
            for a in 0..3 {
                if opts.free[a] {
                    trial[a] -= t * g[a];
                }
            }
            bounds.clamp(&mut trial);
            let decrease: f64 = (0..3).map(|a| g[a] * (c[a] - trial[a])).sum();
            let (jt, gt) = control_objective(surrogate, grid.view(), &trial, opts.alpha)?;
            if jt <= j - 1e-4 * decrease {
                let step: f64 = (0..3).map(|a| (trial[a] - c[a]).powi(2)).sum::<f64>().sqrt();
                c = trial;
                j = jt;
                g = gt;
                t *= 2.0;
                moved = step > opts.tolerance;
                break;
            }
            t *= 0.5;
        }
        if !moved {
            break;
        }
    }
    Ok(ControlResult { control: c, objective: j, iterations })
}
