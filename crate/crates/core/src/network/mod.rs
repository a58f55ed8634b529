//! Residual feedforward network `v_θ : R^n → R` with exact GELU activations
//! and hand-written reverse mode for parameter and input gradients.
//!
//! Wiring for `depth ≥ 2`: an affine lift to `width`, then `depth − 2`
//! residual blocks `h ← h + gelu(W h + b)`, then an affine head to a scalar.
//! `depth = 1` is a single affine map.

mod adam;
mod checkpoint;

pub use adam::Adam;
pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, CheckpointHeader};

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use ndarray::linalg::general_mat_mul;
use ndarray::{Array1, Array2, ArrayView1, ArrayView2, ArrayViewMut1, ArrayViewMut2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub input_dim: usize,
    pub width: usize,
    pub depth: usize,
}

impl Architecture {
    pub fn new(input_dim: usize, width: usize, depth: usize) -> Result<Self> {
        if input_dim == 0 || depth == 0 || (depth > 1 && width == 0) {
            return Err(Error::InvalidConfig(format!(
                "network needs positive input_dim, depth and width (got {input_dim}, {depth}, {width})"
            )));
        }
        Ok(Self { input_dim, width, depth })
    }

    /// `(n+1)W + (L−2)(W²+W) + W + 1` for `L ≥ 2`, `n + 1` for `L = 1`.
    pub fn param_count(&self) -> usize {
        let (n, w, l) = (self.input_dim, self.width, self.depth);
        if l == 1 {
            n + 1
        } else {
            (n + 1) * w + (l - 2) * (w * w + w) + w + 1
        }
    }

    /// `(rows, cols)` of each dense layer's weight matrix, input to output.
    fn layer_shapes(&self) -> Vec<(usize, usize)> {
        if self.depth == 1 {
            return vec![(1, self.input_dim)];
        }
        let mut shapes = vec![(self.width, self.input_dim)];
        shapes.extend(std::iter::repeat((self.width, self.width)).take(self.depth - 2));
        shapes.push((1, self.width));
        shapes
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct Slot {
    rows: usize,
    cols: usize,
    weight: usize,
    bias: usize,
}

impl Slot {
    fn weight<'a>(&self, p: &'a [f64]) -> ArrayView2<'a, f64> {
        ArrayView2::from_shape((self.rows, self.cols), &p[self.weight..self.weight + self.rows * self.cols]).expect("layout")
    }

    fn bias<'a>(&self, p: &'a [f64]) -> ArrayView1<'a, f64> {
        ArrayView1::from(&p[self.bias..self.bias + self.rows])
    }

    fn split_mut<'a>(&self, p: &'a mut [f64]) -> (ArrayViewMut2<'a, f64>, ArrayViewMut1<'a, f64>) {
        let (w, rest) = p[self.weight..].split_at_mut(self.rows * self.cols);
        (
            ArrayViewMut2::from_shape((self.rows, self.cols), w).expect("layout"),
            ArrayViewMut1::from(&mut rest[..self.rows]),
        )
    }
}

/// Parameters of the residual network, stored as one flat vector.
#[derive(Clone, Debug, PartialEq)]
pub struct Network {
    arch: Architecture,
    slots: Vec<Slot>,
    params: Vec<f64>,
}

/// Activations kept from a forward pass for reverse mode.
struct Tape {
    /// Input of every hidden block plus the final hidden state.
    hidden: Vec<Array2<f64>>,
    /// Pre-activations of every hidden block.
    pre: Vec<Array2<f64>>,
    output: Array1<f64>,
}

#[inline]
pub fn gelu(z: f64) -> f64 {
    0.5 * z * (1.0 + libm::erf(z * FRAC_1_SQRT_2))
}

#[inline]
pub fn gelu_derivative(z: f64) -> f64 {
    let cdf = 0.5 * (1.0 + libm::erf(z * FRAC_1_SQRT_2));
    let pdf = (-0.5 * z * z).exp() / (2.0 * PI).sqrt();
    cdf + z * pdf
}

impl Network {
    /// All-zero parameters.
    pub fn zeros(arch: Architecture) -> Self {
        let mut slots = Vec::new();
        let mut off = 0;
        for (rows, cols) in arch.layer_shapes() {
            slots.push(Slot { rows, cols, weight: off, bias: off + rows * cols });
            off += rows * cols + rows;
        }
        assert_eq!(off, arch.param_count(), "parameter layout disagrees with the architecture formula");
        Self { arch, slots, params: vec![0.0; off] }
    }

    /// Uniform He-style fan-in initialisation, zero biases, head scaled by 1/10.
    pub fn new<R: Rng + ?Sized>(arch: Architecture, rng: &mut R) -> Self {
        let mut net = Self::zeros(arch);
        let last = net.slots.len() - 1;
        for (k, slot) in net.slots.clone().iter().enumerate() {
            let mut bound = (6.0 / slot.cols as f64).sqrt();
            if k == last {
                bound *= 0.1;
            }
            let (mut w, _) = slot.split_mut(&mut net.params);
            w.iter_mut().for_each(|v| *v = bound * (2.0 * rng.random::<f64>() - 1.0));
        }
        net
    }

    pub fn from_params(arch: Architecture, params: Vec<f64>) -> Result<Self> {
        let mut net = Self::zeros(arch);
        if params.len() != net.params.len() {
            return Err(Error::DimensionMismatch { expected: net.params.len(), found: params.len() });
        }
        net.params = params;
        Ok(net)
    }

    pub fn arch(&self) -> Architecture {
        self.arch
    }

    pub fn input_dim(&self) -> usize {
        self.arch.input_dim
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn num_layers(&self) -> usize {
        self.slots.len()
    }

    /// Weight matrix (`out × in`) and bias of dense layer `k`.
    pub fn layer_mut(&mut self, k: usize) -> (ArrayViewMut2<'_, f64>, ArrayViewMut1<'_, f64>) {
        let slot = self.slots[k];
        slot.split_mut(&mut self.params)
    }

    fn check_input(&self, x: &ArrayView2<f64>) -> Result<()> {
        if x.ncols() != self.arch.input_dim {
            return Err(Error::DimensionMismatch { expected: self.arch.input_dim, found: x.ncols() });
        }
        Ok(())
    }

    fn affine(&self, slot: &Slot, x: &ArrayView2<f64>) -> Array2<f64> {
        let mut z = Array2::zeros((x.nrows(), slot.rows));
        z += &slot.bias(&self.params);
        general_mat_mul(1.0, x, &slot.weight(&self.params).t(), 1.0, &mut z);
        z
    }

    /// `v_θ(x)` for each row of `x`. Keeps only the current hidden state.
    pub fn forward(&self, x: ArrayView2<f64>) -> Result<Array1<f64>> {
        self.check_input(&x)?;
        let last = self.slots.len() - 1;
        if last == 0 {
            return Ok(self.affine(&self.slots[0], &x).column(0).to_owned());
        }
        let mut h = self.affine(&self.slots[0], &x);
        for slot in &self.slots[1..last] {
            let mut z = self.affine(slot, &h.view());
            z.mapv_inplace(gelu);
            h += &z;
        }
        Ok(self.affine(&self.slots[last], &h.view()).column(0).to_owned())
    }

    fn forward_tape(&self, x: &ArrayView2<f64>) -> Tape {
        let last = self.slots.len() - 1;
        if last == 0 {
            let output = self.affine(&self.slots[0], x).column(0).to_owned();
            return Tape { hidden: Vec::new(), pre: Vec::new(), output };
        }
        let mut hidden = vec![self.affine(&self.slots[0], x)];
        let mut pre = Vec::with_capacity(last - 1);
        for slot in &self.slots[1..last] {
            let h = hidden.last().expect("lift output");
            let z = self.affine(slot, &h.view());
            let next = h + &z.mapv(gelu);
            pre.push(z);
            hidden.push(next);
        }
        let output = self.affine(&self.slots[last], &hidden.last().expect("hidden").view()).column(0).to_owned();
        Tape { hidden, pre, output }
    }

    /// Back-propagates `∂loss/∂v` (one entry per row). Writes parameter
    /// gradients into `grads` when given and returns `∂loss/∂x` when asked.
    fn backward(
        &self,
        x: &ArrayView2<f64>,
        tape: &Tape,
        dout: &Array1<f64>,
        mut grads: Option<&mut [f64]>,
        want_input: bool,
    ) -> Option<Array2<f64>> {
        let last = self.slots.len() - 1;
        let dcol = dout.view().insert_axis(Axis(1));
        if last == 0 {
            let slot = &self.slots[0];
            if let Some(g) = grads.as_deref_mut() {
                let (mut gw, mut gb) = slot.split_mut(g);
                general_mat_mul(1.0, &dcol.t(), x, 0.0, &mut gw);
                gb[0] = dout.sum();
            }
            return want_input.then(|| dcol.dot(&slot.weight(&self.params)));
        }

        // Head.
        let head = &self.slots[last];
        let h_last = tape.hidden.last().expect("hidden");
        if let Some(g) = grads.as_deref_mut() {
            let (mut gw, mut gb) = head.split_mut(g);
            general_mat_mul(1.0, &dcol.t(), h_last, 0.0, &mut gw);
            gb[0] = dout.sum();
        }
        let mut dh = dcol.dot(&head.weight(&self.params));

        // Residual blocks in reverse.
        for k in (1..last).rev() {
            let slot = &self.slots[k];
            let z = &tape.pre[k - 1];
            let mut dz = z.mapv(gelu_derivative);
            dz *= &dh;
            if let Some(g) = grads.as_deref_mut() {
                let (mut gw, mut gb) = slot.split_mut(g);
                general_mat_mul(1.0, &dz.t(), &tape.hidden[k - 1], 0.0, &mut gw);
                gb.assign(&dz.sum_axis(Axis(0)));
            }
            general_mat_mul(1.0, &dz, &slot.weight(&self.params), 1.0, &mut dh);
        }

        // Lift.
        let lift = &self.slots[0];
        if let Some(g) = grads {
            let (mut gw, mut gb) = lift.split_mut(g);
            general_mat_mul(1.0, &dh.t(), x, 0.0, &mut gw);
            gb.assign(&dh.sum_axis(Axis(0)));
        }
        want_input.then(|| dh.dot(&lift.weight(&self.params)))
    }

    /// Weighted squared error `Σ wᵢ (v(xᵢ) − yᵢ)²` and its parameter gradient.
    pub fn weighted_loss_and_grads(
        &self,
        x: ArrayView2<f64>,
        targets: &[f64],
        weights: &[f64],
    ) -> Result<(f64, Vec<f64>)> {
        self.check_input(&x)?;
        if targets.len() != x.nrows() || weights.len() != x.nrows() {
            return Err(Error::DimensionMismatch { expected: x.nrows(), found: targets.len().min(weights.len()) });
        }
        let tape = self.forward_tape(&x);
        let mut loss = 0.0;
        let dout: Array1<f64> = tape
            .output
            .iter()
            .zip(targets.iter().zip(weights))
            .map(|(v, (y, w))| {
                let r = v - y;
                loss += w * r * r;
                2.0 * w * r
            })
            .collect();
        let mut grads = vec![0.0; self.params.len()];
        self.backward(&x, &tape, &dout, Some(&mut grads), false);
        Ok((loss, grads))
    }

    /// Mean squared error `(1/m) Σ (v(xᵢ) − yᵢ)²` and `∂loss/∂θ`.
    pub fn loss_and_param_grads(&self, x: ArrayView2<f64>, targets: &[f64]) -> Result<(f64, Vec<f64>)> {
        let w = vec![1.0 / x.nrows().max(1) as f64; x.nrows()];
        self.weighted_loss_and_grads(x, targets, &w)
    }

    /// `∇ₓ v_θ(x)` for each row. The result is a plain array: nothing
    /// downstream differentiates through it.
    pub fn input_gradient(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check_input(&x)?;
        let tape = self.forward_tape(&x);
        let ones = Array1::ones(x.nrows());
        Ok(self.backward(&x, &tape, &ones, None, true).expect("input gradient requested"))
    }

    /// Values and input gradients from a single forward pass.
    pub fn value_and_input_gradient(&self, x: ArrayView2<f64>) -> Result<(Array1<f64>, Array2<f64>)> {
        self.check_input(&x)?;
        let tape = self.forward_tape(&x);
        let ones = Array1::ones(x.nrows());
        let g = self.backward(&x, &tape, &ones, None, true).expect("input gradient requested");
        Ok((tape.output, g))
    }
}
