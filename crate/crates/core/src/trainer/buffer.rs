use ndarray::{Array2, ArrayView2, Axis};
use rand::Rng;

use crate::error::{Error, Result};

/// Fixed-capacity cache of `(input, running-mean target, trajectory count)`.
///
/// Replacement is first-in first-out: `cursor` marks the oldest entry.
#[derive(Clone, Debug)]
pub struct ReplayBuffer {
    inputs: Array2<f64>,
    estimates: Vec<f64>,
    counts: Vec<usize>,
    cursor: usize,
}

impl ReplayBuffer {
    /// Buffer filled with exact values, each counted as one trajectory.
    pub fn from_exact(inputs: Array2<f64>, values: Vec<f64>) -> Result<Self> {
        if inputs.nrows() != values.len() || values.is_empty() {
            return Err(Error::InvalidConfig("buffer needs one value per input row".into()));
        }
        let n = values.len();
        Ok(Self { inputs, estimates: values, counts: vec![1; n], cursor: 0 })
    }

    pub fn len(&self) -> usize {
        self.estimates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.estimates.is_empty()
    }

    pub fn inputs(&self) -> ArrayView2<'_, f64> {
        self.inputs.view()
    }

    pub fn estimates(&self) -> &[f64] {
        &self.estimates
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn cursor(&self) -> usize {
        self.cursor
    }

    /// Indices of the `n` oldest entries, which the next [`replace_oldest`](Self::replace_oldest) overwrites.
    pub fn oldest(&self, n: usize) -> Vec<usize> {
        (0..n.min(self.len())).map(|k| (self.cursor + k) % self.len()).collect()
    }

    /// Up to `n` distinct indices drawn uniformly from entries outside the
    /// `evicting` oldest ones.
    pub fn refinement_candidates<R: Rng + ?Sized>(&self, rng: &mut R, n: usize, evicting: usize) -> Vec<usize> {
        let evicting = evicting.min(self.len());
        let pool = self.len() - evicting;
        let n = n.min(pool);
        rand::seq::index::sample(rng, pool, n)
            .into_iter()
            .map(|k| (self.cursor + evicting + k) % self.len())
            .collect()
    }

    /// Pools `n` fresh trajectories with mean `mean` into entry `i`.
    pub fn merge(&mut self, i: usize, mean: f64, n: usize) -> Result<()> {
        if !mean.is_finite() {
            return Err(Error::NonFinite(format!("refinement of buffer entry {i}")));
        }
        let old = self.counts[i];
        let total = old + n;
        self.estimates[i] = (self.estimates[i] * old as f64 + mean * n as f64) / total as f64;
        self.counts[i] = total;
        Ok(())
    }

    /// Overwrites the oldest rows with `inputs` and advances the cursor.
    pub fn replace_oldest(&mut self, inputs: ArrayView2<f64>, estimates: &[f64], n: usize) -> Result<()> {
        if inputs.nrows() > self.len() || inputs.nrows() != estimates.len() {
            return Err(Error::InvalidConfig("replacement larger than the buffer".into()));
        }
        if let Some(k) = estimates.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("fresh buffer estimate {k}")));
        }
        for (k, i) in self.oldest(inputs.nrows()).into_iter().enumerate() {
            self.inputs.row_mut(i).assign(&inputs.row(k));
            self.estimates[i] = estimates[k];
            self.counts[i] = n;
        }
        self.cursor = (self.cursor + inputs.nrows()) % self.len();
        Ok(())
    }

    /// Uniform minibatch drawn with replacement.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, m: usize) -> (Array2<f64>, Vec<f64>) {
        let idx: Vec<usize> = (0..m).map(|_| rng.random_range(0..self.len())).collect();
        let x = self.inputs.select(Axis(0), &idx);
        let y = idx.iter().map(|&i| self.estimates[i]).collect();
        (x, y)
    }
}
