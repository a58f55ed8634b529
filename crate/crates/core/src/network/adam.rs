use serde::{Deserialize, Serialize};

/// Adam with bias correction and an exponentially decaying learning rate
/// `lr_t = base_lr · decay^(t / total_steps)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub base_lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Total multiplicative decay of the learning rate over `total_steps`.
    pub decay: f64,
    pub total_steps: u64,
    step: u64,
    first: Vec<f64>,
    second: Vec<f64>,
}

impl Adam {
    pub fn new(num_params: usize, base_lr: f64, decay: f64, total_steps: u64) -> Self {
        Self {
            base_lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            decay,
            total_steps,
            step: 0,
            first: vec![0.0; num_params],
            second: vec![0.0; num_params],
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    pub fn moments(&self) -> (&[f64], &[f64]) {
        (&self.first, &self.second)
    }

    /// Learning rate used by the next update.
    pub fn learning_rate(&self) -> f64 {
        if self.total_steps == 0 {
            return self.base_lr;
        }
        let frac = (self.step as f64 / self.total_steps as f64).min(1.0);
        self.base_lr * self.decay.powf(frac)
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) {
        assert_eq!(params.len(), self.first.len(), "optimizer state does not match parameters");
        assert_eq!(grads.len(), params.len(), "gradient length does not match parameters");
        let lr = self.learning_rate();
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for ((p, g), (m, v)) in params.iter_mut().zip(grads).zip(self.first.iter_mut().zip(self.second.iter_mut())) {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            *p -= lr * (*m / c1) / ((*v / c2).sqrt() + self.eps);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut opt = Adam::new(1, 0.1, 1e-2, 100);
        let mut p = [2.0];
        opt.step(&mut p, &[1.0]);
        assert!((p[0] - (2.0 - 0.1 / (1.0 + 1e-8))).abs() < 1e-15);
    }

    #[test]
    fn zero_gradients_only_decay_moments() {
        let mut opt = Adam::new(3, 0.1, 1e-2, 10);
        let mut p = [1.0, -2.0, 3.0];
        for _ in 0..3 {
            opt.step(&mut p, &[0.0; 3]);
        }
        assert_eq!(p, [1.0, -2.0, 3.0]);
        opt.step(&mut p, &[0.5, -0.5, 1.0]);
        let before = opt.moments().0.to_vec();
        opt.step(&mut p, &[0.0; 3]);
        for (a, b) in opt.moments().0.iter().zip(&before) {
            assert!((a - 0.9 * b).abs() < 1e-15);
        }
    }

    #[test]
    fn learning_rate_decays_two_orders() {
        let mut opt = Adam::new(1, 1e-3, 1e-2, 1000);
        assert_eq!(opt.learning_rate(), 1e-3);
        let mut p = [0.0];
        for _ in 0..500 {
            opt.step(&mut p, &[0.0]);
        }
        assert!((opt.learning_rate() - 1e-4).abs() < 1e-15);
        for _ in 0..500 {
            opt.step(&mut p, &[0.0]);
        }
        assert!((opt.learning_rate() - 1e-5).abs() < 1e-17);
    }

    #[test]
    fn quadratic_bowl_descends_monotonically() {
        let mut opt = Adam::new(1, 0.1, 1.0, 0);
        let mut p = [1.0];
        let mut prev = p[0] * p[0];
        for _ in 0..10 {
            let g = [2.0 * p[0]];
            opt.step(&mut p, &g);
            let f = p[0] * p[0];
            assert!(f < prev);
            prev = f;
        }
    }
}
