//! Adam, a reduce-on-plateau learning-rate schedule and early stopping.

use crate::layers::Param;

#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// L2 penalty added to the gradient before the moment updates.
    pub weight_decay: f64,
    step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(lr: f64, weight_decay: f64) -> Self {
        Self { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, weight_decay, step: 0, m: Vec::new(), v: Vec::new() }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// One update of every trainable parameter from its accumulated gradient.
    /// Parameters must be passed in the same order on every call.
    pub fn step(&mut self, params: Vec<&mut Param>) {
        let params: Vec<&mut Param> = params.into_iter().filter(|p| p.trainable).collect();
        if self.m.is_empty() {
            self.m = params.iter().map(|p| vec![0.0; p.value.len()]).collect();
            self.v = self.m.clone();
        }
        assert_eq!(self.m.len(), params.len(), "parameter set changed between steps");
        self.step += 1;
        let t = self.step as i32;
        let bias1 = 1.0 - self.beta1.powi(t);
        let bias2 = 1.0 - self.beta2.powi(t);
        for ((p, m), v) in params.into_iter().zip(&mut self.m).zip(&mut self.v) {
            for i in 0..p.value.len() {
                let g = p.grad[i] + self.weight_decay * p.value[i];
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g;
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g * g;
                let m_hat = m[i] / bias1;
                let v_hat = v[i] / bias2;
                p.value[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
    }
}

/// Multiplies the learning rate by `factor` once the monitored loss has
/// failed to improve for `patience` consecutive epochs, then starts counting
/// again.
#[derive(Debug, Clone)]
pub struct PlateauScheduler {
    pub factor: f64,
    pub patience: usize,
    best: f64,
    bad_epochs: usize,
}

impl PlateauScheduler {
    pub fn new(factor: f64, patience: usize) -> Self {
        Self { factor, patience, best: f64::INFINITY, bad_epochs: 0 }
    }

    /// Records an epoch's loss; returns the new learning rate if it was reduced.
    pub fn observe(&mut self, loss: f64, lr: &mut f64) -> Option<f64> {
        if loss < self.best {
            self.best = loss;
            self.bad_epochs = 0;
            return None;
        }
        self.bad_epochs += 1;
        if self.bad_epochs >= self.patience {
            self.bad_epochs = 0;
            *lr *= self.factor;
            return Some(*lr);
        }
        None
    }
}

#[derive(Debug, Clone)]
pub struct EarlyStopping {
    pub patience: usize,
    best: f64,
    bad_epochs: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        Self { patience, best: f64::INFINITY, bad_epochs: 0 }
    }

    /// Records an epoch's loss; returns whether it is a new best.
    pub fn observe(&mut self, loss: f64) -> bool {
        if loss < self.best {
            self.best = loss;
            self.bad_epochs = 0;
            true
        } else {
            self.bad_epochs += 1;
            false
        }
    }

    pub fn should_stop(&self) -> bool {
        self.bad_epochs >= self.patience
    }

    pub fn best(&self) -> f64 {
        self.best
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn param(value: Vec<f64>, grad: Vec<f64>) -> Param {
        Param { name: "p".into(), value, grad, trainable: true }
    }

    #[test]
    fn first_adam_step_moves_by_lr() {
        // with bias correction the first step is lr * g / (|g| + eps)
        let mut p = param(vec![1.0, -1.0, 0.5], vec![0.3, -2.0, 0.0]);
        let mut adam = Adam::new(0.01, 0.0);
        adam.step(vec![&mut p]);
        assert!((p.value[0] - 0.99).abs() < 1e-9);
        assert!((p.value[1] + 0.99).abs() < 1e-9);
        assert_eq!(p.value[2], 0.5);
    }

    #[test]
    fn adam_minimizes_a_quadratic() {
        let mut p = param(vec![3.0], vec![0.0]);
        let mut adam = Adam::new(0.05, 0.0);
        for _ in 0..2000 {
            p.grad[0] = 2.0 * (p.value[0] - 1.0);
            adam.step(vec![&mut p]);
        }
        assert!((p.value[0] - 1.0).abs() < 1e-3);
    }

    #[test]
    fn buffers_are_not_optimized() {
        let mut p = Param { name: "running_mean".into(), value: vec![1.0], grad: vec![5.0], trainable: false };
        Adam::new(0.1, 0.0).step(vec![&mut p]);
        assert_eq!(p.value, vec![1.0]);
    }

    #[test]
    fn plateau_halves_once_per_patience_window() {
        let mut sched = PlateauScheduler::new(0.5, 3);
        let mut lr = 2e-4;
        assert_eq!(sched.observe(1.0, &mut lr), None);
        let reductions: Vec<_> = (0..3).map(|_| sched.observe(1.0, &mut lr)).collect();
        assert_eq!(reductions, vec![None, None, Some(1e-4)]);
        assert_eq!(lr, 1e-4);
        // counting restarts after a reduction
        assert_eq!(sched.observe(1.0, &mut lr), None);
        assert_eq!(sched.observe(0.5, &mut lr), None);
        assert_eq!(lr, 1e-4);
    }

    #[test]
    fn early_stopping_counts_non_improving_epochs() {
        let mut stop = EarlyStopping::new(2);
        assert!(stop.observe(1.0));
        assert!(!stop.observe(1.0));
        assert!(!stop.should_stop());
        assert!(!stop.observe(2.0));
        assert!(stop.should_stop());
        assert_eq!(stop.best(), 1.0);
    }
}
