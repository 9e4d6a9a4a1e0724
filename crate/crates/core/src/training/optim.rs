//! Adam with global-norm clipping and a plateau learning-rate schedule.

use serde::{Deserialize, Serialize};

use ligbind_tensor::{ParamStore, Tensor, TensorError};

use crate::error::{Error, Result};

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub step: u64,
    pub m: Vec<Tensor>,
    pub v: Vec<Tensor>,
}

impl Adam {
    pub fn new(store: &ParamStore) -> Self {
        Self {
            step: 0,
            m: store.zeros_like(),
            v: store.zeros_like(),
        }
    }

    /// One bias-corrected update of every trainable parameter.
    pub fn update(&mut self, store: &mut ParamStore, grads: &[Tensor], lr: f64) -> Result<()> {
        if grads.len() != store.len() || self.m.len() != store.len() {
            return Err(Error::LengthMismatch(grads.len(), store.len()));
        }
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - ADAM_BETA1.powi(t);
        let c2 = 1.0 - ADAM_BETA2.powi(t);
        for (k, (_, p)) in store.iter_mut().enumerate() {
            let g = &grads[k];
            if g.shape() != p.tensor.shape() {
                return Err(Error::Tensor(TensorError::ShapeMismatch {
                    op: "adam",
                    lhs: p.tensor.shape().to_vec(),
                    rhs: g.shape().to_vec(),
                }));
            }
            if !p.requires_grad {
                continue;
            }
            let (m, v) = (self.m[k].data_mut(), self.v[k].data_mut());
            for (i, x) in p.tensor.data_mut().iter_mut().enumerate() {
                let gi = g.data()[i];
                m[i] = ADAM_BETA1 * m[i] + (1.0 - ADAM_BETA1) * gi;
                v[i] = ADAM_BETA2 * v[i] + (1.0 - ADAM_BETA2) * gi * gi;
                let mh = m[i] / c1;
                let vh = v[i] / c2;
                *x -= lr * mh / (vh.sqrt() + ADAM_EPS);
            }
        }
        Ok(())
    }
}

/// Global L2 norm of a gradient list.
pub fn global_norm(grads: &[Tensor]) -> f64 {
    grads.iter().map(Tensor::squared_norm).sum::<f64>().sqrt()
}

/// Rescales `grads` in place so their global norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_global_norm(grads: &mut [Tensor], max_norm: f64) -> f64 {
    let norm = global_norm(grads);
    if norm > max_norm {
        let s = max_norm / norm;
        for g in grads.iter_mut() {
            for x in g.data_mut() {
                *x *= s;
            }
        }
    }
    norm
}

/// Multiplies the learning rate by `factor` (floored at `min`) whenever
/// `patience` consecutive evaluations fail to strictly improve on the best.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlateauSchedule {
    pub lr: f64,
    pub factor: f64,
    pub min: f64,
    pub patience: usize,
    pub best: Option<f64>,
    pub bad_evaluations: usize,
}

impl PlateauSchedule {
    pub fn new(lr: f64, factor: f64, min: f64, patience: usize) -> Self {
        Self {
            lr,
            factor,
            min,
            patience,
            best: None,
            bad_evaluations: 0,
        }
    }

    pub fn observe(&mut self, loss: f64) -> f64 {
        match self.best {
            Some(b) if !(loss < b) => {
                self.bad_evaluations += 1;
                if self.bad_evaluations >= self.patience {
                    self.lr = (self.lr * self.factor).max(self.min);
                    self.bad_evaluations = 0;
                }
            }
            _ => {
                self.best = Some(loss);
                self.bad_evaluations = 0;
            }
        }
        self.lr
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store(v: f64) -> ParamStore {
        let mut s = ParamStore::new();
        s.insert("p", Tensor::scalar(v)).unwrap();
        s
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut s = store(1.5);
        let mut adam = Adam::new(&s);
        adam.update(&mut s, &[Tensor::scalar(0.0)], 0.1).unwrap();
        assert_eq!(s.tensor(ligbind_tensor::ParamId(0)).item(), 1.5);
        assert_eq!(adam.step, 1);
    }

    #[test]
    fn first_step_moves_by_lr() {
        for g in [3.0, -0.02, 1e4] {
            let mut s = store(0.0);
            let mut adam = Adam::new(&s);
            adam.update(&mut s, &[Tensor::scalar(g)], 0.01).unwrap();
            let moved = s.tensor(ligbind_tensor::ParamId(0)).item();
            let expected = -0.01 * g.signum();
            assert!((moved - expected).abs() < 0.01 * 1e-6, "{g}: {moved}");
        }
    }

    #[test]
    fn converges_on_parabola() {
        let mut s = store(1.0);
        let mut adam = Adam::new(&s);
        for _ in 0..100 {
            let p = s.tensor(ligbind_tensor::ParamId(0)).item();
            adam.update(&mut s, &[Tensor::scalar(2.0 * p)], 0.1).unwrap();
        }
        assert!(s.tensor(ligbind_tensor::ParamId(0)).item().abs() < 1e-2);
    }

    #[test]
    fn shape_mismatch_rejected() {
        let mut s = store(1.0);
        let mut adam = Adam::new(&s);
        assert!(adam.update(&mut s, &[Tensor::zeros(&[2])], 0.1).is_err());
    }

    #[test]
    fn clipping_caps_norm() {
        let mut g = vec![Tensor::vector(vec![30.0, 40.0])];
        assert_eq!(clip_global_norm(&mut g, 10.0), 50.0);
        assert!((global_norm(&g) - 10.0).abs() < 1e-12);
        let mut small = vec![Tensor::vector(vec![0.3, 0.4])];
        clip_global_norm(&mut small, 10.0);
        assert_eq!(small[0].data(), &[0.3, 0.4]);
    }

    #[test]
    fn plateau_decays_and_saturates() {
        let mut s = PlateauSchedule::new(1e-3, 0.6, 1e-6, 20);
        for i in 0..50 {
            assert_eq!(s.observe(10.0 - i as f64), 1e-3);
        }
        // the first flat value is an initial best; 20 more without
        // improvement trigger one decay
        let mut flat = PlateauSchedule::new(1e-3, 0.6, 1e-6, 20);
        flat.observe(1.0);
        for _ in 0..19 {
            assert_eq!(flat.observe(1.0), 1e-3);
        }
        assert!((flat.observe(1.0) - 6e-4).abs() < 1e-18);
        let mut lr = flat.lr;
        for _ in 0..2000 {
            let next = flat.observe(1.0);
            assert!(next <= lr && next >= 1e-6);
            lr = next;
        }
        assert_eq!(lr, 1e-6);
    }
}
