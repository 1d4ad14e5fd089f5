use crate::autodiff::params::{GradBuffer, ParamStore};
use crate::autodiff::tensor::Tensor;
use crate::{Error, Result};

/// Adam optimizer with bias-corrected moment estimates.
pub struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    t: u64,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
}

impl Adam {
    /// Standard coefficients: beta1 = 0.9, beta2 = 0.999, eps = 1e-8.
    pub fn new(lr: f64, store: &ParamStore) -> Self {
        let shapes: Vec<Tensor> = store
            .iter()
            .map(|(_, _, t)| Tensor::zeros(t.rows(), t.cols()))
            .collect();
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: shapes.clone(),
            v: shapes,
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.t
    }

    /// Applies one update from accumulated gradients. The caller is expected
    /// to reset `grads` afterwards if it reuses the buffer.
    pub fn step(&mut self, store: &mut ParamStore, grads: &GradBuffer) -> Result<()> {
        if grads.len() != self.m.len() || store.len() != self.m.len() {
            return Err(Error::MissingMoments(format!(
                "optimizer tracks {} tensors, store has {}, grads have {}",
                self.m.len(),
                store.len(),
                grads.len()
            )));
        }
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        let ids: Vec<_> = store.iter().map(|(id, _, _)| id).collect();
        for id in ids {
            let g = grads.get(id).data();
            let m = self.m[id.index()].data_mut();
            let v = self.v[id.index()].data_mut();
            let p = store.get_mut(id).data_mut();
            for k in 0..g.len() {
                m[k] = self.beta1 * m[k] + (1.0 - self.beta1) * g[k];
                v[k] = self.beta2 * v[k] + (1.0 - self.beta2) * g[k] * g[k];
                let mhat = m[k] / bc1;
                let vhat = v[k] / bc2;
                p[k] -= self.lr * mhat / (vhat.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_roughly_lr() {
        // With bias correction, the first update is lr * g/(|g| + eps') which
        // is ~lr in magnitude regardless of gradient scale.
        let mut store = ParamStore::new();
        let w = store.register("w", Tensor::vector(vec![1.0, -2.0]));
        let mut grads = GradBuffer::zeros_like(&store);
        grads.accumulate(w, &Tensor::vector(vec![10.0, -0.003]));
        let mut opt = Adam::new(0.001, &store);
        opt.step(&mut store, &grads).unwrap();
        let p = store.get(w).data();
        assert!((p[0] - (1.0 - 0.001)).abs() < 1e-6);
        assert!((p[1] - (-2.0 + 0.001)).abs() < 1e-6);
        assert_eq!(opt.steps_taken(), 1);
    }

    #[test]
    fn converges_on_quadratic() {
        // Minimize (w - 3)^2 with analytic gradient 2(w - 3).
        let mut store = ParamStore::new();
        let w = store.register("w", Tensor::scalar(0.0));
        let mut opt = Adam::new(0.05, &store);
        for _ in 0..2000 {
            let cur = store.get(w).scalar_value().unwrap();
            let mut grads = GradBuffer::zeros_like(&store);
            grads.accumulate(w, &Tensor::scalar(2.0 * (cur - 3.0)));
            opt.step(&mut store, &grads).unwrap();
        }
        let w_final = store.get(w).scalar_value().unwrap();
        assert!((w_final - 3.0).abs() < 1e-3, "got {w_final}");
    }

    #[test]
    fn mismatched_store_rejected() {
        let mut store = ParamStore::new();
        store.register("a", Tensor::scalar(0.0));
        let grads = GradBuffer::zeros_like(&store);
        let opt_store = store.clone();
        let mut opt = Adam::new(0.001, &opt_store);
        store.register("b", Tensor::scalar(0.0));
        assert!(matches!(
            opt.step(&mut store, &grads),
            Err(Error::MissingMoments(_))
        ));
    }
}
