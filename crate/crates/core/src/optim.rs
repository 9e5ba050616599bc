//! Adam optimizer and cosine annealing schedule.

use crate::autodiff::Tensor;
use crate::error::{Error, Result};

/// Cosine annealing from `lr_max` at `t = 0` to `lr_min` at `t = total`;
/// later steps clamp to `lr_min`.
pub fn cosine_lr(t: usize, total: usize, lr_max: f64, lr_min: f64) -> f64 {
    if t >= total {
        return lr_min;
    }
    let progress = t as f64 / total as f64;
    lr_min + 0.5 * (lr_max - lr_min) * (1.0 + (std::f64::consts::PI * progress).cos())
}

/// Adam state: per-parameter first/second moments plus a step counter.
/// Moment shapes are fixed on the first step.
#[derive(Clone, Debug)]
pub struct Adam {
    beta1: f64,
    beta2: f64,
    eps: f64,
    step: u64,
    first: Vec<Tensor>,
    second: Vec<Tensor>,
}

impl Adam {
    pub fn new(beta1: f64, beta2: f64, eps: f64) -> Result<Self> {
        for (name, b) in [("beta1", beta1), ("beta2", beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::Config(format!("{name} must be in [0, 1), got {b}")));
            }
        }
        if !(eps > 0.0) {
            return Err(Error::Config(format!("adam eps must be positive, got {eps}")));
        }
        Ok(Self { beta1, beta2, eps, step: 0, first: Vec::new(), second: Vec::new() })
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One bias-corrected update. `params`, `grads` and `names` are parallel
    /// slices; a non-finite gradient aborts with the parameter name.
    pub fn step(
        &mut self,
        params: &mut [&mut Tensor],
        grads: &[Tensor],
        names: &[String],
        lr: f64,
    ) -> Result<()> {
        if params.len() != grads.len() || params.len() != names.len() {
            return Err(Error::Usage(format!(
                "adam step arity mismatch: {} params, {} grads, {} names",
                params.len(),
                grads.len(),
                names.len()
            )));
        }
        if self.first.is_empty() {
            self.first = grads.iter().map(|g| Tensor::zeros(g.rows(), g.cols())).collect();
            self.second = self.first.clone();
        }
        for (i, g) in grads.iter().enumerate() {
            if !g.is_finite() {
                return Err(Error::Numerical(format!(
                    "non-finite gradient for parameter {}",
                    names[i]
                )));
            }
            if g.shape() != params[i].shape() {
                return Err(Error::Shape(format!(
                    "gradient {}x{} does not match parameter {} ({}x{})",
                    g.rows(),
                    g.cols(),
                    names[i],
                    params[i].rows(),
                    params[i].cols()
                )));
            }
        }
        self.step += 1;
        let t = self.step as i32;
        let corr1 = 1.0 - self.beta1.powi(t);
        let corr2 = 1.0 - self.beta2.powi(t);
        for (i, g) in grads.iter().enumerate() {
            let m = &mut self.first[i];
            let v = &mut self.second[i];
            for ((mj, vj), (pj, gj)) in m
                .data_mut()
                .iter_mut()
                .zip(v.data_mut())
                .zip(params[i].data_mut().iter_mut().zip(g.data()))
            {
                *mj = self.beta1 * *mj + (1.0 - self.beta1) * gj;
                *vj = self.beta2 * *vj + (1.0 - self.beta2) * gj * gj;
                let m_hat = *mj / corr1;
                let v_hat = *vj / corr2;
                *pj -= lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}
