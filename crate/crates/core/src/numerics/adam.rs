use crate::error::Error;
use crate::scalar::Scalar;

use super::tensor::Tensor;

/// ADAM optimizer state: per-parameter moment buffers plus a shared step
/// counter. Buffers are sized on the first step and must keep matching
/// the parameter list afterwards.
pub struct AdamState<F> {
    m: Vec<Vec<F>>,
    v: Vec<Vec<F>>,
    step_count: u64,
    beta1: F,
    beta2: F,
    eps: F,
}

impl<F: Scalar> Default for AdamState<F> {
    fn default() -> Self {
        Self::new()
    }
}

impl<F: Scalar> AdamState<F> {
    /// Canonical moment defaults: β1 = 0.9, β2 = 0.999, ε = 1e-8.
    pub fn new() -> Self {
        Self::with_betas(F::from_f64(0.9), F::from_f64(0.999), F::from_f64(1e-8))
    }

    pub fn with_betas(beta1: F, beta2: F, eps: F) -> Self {
        AdamState {
            m: Vec::new(),
            v: Vec::new(),
            step_count: 0,
            beta1,
            beta2,
            eps,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    /// One bias-corrected update over all parameters. Every parameter must
    /// carry a populated gradient; gradients are cleared afterwards.
    pub fn step(&mut self, params: &mut [&mut Tensor<F>], lr: F) -> Result<(), Error> {
        if self.m.is_empty() {
            self.m = params.iter().map(|p| vec![F::zero(); p.numel()]).collect();
            self.v = params.iter().map(|p| vec![F::zero(); p.numel()]).collect();
        }
        if self.m.len() != params.len() {
            return Err(Error::Usage(format!(
                "optimizer tracks {} parameters, step got {}",
                self.m.len(),
                params.len()
            )));
        }
        for (i, p) in params.iter().enumerate() {
            if p.grad().is_none() {
                return Err(Error::Usage(format!(
                    "parameter {i} has no gradient; run backward first"
                )));
            }
            if self.m[i].len() != p.numel() {
                return Err(Error::Usage(format!(
                    "parameter {i} changed size: state {} vs tensor {}",
                    self.m[i].len(),
                    p.numel()
                )));
            }
        }

        self.step_count += 1;
        let t = self.step_count as i32;
        let corr1 = F::one() - self.beta1.powi(t);
        let corr2 = F::one() - self.beta2.powi(t);
        let one = F::one();

        for (i, p) in params.iter_mut().enumerate() {
            let grad = p.grad().expect("checked above").to_vec();
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            let data = p.data_mut();
            for j in 0..grad.len() {
                let g = grad[j];
                m[j] = self.beta1 * m[j] + (one - self.beta1) * g;
                v[j] = self.beta2 * v[j] + (one - self.beta2) * g * g;
                let m_hat = m[j] / corr1;
                let v_hat = v[j] / corr2;
                data[j] -= lr * m_hat / (v_hat.sqrt() + self.eps);
            }
            p.clear_grad();
        }
        Ok(())
    }
}
