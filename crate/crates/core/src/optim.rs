//! Adaptive-moment optimizer with decoupled weight decay and global
//! gradient-norm clipping.

use alloc::vec::Vec;

use crate::layers::ParamStore;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamW {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    /// Global L2 clip threshold; `None` disables clipping.
    pub clip_norm: Option<f64>,
}

impl Default for AdamW {
    fn default() -> Self {
        AdamW {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 1e-4,
            clip_norm: Some(1.0),
        }
    }
}

/// Per-parameter first and second moments plus the step counter.
#[derive(Debug, Clone)]
pub struct OptState<T: Scalar> {
    pub step: u64,
    pub m: Vec<Tensor<T>>,
    pub v: Vec<Tensor<T>>,
}

impl<T: Scalar> OptState<T> {
    pub fn new(params: &ParamStore<T>) -> Self {
        let zeros: Vec<Tensor<T>> = params
            .entries()
            .iter()
            .map(|e| Tensor::zeros(e.value.shape()))
            .collect();
        OptState {
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }
}

impl AdamW {
    /// Applies one update with learning rate `lr`. `grads` is aligned with
    /// the parameter store; entries without a gradient are left untouched.
    /// Returns the pre-clip global gradient norm.
    pub fn step<T: Scalar>(
        &self,
        lr: f64,
        params: &mut ParamStore<T>,
        state: &mut OptState<T>,
        grads: &[Option<Tensor<T>>],
    ) -> f64 {
        assert_eq!(grads.len(), params.len(), "gradient/parameter mismatch");
        let mut sq_norm = 0.0;
        for g in grads.iter().flatten() {
            for &v in g.data() {
                let v = v.to_f64();
                sq_norm += v * v;
            }
        }
        let norm = libm::sqrt(sq_norm);
        let clip_scale = match self.clip_norm {
            Some(c) if norm > c => c / norm,
            _ => 1.0,
        };

        state.step += 1;
        let t = state.step as i32;
        let bc1 = 1.0 - libm::pow(self.beta1, t as f64);
        let bc2 = 1.0 - libm::pow(self.beta2, t as f64);
        let b1 = T::from_f64(self.beta1);
        let b2 = T::from_f64(self.beta2);
        let one_m_b1 = T::from_f64(1.0 - self.beta1);
        let one_m_b2 = T::from_f64(1.0 - self.beta2);
        let scale = T::from_f64(clip_scale);
        let lr_t = T::from_f64(lr);
        let inv_bc1 = T::from_f64(1.0 / bc1);
        let inv_bc2 = T::from_f64(1.0 / bc2);
        let eps = T::from_f64(self.eps);
        let wd = T::from_f64(lr * self.weight_decay);

        for (idx, grad) in grads.iter().enumerate() {
            let Some(grad) = grad else { continue };
            let id = crate::layers::ParamId::from_index(idx);
            let mut w = params.get(id).to_vec();
            let mut m = state.m[idx].to_vec();
            let mut v = state.v[idx].to_vec();
            let gd = grad.data();
            for i in 0..w.len() {
                let gi = gd[i] * scale;
                m[i] = b1 * m[i] + one_m_b1 * gi;
                v[i] = b2 * v[i] + one_m_b2 * gi * gi;
                let mhat = m[i] * inv_bc1;
                let vhat = v[i] * inv_bc2;
                let wi = w[i];
                w[i] = wi - lr_t * (mhat / (vhat.sqrt() + eps)) - wd * wi;
            }
            let shape = grad.shape();
            params.set(id, Tensor::from_vec(shape, w));
            state.m[idx] = Tensor::from_vec(shape, m);
            state.v[idx] = Tensor::from_vec(shape, v);
        }
        norm
    }
}

/// Cosine decay from `base_lr` to zero over `total_steps`.
pub fn cosine_lr(base_lr: f64, step: u64, total_steps: u64) -> f64 {
    if total_steps == 0 {
        return base_lr;
    }
    let progress = (step.min(total_steps)) as f64 / total_steps as f64;
    0.5 * base_lr * (1.0 + libm::cos(core::f64::consts::PI * progress))
}
