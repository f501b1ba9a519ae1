use crate::error::{Result, TensorError};
use crate::params::ParamStore;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Bias-corrected Adam hyper-parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

/// First/second moment estimates and the step counter, one moment pair per
/// parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T> {
    pub step: u64,
    pub m: Vec<Tensor<T>>,
    pub v: Vec<Tensor<T>>,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(store: &ParamStore<T>) -> Self {
        let zeros: Vec<Tensor<T>> = store
            .iter()
            .map(|(_, t)| Tensor::zeros(t.shape()))
            .collect();
        Self {
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }
}

impl Adam {
    pub fn new(lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    /// One update. Parameters whose gradient is `None` are left untouched
    /// and their moments are not decayed.
    pub fn step<T: Scalar>(
        &self,
        store: &mut ParamStore<T>,
        grads: &[Option<Tensor<T>>],
        state: &mut AdamState<T>,
    ) -> Result<()> {
        if grads.len() != store.len() || state.m.len() != store.len() {
            return Err(TensorError::InvalidArgument(format!(
                "adam: {} params, {} grads, {} moment slots",
                store.len(),
                grads.len(),
                state.m.len()
            )));
        }
        state.step += 1;
        let t = state.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        let (b1, b2) = (T::cast(self.beta1), T::cast(self.beta2));
        let step_size = T::cast(self.lr / c1);
        let c2_sqrt = T::cast(c2.sqrt());
        let eps = T::cast(self.eps);
        for ((id, g), (m, v)) in store
            .ids()
            .collect::<Vec<_>>()
            .into_iter()
            .zip(grads)
            .zip(state.m.iter_mut().zip(state.v.iter_mut()))
        {
            let Some(g) = g else { continue };
            let p = store.get_mut(id);
            if g.shape() != p.shape() {
                return Err(TensorError::ShapeMismatch {
                    op: "adam",
                    left: p.shape().to_vec(),
                    right: g.shape().to_vec(),
                });
            }
            for (((pi, &gi), mi), vi) in p
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(m.data_mut())
                .zip(v.data_mut())
            {
                *mi = b1 * *mi + (T::one() - b1) * gi;
                *vi = b2 * *vi + (T::one() - b2) * gi * gi;
                *pi -= step_size * *mi / (vi.sqrt() / c2_sqrt + eps);
            }
        }
        Ok(())
    }
}
