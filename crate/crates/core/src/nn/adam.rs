use super::params::ParamStore;
use super::tensor::Scalar;
use crate::error::{Error, Result};

/// Adam with bias correction.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
}

impl Adam {
    pub fn new(lr: f64) -> Result<Self> {
        Self::with_betas(lr, 0.9, 0.999, 1e-8)
    }

    pub fn with_betas(lr: f64, beta1: f64, beta2: f64, eps: f64) -> Result<Self> {
        if !(lr > 0.0 && lr.is_finite()) {
            return Err(Error::config(format!(
                "learning rate must be > 0, got {lr}"
            )));
        }
        if !(0.0..1.0).contains(&beta1) || !(0.0..1.0).contains(&beta2) || eps <= 0.0 {
            return Err(Error::config(format!(
                "invalid Adam constants beta1={beta1} beta2={beta2} eps={eps}"
            )));
        }
        Ok(Self {
            lr,
            beta1,
            beta2,
            eps,
        })
    }

    pub fn lr(&self) -> f64 {
        self.lr
    }

    /// Updates every entry. Gradients are left in place.
    pub fn step<T: Scalar>(&self, store: &mut ParamStore<T>) {
        self.step_filtered(store, |_| true)
    }

    /// Updates only entries whose name passes `trainable`; the others keep
    /// their values, moments and step counters.
    pub fn step_filtered<T: Scalar>(
        &self,
        store: &mut ParamStore<T>,
        trainable: impl Fn(&str) -> bool,
    ) {
        let (b1, b2) = (T::lit(self.beta1), T::lit(self.beta2));
        let (one_m_b1, one_m_b2) = (T::lit(1.0 - self.beta1), T::lit(1.0 - self.beta2));
        let eps = T::lit(self.eps);
        for entry in store.entries_mut() {
            if !trainable(&entry.name) {
                continue;
            }
            entry.steps += 1;
            let t = entry.steps as i32;
            let correction1 = T::lit(1.0 - self.beta1.powi(t));
            let correction2 = T::lit(1.0 - self.beta2.powi(t));
            let lr = T::lit(self.lr);
            let value = std::sync::Arc::make_mut(&mut entry.value);
            let moments = entry
                .first_moment
                .data_mut()
                .iter_mut()
                .zip(entry.second_moment.data_mut().iter_mut());
            for ((w, &g), (m, v)) in value
                .data_mut()
                .iter_mut()
                .zip(entry.grad.data())
                .zip(moments)
            {
                *m = b1 * *m + one_m_b1 * g;
                *v = b2 * *v + one_m_b2 * g * g;
                let m_hat = *m / correction1;
                let v_hat = *v / correction2;
                *w = *w - lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
    }
}
