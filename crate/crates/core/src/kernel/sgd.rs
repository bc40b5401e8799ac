use super::{ParamStore, Scalar};
use crate::error::{Error, Result};

/// Stochastic gradient descent with momentum, L2 weight decay and gradient
/// accumulation over `iter_size` backward passes.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Sgd {
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub iter_size: usize,
}

impl Default for Sgd {
    fn default() -> Self {
        Sgd {
            lr: 1e-2,
            momentum: 0.9,
            weight_decay: 5e-4,
            iter_size: 10,
        }
    }
}

impl Sgd {
    /// Applies one update with learning rate `lr` and zeroes the gradients.
    ///
    /// Per element: `g = acc / iter_size + decay * w`, `m = momentum * m + lr * g`,
    /// `w -= m`.
    pub fn step<T: Scalar>(&self, store: &mut ParamStore<T>, lr: f64) -> Result<()> {
        if self.iter_size == 0 {
            return Err(Error::config("iter_size must be at least 1"));
        }
        if store.accumulated() != self.iter_size {
            return Err(Error::Usage(format!(
                "optimizer step after {} accumulated passes, expected {}",
                store.accumulated(),
                self.iter_size
            )));
        }
        let inv = T::of(1.0 / self.iter_size as f64);
        let decay = T::of(self.weight_decay);
        let mom = T::of(self.momentum);
        let lr = T::of(lr);
        for p in store.iter_mut() {
            let value = p.value.data_mut();
            let grad = p.grad.data();
            let buf = p.momentum.data_mut();
            for ((w, &g), m) in value.iter_mut().zip(grad).zip(buf.iter_mut()) {
                let g = g * inv + decay * *w;
                *m = mom * *m + lr * g;
                *w -= *m;
            }
            p.value.check_finite(&format!("updated {}", p.name))?;
        }
        store.zero_grad();
        Ok(())
    }
}
