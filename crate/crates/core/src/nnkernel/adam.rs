use serde::{Deserialize, Serialize};

use super::{Gradients, Network, Params, Scalar};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self {
            lr,
            ..Self::default()
        }
    }
}

/// One bias-corrected Adam update; `t` is the 1-based step count.
pub fn adam_step<T: Scalar>(param: &mut [T], grad: &[T], m: &mut [T], v: &mut [T], t: u64, cfg: &AdamConfig) {
    debug_assert!(t >= 1);
    let b1 = T::of(cfg.beta1);
    let b2 = T::of(cfg.beta2);
    let c1 = T::of(1.0 - cfg.beta1);
    let c2 = T::of(1.0 - cfg.beta2);
    let bc1 = T::of(1.0 / (1.0 - cfg.beta1.powi(t as i32)));
    let bc2 = T::of(1.0 / (1.0 - cfg.beta2.powi(t as i32)));
    let lr = T::of(cfg.lr);
    let eps = T::of(cfg.eps);
    for (((p, &g), m), v) in param.iter_mut().zip(grad).zip(m.iter_mut()).zip(v.iter_mut()) {
        *m = b1 * *m + c1 * g;
        *v = b2 * *v + c2 * g * g;
        let mh = *m * bc1;
        let vh = *v * bc2;
        *p = *p - lr * mh / (vh.sqrt() + eps);
    }
}

/// Adam state for every trainable parameter tensor of one network.
#[derive(Clone, Debug)]
pub struct Adam<T: Scalar> {
    cfg: AdamConfig,
    t: u64,
    moments: Vec<Option<(Params<T>, Params<T>)>>,
}

impl<T: Scalar> Adam<T> {
    pub fn new(cfg: AdamConfig) -> Self {
        Self {
            cfg,
            t: 0,
            moments: Vec::new(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    pub fn step(&mut self, net: &mut Network<T>, grads: &Gradients<T>) -> Result<()> {
        let n = net.spec().layers.len();
        if grads.layers.len() != n {
            return Err(Error::ShapeMismatch(format!(
                "{} gradient slots for {n} layers",
                grads.layers.len()
            )));
        }
        if self.moments.len() < n {
            self.moments.resize_with(n, || None);
        }
        self.t += 1;
        for (i, g) in grads.layers.iter().enumerate() {
            let Some(g) = g else { continue };
            let p = net
                .params_mut(i)
                .ok_or_else(|| Error::ShapeMismatch(format!("gradient for parameter-free layer {i}")))?;
            if p.weight.dim() != g.weight.dim() || p.bias.len() != g.bias.len() {
                return Err(Error::ShapeMismatch(format!("gradient shape differs at layer {i}")));
            }
            let (m, v) = self.moments[i].get_or_insert_with(|| (p.zeros_like(), p.zeros_like()));
            adam_step(
                p.weight.as_slice_mut().expect("standard layout"),
                g.weight.as_slice().expect("standard layout"),
                m.weight.as_slice_mut().expect("standard layout"),
                v.weight.as_slice_mut().expect("standard layout"),
                self.t,
                &self.cfg,
            );
            adam_step(
                p.bias.as_slice_mut().expect("contiguous"),
                g.bias.as_slice().expect("contiguous"),
                m.bias.as_slice_mut().expect("contiguous"),
                v.bias.as_slice_mut().expect("contiguous"),
                self.t,
                &self.cfg,
            );
        }
        Ok(())
    }
}
