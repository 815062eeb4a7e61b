use alloc::vec::Vec;

use super::{ParamStore, Tensor};
use crate::error::{Error, Result};
use crate::math;

/// Adam moments and hyper-parameters for one [`ParamStore`].
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<Tensor>,
    pub v: Vec<Tensor>,
    pub step: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(params: &ParamStore, lr: f64) -> Self {
        let zeros = || params.values().iter().map(|t| Tensor::zeros(t.shape())).collect();
        Self { m: zeros(), v: zeros(), step: 0, lr, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }

    fn check(&self, params: &ParamStore) -> Result<()> {
        let ok = self.m.len() == params.len()
            && self.v.len() == params.len()
            && params
                .values()
                .iter()
                .zip(self.m.iter().zip(&self.v))
                .all(|(p, (m, v))| p.shape() == m.shape() && p.shape() == v.shape());
        if ok {
            Ok(())
        } else {
            Err(Error::invalid("optimizer state is not initialized for these parameters"))
        }
    }
}

/// One bias-corrected Adam update from the accumulated gradients, which are
/// zeroed afterwards.
pub fn adam_step(params: &mut ParamStore, state: &mut AdamState) -> Result<()> {
    state.check(params)?;
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - math::powi(state.beta1, t);
    let c2 = 1.0 - math::powi(state.beta2, t);
    let (b1, b2, lr, eps) = (state.beta1, state.beta2, state.lr, state.eps);
    let (values, grads) = params.update_mut();
    for (i, (p, g)) in values.iter_mut().zip(grads.iter()).enumerate() {
        let m = state.m[i].data_mut();
        let v = state.v[i].data_mut();
        for (k, (pv, &gv)) in p.data_mut().iter_mut().zip(g.data()).enumerate() {
            m[k] = b1 * m[k] + (1.0 - b1) * gv;
            v[k] = b2 * v[k] + (1.0 - b2) * gv * gv;
            let mh = m[k] / c1;
            let vh = v[k] / c2;
            *pv -= lr * mh / (math::sqrt(vh) + eps);
        }
    }
    params.zero_grad();
    Ok(())
}
