use crate::error::{Result, SasrError};
use crate::params::{ModelParams, ParamId};
use sasr_tensor::{Real, Tensor};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moment estimates, one tensor per parameter.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState<T: Real = f32> {
    pub m: Vec<Tensor<T>>,
    pub v: Vec<Tensor<T>>,
    pub step: u64,
}

impl<T: Real> AdamState<T> {
    pub fn new(params: &ModelParams<T>) -> Self {
        let zeros = || -> Vec<Tensor<T>> {
            params
                .iter()
                .map(|(_, t)| Tensor::zeros(t.shape().to_vec()))
                .collect()
        };
        Self {
            m: zeros(),
            v: zeros(),
            step: 0,
        }
    }
}

/// One bias-corrected Adam update. Gradients are checked before anything is
/// modified, so a non-finite gradient leaves parameters and state untouched.
pub fn adam_step<T: Real>(
    params: &mut ModelParams<T>,
    grads: &[Tensor<T>],
    state: &mut AdamState<T>,
    lr: f64,
    cfg: &AdamConfig,
) -> Result<()> {
    if grads.len() != params.len() || state.m.len() != params.len() {
        return Err(SasrError::InvalidInput(format!(
            "{} gradients and {} moment tensors for {} parameters",
            grads.len(),
            state.m.len(),
            params.len()
        )));
    }
    for (i, g) in grads.iter().enumerate() {
        let p = params.get(ParamId(i));
        if g.shape() != p.shape() {
            return Err(SasrError::InvalidInput(format!(
                "gradient shape {:?} for parameter `{}` of shape {:?}",
                g.shape(),
                params.name(ParamId(i)),
                p.shape()
            )));
        }
        if !g.all_finite() {
            return Err(SasrError::NonFiniteGradient(params.name(ParamId(i)).to_string()));
        }
    }
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - cfg.beta1.powi(t);
    let c2 = 1.0 - cfg.beta2.powi(t);
    for (i, p) in params.tensors_mut().enumerate() {
        let (m, v) = (state.m[i].data_mut(), state.v[i].data_mut());
        for (j, (w, g)) in p.data_mut().iter_mut().zip(grads[i].data()).enumerate() {
            let g = g.as_f64();
            let mj = cfg.beta1 * m[j].as_f64() + (1.0 - cfg.beta1) * g;
            let vj = cfg.beta2 * v[j].as_f64() + (1.0 - cfg.beta2) * g * g;
            m[j] = T::lit(mj);
            v[j] = T::lit(vj);
            let update = lr * (mj / c1) / ((vj / c2).sqrt() + cfg.eps);
            *w = T::lit(w.as_f64() - update);
        }
    }
    Ok(())
}
