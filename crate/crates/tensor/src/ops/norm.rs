use crate::error::{check_dim, Result, TensorError};
use crate::graph::{Graph, Op, Var};
use crate::real::Real;
use crate::tensor::Tensor;

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

/// Per-channel running statistics of a batch-norm layer.
#[derive(Clone, Debug, PartialEq)]
pub struct BnStats<T> {
    pub running_mean: Vec<T>,
    pub running_var: Vec<T>,
}

impl<T: Real> BnStats<T> {
    pub fn new(channels: usize) -> Self {
        Self {
            running_mean: vec![T::zero(); channels],
            running_var: vec![T::one(); channels],
        }
    }

    pub fn channels(&self) -> usize {
        self.running_mean.len()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BnMode {
    /// Normalize with batch statistics and fold them into the running stats.
    Train,
    /// Normalize with batch statistics, leave the running stats alone.
    TrainFrozen,
    /// Normalize with the running statistics.
    Eval,
}

impl<T: Real> Graph<T> {
    pub fn batch_norm(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        stats: &mut BnStats<T>,
        mode: BnMode,
    ) -> Result<Var> {
        let (n, c, h, w) = self.value(x).dims4("batch_norm")?;
        check_dim("batch_norm", "gamma", c, self.value(gamma).numel())?;
        check_dim("batch_norm", "beta", c, self.value(beta).numel())?;
        check_dim("batch_norm", "running stats", c, stats.channels())?;
        let plane = h * w;
        let count = n * plane;
        let batch_stats = mode != BnMode::Eval;
        if batch_stats && count < 2 {
            return Err(TensorError::InvalidArgument {
                op: "batch_norm",
                detail: format!("train mode needs at least 2 values per channel, got {count}"),
            });
        }
        let eps = T::lit(BN_EPS);
        let momentum = T::lit(BN_MOMENTUM);
        let xd = self.value(x).data();
        let gd = self.value(gamma).data();
        let bd = self.value(beta).data();
        let mut xhat = vec![T::zero(); xd.len()];
        let mut out = vec![T::zero(); xd.len()];
        let mut inv_std = vec![T::zero(); c];
        let m = T::lit(count as f64);
        for ch in 0..c {
            let slices = (0..n).map(|s| (s * c + ch) * plane);
            let (mean, var) = if batch_stats {
                let mut sum = T::zero();
                for start in slices.clone() {
                    sum += xd[start..start + plane].iter().copied().sum::<T>();
                }
                let mean = sum / m;
                let mut sq = T::zero();
                for start in slices.clone() {
                    for &v in &xd[start..start + plane] {
                        sq += (v - mean) * (v - mean);
                    }
                }
                let var = sq / m;
                if mode == BnMode::Train {
                    let unbiased = sq / T::lit((count - 1) as f64);
                    stats.running_mean[ch] =
                        (T::one() - momentum) * stats.running_mean[ch] + momentum * mean;
                    stats.running_var[ch] =
                        (T::one() - momentum) * stats.running_var[ch] + momentum * unbiased;
                }
                (mean, var)
            } else {
                (stats.running_mean[ch], stats.running_var[ch])
            };
            let istd = T::one() / (var + eps).sqrt();
            inv_std[ch] = istd;
            for start in slices {
                for i in start..start + plane {
                    let xh = (xd[i] - mean) * istd;
                    xhat[i] = xh;
                    out[i] = xh * gd[ch] + bd[ch];
                }
            }
        }
        let out = Tensor::new(vec![n, c, h, w], out)?;
        Ok(self.push(
            out,
            Op::BatchNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
                batch_stats,
            },
            &[x, gamma, beta],
        ))
    }
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn backward<T: Real>(
    x: Var,
    gamma: Var,
    beta: Var,
    gv: &Tensor<T>,
    xhat: &[T],
    inv_std: &[T],
    batch_stats: bool,
    gout: &Tensor<T>,
    need: impl Fn(Var) -> bool,
) -> Vec<(Var, Tensor<T>)> {
    let [n, c, h, w] = gout.shape()[..] else {
        unreachable!("batch_norm output is 4-D")
    };
    let plane = h * w;
    let m = T::lit((n * plane) as f64);
    let go = gout.data();
    let gd = gv.data();
    let mut dgamma = vec![T::zero(); c];
    let mut dbeta = vec![T::zero(); c];
    let mut dx = vec![T::zero(); go.len()];
    for ch in 0..c {
        let slices = (0..n).map(|s| (s * c + ch) * plane);
        for start in slices.clone() {
            for i in start..start + plane {
                dbeta[ch] += go[i];
                dgamma[ch] += go[i] * xhat[i];
            }
        }
        let scale = gd[ch] * inv_std[ch];
        for start in slices {
            for i in start..start + plane {
                dx[i] = if batch_stats {
                    scale / m * (m * go[i] - dbeta[ch] - xhat[i] * dgamma[ch])
                } else {
                    scale * go[i]
                };
            }
        }
    }
    let mut grads = Vec::with_capacity(3);
    if need(x) {
        grads.push((x, Tensor::from_parts(gout.shape().to_vec(), dx)));
    }
    grads.push((gamma, Tensor::from_parts(gv.shape().to_vec(), dgamma)));
    grads.push((beta, Tensor::from_parts(gv.shape().to_vec(), dbeta)));
    grads
}
