use crate::error::{shape_err, Result};
use crate::graph::{Graph, Op, Var};
use crate::real::Real;
use crate::tensor::Tensor;

use super::elementwise::zip_map;

pub fn sigmoid_scalar<T: Real>(v: T) -> T {
    if v >= T::zero() {
        T::one() / (T::one() + (-v).exp())
    } else {
        let e = v.exp();
        e / (T::one() + e)
    }
}

impl<T: Real> Graph<T> {
    pub fn relu(&mut self, x: Var) -> Var {
        let out = self.value(x).map(|v| if v > T::zero() { v } else { T::zero() });
        self.push(out, Op::Relu { x }, &[x])
    }

    pub fn leaky_relu(&mut self, x: Var, slope: f64) -> Var {
        let slope = T::lit(slope);
        let out = self.value(x).map(|v| if v > T::zero() { v } else { v * slope });
        self.push(out, Op::LeakyRelu { x, slope }, &[x])
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let out = self.value(x).map(sigmoid_scalar);
        self.push(out, Op::Sigmoid { x }, &[x])
    }

    /// Softmax along `axis`, max-shifted for stability.
    pub fn softmax(&mut self, x: Var, axis: usize) -> Result<Var> {
        let xv = self.value(x);
        if axis >= xv.ndim() {
            return shape_err(
                "softmax",
                format!("axis {axis} out of range for shape {:?}", xv.shape()),
            );
        }
        let (outer, len, inner) = split_axis(xv.shape(), axis);
        let xd = xv.data();
        let mut out = vec![T::zero(); xd.len()];
        for o in 0..outer {
            for i in 0..inner {
                let idx = |k: usize| (o * len + k) * inner + i;
                let max = (0..len).fold(T::neg_infinity(), |m, k| m.max(xd[idx(k)]));
                let mut total = T::zero();
                for k in 0..len {
                    let e = (xd[idx(k)] - max).exp();
                    out[idx(k)] = e;
                    total += e;
                }
                for k in 0..len {
                    out[idx(k)] /= total;
                }
            }
        }
        let out = Tensor::from_parts(xv.shape().to_vec(), out);
        Ok(self.push(out, Op::Softmax { x, axis }, &[x]))
    }
}

fn split_axis(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

/// Subgradient 0 at the origin.
pub(crate) fn relu_backward<T: Real>(x: &Tensor<T>, gout: &Tensor<T>) -> Tensor<T> {
    zip_map(x, gout, |v, g| if v > T::zero() { g } else { T::zero() })
}

pub(crate) fn leaky_relu_backward<T: Real>(x: &Tensor<T>, slope: T, gout: &Tensor<T>) -> Tensor<T> {
    zip_map(x, gout, |v, g| if v > T::zero() { g } else { g * slope })
}

pub(crate) fn sigmoid_backward<T: Real>(y: &Tensor<T>, gout: &Tensor<T>) -> Tensor<T> {
    zip_map(y, gout, |s, g| g * s * (T::one() - s))
}

pub(crate) fn softmax_backward<T: Real>(y: &Tensor<T>, axis: usize, gout: &Tensor<T>) -> Tensor<T> {
    let (outer, len, inner) = split_axis(y.shape(), axis);
    let yd = y.data();
    let go = gout.data();
    let mut dx = vec![T::zero(); yd.len()];
    for o in 0..outer {
        for i in 0..inner {
            let idx = |k: usize| (o * len + k) * inner + i;
            let dot: T = (0..len).map(|k| yd[idx(k)] * go[idx(k)]).sum();
            for k in 0..len {
                dx[idx(k)] = yd[idx(k)] * (go[idx(k)] - dot);
            }
        }
    }
    Tensor::from_parts(y.shape().to_vec(), dx)
}
