use crate::error::{shape_err, Result};
use crate::graph::{Graph, Op, Var};
use crate::real::Real;
use crate::tensor::Tensor;

impl<T: Real> Graph<T> {
    /// Channel-axis concatenation of 4-D tensors, in argument order.
    pub fn concat_channels(&mut self, xs: &[Var]) -> Result<Var> {
        let Some(&first) = xs.first() else {
            return shape_err("concat_channels", "no inputs");
        };
        let (n, _, h, w) = self.value(first).dims4("concat_channels")?;
        let mut total = 0;
        for &v in xs {
            let (vn, vc, vh, vw) = self.value(v).dims4("concat_channels")?;
            if (vn, vh, vw) != (n, h, w) {
                return shape_err(
                    "concat_channels",
                    format!("input {:?} does not match batch {n}, spatial {h}x{w}", self.shape(v)),
                );
            }
            total += vc;
        }
        let plane = h * w;
        let mut out = Vec::with_capacity(n * total * plane);
        for b in 0..n {
            for &v in xs {
                let t = self.value(v);
                let c = t.shape()[1];
                out.extend_from_slice(&t.data()[b * c * plane..(b + 1) * c * plane]);
            }
        }
        let out = Tensor::from_parts(vec![n, total, h, w], out);
        Ok(self.push(out, Op::Concat { xs: xs.to_vec() }, xs))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let out = self.value(x).clone().reshape(shape.to_vec())?;
        Ok(self.push(out, Op::Reshape { x }, &[x]))
    }

    /// Zero padding of `pad` pixels on every spatial border.
    pub fn pad2d(&mut self, x: Var, pad: usize) -> Result<Var> {
        let (n, c, h, w) = self.value(x).dims4("pad2d")?;
        let (ho, wo) = (h + 2 * pad, w + 2 * pad);
        let xd = self.value(x).data();
        let mut out = vec![T::zero(); n * c * ho * wo];
        for p in 0..n * c {
            for y in 0..h {
                let dst = (p * ho + y + pad) * wo + pad;
                out[dst..dst + w].copy_from_slice(&xd[(p * h + y) * w..][..w]);
            }
        }
        let out = Tensor::from_parts(vec![n, c, ho, wo], out);
        Ok(self.push(out, Op::Pad2d { x, pad }, &[x]))
    }
}

pub(crate) fn concat_backward<T: Real>(
    xs: &[Var],
    widths: &[usize],
    gout: &Tensor<T>,
) -> Vec<(Var, Tensor<T>)> {
    let [n, total, h, w] = gout.shape()[..] else {
        unreachable!()
    };
    let plane = h * w;
    let go = gout.data();
    let mut offset = 0;
    let mut grads = Vec::with_capacity(xs.len());
    for (&v, &c) in xs.iter().zip(widths) {
        let mut d = Vec::with_capacity(n * c * plane);
        for b in 0..n {
            let start = (b * total + offset) * plane;
            d.extend_from_slice(&go[start..start + c * plane]);
        }
        grads.push((v, Tensor::from_parts(vec![n, c, h, w], d)));
        offset += c;
    }
    grads
}

pub(crate) fn reshape_backward<T: Real>(x: &Tensor<T>, gout: &Tensor<T>) -> Tensor<T> {
    Tensor::from_parts(x.shape().to_vec(), gout.data().to_vec())
}

pub(crate) fn pad2d_backward<T: Real>(x: &Tensor<T>, pad: usize, gout: &Tensor<T>) -> Tensor<T> {
    let [n, c, h, w] = x.shape()[..] else {
        unreachable!()
    };
    let (ho, wo) = (h + 2 * pad, w + 2 * pad);
    let go = gout.data();
    let mut dx = Vec::with_capacity(x.numel());
    for p in 0..n * c {
        for y in 0..h {
            let src = (p * ho + y + pad) * wo + pad;
            dx.extend_from_slice(&go[src..src + w]);
        }
    }
    Tensor::from_parts(x.shape().to_vec(), dx)
}
