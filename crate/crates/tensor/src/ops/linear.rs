use crate::error::{check_dim, Result};
use crate::graph::{Graph, Op, Var};
use crate::real::{gemm, Mat, Real};
use crate::tensor::Tensor;

impl<T: Real> Graph<T> {
    /// Affine map `y = x W^T + b` with `x: [N, Din]`, `W: [Dout, Din]`, `b: [Dout]`.
    pub fn linear(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
        let (n, din) = self.value(x).dims2("linear")?;
        let (dout, win) = self.value(w).dims2("linear")?;
        check_dim("linear", "in_features", win, din)?;
        if let Some(b) = b {
            check_dim("linear", "bias", dout, self.value(b).numel())?;
        }
        let mut out = vec![T::zero(); n * dout];
        gemm(
            Mat::new(self.value(x).data(), n, din),
            Mat::new(self.value(w).data(), dout, din).t(),
            &mut out,
            false,
        );
        if let Some(b) = b {
            let bd = self.value(b).data();
            for row in out.chunks_mut(dout) {
                for (v, &bias) in row.iter_mut().zip(bd) {
                    *v += bias;
                }
            }
        }
        let out = Tensor::from_parts(vec![n, dout], out);
        let mut inputs = vec![x, w];
        inputs.extend(b);
        Ok(self.push(out, Op::Linear { x, w, b }, &inputs))
    }

    /// `[M, K] x [K, N] -> [M, N]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.value(a).dims2("matmul")?;
        let (k2, n) = self.value(b).dims2("matmul")?;
        check_dim("matmul", "inner", k, k2)?;
        let mut out = vec![T::zero(); m * n];
        gemm(
            Mat::new(self.value(a).data(), m, k),
            Mat::new(self.value(b).data(), k, n),
            &mut out,
            false,
        );
        let out = Tensor::from_parts(vec![m, n], out);
        Ok(self.push(out, Op::MatMul { a, b }, &[a, b]))
    }
}

pub(crate) fn linear_backward<T: Real>(
    x: Var,
    xv: &Tensor<T>,
    w: Var,
    wv: &Tensor<T>,
    b: Option<Var>,
    gout: &Tensor<T>,
    need: impl Fn(Var) -> bool,
) -> Vec<(Var, Tensor<T>)> {
    let (n, din) = (xv.shape()[0], xv.shape()[1]);
    let dout = wv.shape()[0];
    let go = Mat::new(gout.data(), n, dout);
    let mut grads = Vec::new();
    if need(x) {
        let mut dx = vec![T::zero(); n * din];
        gemm(go, Mat::new(wv.data(), dout, din), &mut dx, false);
        grads.push((x, Tensor::from_parts(xv.shape().to_vec(), dx)));
    }
    if need(w) {
        let mut dw = vec![T::zero(); dout * din];
        gemm(go.t(), Mat::new(xv.data(), n, din), &mut dw, false);
        grads.push((w, Tensor::from_parts(wv.shape().to_vec(), dw)));
    }
    if let Some(b) = b.filter(|&b| need(b)) {
        let mut db = vec![T::zero(); dout];
        for row in gout.data().chunks(dout) {
            for (acc, &g) in db.iter_mut().zip(row) {
                *acc += g;
            }
        }
        grads.push((b, Tensor::from_parts(vec![dout], db)));
    }
    grads
}

pub(crate) fn matmul_backward<T: Real>(
    a: Var,
    av: &Tensor<T>,
    b: Var,
    bv: &Tensor<T>,
    gout: &Tensor<T>,
    need: impl Fn(Var) -> bool,
) -> Vec<(Var, Tensor<T>)> {
    let (m, k) = (av.shape()[0], av.shape()[1]);
    let n = bv.shape()[1];
    let go = Mat::new(gout.data(), m, n);
    let mut grads = Vec::new();
    if need(a) {
        let mut da = vec![T::zero(); m * k];
        gemm(go, Mat::new(bv.data(), k, n).t(), &mut da, false);
        grads.push((a, Tensor::from_parts(vec![m, k], da)));
    }
    if need(b) {
        let mut db = vec![T::zero(); k * n];
        gemm(Mat::new(av.data(), m, k).t(), go, &mut db, false);
        grads.push((b, Tensor::from_parts(vec![k, n], db)));
    }
    grads
}
