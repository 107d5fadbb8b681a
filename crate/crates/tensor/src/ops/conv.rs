//! 2-D cross-correlation with zero padding, lowered to im2col + GEMM.

use crate::error::{check_dim, shape_err, Result, TensorError};
use crate::graph::{Graph, Op, Var};
use crate::real::{gemm, Mat, Real};
use crate::tensor::Tensor;

/// Square-kernel convolution geometry.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvSpec {
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    pub in_channels: usize,
    pub out_channels: usize,
}

impl ConvSpec {
    /// Stride 1, no padding.
    pub fn new(in_channels: usize, out_channels: usize, kernel: usize) -> Self {
        Self {
            kernel,
            stride: 1,
            padding: 0,
            in_channels,
            out_channels,
        }
    }

    /// Stride 1 with `kernel / 2` padding, so odd kernels keep the spatial size.
    pub fn same(in_channels: usize, out_channels: usize, kernel: usize) -> Self {
        Self::new(in_channels, out_channels, kernel).with_padding(kernel / 2)
    }

    pub fn with_stride(mut self, stride: usize) -> Self {
        self.stride = stride;
        self
    }

    pub fn with_padding(mut self, padding: usize) -> Self {
        self.padding = padding;
        self
    }

    pub fn weight_shape(&self) -> [usize; 4] {
        [self.out_channels, self.in_channels, self.kernel, self.kernel]
    }

    /// `floor((size + 2p - k) / s) + 1` along each axis.
    pub fn output_size(&self, h: usize, w: usize) -> Result<(usize, usize)> {
        if self.kernel == 0 || self.stride == 0 || self.in_channels == 0 || self.out_channels == 0
        {
            return Err(TensorError::InvalidArgument {
                op: "conv2d",
                detail: format!("degenerate spec {self:?}"),
            });
        }
        let axis = |len: usize| -> Option<usize> {
            let padded = len + 2 * self.padding;
            (padded >= self.kernel).then(|| (padded - self.kernel) / self.stride + 1)
        };
        match (axis(h), axis(w)) {
            (Some(ho), Some(wo)) => Ok((ho, wo)),
            _ => shape_err(
                "conv2d",
                format!(
                    "input {h}x{w} is smaller than kernel {} with padding {}",
                    self.kernel, self.padding
                ),
            ),
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct Geom {
    n: usize,
    cin: usize,
    h: usize,
    w: usize,
    cout: usize,
    k: usize,
    stride: usize,
    pad: usize,
    ho: usize,
    wo: usize,
    per_sample: bool,
}

impl Geom {
    fn patch_len(&self) -> usize {
        self.cin * self.k * self.k
    }

    fn out_plane(&self) -> usize {
        self.ho * self.wo
    }

    fn pointwise(&self) -> bool {
        self.k == 1 && self.stride == 1 && self.pad == 0
    }

    fn weight_len(&self) -> usize {
        self.cout * self.patch_len()
    }
}

/// Output columns `lo..hi` whose stride-1 input column `ox + kj - pad` is in bounds.
fn valid_span(g: &Geom, kj: usize) -> (usize, usize) {
    let lo = g.pad.saturating_sub(kj).min(g.wo);
    let hi = (g.w + g.pad).saturating_sub(kj).min(g.wo).max(lo);
    (lo, hi)
}

fn im2col<T: Real>(x: &[T], g: &Geom, cols: &mut [T]) {
    let plane = g.out_plane();
    for c in 0..g.cin {
        let src = &x[c * g.h * g.w..(c + 1) * g.h * g.w];
        for ki in 0..g.k {
            for kj in 0..g.k {
                let row = (c * g.k + ki) * g.k + kj;
                let dst = &mut cols[row * plane..(row + 1) * plane];
                for oy in 0..g.ho {
                    let iy = (oy * g.stride + ki) as isize - g.pad as isize;
                    let line = &mut dst[oy * g.wo..(oy + 1) * g.wo];
                    if iy < 0 || iy >= g.h as isize {
                        line.fill(T::zero());
                        continue;
                    }
                    let src_row = &src[iy as usize * g.w..(iy as usize + 1) * g.w];
                    if g.stride == 1 {
                        let (lo, hi) = valid_span(g, kj);
                        line[..lo].fill(T::zero());
                        line[hi..].fill(T::zero());
                        line[lo..hi].copy_from_slice(&src_row[lo + kj - g.pad..hi + kj - g.pad]);
                        continue;
                    }
                    for (ox, slot) in line.iter_mut().enumerate() {
                        let ix = (ox * g.stride + kj) as isize - g.pad as isize;
                        *slot = if ix < 0 || ix >= g.w as isize {
                            T::zero()
                        } else {
                            src_row[ix as usize]
                        };
                    }
                }
            }
        }
    }
}

fn col2im<T: Real>(cols: &[T], g: &Geom, dx: &mut [T]) {
    let plane = g.out_plane();
    for c in 0..g.cin {
        let dst = &mut dx[c * g.h * g.w..(c + 1) * g.h * g.w];
        for ki in 0..g.k {
            for kj in 0..g.k {
                let row = (c * g.k + ki) * g.k + kj;
                let src = &cols[row * plane..(row + 1) * plane];
                for oy in 0..g.ho {
                    let iy = (oy * g.stride + ki) as isize - g.pad as isize;
                    if iy < 0 || iy >= g.h as isize {
                        continue;
                    }
                    let dst_row = &mut dst[iy as usize * g.w..(iy as usize + 1) * g.w];
                    if g.stride == 1 {
                        let (lo, hi) = valid_span(g, kj);
                        let s_row = &src[oy * g.wo + lo..oy * g.wo + hi];
                        for (d, &v) in dst_row[lo + kj - g.pad..hi + kj - g.pad].iter_mut().zip(s_row) {
                            *d += v;
                        }
                        continue;
                    }
                    for ox in 0..g.wo {
                        let ix = (ox * g.stride + kj) as isize - g.pad as isize;
                        if ix >= 0 && (ix as usize) < g.w {
                            dst_row[ix as usize] += src[oy * g.wo + ox];
                        }
                    }
                }
            }
        }
    }
}

impl<T: Real> Graph<T> {
    /// Convolution with a weight tensor shared across the batch.
    ///
    /// `x: [N, Cin, H, W]`, `w: [Cout, Cin, k, k]`, `b: [Cout]`.
    pub fn conv2d(&mut self, x: Var, w: Var, b: Option<Var>, spec: ConvSpec) -> Result<Var> {
        self.conv2d_impl(x, w, b, spec, false)
    }

    /// Convolution where sample `n` uses its own kernel.
    ///
    /// `w: [N, Cout, Cin, k, k]`, `b: [N, Cout]`.
    pub fn conv2d_per_sample(
        &mut self,
        x: Var,
        w: Var,
        b: Option<Var>,
        spec: ConvSpec,
    ) -> Result<Var> {
        self.conv2d_impl(x, w, b, spec, true)
    }

    fn conv2d_impl(
        &mut self,
        x: Var,
        w: Var,
        b: Option<Var>,
        spec: ConvSpec,
        per_sample: bool,
    ) -> Result<Var> {
        let (n, cin, h, wd) = self.value(x).dims4("conv2d")?;
        check_dim("conv2d", "in_channels", spec.in_channels, cin)?;
        let (ho, wo) = spec.output_size(h, wd)?;
        let wshape = self.shape(w).to_vec();
        let expected: Vec<usize> = if per_sample {
            let mut s = vec![n];
            s.extend(spec.weight_shape());
            s
        } else {
            spec.weight_shape().to_vec()
        };
        if wshape != expected {
            return shape_err(
                "conv2d",
                format!("weight shape {wshape:?}, expected {expected:?}"),
            );
        }
        if let Some(b) = b {
            let bshape = self.shape(b);
            let expected: &[usize] = if per_sample {
                &[n, spec.out_channels]
            } else {
                &[spec.out_channels]
            };
            if bshape != expected {
                return shape_err(
                    "conv2d",
                    format!("bias shape {bshape:?}, expected {expected:?}"),
                );
            }
        }
        let geom = Geom {
            n,
            cin,
            h,
            w: wd,
            cout: spec.out_channels,
            k: spec.kernel,
            stride: spec.stride,
            pad: spec.padding,
            ho,
            wo,
            per_sample,
        };
        let out = forward(
            &geom,
            self.value(x).data(),
            self.value(w).data(),
            b.map(|b| self.value(b).data()),
        );
        let out = Tensor::from_parts(vec![n, geom.cout, ho, wo], out);
        let mut inputs = vec![x, w];
        inputs.extend(b);
        Ok(self.push(out, Op::Conv2d { x, w, b, geom }, &inputs))
    }
}

fn forward<T: Real>(g: &Geom, x: &[T], w: &[T], b: Option<&[T]>) -> Vec<T> {
    let in_len = g.cin * g.h * g.w;
    let plane = g.out_plane();
    let out_len = g.cout * plane;
    let mut out = vec![T::zero(); g.n * out_len];
    let mut cols = if g.pointwise() {
        Vec::new()
    } else {
        vec![T::zero(); g.patch_len() * plane]
    };
    for s in 0..g.n {
        let xs = &x[s * in_len..(s + 1) * in_len];
        let ws = if g.per_sample {
            &w[s * g.weight_len()..(s + 1) * g.weight_len()]
        } else {
            w
        };
        let os = &mut out[s * out_len..(s + 1) * out_len];
        let colm = if g.pointwise() {
            Mat::new(xs, g.cin, plane)
        } else {
            im2col(xs, g, &mut cols);
            Mat::new(&cols[..], g.patch_len(), plane)
        };
        gemm(Mat::new(ws, g.cout, g.patch_len()), colm, os, false);
        if let Some(b) = b {
            let bs = if g.per_sample {
                &b[s * g.cout..(s + 1) * g.cout]
            } else {
                b
            };
            for (co, &bias) in bs.iter().enumerate() {
                for v in &mut os[co * plane..(co + 1) * plane] {
                    *v += bias;
                }
            }
        }
    }
    out
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn backward<T: Real>(
    g: &Geom,
    x: Var,
    xv: &Tensor<T>,
    w: Var,
    wv: &Tensor<T>,
    b: Option<Var>,
    gout: &Tensor<T>,
    need: impl Fn(Var) -> bool,
) -> Vec<(Var, Tensor<T>)> {
    let in_len = g.cin * g.h * g.w;
    let plane = g.out_plane();
    let out_len = g.cout * plane;
    let go = gout.data();
    let xd = xv.data();
    let wd = wv.data();
    let mut grads = Vec::new();

    if need(w) {
        let mut dw = vec![T::zero(); wd.len()];
        let mut cols = if g.pointwise() {
            Vec::new()
        } else {
            vec![T::zero(); g.patch_len() * plane]
        };
        for s in 0..g.n {
            let xs = &xd[s * in_len..(s + 1) * in_len];
            let colm = if g.pointwise() {
                Mat::new(xs, g.cin, plane)
            } else {
                im2col(xs, g, &mut cols);
                Mat::new(&cols[..], g.patch_len(), plane)
            };
            let target = if g.per_sample {
                &mut dw[s * g.weight_len()..(s + 1) * g.weight_len()]
            } else {
                &mut dw[..]
            };
            let gs = Mat::new(&go[s * out_len..(s + 1) * out_len], g.cout, plane);
            gemm(gs, colm.t(), target, true);
        }
        grads.push((w, Tensor::from_parts(wv.shape().to_vec(), dw)));
    }

    if let Some(b) = b.filter(|&b| need(b)) {
        let per = if g.per_sample { g.n * g.cout } else { g.cout };
        let mut db = vec![T::zero(); per];
        for s in 0..g.n {
            for co in 0..g.cout {
                let slot = if g.per_sample { s * g.cout + co } else { co };
                let start = s * out_len + co * plane;
                db[slot] += go[start..start + plane].iter().copied().sum::<T>();
            }
        }
        let shape = if g.per_sample {
            vec![g.n, g.cout]
        } else {
            vec![g.cout]
        };
        grads.push((b, Tensor::from_parts(shape, db)));
    }

    if need(x) {
        let mut dx = vec![T::zero(); xd.len()];
        let mut dcols = if g.pointwise() {
            Vec::new()
        } else {
            vec![T::zero(); g.patch_len() * plane]
        };
        for s in 0..g.n {
            let ws = if g.per_sample {
                &wd[s * g.weight_len()..(s + 1) * g.weight_len()]
            } else {
                wd
            };
            let gs = Mat::new(&go[s * out_len..(s + 1) * out_len], g.cout, plane);
            let wt = Mat::new(ws, g.cout, g.patch_len()).t();
            let dxs = &mut dx[s * in_len..(s + 1) * in_len];
            if g.pointwise() {
                gemm(wt, gs, dxs, true);
            } else {
                gemm(wt, gs, &mut dcols, false);
                col2im(&dcols, g, dxs);
            }
        }
        grads.push((x, Tensor::from_parts(xv.shape().to_vec(), dx)));
    }
    grads
}
