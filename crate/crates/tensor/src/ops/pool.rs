use crate::error::{shape_err, Result};
use crate::graph::{Graph, Op, Var};
use crate::real::Real;
use crate::tensor::Tensor;

impl<T: Real> Graph<T> {
    /// 2x2 non-overlapping max. Ties resolve to the first position in row-major order.
    pub fn max_pool2(&mut self, x: Var) -> Result<Var> {
        let (n, c, h, w) = self.value(x).dims4("max_pool2")?;
        if h % 2 != 0 || w % 2 != 0 {
            return shape_err("max_pool2", format!("spatial size {h}x{w} is not even"));
        }
        let (ho, wo) = (h / 2, w / 2);
        let xd = self.value(x).data();
        let mut out = Vec::with_capacity(n * c * ho * wo);
        let mut argmax = Vec::with_capacity(n * c * ho * wo);
        for plane in 0..n * c {
            let base = plane * h * w;
            for oy in 0..ho {
                for ox in 0..wo {
                    let mut best = base + 2 * oy * w + 2 * ox;
                    for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                        let idx = base + (2 * oy + dy) * w + 2 * ox + dx;
                        if xd[idx] > xd[best] {
                            best = idx;
                        }
                    }
                    out.push(xd[best]);
                    argmax.push(best as u32);
                }
            }
        }
        let out = Tensor::from_parts(vec![n, c, ho, wo], out);
        Ok(self.push(out, Op::MaxPool2 { x, argmax }, &[x]))
    }

    /// Replicates each pixel into a 2x2 block.
    pub fn upsample_nearest2(&mut self, x: Var) -> Result<Var> {
        let (n, c, h, w) = self.value(x).dims4("upsample_nearest2")?;
        let xd = self.value(x).data();
        let (ho, wo) = (2 * h, 2 * w);
        let mut out = vec![T::zero(); n * c * ho * wo];
        for plane in 0..n * c {
            for y in 0..ho {
                let src = &xd[plane * h * w + (y / 2) * w..][..w];
                let dst = &mut out[plane * ho * wo + y * wo..][..wo];
                for (xo, v) in dst.iter_mut().enumerate() {
                    *v = src[xo / 2];
                }
            }
        }
        let out = Tensor::from_parts(vec![n, c, ho, wo], out);
        Ok(self.push(out, Op::UpsampleNearest2 { x }, &[x]))
    }

    /// Depth-to-space: `out[n, c, r*h + i, r*w + j] = in[n, c*r*r + i*r + j, h, w]`.
    pub fn pixel_shuffle(&mut self, x: Var, r: usize) -> Result<Var> {
        let out = pixel_shuffle(self.value(x), r)?;
        Ok(self.push(out, Op::PixelShuffle { x, r }, &[x]))
    }

    /// Spatial mean per channel: `[N, C, H, W] -> [N, C]`.
    pub fn global_avg_pool(&mut self, x: Var) -> Result<Var> {
        let (n, c, h, w) = self.value(x).dims4("global_avg_pool")?;
        let plane = h * w;
        let scale = T::lit(plane as f64);
        let xd = self.value(x).data();
        let out: Vec<T> = (0..n * c)
            .map(|p| xd[p * plane..(p + 1) * plane].iter().copied().sum::<T>() / scale)
            .collect();
        let out = Tensor::from_parts(vec![n, c], out);
        Ok(self.push(out, Op::GlobalAvgPool { x }, &[x]))
    }
}

pub fn pixel_shuffle<T: Real>(x: &Tensor<T>, r: usize) -> Result<Tensor<T>> {
    let (n, c, h, w) = x.dims4("pixel_shuffle")?;
    if r == 0 || c % (r * r) != 0 {
        return shape_err(
            "pixel_shuffle",
            format!("{c} channels not divisible by r^2 = {}", r * r),
        );
    }
    let co = c / (r * r);
    let (ho, wo) = (h * r, w * r);
    let xd = x.data();
    let mut out = vec![T::zero(); xd.len()];
    for b in 0..n {
        for ch in 0..co {
            for i in 0..r {
                for j in 0..r {
                    let src_c = ch * r * r + i * r + j;
                    let src = &xd[((b * c + src_c) * h) * w..][..h * w];
                    let dst = &mut out[((b * co + ch) * ho) * wo..][..ho * wo];
                    for y in 0..h {
                        for xx in 0..w {
                            dst[(r * y + i) * wo + r * xx + j] = src[y * w + xx];
                        }
                    }
                }
            }
        }
    }
    Ok(Tensor::from_parts(vec![n, co, ho, wo], out))
}

/// Exact inverse of [`pixel_shuffle`].
pub fn pixel_unshuffle<T: Real>(y: &Tensor<T>, r: usize) -> Tensor<T> {
    let [n, co, ho, wo] = y.shape()[..] else {
        panic!("pixel_unshuffle expects a 4-D tensor")
    };
    let (h, w, c) = (ho / r, wo / r, co * r * r);
    let yd = y.data();
    let mut out = vec![T::zero(); yd.len()];
    for b in 0..n {
        for ch in 0..co {
            for i in 0..r {
                for j in 0..r {
                    let dst_c = ch * r * r + i * r + j;
                    let src = &yd[((b * co + ch) * ho) * wo..][..ho * wo];
                    let dst = &mut out[((b * c + dst_c) * h) * w..][..h * w];
                    for yy in 0..h {
                        for xx in 0..w {
                            dst[yy * w + xx] = src[(r * yy + i) * wo + r * xx + j];
                        }
                    }
                }
            }
        }
    }
    Tensor::from_parts(vec![n, c, h, w], out)
}

pub(crate) fn max_pool2_backward<T: Real>(
    x: &Tensor<T>,
    argmax: &[u32],
    gout: &Tensor<T>,
) -> Tensor<T> {
    let mut dx = vec![T::zero(); x.numel()];
    for (&idx, &g) in argmax.iter().zip(gout.data()) {
        dx[idx as usize] += g;
    }
    Tensor::from_parts(x.shape().to_vec(), dx)
}

pub(crate) fn upsample_backward<T: Real>(x: &Tensor<T>, gout: &Tensor<T>) -> Tensor<T> {
    let [n, c, h, w] = x.shape()[..] else {
        unreachable!()
    };
    let wo = 2 * w;
    let go = gout.data();
    let mut dx = vec![T::zero(); x.numel()];
    for plane in 0..n * c {
        let src = &go[plane * 4 * h * w..][..4 * h * w];
        for y in 0..h {
            for xx in 0..w {
                let top = 2 * y * wo + 2 * xx;
                dx[plane * h * w + y * w + xx] =
                    src[top] + src[top + 1] + src[top + wo] + src[top + wo + 1];
            }
        }
    }
    Tensor::from_parts(x.shape().to_vec(), dx)
}

pub(crate) fn gap_backward<T: Real>(x: &Tensor<T>, gout: &Tensor<T>) -> Tensor<T> {
    let [_, _, h, w] = x.shape()[..] else {
        unreachable!()
    };
    let plane = h * w;
    let scale = T::lit(plane as f64);
    let mut dx = Vec::with_capacity(x.numel());
    for &g in gout.data() {
        dx.extend(std::iter::repeat_n(g / scale, plane));
    }
    Tensor::from_parts(x.shape().to_vec(), dx)
}
