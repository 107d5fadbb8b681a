use super::image::ImageGray;
use crate::error::{invalid, Result};

const KEYS_A: f64 = -0.5;

/// Keys cubic convolution kernel.
pub fn cubic_weight(t: f64) -> f64 {
    let t = t.abs();
    if t <= 1.0 {
        ((KEYS_A + 2.0) * t - (KEYS_A + 3.0)) * t * t + 1.0
    } else if t < 2.0 {
        ((KEYS_A * t - 5.0 * KEYS_A) * t + 8.0 * KEYS_A) * t - 4.0 * KEYS_A
    } else {
        0.0
    }
}

/// Four source indices (edge-clamped) and weights for each output coordinate.
fn taps(input: usize, output: usize) -> Vec<([usize; 4], [f64; 4])> {
    let scale = input as f64 / output as f64;
    (0..output)
        .map(|o| {
            let src = (o as f64 + 0.5) * scale - 0.5;
            let base = src.floor();
            let frac = src - base;
            let mut idx = [0usize; 4];
            let mut wts = [0.0; 4];
            for k in 0..4 {
                let i = base as isize + k as isize - 1;
                idx[k] = i.clamp(0, input as isize - 1) as usize;
                wts[k] = cubic_weight(frac - (k as f64 - 1.0));
            }
            (idx, wts)
        })
        .collect()
}

/// Separable resampling of a raw row-major plane; no output clamping.
pub fn bicubic_plane(src: &[f64], h: usize, w: usize, out_h: usize, out_w: usize) -> Vec<f64> {
    let cols = taps(w, out_w);
    let rows = taps(h, out_h);
    let mut tmp = vec![0.0; h * out_w];
    for y in 0..h {
        let line = &src[y * w..(y + 1) * w];
        for (x, (idx, wts)) in cols.iter().enumerate() {
            tmp[y * out_w + x] = (0..4).map(|k| line[idx[k]] * wts[k]).sum();
        }
    }
    let mut out = vec![0.0; out_h * out_w];
    for (y, (idx, wts)) in rows.iter().enumerate() {
        for x in 0..out_w {
            out[y * out_w + x] = (0..4).map(|k| tmp[idx[k] * out_w + x] * wts[k]).sum();
        }
    }
    out
}

/// Bicubic resize with edge-clamped sampling; the result is clamped into `[0, 1]`.
pub fn bicubic_resize(img: &ImageGray, out_h: usize, out_w: usize) -> Result<ImageGray> {
    if out_h < 4 || out_w < 4 {
        return invalid(format!("bicubic target {out_h}x{out_w} is degenerate"));
    }
    let (h, w) = img.dims();
    ImageGray::from_clamped(out_h, out_w, bicubic_plane(img.pixels(), h, w, out_h, out_w))
}

/// Half-resolution bicubic degradation.
pub fn degrade_to_synthetic_lr(hr: &ImageGray) -> Result<ImageGray> {
    let (h, w) = hr.dims();
    if h % 2 != 0 || w % 2 != 0 {
        return invalid(format!("cannot halve odd dimensions {h}x{w}"));
    }
    bicubic_resize(hr, h / 2, w / 2)
}
