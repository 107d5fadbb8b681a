use super::filters::{filter_clamped, gaussian_kernel, SOBEL_X, SOBEL_Y};
use super::image::{EdgeMap, ImageGray};
use crate::error::{invalid, Result};
use std::collections::VecDeque;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CannyParams {
    pub sigma: f64,
    /// Weak threshold as a fraction of the maximum gradient magnitude.
    pub low: f64,
    /// Strong threshold as a fraction of the maximum gradient magnitude.
    pub high: f64,
}

impl Default for CannyParams {
    fn default() -> Self {
        Self {
            sigma: 1.4,
            low: 0.1,
            high: 0.2,
        }
    }
}

const BLUR_SIZE: usize = 5;

/// Canny edge detector: Gaussian blur, Sobel gradients, non-maximum suppression
/// along four quantized directions, and hysteresis with 8-connectivity.
pub fn canny_edges(img: &ImageGray, params: CannyParams) -> Result<EdgeMap> {
    let CannyParams { sigma, low, high } = params;
    if !(0.0 < low && low < high && high <= 1.0) {
        return invalid(format!(
            "canny thresholds need 0 < low < high <= 1, got low={low} high={high}"
        ));
    }
    if !(sigma > 0.0) {
        return invalid(format!("canny sigma must be positive, got {sigma}"));
    }
    let (h, w) = img.dims();
    let blurred = filter_clamped(img.pixels(), h, w, &gaussian_kernel(BLUR_SIZE, sigma), BLUR_SIZE);
    let gx = filter_clamped(&blurred, h, w, &SOBEL_X, 3);
    let gy = filter_clamped(&blurred, h, w, &SOBEL_Y, 3);
    let mag: Vec<f64> = gx.iter().zip(&gy).map(|(a, b)| a.hypot(*b)).collect();
    let peak = mag.iter().copied().fold(0.0, f64::max);
    let mut edges = EdgeMap::empty(h, w);
    // Flat images have no meaningful relative threshold.
    if peak <= 1e-12 {
        return Ok(edges);
    }

    let mut thin = vec![0.0; h * w];
    for y in 1..h - 1 {
        for x in 1..w - 1 {
            let i = y * w + x;
            let m = mag[i];
            if m == 0.0 {
                continue;
            }
            let (dy, dx) = direction(gx[i], gy[i]);
            let ahead = mag[((y as isize + dy) as usize) * w + (x as isize + dx) as usize];
            let behind = mag[((y as isize - dy) as usize) * w + (x as isize - dx) as usize];
            // Asymmetric comparison keeps exactly one pixel across a plateau of two.
            if m > ahead && m >= behind {
                thin[i] = m;
            }
        }
    }

    let strong = high * peak;
    let weak = low * peak;
    let mut queue = VecDeque::new();
    for (i, &m) in thin.iter().enumerate() {
        if m >= strong {
            edges.set(i / w, i % w, true);
            queue.push_back(i);
        }
    }
    while let Some(i) = queue.pop_front() {
        let (y, x) = ((i / w) as isize, (i % w) as isize);
        for dy in -1..=1 {
            for dx in -1..=1 {
                let (ny, nx) = (y + dy, x + dx);
                if ny < 0 || nx < 0 || ny >= h as isize || nx >= w as isize {
                    continue;
                }
                let j = ny as usize * w + nx as usize;
                if !edges.get(ny as usize, nx as usize) && thin[j] >= weak {
                    edges.set(ny as usize, nx as usize, true);
                    queue.push_back(j);
                }
            }
        }
    }
    Ok(edges)
}

/// Neighbour offset `(dy, dx)` along the gradient, quantized to 0, 45, 90 or 135 degrees.
fn direction(gx: f64, gy: f64) -> (isize, isize) {
    let mut angle = gy.atan2(gx).to_degrees();
    if angle < 0.0 {
        angle += 180.0;
    }
    if !(22.5..157.5).contains(&angle) {
        (0, 1)
    } else if angle < 67.5 {
        (1, 1)
    } else if angle < 112.5 {
        (1, 0)
    } else {
        (1, -1)
    }
}
