/// Normalized `size x size` Gaussian kernel, row-major.
pub fn gaussian_kernel(size: usize, sigma: f64) -> Vec<f64> {
    let c = (size as f64 - 1.0) / 2.0;
    let one: Vec<f64> = (0..size)
        .map(|i| (-((i as f64 - c).powi(2)) / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = one.iter().sum();
    let mut k = Vec::with_capacity(size * size);
    for a in &one {
        for b in &one {
            k.push(a * b / (total * total));
        }
    }
    k
}

pub const SOBEL_X: [f64; 9] = [-1.0, 0.0, 1.0, -2.0, 0.0, 2.0, -1.0, 0.0, 1.0];
pub const SOBEL_Y: [f64; 9] = [-1.0, -2.0, -1.0, 0.0, 0.0, 0.0, 1.0, 2.0, 1.0];

/// Same-size cross-correlation with border replication.
pub fn filter_clamped(src: &[f64], h: usize, w: usize, kernel: &[f64], size: usize) -> Vec<f64> {
    let r = (size / 2) as isize;
    let mut out = vec![0.0; h * w];
    for y in 0..h as isize {
        for x in 0..w as isize {
            let mut acc = 0.0;
            for ky in 0..size as isize {
                let sy = (y + ky - r).clamp(0, h as isize - 1) as usize;
                for kx in 0..size as isize {
                    let sx = (x + kx - r).clamp(0, w as isize - 1) as usize;
                    acc += kernel[(ky * size as isize + kx) as usize] * src[sy * w + sx];
                }
            }
            out[y as usize * w + x as usize] = acc;
        }
    }
    out
}

/// Bilinear sample at fractional `(y, x)`, with coordinates clamped to the image.
pub fn bilinear_clamped(src: &[f64], h: usize, w: usize, y: f64, x: f64) -> f64 {
    let y = y.clamp(0.0, (h - 1) as f64);
    let x = x.clamp(0.0, (w - 1) as f64);
    let y0 = y.floor() as usize;
    let x0 = x.floor() as usize;
    let y1 = (y0 + 1).min(h - 1);
    let x1 = (x0 + 1).min(w - 1);
    let fy = y - y0 as f64;
    let fx = x - x0 as f64;
    let top = src[y0 * w + x0] * (1.0 - fx) + src[y0 * w + x1] * fx;
    let bottom = src[y1 * w + x0] * (1.0 - fx) + src[y1 * w + x1] * fx;
    top * (1.0 - fy) + bottom * fy
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gaussian_normalized_and_symmetric() {
        let k = gaussian_kernel(5, 1.4);
        assert!((k.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert_eq!(k[0], k[24]);
        assert_eq!(k[4], k[20]);
        assert!(k[12] > k[11]);
    }

    #[test]
    fn bilinear_on_grid_is_exact() {
        let src: Vec<f64> = (0..12).map(|v| v as f64).collect();
        assert_eq!(bilinear_clamped(&src, 3, 4, 1.0, 2.0), 6.0);
        assert_eq!(bilinear_clamped(&src, 3, 4, 0.5, 0.5), 2.5);
        assert_eq!(bilinear_clamped(&src, 3, 4, -3.0, 9.0), 3.0);
    }
}
