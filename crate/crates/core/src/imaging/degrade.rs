use super::filters::bilinear_clamped;
use super::image::ImageGray;
use super::resize::{bicubic_plane, degrade_to_synthetic_lr};
use crate::error::{invalid, Result};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

/// Parameters of the simulated wide-field acquisition.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RealisticLrConfig {
    /// Largest displacement of the elastic warp, in HR pixels.
    pub max_displacement: f64,
    /// Side of the coarse control grid the displacement field is interpolated from.
    pub control_points: usize,
    pub gamma_min: f64,
    pub gamma_max: f64,
    /// Standard deviation of the unit-mean multiplicative speckle.
    pub speckle_sigma: f64,
}

impl Default for RealisticLrConfig {
    fn default() -> Self {
        Self {
            max_displacement: 2.0,
            control_points: 5,
            gamma_min: 0.8,
            gamma_max: 1.2,
            speckle_sigma: 0.1,
        }
    }
}

impl RealisticLrConfig {
    /// No warp, no gamma change, no noise.
    pub fn identity() -> Self {
        Self {
            max_displacement: 0.0,
            gamma_min: 1.0,
            gamma_max: 1.0,
            speckle_sigma: 0.0,
            ..Self::default()
        }
    }
}

/// Smooth displacement component: uniform control values bilinearly interpolated.
fn displacement_field(rng: &mut impl Rng, h: usize, w: usize, cfg: &RealisticLrConfig) -> Vec<f64> {
    let k = cfg.control_points.max(2);
    let grid: Vec<f64> = (0..k * k)
        .map(|_| rng.gen_range(-1.0..=1.0) * cfg.max_displacement)
        .collect();
    let mut field = Vec::with_capacity(h * w);
    for y in 0..h {
        let gy = y as f64 * (k - 1) as f64 / (h - 1) as f64;
        for x in 0..w {
            let gx = x as f64 * (k - 1) as f64 / (w - 1) as f64;
            field.push(bilinear_clamped(&grid, k, k, gy, gx));
        }
    }
    field
}

/// Warp, gamma jitter, speckle and half-resolution bicubic downsampling.
pub fn simulate_realistic_lr_with(
    hr: &ImageGray,
    rng: &mut impl Rng,
    cfg: &RealisticLrConfig,
) -> Result<ImageGray> {
    let (h, w) = hr.dims();
    if h % 2 != 0 || w % 2 != 0 {
        return invalid(format!("cannot halve odd dimensions {h}x{w}"));
    }
    if cfg.gamma_min <= 0.0 || cfg.gamma_min > cfg.gamma_max || cfg.speckle_sigma < 0.0 {
        return invalid(format!("invalid realistic-LR configuration {cfg:?}"));
    }
    let dy = displacement_field(rng, h, w, cfg);
    let dx = displacement_field(rng, h, w, cfg);
    let gamma = if cfg.gamma_max > cfg.gamma_min {
        rng.gen_range(cfg.gamma_min..=cfg.gamma_max)
    } else {
        cfg.gamma_min
    };
    let src = hr.pixels();
    let mut out = Vec::with_capacity(h * w);
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let mut v = if cfg.max_displacement > 0.0 {
                bilinear_clamped(src, h, w, y as f64 + dy[i], x as f64 + dx[i])
            } else {
                src[i]
            };
            if gamma != 1.0 {
                v = v.powf(gamma);
            }
            let noise: f64 = StandardNormal.sample(rng);
            if cfg.speckle_sigma > 0.0 {
                v *= 1.0 + cfg.speckle_sigma * noise;
            }
            out.push(v.clamp(0.0, 1.0));
        }
    }
    if cfg.max_displacement == 0.0 && gamma == 1.0 && cfg.speckle_sigma == 0.0 {
        return degrade_to_synthetic_lr(hr);
    }
    ImageGray::from_clamped(h / 2, w / 2, bicubic_plane(&out, h, w, h / 2, w / 2))
}

pub fn simulate_realistic_lr(hr: &ImageGray, rng: &mut impl Rng) -> Result<ImageGray> {
    simulate_realistic_lr_with(hr, rng, &RealisticLrConfig::default())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sample() -> ImageGray {
        ImageGray::from_fn(32, 32, |y, x| {
            0.5 + 0.4 * ((x as f64 * 0.4).sin() * (y as f64 * 0.3).cos())
        })
        .unwrap()
    }

    #[test]
    fn identity_configuration_matches_bicubic() {
        let hr = sample();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let real = simulate_realistic_lr_with(&hr, &mut rng, &RealisticLrConfig::identity()).unwrap();
        assert_eq!(real, degrade_to_synthetic_lr(&hr).unwrap());
    }

    #[test]
    fn seeded_and_reproducible() {
        let hr = sample();
        let a = simulate_realistic_lr(&hr, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        let b = simulate_realistic_lr(&hr, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        let c = simulate_realistic_lr(&hr, &mut ChaCha8Rng::seed_from_u64(6)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_eq!(a.dims(), (16, 16));
    }

    #[test]
    fn displacement_is_bounded_and_smooth() {
        let cfg = RealisticLrConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let f = displacement_field(&mut rng, 40, 40, &cfg);
        assert!(f.iter().all(|v| v.abs() <= 2.0));
        for y in 0..40 {
            for x in 1..40 {
                assert!((f[y * 40 + x] - f[y * 40 + x - 1]).abs() < 0.5);
            }
        }
    }

    #[test]
    fn mean_intensity_tracks_synthetic_lr() {
        let mut ratios = Vec::new();
        for seed in 0..100 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let hr = crate::imaging::generate_phantom(&mut rng, 64, 64).unwrap().image;
            let synth = degrade_to_synthetic_lr(&hr).unwrap();
            let real = simulate_realistic_lr(&hr, &mut rng).unwrap();
            ratios.push(real.mean() / synth.mean());
        }
        let avg = ratios.iter().sum::<f64>() / ratios.len() as f64;
        assert!((avg - 1.0).abs() <= 0.15, "mean ratio {avg}");
        assert!(ratios.iter().all(|r| r.is_finite()));
    }
}
