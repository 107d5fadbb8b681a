//! Synthetic angiography-like phantoms: a dark avascular zone near the center and a
//! branching vessel tree on a speckled background.

use super::image::{BinaryMask, ImageGray};
use crate::error::{invalid, Result};
use rand::Rng;
use rand_distr::{Distribution, Normal};

/// Fixed generator parameters; bump `VERSION` whenever any value changes.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PhantomConfig {
    /// Avascular zone radius as a fraction of the shorter side.
    pub faz_radius: (f64, f64),
    /// Maximum center offset of the avascular zone, as a fraction of the shorter side.
    pub faz_jitter: f64,
    pub roots: (usize, usize),
    /// Initial vessel width in pixels.
    pub root_width: (f64, f64),
    pub min_width: f64,
    /// Multiplicative width decay applied to each child branch.
    pub width_decay: f64,
    pub branch_prob: f64,
    pub max_depth: usize,
    /// Step budget of a child branch relative to its parent.
    pub length_decay: f64,
    /// Standard deviation of the per-step heading change, radians.
    pub wander: f64,
    pub background: f64,
    pub vessel_intensity: f64,
    pub speckle_sigma: f64,
    pub noise_sigma: f64,
}

impl PhantomConfig {
    pub const VERSION: u32 = 2;
}

impl Default for PhantomConfig {
    fn default() -> Self {
        Self {
            faz_radius: (0.07, 0.10),
            faz_jitter: 0.03,
            roots: (7, 10),
            root_width: (1.6, 2.6),
            min_width: 0.9,
            width_decay: 0.78,
            branch_prob: 0.02,
            max_depth: 5,
            length_decay: 0.5,
            wander: 0.12,
            background: 0.12,
            vessel_intensity: 0.85,
            speckle_sigma: 0.3,
            noise_sigma: 0.03,
        }
    }
}

/// A phantom image and its vessel ground truth.
#[derive(Clone, Debug, PartialEq)]
pub struct Phantom {
    pub image: ImageGray,
    pub vessels: BinaryMask,
    pub faz_center: (f64, f64),
    pub faz_radius: f64,
}

struct Canvas {
    h: usize,
    w: usize,
    vessel: Vec<f64>,
}

impl Canvas {
    /// Max-composites a Gaussian cross-section disc of the given width.
    fn stamp(&mut self, cy: f64, cx: f64, width: f64) {
        let sigma = width / 2.0;
        let r = (3.0 * sigma).ceil() as isize;
        let (iy, ix) = (cy.round() as isize, cx.round() as isize);
        for y in iy - r..=iy + r {
            for x in ix - r..=ix + r {
                if y < 0 || x < 0 || y >= self.h as isize || x >= self.w as isize {
                    continue;
                }
                let d2 = (y as f64 - cy).powi(2) + (x as f64 - cx).powi(2);
                let v = (-d2 / (2.0 * sigma * sigma)).exp();
                let slot = &mut self.vessel[y as usize * self.w + x as usize];
                if v > *slot {
                    *slot = v;
                }
            }
        }
    }
}

struct Grower<'a, R: Rng> {
    rng: &'a mut R,
    cfg: &'a PhantomConfig,
    canvas: Canvas,
    faz: (f64, f64, f64),
    heading_noise: Normal<f64>,
}

impl<R: Rng> Grower<'_, R> {
    fn inside(&self, y: f64, x: f64) -> bool {
        y >= -2.0 && x >= -2.0 && y <= self.canvas.h as f64 + 1.0 && x <= self.canvas.w as f64 + 1.0
    }

    fn grow(&mut self, mut y: f64, mut x: f64, mut heading: f64, width: f64, depth: usize, steps: f64) {
        let (fy, fx, fr) = self.faz;
        for _ in 0..steps as usize {
            if !self.inside(y, x) {
                return;
            }
            self.canvas.stamp(y, x, width);
            heading += self.heading_noise.sample(self.rng);
            // Steer outward whenever the walk drifts toward the avascular zone.
            let (ry, rx) = (y - fy, x - fx);
            let dist = ry.hypot(rx);
            if dist < fr * 1.6 {
                let outward = ry.atan2(rx);
                let diff = (outward - heading).sin().atan2((outward - heading).cos());
                heading += 0.3 * diff;
            }
            y += heading.sin();
            x += heading.cos();
            if depth < self.cfg.max_depth && self.rng.gen_bool(self.cfg.branch_prob) {
                let child = width * self.cfg.width_decay;
                if child >= self.cfg.min_width {
                    let side = if self.rng.gen_bool(0.5) { 1.0 } else { -1.0 };
                    let angle = heading + side * self.rng.gen_range(0.5..1.0);
                    self.grow(y, x, angle, child, depth + 1, steps * self.cfg.length_decay);
                }
            }
        }
    }
}

/// Generates a phantom of size `h x w` (both at least 64 and divisible by 16).
pub fn generate_phantom_with(
    rng: &mut impl Rng,
    h: usize,
    w: usize,
    cfg: &PhantomConfig,
) -> Result<Phantom> {
    if h < 64 || w < 64 || h % 16 != 0 || w % 16 != 0 {
        return invalid(format!(
            "phantom size {h}x{w} must be at least 64 and divisible by 16"
        ));
    }
    let side = h.min(w) as f64;
    let faz_r = side * rng.gen_range(cfg.faz_radius.0..=cfg.faz_radius.1);
    let fy = (h as f64 - 1.0) / 2.0 + side * rng.gen_range(-cfg.faz_jitter..=cfg.faz_jitter);
    let fx = (w as f64 - 1.0) / 2.0 + side * rng.gen_range(-cfg.faz_jitter..=cfg.faz_jitter);

    let mut grower = Grower {
        rng,
        cfg,
        canvas: Canvas {
            h,
            w,
            vessel: vec![0.0; h * w],
        },
        faz: (fy, fx, faz_r),
        heading_noise: Normal::new(0.0, cfg.wander).expect("finite wander"),
    };
    let roots = grower.rng.gen_range(cfg.roots.0..=cfg.roots.1);
    let offset = grower.rng.gen_range(0.0..std::f64::consts::TAU);
    for k in 0..roots {
        let theta = offset + k as f64 * std::f64::consts::TAU / roots as f64;
        let start = faz_r + 3.0;
        let (y, x) = (fy + start * theta.sin(), fx + start * theta.cos());
        let width = grower.rng.gen_range(cfg.root_width.0..=cfg.root_width.1);
        grower.grow(y, x, theta, width, 0, side);
    }

    let Grower { rng, canvas, .. } = grower;
    let speckle = Normal::new(1.0, cfg.speckle_sigma).expect("finite speckle");
    let noise = Normal::new(0.0, cfg.noise_sigma).expect("finite noise");
    let mut raw = Vec::with_capacity(h * w);
    let mut mask = BinaryMask::empty(h, w);
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let d = (y as f64 - fy).hypot(x as f64 - fx);
            // Soft falloff to zero vessel signal inside the avascular zone.
            let faz = ((d - faz_r) / 2.0).clamp(0.0, 1.0);
            let v = canvas.vessel[i] * faz;
            if v > 0.5 {
                mask.set(y, x, true);
            }
            let bg = cfg.background * (0.4 + 0.6 * faz);
            // Speckle lives in the background only; vessels keep a clean profile.
            let value = bg * speckle.sample(rng) + cfg.vessel_intensity * v + noise.sample(rng);
            raw.push(value);
        }
    }
    Ok(Phantom {
        image: ImageGray::from_clamped(h, w, raw)?,
        vessels: mask,
        faz_center: (fy, fx),
        faz_radius: faz_r,
    })
}

pub fn generate_phantom(rng: &mut impl Rng, h: usize, w: usize) -> Result<Phantom> {
    generate_phantom_with(rng, h, w, &PhantomConfig::default())
}
