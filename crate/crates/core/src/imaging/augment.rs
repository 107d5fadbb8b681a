use super::filters::bilinear_clamped;
use super::image::ImageGray;
use crate::error::Result;
use rand::Rng;

/// Rotation by `degrees` about the image center, bilinear sampling, border values
/// extended outward.
pub fn rotate(img: &ImageGray, degrees: f64) -> Result<ImageGray> {
    if degrees == 0.0 {
        return Ok(img.clone());
    }
    let (h, w) = img.dims();
    let (sin, cos) = degrees.to_radians().sin_cos();
    let cy = (h as f64 - 1.0) / 2.0;
    let cx = (w as f64 - 1.0) / 2.0;
    let src = img.pixels();
    let mut out = Vec::with_capacity(h * w);
    for y in 0..h {
        for x in 0..w {
            let dy = y as f64 - cy;
            let dx = x as f64 - cx;
            // Inverse mapping: rotate the output coordinate back by -degrees.
            let sx = cos * dx + sin * dy + cx;
            let sy = -sin * dx + cos * dy + cy;
            out.push(bilinear_clamped(src, h, w, sy, sx));
        }
    }
    ImageGray::from_clamped(h, w, out)
}

/// Angle drawn uniformly from `[-max_deg, max_deg]`.
pub fn random_angle(rng: &mut impl Rng, max_deg: f64) -> f64 {
    if max_deg <= 0.0 {
        return 0.0;
    }
    rng.gen_range(-max_deg..=max_deg)
}

pub fn rotate_random(img: &ImageGray, rng: &mut impl Rng, max_deg: f64) -> Result<ImageGray> {
    rotate(img, random_angle(rng, max_deg))
}
