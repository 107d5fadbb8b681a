use crate::error::{invalid, Result};
use sasr_tensor::{Real, Tensor};

/// Smallest accepted image side.
pub const MIN_SIDE: usize = 16;

/// Single-channel image with pixels in `[0, 1]`, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageGray {
    height: usize,
    width: usize,
    pixels: Vec<f64>,
}

impl ImageGray {
    pub fn new(height: usize, width: usize, pixels: Vec<f64>) -> Result<Self> {
        if height < MIN_SIDE || width < MIN_SIDE {
            return invalid(format!(
                "image {height}x{width} is smaller than {MIN_SIDE}x{MIN_SIDE}"
            ));
        }
        if pixels.len() != height * width {
            return invalid(format!(
                "image {height}x{width} needs {} pixels, got {}",
                height * width,
                pixels.len()
            ));
        }
        if let Some(bad) = pixels.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return invalid(format!("pixel value {bad} outside [0, 1]"));
        }
        Ok(Self {
            height,
            width,
            pixels,
        })
    }

    pub fn constant(height: usize, width: usize, value: f64) -> Result<Self> {
        Self::new(height, width, vec![value; height * width])
    }

    pub fn from_fn(height: usize, width: usize, f: impl Fn(usize, usize) -> f64) -> Result<Self> {
        let pixels = (0..height * width).map(|i| f(i / width, i % width)).collect();
        Self::new(height, width, pixels)
    }

    /// Builds an image after clamping every value into `[0, 1]`.
    pub fn from_clamped(height: usize, width: usize, mut pixels: Vec<f64>) -> Result<Self> {
        for p in &mut pixels {
            *p = if p.is_nan() { 0.0 } else { p.clamp(0.0, 1.0) };
        }
        Self::new(height, width, pixels)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn into_pixels(self) -> Vec<f64> {
        self.pixels
    }

    pub fn get(&self, y: usize, x: usize) -> f64 {
        self.pixels[y * self.width + x]
    }

    /// Pixel lookup with coordinates clamped to the border.
    pub fn get_clamped(&self, y: isize, x: isize) -> f64 {
        let y = y.clamp(0, self.height as isize - 1) as usize;
        let x = x.clamp(0, self.width as isize - 1) as usize;
        self.pixels[y * self.width + x]
    }

    pub fn mean(&self) -> f64 {
        self.pixels.iter().sum::<f64>() / self.pixels.len() as f64
    }

    pub fn crop(&self, top: usize, left: usize, height: usize, width: usize) -> Result<Self> {
        if top + height > self.height || left + width > self.width {
            return invalid(format!(
                "crop {height}x{width} at ({top}, {left}) exceeds {}x{}",
                self.height, self.width
            ));
        }
        Self::from_fn(height, width, |y, x| self.get(top + y, left + x))
    }

    /// `[1, 1, H, W]` tensor of the pixels.
    pub fn to_tensor<T: Real>(&self) -> Tensor<T> {
        let data = self.pixels.iter().map(|&p| T::lit(p)).collect();
        Tensor::new(vec![1, 1, self.height, self.width], data).expect("shape matches pixels")
    }

    /// Reads a single-channel tensor (any leading unit dims), clamping into `[0, 1]`.
    pub fn from_tensor<T: Real>(t: &Tensor<T>) -> Result<Self> {
        let shape = t.shape();
        if shape.len() < 2 || shape[..shape.len() - 2].iter().any(|&d| d != 1) {
            return invalid(format!("tensor {shape:?} is not a single image"));
        }
        let (h, w) = (shape[shape.len() - 2], shape[shape.len() - 1]);
        Self::from_clamped(h, w, t.data().iter().map(|v| v.as_f64()).collect())
    }
}

/// Binary image; used both for edge maps and segmentation masks.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BinaryMask {
    height: usize,
    width: usize,
    pixels: Vec<bool>,
}

/// Binary edge map produced by an edge detector.
pub type EdgeMap = BinaryMask;

impl BinaryMask {
    pub fn new(height: usize, width: usize, pixels: Vec<bool>) -> Result<Self> {
        if pixels.len() != height * width {
            return invalid(format!(
                "mask {height}x{width} needs {} pixels, got {}",
                height * width,
                pixels.len()
            ));
        }
        Ok(Self {
            height,
            width,
            pixels,
        })
    }

    pub fn empty(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            pixels: vec![false; height * width],
        }
    }

    pub fn from_fn(height: usize, width: usize, f: impl Fn(usize, usize) -> bool) -> Self {
        Self {
            height,
            width,
            pixels: (0..height * width).map(|i| f(i / width, i % width)).collect(),
        }
    }

    /// Pixels strictly above `threshold`.
    pub fn threshold(img: &ImageGray, threshold: f64) -> Self {
        Self::from_fn(img.height(), img.width(), |y, x| img.get(y, x) > threshold)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn pixels(&self) -> &[bool] {
        &self.pixels
    }

    pub fn get(&self, y: usize, x: usize) -> bool {
        self.pixels[y * self.width + x]
    }

    pub fn set(&mut self, y: usize, x: usize, v: bool) {
        self.pixels[y * self.width + x] = v;
    }

    pub fn count(&self) -> usize {
        self.pixels.iter().filter(|&&p| p).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.pixels.iter().any(|&p| p)
    }

    /// `(row, col)` of every set pixel, row-major.
    pub fn points(&self) -> Vec<(usize, usize)> {
        (0..self.pixels.len())
            .filter(|&i| self.pixels[i])
            .map(|i| (i / self.width, i % self.width))
            .collect()
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.pixels.iter().map(|&p| if p { 1.0 } else { 0.0 }).collect()
    }

    pub fn to_image(&self) -> Result<ImageGray> {
        ImageGray::new(self.height, self.width, self.to_f64())
    }
}

/// One training triple: HR image, its bicubic LR version, and a realistic LR view.
#[derive(Clone, Debug, PartialEq)]
pub struct PairedSample {
    pub hr: ImageGray,
    pub synth_lr: ImageGray,
    pub real_lr: ImageGray,
    pub seed: u64,
}

impl PairedSample {
    pub fn new(hr: ImageGray, synth_lr: ImageGray, real_lr: ImageGray, seed: u64) -> Result<Self> {
        let half = (hr.height() / 2, hr.width() / 2);
        if hr.height() % 2 != 0 || hr.width() % 2 != 0 {
            return invalid(format!("HR image {:?} has odd dimensions", hr.dims()));
        }
        if synth_lr.dims() != half || real_lr.dims() != half {
            return invalid(format!(
                "LR images {:?} and {:?} must be half of HR {:?}",
                synth_lr.dims(),
                real_lr.dims(),
                hr.dims()
            ));
        }
        Ok(Self {
            hr,
            synth_lr,
            real_lr,
            seed,
        })
    }
}
