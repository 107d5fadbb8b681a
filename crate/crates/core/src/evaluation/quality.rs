use crate::error::{invalid, Result};
use crate::imaging::ImageGray;
use crate::losses::ssim_mean;
use sasr_tensor::Graph;

/// Value reported for identical images, whose PSNR is unbounded.
pub const PSNR_CAP: f64 = 99.0;

fn same_dims(f: &ImageGray, g: &ImageGray) -> Result<()> {
    if f.dims() != g.dims() {
        return invalid(format!("image dims differ: {:?} vs {:?}", f.dims(), g.dims()));
    }
    Ok(())
}

/// PSNR of two equally long signals against an arbitrary peak.
pub fn psnr_with_peak(a: &[f64], b: &[f64], peak: f64) -> Result<f64> {
    if a.len() != b.len() || a.is_empty() {
        return invalid(format!("psnr over {} vs {} samples", a.len(), b.len()));
    }
    let mse = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.len() as f64;
    if mse == 0.0 {
        return Ok(PSNR_CAP);
    }
    Ok((10.0 * (peak * peak / mse).log10()).min(PSNR_CAP))
}

/// PSNR in dB with unit peak.
pub fn psnr(f: &ImageGray, g: &ImageGray) -> Result<f64> {
    same_dims(f, g)?;
    psnr_with_peak(f.pixels(), g.pixels(), 1.0)
}

/// Mean local SSIM; the same computation as the training loss, in double precision.
pub fn ssim_metric(f: &ImageGray, g: &ImageGray) -> Result<f64> {
    same_dims(f, g)?;
    let mut graph = Graph::<f64>::new();
    let a = graph.constant(f.to_tensor());
    let b = graph.constant(g.to_tensor());
    let s = ssim_mean(&mut graph, a, b)?;
    Ok(graph.value(s).item())
}
