//! Reconstruction, structural, adversarial and sparse edge-aware losses.

use crate::error::{invalid, Result};
use crate::imaging::filters::{gaussian_kernel, SOBEL_X, SOBEL_Y};
use crate::imaging::tiles::tile_patches;
use crate::imaging::EdgeMap;
use crate::models::SCALE;
use sasr_tensor::{ConvSpec, Graph, Real, Tensor, Var};

/// Probabilities are clamped to `[PROB_EPS, 1 - PROB_EPS]` before taking logs.
pub const PROB_EPS: f64 = 1e-7;

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_C1: f64 = 0.01 * 0.01;
pub const SSIM_C2: f64 = 0.03 * 0.03;

const EDGE_BLUR: usize = 5;
const EDGE_SIGMA: f64 = 1.0;
const EDGE_DELTA: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossWeights {
    pub mse: f64,
    pub ssim: f64,
    pub adv: f64,
    pub se: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            mse: 1.0,
            ssim: 0.5,
            adv: 1.0,
            se: 0.1,
        }
    }
}

/// Scalar values of the individual loss terms.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LossComponents {
    pub mse: f64,
    pub ssim: f64,
    pub adv: f64,
    pub se: f64,
}

impl LossComponents {
    pub fn sr(&self, w: &LossWeights) -> f64 {
        w.mse * self.mse + w.ssim * self.ssim
    }

    pub fn total(&self, w: &LossWeights) -> f64 {
        self.sr(w) + w.adv * self.adv + w.se * self.se
    }

    pub fn all_finite(&self) -> bool {
        [self.mse, self.ssim, self.adv, self.se]
            .iter()
            .all(|v| v.is_finite())
    }
}

fn kernel_tensor<T: Real>(shape: Vec<usize>, values: &[f64]) -> Tensor<T> {
    Tensor::new(shape, values.iter().map(|&v| T::lit(v)).collect()).expect("kernel shape")
}

fn single_channel(g: &Graph<impl Real>, x: Var, op: &str) -> Result<()> {
    let s = g.shape(x);
    if s.len() != 4 || s[1] != 1 {
        return invalid(format!("{op} expects [N, 1, H, W], got {s:?}"));
    }
    Ok(())
}

fn same_shape(g: &Graph<impl Real>, a: Var, b: Var, op: &str) -> Result<()> {
    if g.shape(a) != g.shape(b) {
        return invalid(format!(
            "{op}: shapes {:?} and {:?} differ",
            g.shape(a),
            g.shape(b)
        ));
    }
    Ok(())
}

/// `1 - x`.
fn one_minus<T: Real>(g: &mut Graph<T>, x: Var) -> Var {
    let neg = g.mul_scalar(x, -1.0);
    g.add_scalar(neg, 1.0)
}

/// Mean of squared differences.
pub fn loss_mse<T: Real>(g: &mut Graph<T>, pred: Var, target: Var) -> Result<Var> {
    same_shape(g, pred, target, "loss_mse")?;
    let d = g.sub(pred, target)?;
    let sq = g.square(d);
    Ok(g.mean(sq))
}

/// Mean local SSIM over all valid positions of an 11x11 Gaussian window.
pub fn ssim_mean<T: Real>(g: &mut Graph<T>, a: Var, b: Var) -> Result<Var> {
    same_shape(g, a, b, "ssim")?;
    single_channel(g, a, "ssim")?;
    let window = g.constant(kernel_tensor(
        vec![1, 1, SSIM_WINDOW, SSIM_WINDOW],
        &gaussian_kernel(SSIM_WINDOW, SSIM_SIGMA),
    ));
    let spec = ConvSpec::new(1, 1, SSIM_WINDOW);
    let blur = |g: &mut Graph<T>, x: Var| g.conv2d(x, window, None, spec);

    let mu_a = blur(g, a)?;
    let mu_b = blur(g, b)?;
    let aa = g.square(a);
    let bb = g.square(b);
    let ab = g.mul(a, b)?;
    let e_aa = blur(g, aa)?;
    let e_bb = blur(g, bb)?;
    let e_ab = blur(g, ab)?;

    let mu_aa = g.square(mu_a);
    let mu_bb = g.square(mu_b);
    let mu_ab = g.mul(mu_a, mu_b)?;
    let var_a = g.sub(e_aa, mu_aa)?;
    let var_b = g.sub(e_bb, mu_bb)?;
    let cov = g.sub(e_ab, mu_ab)?;

    let l_num = g.mul_scalar(mu_ab, 2.0);
    let l_num = g.add_scalar(l_num, SSIM_C1);
    let c_num = g.mul_scalar(cov, 2.0);
    let c_num = g.add_scalar(c_num, SSIM_C2);
    let l_den = g.add(mu_aa, mu_bb)?;
    let l_den = g.add_scalar(l_den, SSIM_C1);
    let c_den = g.add(var_a, var_b)?;
    let c_den = g.add_scalar(c_den, SSIM_C2);

    let num = g.mul(l_num, c_num)?;
    let den = g.mul(l_den, c_den)?;
    let map = g.div(num, den)?;
    Ok(g.mean(map))
}

/// `1 - SSIM`.
pub fn loss_ssim<T: Real>(g: &mut Graph<T>, pred: Var, target: Var) -> Result<Var> {
    let s = ssim_mean(g, pred, target)?;
    Ok(one_minus(g, s))
}

pub fn loss_sr<T: Real>(g: &mut Graph<T>, pred: Var, target: Var, w: &LossWeights) -> Result<Var> {
    let mse = loss_mse(g, pred, target)?;
    let ssim = loss_ssim(g, pred, target)?;
    weighted_sum(g, &[(mse, w.mse), (ssim, w.ssim)])
}

fn weighted_sum<T: Real>(g: &mut Graph<T>, terms: &[(Var, f64)]) -> Result<Var> {
    let mut acc: Option<Var> = None;
    for &(v, w) in terms {
        let t = g.mul_scalar(v, w);
        acc = Some(match acc {
            Some(a) => g.add(a, t)?,
            None => t,
        });
    }
    acc.map_or_else(|| invalid("empty weighted sum"), Ok)
}

/// `l_mse*L_mse + l_ssim*L_ssim + l_adv*L_adv + l_se*L_se`; absent terms count as zero.
pub fn loss_total<T: Real>(
    g: &mut Graph<T>,
    w: &LossWeights,
    mse: Var,
    ssim: Var,
    adv: Option<Var>,
    se: Option<Var>,
) -> Result<Var> {
    let mut terms = vec![(mse, w.mse), (ssim, w.ssim)];
    terms.extend(adv.map(|v| (v, w.adv)));
    terms.extend(se.map(|v| (v, w.se)));
    weighted_sum(g, &terms)
}

fn check_probabilities<T: Real>(g: &Graph<T>, x: Var, op: &str) -> Result<()> {
    if let Some(bad) = g
        .value(x)
        .data()
        .iter()
        .find(|v| v.is_nan() || **v < T::zero() || **v > T::one())
    {
        return invalid(format!("{op}: {bad} is not a probability"));
    }
    Ok(())
}

fn clamped_log<T: Real>(g: &mut Graph<T>, p: Var) -> Var {
    let c = g.clamp(p, PROB_EPS, 1.0 - PROB_EPS);
    g.log(c)
}

/// `-(mean log D(G(D_LR)) + mean log(1 - D(G(I_LR))))`.
pub fn loss_adv_discriminator<T: Real>(
    g: &mut Graph<T>,
    d_on_synth_recon: Var,
    d_on_real_recon: Var,
) -> Result<Var> {
    check_probabilities(g, d_on_synth_recon, "loss_adv_discriminator")?;
    check_probabilities(g, d_on_real_recon, "loss_adv_discriminator")?;
    let real_term = clamped_log(g, d_on_synth_recon);
    let real_term = g.mean(real_term);
    let fake = one_minus(g, d_on_real_recon);
    let fake_term = clamped_log(g, fake);
    let fake_term = g.mean(fake_term);
    let sum = g.add(real_term, fake_term)?;
    Ok(g.mul_scalar(sum, -1.0))
}

/// Non-saturating generator objective `-mean log D(G(I_LR))`.
pub fn loss_adv_generator<T: Real>(g: &mut Graph<T>, d_on_real_recon: Var) -> Result<Var> {
    check_probabilities(g, d_on_real_recon, "loss_adv_generator")?;
    let l = clamped_log(g, d_on_real_recon);
    let m = g.mean(l);
    Ok(g.mul_scalar(m, -1.0))
}

/// Which side of the threshold receives weight.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum ShrinkPolarity {
    /// `max(d - l, 0) / (|d - l| + eps)`: patches whose edges differ by more than `l`.
    #[default]
    AboveThreshold,
    /// `max(l - d, 0) / (|d - l| + eps)`: patches whose edges agree to within `l`.
    BelowThreshold,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ShrinkParams {
    /// Patch side on the LR grid.
    pub n: usize,
    pub lambda: f64,
    pub epsilon: f64,
    pub polarity: ShrinkPolarity,
}

impl Default for ShrinkParams {
    fn default() -> Self {
        Self {
            n: 16,
            lambda: 0.05,
            epsilon: 1e-12,
            polarity: ShrinkPolarity::AboveThreshold,
        }
    }
}

/// Hard shrinkage of one patch distance.
pub fn shrink(d: f64, lambda: f64, epsilon: f64, polarity: ShrinkPolarity) -> f64 {
    let excess = match polarity {
        ShrinkPolarity::AboveThreshold => d - lambda,
        ShrinkPolarity::BelowThreshold => lambda - d,
    };
    excess.max(0.0) / ((d - lambda).abs() + epsilon)
}

/// Per-patch edge distances and shrinkage weights on a row-major tile grid.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseWeightGrid {
    pub n: usize,
    pub rows: usize,
    pub cols: usize,
    pub d: Vec<f64>,
    pub w_hat: Vec<f64>,
    pub lambda: f64,
    pub epsilon: f64,
}

impl SparseWeightGrid {
    /// Number of patches `T`.
    pub fn len(&self) -> usize {
        self.d.len()
    }

    pub fn is_empty(&self) -> bool {
        self.d.is_empty()
    }

    pub fn active(&self) -> usize {
        self.w_hat.iter().filter(|&&w| w > 0.0).count()
    }
}

/// Mean squared difference between corresponding `n x n` edge patches, then shrinkage.
pub fn sparse_weights(
    edges_synth: &EdgeMap,
    edges_real: &EdgeMap,
    params: &ShrinkParams,
) -> Result<SparseWeightGrid> {
    if edges_synth.dims() != edges_real.dims() {
        return invalid(format!(
            "edge maps differ in size: {:?} vs {:?}",
            edges_synth.dims(),
            edges_real.dims()
        ));
    }
    let (h, w) = edges_synth.dims();
    let n = params.n;
    let a = tile_patches(&edges_synth.to_f64(), h, w, n)?;
    let b = tile_patches(&edges_real.to_f64(), h, w, n)?;
    let d: Vec<f64> = a
        .iter()
        .zip(&b)
        .map(|(pa, pb)| {
            pa.iter().zip(pb).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / (n * n) as f64
        })
        .collect();
    let w_hat = d
        .iter()
        .map(|&d| shrink(d, params.lambda, params.epsilon, params.polarity))
        .collect();
    Ok(SparseWeightGrid {
        n,
        rows: h / n,
        cols: w / n,
        d,
        w_hat,
        lambda: params.lambda,
        epsilon: params.epsilon,
    })
}

/// Differentiable edge strength: 5x5 Gaussian, Sobel, smoothed magnitude scaled
/// into `[0, 1]`, zero-padded back to the input size.
pub fn soft_edge_map<T: Real>(g: &mut Graph<T>, x: Var) -> Result<Var> {
    single_channel(g, x, "soft_edge_map")?;
    let blur = g.constant(kernel_tensor(
        vec![1, 1, EDGE_BLUR, EDGE_BLUR],
        &gaussian_kernel(EDGE_BLUR, EDGE_SIGMA),
    ));
    let sobel: Vec<f64> = SOBEL_X.iter().chain(&SOBEL_Y).copied().collect();
    let sobel = g.constant(kernel_tensor(vec![2, 1, 3, 3], &sobel));
    let merge = g.constant(Tensor::ones([1, 2, 1, 1]));

    let smooth = g.conv2d(x, blur, None, ConvSpec::new(1, 1, EDGE_BLUR))?;
    let grads = g.conv2d(smooth, sobel, None, ConvSpec::new(1, 2, 3))?;
    let sq = g.square(grads);
    let energy = g.conv2d(sq, merge, None, ConvSpec::new(2, 1, 1))?;
    let energy = g.add_scalar(energy, EDGE_DELTA);
    let mag = g.sqrt(energy);
    let mag = g.add_scalar(mag, -EDGE_DELTA.sqrt());
    // Sobel components are each bounded by 4 on [0, 1] images.
    let mag = g.mul_scalar(mag, 1.0 / (4.0 * 2f64.sqrt()));
    Ok(g.pad2d(mag, (EDGE_BLUR - 1) / 2 + 1)?)
}

/// `sum_t w_t * mean over HR patch t of (E(reference) - E(recon))^2`, averaged over the batch.
///
/// `grids[i]` holds the LR-grid weights of sample `i`; each LR patch of side `n`
/// covers an HR patch of side `2n`.
pub fn loss_sparse_edge<T: Real>(
    g: &mut Graph<T>,
    recon: Var,
    reference: Var,
    grids: &[SparseWeightGrid],
) -> Result<Var> {
    same_shape(g, recon, reference, "loss_sparse_edge")?;
    single_channel(g, recon, "loss_sparse_edge")?;
    let (n, h, w) = {
        let s = g.shape(recon);
        (s[0], s[2], s[3])
    };
    if grids.len() != n {
        return invalid(format!("{} weight grids for a batch of {n}", grids.len()));
    }
    let mut mask = Vec::with_capacity(n * h * w);
    for grid in grids {
        let side = grid.n * SCALE;
        if grid.rows * side != h || grid.cols * side != w {
            return invalid(format!(
                "weight grid {}x{} of side {side} does not tile {h}x{w}",
                grid.rows, grid.cols
            ));
        }
        let area = (side * side) as f64;
        for y in 0..h {
            for x in 0..w {
                let t = (y / side) * grid.cols + x / side;
                mask.push(T::lit(grid.w_hat[t] / area));
            }
        }
    }
    let mask = g.constant(Tensor::new(vec![n, 1, h, w], mask)?);
    let e_rec = soft_edge_map(g, recon)?;
    let e_ref = soft_edge_map(g, reference)?;
    let d = g.sub(e_ref, e_rec)?;
    let sq = g.square(d);
    let weighted = g.mul(sq, mask)?;
    let total = g.sum(weighted);
    Ok(g.mul_scalar(total, 1.0 / n as f64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use sasr_tensor::grad_check;

    fn value(g: &Graph<f64>, v: Var) -> f64 {
        g.value(v).item()
    }

    fn img(shape: &[usize], seed: u64) -> Tensor<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Tensor::from_fn(shape.to_vec(), |_| rng.gen_range(0.05..0.95))
    }

    #[test]
    fn mse_values_and_gradient() {
        let mut g = Graph::<f64>::new();
        let a = g.param(Tensor::new([1, 1, 2, 2], vec![0.1, 0.2, 0.3, 0.4]).unwrap());
        let b = g.constant(Tensor::new([1, 1, 2, 2], vec![0.4, 0.5, 0.6, 0.7]).unwrap());
        let l = loss_mse(&mut g, a, b).unwrap();
        assert!((value(&g, l) - 0.09).abs() < 1e-12);
        g.backward(l).unwrap();
        for v in g.grad(a).unwrap().data() {
            assert!((v - 2.0 * -0.3 / 4.0).abs() < 1e-12);
        }
        let same = loss_mse(&mut g, b, b).unwrap();
        assert_eq!(value(&g, same), 0.0);
        let other = g.constant(Tensor::zeros([1, 1, 3, 2]));
        assert!(loss_mse(&mut g, a, other).is_err());
    }

    #[test]
    fn ssim_identity_constants_and_symmetry() {
        let mut g = Graph::<f64>::new();
        let a = g.constant(img(&[1, 1, 16, 16], 1));
        let b = g.constant(img(&[1, 1, 16, 16], 2));
        let self_loss = loss_ssim(&mut g, a, a).unwrap();
        assert!(value(&g, self_loss).abs() <= 1e-9);
        let ab = ssim_mean(&mut g, a, b).unwrap();
        let ba = ssim_mean(&mut g, b, a).unwrap();
        assert_eq!(value(&g, ab), value(&g, ba));
        let l = loss_ssim(&mut g, a, b).unwrap();
        assert!((0.0..=2.0).contains(&value(&g, l)));

        let (ca, cb) = (0.2, 0.7);
        let ka = g.constant(Tensor::full([1, 1, 16, 16], ca));
        let kb = g.constant(Tensor::full([1, 1, 16, 16], cb));
        let s = ssim_mean(&mut g, ka, kb).unwrap();
        let closed = (2.0 * ca * cb + SSIM_C1) / (ca * ca + cb * cb + SSIM_C1);
        assert!((value(&g, s) - closed).abs() <= 1e-9);
    }

    #[test]
    fn sr_loss_weights_and_gradcheck() {
        let target = img(&[1, 1, 12, 12], 3);
        let w = LossWeights::default();
        let mut g = Graph::<f64>::new();
        let t = g.constant(target.clone());
        let p = g.constant(img(&[1, 1, 12, 12], 4));
        let sr = loss_sr(&mut g, p, t, &w).unwrap();
        let mse = loss_mse(&mut g, p, t).unwrap();
        let ssim = loss_ssim(&mut g, p, t).unwrap();
        let expect = value(&g, mse) + 0.5 * value(&g, ssim);
        assert!((value(&g, sr) - expect).abs() < 1e-12);
        let zero = loss_sr(&mut g, t, t, &w).unwrap();
        assert!(value(&g, zero).abs() < 1e-9);

        let err = grad_check(
            |g, x| {
                let t = g.constant(target.clone());
                loss_sr(g, x, t, &w)
            },
            &img(&[1, 1, 12, 12], 5),
            1e-5,
        )
        .unwrap();
        assert!(err <= 1e-4, "{err:e}");
    }

    #[test]
    fn adversarial_values() {
        let mut g = Graph::<f64>::new();
        let half = g.constant(Tensor::full([2, 1, 3, 3], 0.5));
        let d = loss_adv_discriminator(&mut g, half, half).unwrap();
        assert!((value(&g, d) - 2.0 * 2f64.ln()).abs() < 1e-9);
        let gl = loss_adv_generator(&mut g, half).unwrap();
        assert!((value(&g, gl) - 2f64.ln()).abs() < 1e-9);

        let ones = g.constant(Tensor::ones([1, 1, 2, 2]));
        let zeros = g.constant(Tensor::zeros([1, 1, 2, 2]));
        let perfect = loss_adv_discriminator(&mut g, ones, zeros).unwrap();
        assert!(value(&g, perfect).abs() < 1e-6);
        let sat = loss_adv_generator(&mut g, ones).unwrap();
        assert!(value(&g, sat).abs() < 1e-6);
        let worst = loss_adv_generator(&mut g, zeros).unwrap();
        assert!(value(&g, worst).is_finite());

        let mut last = f64::INFINITY;
        for p in [0.1, 0.3, 0.5, 0.7, 0.9] {
            let v = g.constant(Tensor::full([1, 1, 2, 2], p));
            let l = loss_adv_generator(&mut g, v).unwrap();
            assert!(value(&g, l) < last);
            last = value(&g, l);
        }

        let bad = g.constant(Tensor::full([1, 1, 2, 2], 1.5));
        assert!(loss_adv_generator(&mut g, bad).is_err());
        let nan = g.constant(Tensor::full([1, 1, 2, 2], f64::NAN));
        assert!(loss_adv_discriminator(&mut g, half, nan).is_err());
    }

    #[test]
    fn adversarial_generator_gradcheck() {
        let err = grad_check(
            |g, x| {
                let p = g.sigmoid(x);
                loss_adv_generator(g, p)
            },
            &img(&[2, 1, 3, 3], 6).map(|v| 4.0 * v - 2.0),
            1e-5,
        )
        .unwrap();
        assert!(err <= 1e-4, "{err:e}");
    }

    #[test]
    fn shrinkage_examples() {
        let (l, e) = (0.05, 1e-12);
        assert_eq!(shrink(0.0, l, e, ShrinkPolarity::AboveThreshold), 0.0);
        assert_eq!(shrink(l, l, e, ShrinkPolarity::AboveThreshold), 0.0);
        assert!((shrink(2.0 * l, l, e, ShrinkPolarity::AboveThreshold) - 1.0).abs() <= 1e-9);
        assert!(shrink(0.3, l, e, ShrinkPolarity::AboveThreshold) < 1.0);
        assert_eq!(shrink(2.0 * l, l, e, ShrinkPolarity::BelowThreshold), 0.0);
        assert!((shrink(0.0, l, e, ShrinkPolarity::BelowThreshold) - 1.0).abs() <= 1e-9);
    }

    #[test]
    fn sparse_weights_grid() {
        let a = EdgeMap::from_fn(32, 32, |y, x| (x + y) % 5 == 0);
        let same = sparse_weights(&a, &a, &ShrinkParams::default()).unwrap();
        assert_eq!(same.len(), 4);
        assert!(same.d.iter().all(|&d| d == 0.0));
        assert!(same.w_hat.iter().all(|&w| w == 0.0));

        // Only the top-left patch differs, in 64 of 256 pixels.
        let b = EdgeMap::from_fn(32, 32, |y, x| {
            let flip = y < 8 && x < 8;
            ((x + y) % 5 == 0) != flip
        });
        let grid = sparse_weights(&a, &b, &ShrinkParams::default()).unwrap();
        assert_eq!(grid.d[0], 0.25);
        assert!(grid.w_hat[0] > 0.99 && grid.w_hat[0] < 1.0);
        assert_eq!(&grid.w_hat[1..], &[0.0, 0.0, 0.0]);
        assert_eq!(grid.active(), 1);

        let odd = EdgeMap::empty(30, 32);
        assert!(sparse_weights(&odd, &odd, &ShrinkParams::default()).is_err());
    }

    #[test]
    fn soft_edges_constant_step_and_gradcheck() {
        let mut g = Graph::<f64>::new();
        let flat = g.constant(Tensor::full([1, 1, 16, 16], 0.4));
        let e = soft_edge_map(&mut g, flat).unwrap();
        assert_eq!(g.shape(e), &[1, 1, 16, 16]);
        assert!(g.value(e).data().iter().all(|&v| v.abs() < 1e-12));

        let step = 10;
        let t = Tensor::from_fn(vec![1, 1, 20, 24], |i| if i % 24 >= step { 1.0 } else { 0.0 });
        let s = g.constant(t);
        let e = soft_edge_map(&mut g, s).unwrap();
        let v = g.value(e);
        assert!(v.data().iter().all(|&p| (0.0..=1.0).contains(&p)));
        for y in 4..16 {
            let row = &v.data()[y * 24..(y + 1) * 24];
            let best = (0..24).max_by(|&a, &b| row[a].total_cmp(&row[b])).unwrap();
            assert!((best as isize - step as isize).abs() <= 2, "row {y}: peak at {best}");
        }

        let err = grad_check(
            |g, x| {
                let e = soft_edge_map(g, x)?;
                let sq = g.square(e);
                Ok::<_, crate::SasrError>(g.sum(sq))
            },
            &img(&[1, 1, 9, 10], 7),
            1e-5,
        )
        .unwrap();
        assert!(err <= 1e-4, "{err:e}");
    }

    fn one_active_grid(rows: usize, cols: usize, active: usize) -> SparseWeightGrid {
        let mut w_hat = vec![0.0; rows * cols];
        w_hat[active] = 1.0;
        SparseWeightGrid {
            n: 4,
            rows,
            cols,
            d: w_hat.clone(),
            w_hat,
            lambda: 0.05,
            epsilon: 1e-12,
        }
    }

    #[test]
    fn sparse_edge_loss_hand_evaluation() {
        let rec = img(&[1, 1, 16, 16], 8);
        let reference = img(&[1, 1, 16, 16], 9);
        let grid = one_active_grid(2, 2, 3);
        let mut g = Graph::<f64>::new();
        let r = g.constant(rec);
        let f = g.constant(reference);
        let loss = loss_sparse_edge(&mut g, r, f, std::slice::from_ref(&grid)).unwrap();

        let er = soft_edge_map(&mut g, r).unwrap();
        let ef = soft_edge_map(&mut g, f).unwrap();
        let (er, ef) = (g.value(er).data(), g.value(ef).data());
        let mut d_hat = 0.0;
        for y in 8..16 {
            for x in 8..16 {
                d_hat += (ef[y * 16 + x] - er[y * 16 + x]).powi(2);
            }
        }
        d_hat /= 64.0;
        assert!((value(&g, loss) - d_hat).abs() < 1e-12);

        let zero = SparseWeightGrid {
            w_hat: vec![0.0; 4],
            ..grid.clone()
        };
        let l0 = loss_sparse_edge(&mut g, r, f, &[zero]).unwrap();
        assert_eq!(value(&g, l0), 0.0);
        let same = loss_sparse_edge(&mut g, f, f, std::slice::from_ref(&grid)).unwrap();
        assert_eq!(value(&g, same), 0.0);
        let wrong = one_active_grid(3, 3, 0);
        assert!(loss_sparse_edge(&mut g, r, f, &[wrong]).is_err());
    }

    #[test]
    fn sparse_edge_gradcheck() {
        let reference = img(&[2, 1, 16, 16], 10);
        let grids = [one_active_grid(2, 2, 0), one_active_grid(2, 2, 2)];
        let err = grad_check(
            |g, x| {
                let f = g.constant(reference.clone());
                loss_sparse_edge(g, x, f, &grids)
            },
            &img(&[2, 1, 16, 16], 11),
            1e-5,
        )
        .unwrap();
        assert!(err <= 1e-4, "{err:e}");
    }

    #[test]
    fn total_is_linear_in_components() {
        let w = LossWeights::default();
        let c = LossComponents {
            mse: 0.2,
            ssim: 0.4,
            adv: 0.7,
            se: 0.3,
        };
        assert!((c.total(&w) - (0.2 + 0.2 + 0.7 + 0.03)).abs() < 1e-12);
        let doubled = LossComponents { se: 0.6, ..c };
        assert!((doubled.total(&w) - c.total(&w) - 0.1 * 0.3).abs() < 1e-12);
        assert_eq!(LossComponents::default().total(&w), 0.0);

        let mut g = Graph::<f64>::new();
        let vals: Vec<Var> = [0.2, 0.4, 0.7, 0.3]
            .iter()
            .map(|&v| g.constant(Tensor::scalar(v)))
            .collect();
        let t = loss_total(&mut g, &w, vals[0], vals[1], Some(vals[2]), Some(vals[3])).unwrap();
        assert!((value(&g, t) - c.total(&w)).abs() < 1e-12);
    }
}
