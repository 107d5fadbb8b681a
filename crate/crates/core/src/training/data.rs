use super::config::TrainConfig;
use crate::error::{invalid, io_err, Result};
use crate::imaging::{
    canny_edges, degrade_to_synthetic_lr, generate_phantom, random_angle, read_pgm, rotate,
    simulate_realistic_lr, write_pgm, BinaryMask, CannyParams, ImageGray, PairedSample,
};
use crate::losses::{sparse_weights, ShrinkParams, SparseWeightGrid};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sasr_tensor::Tensor;
use std::path::Path;

/// Independent per-sample seed derived from a corpus seed (splitmix64 finaliser).
pub fn sample_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed ^ index.wrapping_add(1).wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// A phantom triple together with its vessel ground truth.
#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticSample {
    pub pair: PairedSample,
    pub vessels: BinaryMask,
}

pub fn synthesize_sample(seed: u64, index: u64, size: usize) -> Result<SyntheticSample> {
    let s = sample_seed(seed, index);
    let mut rng = ChaCha8Rng::seed_from_u64(s);
    let phantom = generate_phantom(&mut rng, size, size)?;
    let synth = degrade_to_synthetic_lr(&phantom.image)?;
    let real = simulate_realistic_lr(&phantom.image, &mut rng)?;
    Ok(SyntheticSample {
        pair: PairedSample::new(phantom.image, synth, real, s)?,
        vessels: phantom.vessels,
    })
}

pub fn synthesize_corpus(count: usize, size: usize, seed: u64) -> Result<Vec<SyntheticSample>> {
    (0..count as u64)
        .map(|i| synthesize_sample(seed, i, size))
        .collect()
}

pub const HR_SUFFIX: &str = "_hr.pgm";
pub const SYNTH_SUFFIX: &str = "_synth_lr.pgm";
pub const REAL_SUFFIX: &str = "_real_lr.pgm";
pub const VESSEL_SUFFIX: &str = "_vessels.pgm";

/// Writes `NNNN_hr.pgm`, `NNNN_synth_lr.pgm`, `NNNN_real_lr.pgm` and `NNNN_vessels.pgm`.
pub fn write_corpus(dir: &Path, samples: &[SyntheticSample]) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    for (i, s) in samples.iter().enumerate() {
        let path = |suffix: &str| dir.join(format!("{i:04}{suffix}"));
        write_pgm(path(HR_SUFFIX), &s.pair.hr)?;
        write_pgm(path(SYNTH_SUFFIX), &s.pair.synth_lr)?;
        write_pgm(path(REAL_SUFFIX), &s.pair.real_lr)?;
        write_pgm(path(VESSEL_SUFFIX), &s.vessels.to_image()?)?;
    }
    Ok(())
}

/// Loads every triple whose `*_hr.pgm` exists in `dir`, in file-name order.
pub fn read_corpus(dir: &Path) -> Result<Vec<PairedSample>> {
    let mut stems: Vec<String> = std::fs::read_dir(dir)
        .map_err(io_err(dir))?
        .filter_map(|e| e.ok())
        .filter_map(|e| {
            let name = e.file_name().to_string_lossy().into_owned();
            name.strip_suffix(HR_SUFFIX).map(str::to_string)
        })
        .collect();
    stems.sort();
    if stems.is_empty() {
        return invalid(format!("no `*{HR_SUFFIX}` images in {}", dir.display()));
    }
    stems
        .iter()
        .enumerate()
        .map(|(i, stem)| {
            let load = |suffix: &str| read_pgm(dir.join(format!("{stem}{suffix}")));
            PairedSample::new(load(HR_SUFFIX)?, load(SYNTH_SUFFIX)?, load(REAL_SUFFIX)?, i as u64)
        })
        .collect()
}

/// One aligned training triple cut from a sample.
#[derive(Clone, Debug, PartialEq)]
pub struct Patch {
    pub hr: ImageGray,
    pub synth_lr: ImageGray,
    pub real_lr: ImageGray,
}

/// Crops an HR patch at an even offset and the matching realistic-LR patch,
/// rotates both by `angle`, and degrades the rotated HR patch into the
/// synthetic LR input.
pub fn cut_patch(sample: &PairedSample, patch_hr: usize, top: usize, left: usize, angle: f64) -> Result<Patch> {
    if top % 2 != 0 || left % 2 != 0 {
        return invalid(format!("patch offset ({top}, {left}) is not even"));
    }
    let hr = rotate(&sample.hr.crop(top, left, patch_hr, patch_hr)?, angle)?;
    let real_lr = rotate(
        &sample.real_lr.crop(top / 2, left / 2, patch_hr / 2, patch_hr / 2)?,
        angle,
    )?;
    let synth_lr = degrade_to_synthetic_lr(&hr)?;
    Ok(Patch {
        hr,
        synth_lr,
        real_lr,
    })
}

/// Canny edge maps of both LR views, compared patch by patch.
pub fn patch_weights(synth_lr: &ImageGray, real_lr: &ImageGray, shrink: &ShrinkParams) -> Result<SparseWeightGrid> {
    let params = CannyParams::default();
    sparse_weights(&canny_edges(synth_lr, params)?, &canny_edges(real_lr, params)?, shrink)
}

/// A training mini-batch as `[N, 1, H, W]` tensors.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    pub hr: Tensor<f32>,
    pub synth_lr: Tensor<f32>,
    pub real_lr: Tensor<f32>,
    /// Sparse edge weights per sample; empty when not needed.
    pub grids: Vec<SparseWeightGrid>,
}

impl Batch {
    pub fn from_patches(patches: &[Patch], shrink: Option<&ShrinkParams>) -> Result<Self> {
        let stack = |f: fn(&Patch) -> &ImageGray| -> Result<Tensor<f32>> {
            let items: Vec<Tensor<f32>> = patches.iter().map(|p| f(p).to_tensor()).collect();
            Ok(Tensor::stack_batch(&items)?)
        };
        let grids = match shrink {
            Some(s) => patches
                .iter()
                .map(|p| patch_weights(&p.synth_lr, &p.real_lr, s))
                .collect::<Result<_>>()?,
            None => Vec::new(),
        };
        Ok(Self {
            hr: stack(|p| &p.hr)?,
            synth_lr: stack(|p| &p.synth_lr)?,
            real_lr: stack(|p| &p.real_lr)?,
            grids,
        })
    }

    pub fn len(&self) -> usize {
        self.hr.shape()[0]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Draws crop offsets and angles for `indices` and assembles the batch.
pub fn sample_batch(
    corpus: &[PairedSample],
    indices: &[usize],
    cfg: &TrainConfig,
    rng: &mut impl Rng,
) -> Result<Batch> {
    let p = cfg.patch_hr;
    let patches = indices
        .iter()
        .map(|&i| {
            let s = &corpus[i];
            let (h, w) = s.hr.dims();
            if h < p || w < p {
                return invalid(format!("sample {i} ({h}x{w}) is smaller than the {p}px patch"));
            }
            let top = 2 * rng.gen_range(0..=(h - p) / 2);
            let left = 2 * rng.gen_range(0..=(w - p) / 2);
            let angle = random_angle(rng, cfg.rot_deg);
            cut_patch(s, p, top, left, angle)
        })
        .collect::<Result<Vec<_>>>()?;
    Batch::from_patches(&patches, (!cfg.supervised_only).then_some(&cfg.shrink))
}
