use crate::error::{Result, SasrError};
use crate::losses::{LossWeights, ShrinkParams, ShrinkPolarity};
use crate::models::GeneratorConfig;
use std::str::FromStr;

/// Hyper-parameters of a training run. Serialized as flat `key = value` lines.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub lr0: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub batch: usize,
    pub epochs: usize,
    /// HR side of the random training crop; its LR partners are half as wide.
    pub patch_hr: usize,
    pub rot_deg: f64,
    /// Learning rate is multiplied by `lr_decay` every `decay_every` epochs.
    pub lr_decay: f64,
    pub decay_every: usize,
    pub weights: LossWeights,
    pub shrink: ShrinkParams,
    pub generator: GeneratorConfig,
    pub disc_width: usize,
    pub supervised_only: bool,
    /// Checkpoint cadence in epochs; the final epoch is always saved.
    pub checkpoint_every: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr0: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            batch: 8,
            epochs: 300,
            patch_hr: 96,
            rot_deg: 10.0,
            lr_decay: 0.5,
            decay_every: 75,
            weights: LossWeights::default(),
            shrink: ShrinkParams::default(),
            generator: GeneratorConfig::default(),
            disc_width: 32,
            supervised_only: false,
            checkpoint_every: 25,
            seed: 0,
        }
    }
}

fn polarity_name(p: ShrinkPolarity) -> &'static str {
    match p {
        ShrinkPolarity::AboveThreshold => "above",
        ShrinkPolarity::BelowThreshold => "below",
    }
}

impl TrainConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |detail: String| SasrError::Config {
                line: i + 1,
                detail,
            };
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| err(format!("expected `key = value`, got `{line}`")))?;
            cfg.set(key.trim(), value.trim()).map_err(err)?;
        }
        cfg.validate().map_err(|detail| SasrError::Config { line: 0, detail })?;
        Ok(cfg)
    }

    fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        fn num<T: FromStr>(key: &str, v: &str) -> std::result::Result<T, String> {
            v.parse().map_err(|_| format!("`{key}`: cannot parse `{v}`"))
        }
        match key {
            "lr0" => self.lr0 = num(key, value)?,
            "beta1" => self.beta1 = num(key, value)?,
            "beta2" => self.beta2 = num(key, value)?,
            "adam_eps" => self.adam_eps = num(key, value)?,
            "batch" => self.batch = num(key, value)?,
            "epochs" => self.epochs = num(key, value)?,
            "patch_hr" => self.patch_hr = num(key, value)?,
            "rot_deg" => self.rot_deg = num(key, value)?,
            "lr_decay" => self.lr_decay = num(key, value)?,
            "decay_every" => self.decay_every = num(key, value)?,
            "lambda_mse" => self.weights.mse = num(key, value)?,
            "lambda_ssim" => self.weights.ssim = num(key, value)?,
            "lambda_adv" => self.weights.adv = num(key, value)?,
            "lambda_se" => self.weights.se = num(key, value)?,
            "lambda_shrink" => self.shrink.lambda = num(key, value)?,
            "shrink_epsilon" => self.shrink.epsilon = num(key, value)?,
            "n_patch" => self.shrink.n = num(key, value)?,
            "shrink_polarity" => {
                self.shrink.polarity = match value {
                    "above" => ShrinkPolarity::AboveThreshold,
                    "below" => ShrinkPolarity::BelowThreshold,
                    _ => return Err(format!("`{key}` must be `above` or `below`, got `{value}`")),
                }
            }
            "base_channels" => self.generator.base = num(key, value)?,
            "growth" => self.generator.growth = num(key, value)?,
            "rdb_layers" => self.generator.rdb_layers = num(key, value)?,
            "rdb_blocks" => self.generator.rdb_blocks = num(key, value)?,
            "kernels" => self.generator.kernels = num(key, value)?,
            "dyn_kernel" => self.generator.dyn_kernel = num(key, value)?,
            "disc_width" => self.disc_width = num(key, value)?,
            "supervised_only" => self.supervised_only = num(key, value)?,
            "checkpoint_every" => self.checkpoint_every = num(key, value)?,
            "seed" => self.seed = num(key, value)?,
            _ => return Err(format!("unknown key `{key}`")),
        }
        Ok(())
    }

    pub fn validate(&self) -> std::result::Result<(), String> {
        let positive = [
            ("lr0", self.lr0),
            ("adam_eps", self.adam_eps),
            ("lr_decay", self.lr_decay),
            ("shrink_epsilon", self.shrink.epsilon),
        ];
        if let Some((k, v)) = positive.iter().find(|(_, v)| !(v.is_finite() && *v > 0.0)) {
            return Err(format!("`{k}` must be positive, got {v}"));
        }
        for (k, v) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&v) {
                return Err(format!("`{k}` must lie in [0, 1), got {v}"));
            }
        }
        let w = &self.weights;
        if [w.mse, w.ssim, w.adv, w.se, self.rot_deg, self.shrink.lambda]
            .iter()
            .any(|v| !(v.is_finite() && *v >= 0.0))
        {
            return Err("loss weights, rot_deg and lambda_shrink must be non-negative".into());
        }
        let counts = [
            ("batch", self.batch),
            ("epochs", self.epochs),
            ("patch_hr", self.patch_hr),
            ("decay_every", self.decay_every),
            ("n_patch", self.shrink.n),
            ("base_channels", self.generator.base),
            ("growth", self.generator.growth),
            ("rdb_layers", self.generator.rdb_layers),
            ("rdb_blocks", self.generator.rdb_blocks),
            ("kernels", self.generator.kernels),
            ("dyn_kernel", self.generator.dyn_kernel),
            ("disc_width", self.disc_width),
            ("checkpoint_every", self.checkpoint_every),
        ];
        if let Some((k, _)) = counts.iter().find(|(_, v)| *v == 0) {
            return Err(format!("`{k}` must be positive"));
        }
        if self.patch_hr % 16 != 0 {
            return Err(format!("patch_hr {} is not divisible by 16", self.patch_hr));
        }
        if (self.patch_hr / 2) % self.shrink.n != 0 {
            return Err(format!(
                "LR patch side {} is not divisible by n_patch {}",
                self.patch_hr / 2,
                self.shrink.n
            ));
        }
        if self.generator.dyn_kernel % 2 == 0 {
            return Err("dyn_kernel must be odd".into());
        }
        Ok(())
    }

    /// Text form accepted by [`TrainConfig::parse`]; parsing it back gives an equal config.
    pub fn to_text(&self) -> String {
        let g = &self.generator;
        let w = &self.weights;
        let entries: Vec<(&str, String)> = vec![
            ("lr0", self.lr0.to_string()),
            ("beta1", self.beta1.to_string()),
            ("beta2", self.beta2.to_string()),
            ("adam_eps", self.adam_eps.to_string()),
            ("batch", self.batch.to_string()),
            ("epochs", self.epochs.to_string()),
            ("patch_hr", self.patch_hr.to_string()),
            ("rot_deg", self.rot_deg.to_string()),
            ("lr_decay", self.lr_decay.to_string()),
            ("decay_every", self.decay_every.to_string()),
            ("lambda_mse", w.mse.to_string()),
            ("lambda_ssim", w.ssim.to_string()),
            ("lambda_adv", w.adv.to_string()),
            ("lambda_se", w.se.to_string()),
            ("lambda_shrink", self.shrink.lambda.to_string()),
            ("shrink_epsilon", self.shrink.epsilon.to_string()),
            ("n_patch", self.shrink.n.to_string()),
            ("shrink_polarity", polarity_name(self.shrink.polarity).to_string()),
            ("base_channels", g.base.to_string()),
            ("growth", g.growth.to_string()),
            ("rdb_layers", g.rdb_layers.to_string()),
            ("rdb_blocks", g.rdb_blocks.to_string()),
            ("kernels", g.kernels.to_string()),
            ("dyn_kernel", g.dyn_kernel.to_string()),
            ("disc_width", self.disc_width.to_string()),
            ("supervised_only", self.supervised_only.to_string()),
            ("checkpoint_every", self.checkpoint_every.to_string()),
            ("seed", self.seed.to_string()),
        ];
        entries
            .into_iter()
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }
}

/// Step decay: `lr0 * lr_decay^floor(epoch / decay_every)`.
pub fn lr_schedule(epoch: usize, cfg: &TrainConfig) -> f64 {
    cfg.lr0 * cfg.lr_decay.powi((epoch / cfg.decay_every) as i32)
}
