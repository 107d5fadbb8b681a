use super::adam::{adam_step, AdamConfig, AdamState};
use super::config::TrainConfig;
use super::data::Batch;
use crate::error::{invalid, Result};
use crate::losses::{
    loss_adv_discriminator, loss_adv_generator, loss_mse, loss_sparse_edge, loss_ssim, loss_total,
    LossComponents,
};
use crate::models::{Discriminator, Generator};
use crate::params::Bindings;
use sasr_tensor::{BnMode, Graph, Tensor, Var};

pub(crate) fn adam_config(cfg: &TrainConfig) -> AdamConfig {
    AdamConfig {
        beta1: cfg.beta1,
        beta2: cfg.beta2,
        eps: cfg.adam_eps,
    }
}

fn scalar(g: &Graph<f32>, v: Var) -> f64 {
    g.value(v).item() as f64
}

/// Updates D on fixed reconstructions: those of synthetic LR inputs are the
/// real class, those of realistic LR inputs the fake class.
pub fn discriminator_update(
    disc: &mut Discriminator,
    adam: &mut AdamState,
    sr_synth: &Tensor<f32>,
    sr_real: &Tensor<f32>,
    lr: f64,
    cfg: &TrainConfig,
) -> Result<f64> {
    let mut g = Graph::new();
    let vars = disc.bind(&mut g, true);
    let xs = g.constant(sr_synth.clone());
    let xr = g.constant(sr_real.clone());
    let ps = disc.forward(&mut g, &vars, xs, BnMode::Train)?;
    let pr = disc.forward(&mut g, &vars, xr, BnMode::Train)?;
    let loss = loss_adv_discriminator(&mut g, ps, pr)?;
    let value = scalar(&g, loss);
    if !value.is_finite() {
        return invalid(format!("discriminator loss is {value}"));
    }
    g.backward(loss)?;
    let grads = disc.params.grads(&g, &vars);
    adam_step(&mut disc.params, &grads, adam, lr, &adam_config(cfg))?;
    Ok(value)
}

/// Discriminator step with the generator frozen: its reconstructions are
/// computed without gradients and without touching its running statistics.
pub fn train_discriminator_step(
    batch: &Batch,
    gen: &mut Generator,
    disc: &mut Discriminator,
    adam: &mut AdamState,
    lr: f64,
    cfg: &TrainConfig,
) -> Result<f64> {
    let mut g = Graph::new();
    let vars = gen.bind(&mut g, false);
    let xs = g.constant(batch.synth_lr.clone());
    let xr = g.constant(batch.real_lr.clone());
    let ss = gen.forward(&mut g, &vars, xs, BnMode::TrainFrozen)?;
    let sr = gen.forward(&mut g, &vars, xr, BnMode::TrainFrozen)?;
    discriminator_update(disc, adam, g.value(ss), g.value(sr), lr, cfg)
}

/// Generator forward passes on both LR views through one set of bindings.
struct GeneratorPass {
    g: Graph<f32>,
    vars: Bindings,
    sr_synth: Var,
    sr_real: Option<Var>,
}

fn generator_pass(batch: &Batch, gen: &mut Generator, with_real: bool) -> Result<GeneratorPass> {
    let mut g = Graph::new();
    // The synthetic and realistic branches read the same parameter nodes.
    let vars = gen.bind(&mut g, true);
    let xs = g.constant(batch.synth_lr.clone());
    let sr_synth = gen.forward(&mut g, &vars, xs, BnMode::Train)?;
    let sr_real = if with_real {
        let xr = g.constant(batch.real_lr.clone());
        Some(gen.forward(&mut g, &vars, xr, BnMode::Train)?)
    } else {
        None
    };
    Ok(GeneratorPass {
        g,
        vars,
        sr_synth,
        sr_real,
    })
}

/// Loss assembly, backward sweep and Adam update of G; D, if given, is frozen.
fn generator_update(
    mut pass: GeneratorPass,
    batch: &Batch,
    gen: &mut Generator,
    disc: Option<&mut Discriminator>,
    adam: &mut AdamState,
    lr: f64,
    cfg: &TrainConfig,
) -> Result<LossComponents> {
    let g = &mut pass.g;
    let hr = g.constant(batch.hr.clone());
    let mse = loss_mse(g, pass.sr_synth, hr)?;
    let ssim = loss_ssim(g, pass.sr_synth, hr)?;
    let (mut adv, mut se) = (None, None);
    if let (Some(disc), Some(sr_real)) = (disc, pass.sr_real) {
        let dvars = disc.bind(g, false);
        let p = disc.forward(g, &dvars, sr_real, BnMode::TrainFrozen)?;
        adv = Some(loss_adv_generator(g, p)?);
        se = Some(loss_sparse_edge(g, sr_real, hr, &batch.grids)?);
    }
    let total = loss_total(g, &cfg.weights, mse, ssim, adv, se)?;
    let parts = LossComponents {
        mse: scalar(g, mse),
        ssim: scalar(g, ssim),
        adv: adv.map_or(0.0, |v| scalar(g, v)),
        se: se.map_or(0.0, |v| scalar(g, v)),
    };
    if !parts.all_finite() {
        return invalid(format!("non-finite generator loss {parts:?}"));
    }
    g.backward(total)?;
    let grads = gen.params.grads(g, &pass.vars);
    adam_step(&mut gen.params, &grads, adam, lr, &adam_config(cfg))?;
    Ok(parts)
}

/// Generator step against a frozen discriminator, or on the supervised
/// objective alone when `disc` is `None`.
pub fn train_generator_step(
    batch: &Batch,
    gen: &mut Generator,
    disc: Option<&mut Discriminator>,
    adam: &mut AdamState,
    lr: f64,
    cfg: &TrainConfig,
) -> Result<LossComponents> {
    let pass = generator_pass(batch, gen, disc.is_some())?;
    generator_update(pass, batch, gen, disc, adam, lr, cfg)
}

/// Losses recorded for one optimisation step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepLosses {
    pub parts: LossComponents,
    /// Discriminator loss; `None` in supervised-only training.
    pub d_loss: Option<f64>,
}

/// One semi-supervised step: a D update followed by a G update.
///
/// Both updates see the same generator outputs. G has not changed between
/// them, so computing its forward passes once is equivalent to a frozen-G
/// discriminator step followed by a separate generator step.
pub fn sasr_step(
    batch: &Batch,
    gen: &mut Generator,
    disc: &mut Discriminator,
    g_adam: &mut AdamState,
    d_adam: &mut AdamState,
    lr: f64,
    cfg: &TrainConfig,
) -> Result<StepLosses> {
    if cfg.supervised_only {
        let parts = train_generator_step(batch, gen, None, g_adam, lr, cfg)?;
        return Ok(StepLosses { parts, d_loss: None });
    }
    let pass = generator_pass(batch, gen, true)?;
    let sr_real = pass.sr_real.expect("realistic branch requested");
    let d_loss = discriminator_update(
        disc,
        d_adam,
        pass.g.value(pass.sr_synth),
        pass.g.value(sr_real),
        lr,
        cfg,
    )?;
    let parts = generator_update(pass, batch, gen, Some(disc), g_adam, lr, cfg)?;
    Ok(StepLosses {
        parts,
        d_loss: Some(d_loss),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::GeneratorConfig;
    use crate::training::data::{cut_patch, synthesize_sample, Patch};

    fn setup(identical_views: bool) -> (TrainConfig, Batch, Generator, Discriminator) {
        let cfg = TrainConfig {
            generator: GeneratorConfig {
                rdb_blocks: 2,
                ..GeneratorConfig::tiny()
            },
            disc_width: 4,
            ..TrainConfig::default()
        };
        let patches: Vec<Patch> = (0..2)
            .map(|i| {
                let s = synthesize_sample(1, i, 96).unwrap().pair;
                let mut p = cut_patch(&s, 96, 0, 0, 0.0).unwrap();
                if identical_views {
                    p.real_lr = p.synth_lr.clone();
                }
                p
            })
            .collect();
        let batch = Batch::from_patches(&patches, Some(&cfg.shrink)).unwrap();
        let gen = Generator::new(cfg.generator, 3);
        let disc = Discriminator::new(cfg.disc_width, 4);
        (cfg, batch, gen, disc)
    }

    #[test]
    fn discriminator_step_freezes_generator() {
        let (cfg, batch, mut gen, mut disc) = setup(false);
        let (g_params, g_stats) = (gen.params.clone(), gen.stats.clone());
        let d_before = disc.params.clone();
        let mut adam = AdamState::new(&disc.params);
        let loss = train_discriminator_step(&batch, &mut gen, &mut disc, &mut adam, 1e-4, &cfg).unwrap();
        assert!(loss.is_finite());
        assert!((loss - 2.0 * std::f64::consts::LN_2).abs() <= 0.5, "{loss}");
        assert_eq!(gen.params, g_params);
        assert_eq!(gen.stats, g_stats);
        assert_ne!(disc.params, d_before);
    }

    #[test]
    fn identical_views_have_no_edge_loss() {
        let (cfg, batch, mut gen, mut disc) = setup(true);
        assert!(batch.grids.iter().all(|g| g.active() == 0));
        let mut adam = AdamState::new(&gen.params);
        let parts = train_generator_step(&batch, &mut gen, Some(&mut disc), &mut adam, 1e-4, &cfg).unwrap();
        assert_eq!(parts.se, 0.0);
        assert!(parts.all_finite());
    }

    #[test]
    fn zero_adversarial_weights_reduce_to_supervised() {
        let (mut cfg, batch, gen, mut disc) = setup(false);
        cfg.weights.adv = 0.0;
        cfg.weights.se = 0.0;
        let mut a = gen.clone();
        let mut b = gen;
        let mut adam_a = AdamState::new(&a.params);
        let mut adam_b = adam_a.clone();
        train_generator_step(&batch, &mut a, Some(&mut disc), &mut adam_a, 1e-3, &cfg).unwrap();
        train_generator_step(&batch, &mut b, None, &mut adam_b, 1e-3, &cfg).unwrap();
        assert_eq!(a.params, b.params);
        assert_eq!(adam_a, adam_b);
    }

    #[test]
    fn fused_step_matches_separate_steps() {
        let (cfg, batch, gen, disc) = setup(false);
        let (mut g1, mut d1) = (gen.clone(), disc.clone());
        let (mut ga1, mut da1) = (AdamState::new(&gen.params), AdamState::new(&disc.params));
        let (mut g2, mut d2, mut ga2, mut da2) = (gen, disc, ga1.clone(), da1.clone());

        let fused = sasr_step(&batch, &mut g1, &mut d1, &mut ga1, &mut da1, 1e-4, &cfg).unwrap();
        let d_loss = train_discriminator_step(&batch, &mut g2, &mut d2, &mut da2, 1e-4, &cfg).unwrap();
        let parts = train_generator_step(&batch, &mut g2, Some(&mut d2), &mut ga2, 1e-4, &cfg).unwrap();
        assert_eq!(fused.d_loss, Some(d_loss));
        assert_eq!(fused.parts, parts);
        assert_eq!(g1.params, g2.params);
        assert_eq!(d1.params, d2.params);
    }
}
