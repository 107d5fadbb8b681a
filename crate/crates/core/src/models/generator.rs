//! The multi-level super-resolution generator.

use super::layers::{Conv, Ctx, DynamicConv, Rdb, ResidualModule};
use crate::error::{invalid, Result};
use crate::params::{Bindings, ModelParams, ParamBuilder};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sasr_tensor::{BnMode, BnStats, ConvSpec, Graph, Real, Tensor, Var};

/// Upscaling factor of the generator.
pub const SCALE: usize = 2;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GeneratorConfig {
    /// Feature width shared by the backbone and the encoder-decoder.
    pub base: usize,
    pub growth: usize,
    pub rdb_layers: usize,
    pub rdb_blocks: usize,
    /// Number of kernel banks in the dynamic convolution.
    pub kernels: usize,
    pub dyn_kernel: usize,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            base: 32,
            growth: 16,
            rdb_layers: 4,
            rdb_blocks: 6,
            kernels: 4,
            dyn_kernel: 3,
        }
    }
}

impl GeneratorConfig {
    /// A narrow variant with the same topology, for gradient checks and fast tests.
    pub fn tiny() -> Self {
        Self {
            base: 8,
            growth: 4,
            rdb_layers: 2,
            ..Self::default()
        }
    }
}

#[derive(Clone, Debug)]
pub struct Backbone {
    pub sfe: [Conv; 2],
    pub rdbs: Vec<Rdb>,
    pub dff: Conv,
}

#[derive(Clone, Debug)]
pub struct EncoderLevel {
    pub blocks: [ResidualModule; 2],
    pub skip: Rdb,
    pub decoder: ResidualModule,
}

#[derive(Clone, Debug)]
pub struct EncoderDecoder {
    pub levels: Vec<EncoderLevel>,
    pub bottleneck: ResidualModule,
}

#[derive(Clone, Debug)]
pub struct FusionHead {
    pub dynamic: DynamicConv,
    pub expand: Conv,
}

#[derive(Clone, Debug)]
pub struct GeneratorLayout {
    pub backbone: Backbone,
    pub encdec: EncoderDecoder,
    pub head: FusionHead,
}

/// Generator architecture together with its weights and batch-norm statistics.
#[derive(Clone, Debug)]
pub struct Generator<T: Real = f32> {
    pub config: GeneratorConfig,
    pub layout: GeneratorLayout,
    pub params: ModelParams<T>,
    pub stats: Vec<BnStats<T>>,
}

const ENCODER_LEVELS: usize = 3;

impl<T: Real> Generator<T> {
    pub fn new(config: GeneratorConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ModelParams::new();
        let mut stats = Vec::new();
        let mut b = ParamBuilder {
            params: &mut params,
            rng: &mut rng,
        };
        let c = config.base;

        let backbone = Backbone {
            sfe: [
                Conv::new(&mut b, "backbone.sfe0", ConvSpec::same(1, c, 3)),
                Conv::new(&mut b, "backbone.sfe1", ConvSpec::same(c, c, 3)),
            ],
            rdbs: (0..config.rdb_blocks)
                .map(|i| {
                    Rdb::new(
                        &mut b,
                        &format!("backbone.rdb{i}"),
                        c,
                        config.growth,
                        config.rdb_layers,
                    )
                })
                .collect(),
            dff: Conv::new(
                &mut b,
                "backbone.dff",
                ConvSpec::new(c * config.rdb_blocks, c, 1),
            ),
        };

        let levels = (0..ENCODER_LEVELS)
            .map(|i| {
                let name = format!("encdec.level{i}");
                let cin = if i == 0 { 1 } else { c };
                EncoderLevel {
                    blocks: [
                        ResidualModule::new(&mut b, &mut stats, &format!("{name}.enc0"), cin, c),
                        ResidualModule::new(&mut b, &mut stats, &format!("{name}.enc1"), c, c),
                    ],
                    skip: Rdb::new(
                        &mut b,
                        &format!("{name}.skip"),
                        c,
                        config.growth,
                        config.rdb_layers,
                    ),
                    decoder: ResidualModule::new(&mut b, &mut stats, &format!("{name}.dec"), c, c),
                }
            })
            .collect();
        let bottleneck = ResidualModule::new(&mut b, &mut stats, "encdec.bottleneck", c, c);

        let head = FusionHead {
            dynamic: DynamicConv::new(
                &mut b,
                "head.dynamic",
                ConvSpec::same(2 * c, c, config.dyn_kernel),
                config.kernels,
            ),
            expand: Conv::new(&mut b, "head.expand", ConvSpec::same(c, SCALE * SCALE, 3)),
        };

        Self {
            config,
            layout: GeneratorLayout {
                backbone,
                encdec: EncoderDecoder { levels, bottleneck },
                head,
            },
            params,
            stats,
        }
    }

    pub fn bind(&self, g: &mut Graph<T>, trainable: bool) -> Bindings {
        self.params.bind(g, trainable)
    }

    /// Full forward pass on graph `g` using previously bound parameters.
    pub fn forward(
        &mut self,
        g: &mut Graph<T>,
        vars: &Bindings,
        x: Var,
        mode: BnMode,
    ) -> Result<Var> {
        let mut ctx = Ctx {
            g,
            vars,
            stats: &mut self.stats,
            mode,
        };
        self.layout.mlsr_forward(&mut ctx, x)
    }

    /// Evaluation-mode super-resolution of a `[N, 1, h, w]` batch.
    pub fn infer(&mut self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let mut g = Graph::new();
        let vars = self.bind(&mut g, false);
        let xv = g.constant(x.clone());
        let y = self.forward(&mut g, &vars, xv, BnMode::Eval)?;
        Ok(g.value(y).clone())
    }

    pub fn cast<U: Real>(&self) -> Generator<U> {
        Generator {
            config: self.config,
            layout: self.layout.clone(),
            params: self.params.cast(),
            stats: cast_stats(&self.stats),
        }
    }
}

pub(crate) fn cast_stats<T: Real, U: Real>(stats: &[BnStats<T>]) -> Vec<BnStats<U>> {
    stats
        .iter()
        .map(|s| BnStats {
            running_mean: s.running_mean.iter().map(|v| U::lit(v.as_f64())).collect(),
            running_var: s.running_var.iter().map(|v| U::lit(v.as_f64())).collect(),
        })
        .collect()
}

impl Backbone {
    /// Shallow features, six residual dense blocks, dense feature fusion and global residual.
    pub fn forward<T: Real>(&self, ctx: &mut Ctx<'_, T>, x: Var) -> Result<Var> {
        let f_minus = self.sfe[0].forward(ctx, x)?;
        let mut h = self.sfe[1].forward(ctx, f_minus)?;
        let mut outputs = Vec::with_capacity(self.rdbs.len());
        for rdb in &self.rdbs {
            h = rdb.forward(ctx, h)?;
            outputs.push(h);
        }
        let cat = ctx.g.concat_channels(&outputs)?;
        let fused = self.dff.forward(ctx, cat)?;
        Ok(ctx.g.add(fused, f_minus)?)
    }
}

impl EncoderDecoder {
    pub fn forward<T: Real>(&self, ctx: &mut Ctx<'_, T>, x: Var) -> Result<Var> {
        let shape = ctx.g.shape(x);
        let (h, w) = (shape[2], shape[3]);
        let factor = 1 << self.levels.len();
        if h % factor != 0 || w % factor != 0 {
            return invalid(format!(
                "encoder-decoder input {h}x{w} is not divisible by {factor}"
            ));
        }
        let mut skips = Vec::with_capacity(self.levels.len());
        let mut h = x;
        for level in &self.levels {
            for block in &level.blocks {
                h = block.forward(ctx, h)?;
            }
            skips.push(h);
            h = ctx.g.max_pool2(h)?;
        }
        h = self.bottleneck.forward(ctx, h)?;
        for (level, skip) in self.levels.iter().zip(skips).rev() {
            let up = ctx.g.upsample_nearest2(h)?;
            let s = level.skip.forward(ctx, skip)?;
            let merged = ctx.g.add(up, s)?;
            h = level.decoder.forward(ctx, merged)?;
        }
        Ok(h)
    }
}

impl FusionHead {
    pub fn forward<T: Real>(&self, ctx: &mut Ctx<'_, T>, f_r: Var, f_e: Var) -> Result<Var> {
        if ctx.g.shape(f_r)[2..] != ctx.g.shape(f_e)[2..] {
            return invalid(format!(
                "fusion inputs differ spatially: {:?} vs {:?}",
                ctx.g.shape(f_r),
                ctx.g.shape(f_e)
            ));
        }
        let x = ctx.g.concat_channels(&[f_r, f_e])?;
        let h = self.dynamic.forward(ctx, x)?;
        let h = ctx.g.relu(h);
        let h = self.expand.forward(ctx, h)?;
        let h = ctx.g.pixel_shuffle(h, SCALE)?;
        Ok(ctx.g.sigmoid(h))
    }
}

impl GeneratorLayout {
    pub fn mlsr_forward<T: Real>(&self, ctx: &mut Ctx<'_, T>, x: Var) -> Result<Var> {
        let shape = ctx.g.shape(x);
        if shape.len() != 4 || shape[1] != 1 {
            return invalid(format!(
                "generator expects [N, 1, h, w] input, got {shape:?}"
            ));
        }
        let f_e = self.encdec.forward(ctx, x)?;
        let f_r = self.backbone.forward(ctx, x)?;
        self.head.forward(ctx, f_r, f_e)
    }
}
