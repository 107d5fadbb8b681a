//! PatchGAN discriminator.

use super::generator::cast_stats;
use super::layers::{BatchNorm, Conv, Ctx};
use crate::error::{invalid, Result};
use crate::params::{Bindings, ModelParams, ParamBuilder};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sasr_tensor::{BnMode, BnStats, ConvSpec, Graph, Real, Tensor, Var};

const STRIDES: [usize; 5] = [2, 2, 2, 1, 1];
const LEAKY_SLOPE: f64 = 0.2;

/// Receptive field of a conv stack, by the recurrence `r <- r*s + (k - s)` run from
/// the deepest layer back to the input.
pub fn compute_receptive_field(specs: &[ConvSpec]) -> Result<usize> {
    if specs.is_empty() {
        return invalid("receptive field of an empty layer list");
    }
    Ok(specs
        .iter()
        .rev()
        .fold(1, |r, s| r * s.stride + (s.kernel - s.stride)))
}

#[derive(Clone, Debug)]
pub struct Discriminator<T: Real = f32> {
    pub width: usize,
    pub convs: Vec<Conv>,
    /// Batch norms following the second, third and fourth convolutions.
    pub norms: Vec<BatchNorm>,
    pub params: ModelParams<T>,
    pub stats: Vec<BnStats<T>>,
}

impl<T: Real> Discriminator<T> {
    pub fn new(width: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ModelParams::new();
        let mut stats = Vec::new();
        let mut b = ParamBuilder {
            params: &mut params,
            rng: &mut rng,
        };
        let specs = Self::layer_specs(width);
        let convs = specs
            .iter()
            .enumerate()
            .map(|(i, &spec)| Conv::new(&mut b, &format!("disc.conv{i}"), spec))
            .collect();
        let norms = (1..4)
            .map(|i| BatchNorm::new(&mut b, &mut stats, &format!("disc.bn{i}"), specs[i].out_channels))
            .collect();
        Self {
            width,
            convs,
            norms,
            params,
            stats,
        }
    }

    pub fn layer_specs(width: usize) -> Vec<ConvSpec> {
        let chans = [1, width, 2 * width, 4 * width, 8 * width, 1];
        STRIDES
            .iter()
            .enumerate()
            .map(|(i, &s)| {
                ConvSpec::new(chans[i], chans[i + 1], 4)
                    .with_stride(s)
                    .with_padding(1)
            })
            .collect()
    }

    pub fn receptive_field(&self) -> usize {
        let specs: Vec<ConvSpec> = self.convs.iter().map(|c| c.spec).collect();
        compute_receptive_field(&specs).expect("discriminator has layers")
    }

    pub fn bind(&self, g: &mut Graph<T>, trainable: bool) -> Bindings {
        self.params.bind(g, trainable)
    }

    /// Per-patch probability map `[N, 1, H', W']` for a `[N, 1, H, W]` batch.
    pub fn forward(
        &mut self,
        g: &mut Graph<T>,
        vars: &Bindings,
        x: Var,
        mode: BnMode,
    ) -> Result<Var> {
        let rf = self.receptive_field();
        let shape = g.shape(x);
        if shape.len() != 4 || shape[1] != 1 {
            return invalid(format!(
                "discriminator expects [N, 1, H, W] input, got {shape:?}"
            ));
        }
        if shape[2] < rf || shape[3] < rf {
            return invalid(format!(
                "discriminator input {}x{} is smaller than its {rf}x{rf} receptive field",
                shape[2], shape[3]
            ));
        }
        let layers = DiscriminatorLayers {
            convs: &self.convs,
            norms: &self.norms,
        };
        let mut ctx = Ctx {
            g,
            vars,
            stats: &mut self.stats,
            mode,
        };
        layers.forward(&mut ctx, x)
    }

    /// Borrowed view of the layer stack, usable with externally owned statistics.
    pub fn layers(&self) -> DiscriminatorLayers<'_> {
        DiscriminatorLayers {
            convs: &self.convs,
            norms: &self.norms,
        }
    }

    /// Evaluation-mode probability map.
    pub fn infer(&mut self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let mut g = Graph::new();
        let vars = self.bind(&mut g, false);
        let xv = g.constant(x.clone());
        let y = self.forward(&mut g, &vars, xv, BnMode::Eval)?;
        Ok(g.value(y).clone())
    }

    pub fn cast<U: Real>(&self) -> Discriminator<U> {
        Discriminator {
            width: self.width,
            convs: self.convs.clone(),
            norms: self.norms.clone(),
            params: self.params.cast(),
            stats: cast_stats(&self.stats),
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct DiscriminatorLayers<'a> {
    pub convs: &'a [Conv],
    pub norms: &'a [BatchNorm],
}

impl DiscriminatorLayers<'_> {
    pub fn forward<T: Real>(&self, ctx: &mut Ctx<'_, T>, x: Var) -> Result<Var> {
        let last = self.convs.len() - 1;
        let mut h = x;
        for (i, conv) in self.convs.iter().enumerate() {
            h = conv.forward(ctx, h)?;
            if (1..4).contains(&i) {
                h = self.norms[i - 1].forward(ctx, h)?;
            }
            if i < last {
                h = ctx.g.leaky_relu(h, LEAKY_SLOPE);
            }
        }
        Ok(ctx.g.sigmoid(h))
    }
}
