//! Building blocks shared by the generator and the discriminator.

use crate::error::Result;
use crate::params::{Bindings, ParamBuilder, ParamId};
use sasr_tensor::{BnMode, BnStats, ConvSpec, Graph, Real, Var};

/// Everything a forward pass needs besides the input.
pub struct Ctx<'a, T: Real> {
    pub g: &'a mut Graph<T>,
    pub vars: &'a Bindings,
    pub stats: &'a mut [BnStats<T>],
    pub mode: BnMode,
}

#[derive(Clone, Debug)]
pub struct Conv {
    pub weight: ParamId,
    pub bias: ParamId,
    pub spec: ConvSpec,
}

impl Conv {
    pub(crate) fn new<T: Real>(b: &mut ParamBuilder<'_, T>, name: &str, spec: ConvSpec) -> Self {
        let fan_in = spec.in_channels * spec.kernel * spec.kernel;
        let weight = b.uniform(format!("{name}.weight"), &spec.weight_shape(), fan_in);
        let bias = b.uniform(format!("{name}.bias"), &[spec.out_channels], fan_in);
        Self { weight, bias, spec }
    }

    pub fn forward<T: Real>(&self, ctx: &mut Ctx<'_, T>, x: Var) -> Result<Var> {
        let w = ctx.vars.var(self.weight);
        let b = ctx.vars.var(self.bias);
        Ok(ctx.g.conv2d(x, w, Some(b), self.spec)?)
    }
}

#[derive(Clone, Debug)]
pub struct BatchNorm {
    pub gamma: ParamId,
    pub beta: ParamId,
    /// Index into the model's running-statistics buffers.
    pub stats: usize,
}

impl BatchNorm {
    pub(crate) fn new<T: Real>(
        b: &mut ParamBuilder<'_, T>,
        stats: &mut Vec<BnStats<T>>,
        name: &str,
        channels: usize,
    ) -> Self {
        let gamma = b.constant(format!("{name}.gamma"), &[channels], 1.0);
        let beta = b.constant(format!("{name}.beta"), &[channels], 0.0);
        stats.push(BnStats::new(channels));
        Self {
            gamma,
            beta,
            stats: stats.len() - 1,
        }
    }

    pub fn forward<T: Real>(&self, ctx: &mut Ctx<'_, T>, x: Var) -> Result<Var> {
        let gamma = ctx.vars.var(self.gamma);
        let beta = ctx.vars.var(self.beta);
        let mode = ctx.mode;
        Ok(ctx
            .g
            .batch_norm(x, gamma, beta, &mut ctx.stats[self.stats], mode)?)
    }
}

#[derive(Clone, Debug)]
pub struct Dense {
    pub weight: ParamId,
    pub bias: ParamId,
}

impl Dense {
    pub(crate) fn new<T: Real>(
        b: &mut ParamBuilder<'_, T>,
        name: &str,
        din: usize,
        dout: usize,
    ) -> Self {
        Self {
            weight: b.uniform(format!("{name}.weight"), &[dout, din], din),
            bias: b.uniform(format!("{name}.bias"), &[dout], din),
        }
    }

    pub fn forward<T: Real>(&self, ctx: &mut Ctx<'_, T>, x: Var) -> Result<Var> {
        let w = ctx.vars.var(self.weight);
        let b = ctx.vars.var(self.bias);
        Ok(ctx.g.linear(x, w, Some(b))?)
    }
}

/// Three conv-BN-ReLU stages plus a skip from input to output.
///
/// The skip is the identity when channel counts agree and a 1x1 projection otherwise.
#[derive(Clone, Debug)]
pub struct ResidualModule {
    pub convs: [Conv; 3],
    pub norms: [BatchNorm; 3],
    pub projection: Option<Conv>,
}

impl ResidualModule {
    pub(crate) fn new<T: Real>(
        b: &mut ParamBuilder<'_, T>,
        stats: &mut Vec<BnStats<T>>,
        name: &str,
        cin: usize,
        cout: usize,
    ) -> Self {
        let convs = [
            Conv::new(b, &format!("{name}.conv0"), ConvSpec::same(cin, cout, 3)),
            Conv::new(b, &format!("{name}.conv1"), ConvSpec::same(cout, cout, 3)),
            Conv::new(b, &format!("{name}.conv2"), ConvSpec::same(cout, cout, 3)),
        ];
        let norms = [0, 1, 2].map(|i| BatchNorm::new(b, stats, &format!("{name}.bn{i}"), cout));
        let projection = (cin != cout)
            .then(|| Conv::new(b, &format!("{name}.proj"), ConvSpec::new(cin, cout, 1)));
        Self {
            convs,
            norms,
            projection,
        }
    }

    pub fn forward<T: Real>(&self, ctx: &mut Ctx<'_, T>, x: Var) -> Result<Var> {
        let mut h = x;
        for (conv, bn) in self.convs.iter().zip(&self.norms) {
            h = conv.forward(ctx, h)?;
            h = bn.forward(ctx, h)?;
            h = ctx.g.relu(h);
        }
        let skip = match &self.projection {
            Some(p) => p.forward(ctx, x)?,
            None => x,
        };
        Ok(ctx.g.add(h, skip)?)
    }
}

/// Residual dense block: densely connected 3x3 convs, 1x1 local fusion, local residual.
#[derive(Clone, Debug)]
pub struct Rdb {
    pub layers: Vec<Conv>,
    pub fusion: Conv,
    pub channels: usize,
    pub growth: usize,
}

impl Rdb {
    pub(crate) fn new<T: Real>(
        b: &mut ParamBuilder<'_, T>,
        name: &str,
        channels: usize,
        growth: usize,
        depth: usize,
    ) -> Self {
        let layers = (0..depth)
            .map(|i| {
                let spec = ConvSpec::same(channels + i * growth, growth, 3);
                Conv::new(b, &format!("{name}.dense{i}"), spec)
            })
            .collect();
        let fusion = Conv::new(
            b,
            &format!("{name}.fusion"),
            ConvSpec::new(channels + depth * growth, channels, 1),
        );
        Self {
            layers,
            fusion,
            channels,
            growth,
        }
    }

    /// Width of the concatenated state fed to the local fusion conv.
    pub fn fusion_width(&self) -> usize {
        self.channels + self.layers.len() * self.growth
    }

    pub fn forward<T: Real>(&self, ctx: &mut Ctx<'_, T>, x: Var) -> Result<Var> {
        let mut state = x;
        for layer in &self.layers {
            let h = layer.forward(ctx, state)?;
            let h = ctx.g.relu(h);
            state = ctx.g.concat_channels(&[state, h])?;
        }
        let fused = self.fusion.forward(ctx, state)?;
        Ok(ctx.g.add(fused, x)?)
    }
}

/// Convolution whose kernel is an input-conditioned convex mix of `K` kernel banks.
///
/// Attention comes from a squeeze-excitation branch: global average pooling,
/// a ReLU-activated hidden layer, and a softmax over the banks.
#[derive(Clone, Debug)]
pub struct DynamicConv {
    pub banks: ParamId,
    pub bank_bias: ParamId,
    pub squeeze: Dense,
    pub excite: Dense,
    pub kernels: usize,
    pub spec: ConvSpec,
}

impl DynamicConv {
    pub(crate) fn new<T: Real>(
        b: &mut ParamBuilder<'_, T>,
        name: &str,
        spec: ConvSpec,
        kernels: usize,
    ) -> Self {
        let fan_in = spec.in_channels * spec.kernel * spec.kernel;
        let mut bank_shape = vec![kernels];
        bank_shape.extend(spec.weight_shape());
        let banks = b.uniform(format!("{name}.banks"), &bank_shape, fan_in);
        let bank_bias = b.uniform(
            format!("{name}.bank_bias"),
            &[kernels, spec.out_channels],
            fan_in,
        );
        let hidden = (spec.in_channels / 4).max(4);
        Self {
            banks,
            bank_bias,
            squeeze: Dense::new(b, &format!("{name}.se0"), spec.in_channels, hidden),
            excite: Dense::new(b, &format!("{name}.se1"), hidden, kernels),
            kernels,
            spec,
        }
    }

    /// Per-sample attention over the kernel banks, `[N, K]`.
    pub fn attention<T: Real>(&self, ctx: &mut Ctx<'_, T>, x: Var) -> Result<Var> {
        let pooled = ctx.g.global_avg_pool(x)?;
        let hidden = self.squeeze.forward(ctx, pooled)?;
        let hidden = ctx.g.relu(hidden);
        let logits = self.excite.forward(ctx, hidden)?;
        Ok(ctx.g.softmax(logits, 1)?)
    }

    pub fn forward<T: Real>(&self, ctx: &mut Ctx<'_, T>, x: Var) -> Result<Var> {
        let n = ctx.g.shape(x)[0];
        let attn = self.attention(ctx, x)?;
        let [co, ci, k, _] = self.spec.weight_shape();
        let flat = ctx
            .g
            .reshape(ctx.vars.var(self.banks), &[self.kernels, co * ci * k * k])?;
        let mixed = ctx.g.matmul(attn, flat)?;
        let weights = ctx.g.reshape(mixed, &[n, co, ci, k, k])?;
        let bias = ctx.g.matmul(attn, ctx.vars.var(self.bank_bias))?;
        Ok(ctx.g.conv2d_per_sample(x, weights, Some(bias), self.spec)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::ModelParams;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use sasr_tensor::Tensor;

    struct Fixture {
        params: ModelParams<f64>,
        stats: Vec<BnStats<f64>>,
        rng: ChaCha8Rng,
    }

    impl Fixture {
        fn new() -> Self {
            Self {
                params: ModelParams::new(),
                stats: Vec::new(),
                rng: ChaCha8Rng::seed_from_u64(7),
            }
        }

        fn builder(&mut self) -> (ParamBuilder<'_, f64>, &mut Vec<BnStats<f64>>) {
            (
                ParamBuilder {
                    params: &mut self.params,
                    rng: &mut self.rng,
                },
                &mut self.stats,
            )
        }

        fn zero_where(&mut self, pred: impl Fn(&str) -> bool) {
            let ids: Vec<ParamId> = (0..self.params.len())
                .map(ParamId)
                .filter(|&id| pred(self.params.name(id)))
                .collect();
            for id in ids {
                self.params.get_mut(id).data_mut().fill(0.0);
            }
        }

        fn run(
            &mut self,
            x: &Tensor<f64>,
            f: impl FnOnce(&mut Ctx<'_, f64>, Var) -> Result<Var>,
        ) -> Tensor<f64> {
            let mut g = Graph::new();
            let vars = self.params.bind(&mut g, false);
            let xv = g.constant(x.clone());
            let mut ctx = Ctx {
                g: &mut g,
                vars: &vars,
                stats: &mut self.stats,
                mode: BnMode::Train,
            };
            let y = f(&mut ctx, xv).unwrap();
            g.value(y).clone()
        }
    }

    fn random(shape: &[usize], seed: u64) -> Tensor<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Tensor::from_fn(shape.to_vec(), |_| rng.gen_range(-1.0..1.0))
    }

    #[test]
    fn residual_module_with_zero_convs_is_identity() {
        let mut fx = Fixture::new();
        let (mut b, stats) = fx.builder();
        let block = ResidualModule::new(&mut b, stats, "res", 4, 4);
        fx.zero_where(|n| n.contains(".conv"));
        let x = random(&[2, 4, 8, 8], 1);
        let y = fx.run(&x, |ctx, v| block.forward(ctx, v));
        assert_eq!(y.shape(), x.shape());
        for (a, b) in y.data().iter().zip(x.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn residual_module_projects_when_widths_differ() {
        let mut fx = Fixture::new();
        let (mut b, stats) = fx.builder();
        let block = ResidualModule::new(&mut b, stats, "res", 1, 3);
        assert!(block.projection.is_some());
        let y = fx.run(&random(&[1, 1, 6, 6], 2), |ctx, v| block.forward(ctx, v));
        assert_eq!(y.shape(), &[1, 3, 6, 6]);
    }

    #[test]
    fn rdb_shapes_and_zero_weights() {
        let mut fx = Fixture::new();
        let (mut b, _) = fx.builder();
        let rdb = Rdb::new(&mut b, "rdb", 32, 16, 4);
        assert_eq!(rdb.fusion_width(), 32 + 4 * 16);
        let x = random(&[1, 32, 16, 16], 3);
        let y = fx.run(&x, |ctx, v| rdb.forward(ctx, v));
        assert_eq!(y.shape(), &[1, 32, 16, 16]);
        fx.zero_where(|_| true);
        let y = fx.run(&x, |ctx, v| rdb.forward(ctx, v));
        assert_eq!(y, x);
    }

    fn dynamic_fixture() -> (Fixture, DynamicConv) {
        let mut fx = Fixture::new();
        let (mut b, _) = fx.builder();
        let dc = DynamicConv::new(&mut b, "dyn", ConvSpec::same(6, 3, 3), 4);
        (fx, dc)
    }

    #[test]
    fn attention_lies_on_simplex() {
        let (mut fx, dc) = dynamic_fixture();
        for seed in 0..50 {
            let a = fx.run(&random(&[3, 6, 5, 5], seed), |ctx, v| dc.attention(ctx, v));
            assert_eq!(a.shape(), &[3, 4]);
            for row in a.data().chunks(4) {
                assert!(row.iter().all(|&p| p >= 0.0));
                assert!((row.iter().sum::<f64>() - 1.0).abs() <= 1e-6);
            }
        }
    }

    #[test]
    fn saturated_attention_selects_one_bank() {
        let (mut fx, dc) = dynamic_fixture();
        let k = 2;
        fx.params.get_mut(dc.excite.weight).data_mut().fill(0.0);
        let bias = fx.params.get_mut(dc.excite.bias);
        bias.data_mut().fill(-1e3);
        bias.data_mut()[k] = 1e3;
        let x = random(&[2, 6, 7, 7], 4);
        let y = fx.run(&x, |ctx, v| dc.forward(ctx, v));

        let banks = fx.params.get(dc.banks).clone();
        let per = banks.numel() / 4;
        let wk = Tensor::new(
            dc.spec.weight_shape().to_vec(),
            banks.data()[k * per..(k + 1) * per].to_vec(),
        )
        .unwrap();
        let bk = Tensor::new(vec![3], fx.params.get(dc.bank_bias).data()[k * 3..k * 3 + 3].to_vec())
            .unwrap();
        let mut g = Graph::new();
        let (xv, wv, bv) = (g.constant(x), g.constant(wk), g.constant(bk));
        let reference = g.conv2d(xv, wv, Some(bv), dc.spec).unwrap();
        for (a, b) in y.data().iter().zip(g.value(reference).data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn identical_banks_ignore_attention() {
        let (mut fx, dc) = dynamic_fixture();
        let banks = fx.params.get_mut(dc.banks);
        let per = banks.numel() / 4;
        let first = banks.data()[..per].to_vec();
        for k in 1..4 {
            banks.data_mut()[k * per..(k + 1) * per].copy_from_slice(&first);
        }
        let bias = fx.params.get_mut(dc.bank_bias);
        let b0 = bias.data()[..3].to_vec();
        for k in 1..4 {
            bias.data_mut()[k * 3..k * 3 + 3].copy_from_slice(&b0);
        }
        let x = random(&[1, 6, 5, 5], 5);
        let y1 = fx.run(&x, |ctx, v| dc.forward(ctx, v));
        let excite = fx.params.get_mut(dc.excite.bias);
        excite.data_mut().copy_from_slice(&[3.0, -2.0, 0.5, 1.0]);
        let y2 = fx.run(&x, |ctx, v| dc.forward(ctx, v));
        for (a, b) in y1.data().iter().zip(y2.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
