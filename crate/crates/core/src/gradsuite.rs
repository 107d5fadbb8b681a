//! Double-precision finite-difference verification of every differentiable
//! operation, loss and network component.

use crate::error::Result;
use crate::losses::{
    loss_adv_discriminator, loss_adv_generator, loss_sparse_edge, loss_sr, soft_edge_map,
    LossWeights, SparseWeightGrid,
};
use crate::models::layers::Ctx;
use crate::models::{Discriminator, Generator, GeneratorConfig};
use crate::params::{Bindings, ModelParams, ParamId};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sasr_tensor::{
    grad_check, grad_check_report, BnMode, BnStats, ConvSpec, Graph, GradReport, Tensor, Var,
};

pub const STEP: f64 = 1e-5;
pub const TOLERANCE: f64 = 1e-4;
/// Test points redrawn before a check whose probes straddle a kink is recorded anyway.
const MAX_REDRAWS: u64 = 8;

#[derive(Clone, Debug, PartialEq)]
pub struct GradCase {
    pub name: String,
    /// Worst relative error over all seeds and checked coordinates.
    pub max_rel_error: f64,
}

impl GradCase {
    pub fn passed(&self) -> bool {
        self.max_rel_error <= TOLERANCE
    }
}

#[derive(Clone, Copy, Debug)]
pub struct SuiteOptions {
    /// Seeds per primitive operation and loss.
    pub op_seeds: u64,
    /// Seeds per network component.
    pub model_seeds: u64,
    /// Parameter coordinates sampled per checked parameter tensor.
    pub param_samples: usize,
}

impl Default for SuiteOptions {
    fn default() -> Self {
        Self {
            op_seeds: 10,
            model_seeds: 2,
            param_samples: 6,
        }
    }
}

fn random(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor<f64> {
    Tensor::from_fn(shape.to_vec(), |_| rng.gen_range(-1.0..1.0))
}

fn unit(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor<f64> {
    Tensor::from_fn(shape.to_vec(), |_| rng.gen_range(0.05..0.95))
}

/// Scalar reduction through a fixed random projection.
fn project(g: &mut Graph<f64>, y: Var, seed: u64) -> Result<Var> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let r = g.constant(random(g.shape(y), &mut rng));
    let p = g.mul(y, r)?;
    Ok(g.sum(p))
}

struct Suite {
    opts: SuiteOptions,
    cases: Vec<GradCase>,
}

impl Suite {
    fn record(&mut self, name: &str, err: f64) {
        match self.cases.iter_mut().find(|c| c.name == name) {
            Some(c) => c.max_rel_error = c.max_rel_error.max(err),
            None => self.cases.push(GradCase {
                name: name.to_string(),
                max_rel_error: err,
            }),
        }
    }

    /// Checks `f` at a fresh random input for every op seed.
    fn op(
        &mut self,
        name: &str,
        shape: &[usize],
        f: impl Fn(&mut Graph<f64>, Var, &mut ChaCha8Rng) -> Result<Var>,
    ) -> Result<()> {
        for seed in 0..self.opts.op_seeds {
            let mut report = GradReport::default();
            for attempt in 0..=MAX_REDRAWS {
                let mut rng = ChaCha8Rng::seed_from_u64(seed + attempt * 0x1_0000);
                let x = random(shape, &mut rng);
                let all: Vec<usize> = (0..x.numel()).collect();
                report = grad_check_report(
                    |g, v| {
                        let mut rng = ChaCha8Rng::seed_from_u64(seed + 1000);
                        let y = f(g, v, &mut rng)?;
                        if g.shape(y).iter().product::<usize>() == 1 {
                            Ok(y)
                        } else {
                            project(g, y, seed)
                        }
                    },
                    &x,
                    STEP,
                    &all,
                )?;
                if report.is_clean() {
                    break;
                }
            }
            self.record(name, report.max_rel_error);
        }
        Ok(())
    }

    fn primitives(&mut self) -> Result<()> {
        let spec = ConvSpec::new(2, 3, 3).with_stride(2).with_padding(1);
        self.op("conv2d/input", &[2, 2, 7, 6], |g, x, rng| {
            let w = g.constant(random(&spec.weight_shape(), rng));
            let b = g.constant(random(&[3], rng));
            Ok(g.conv2d(x, w, Some(b), spec)?)
        })?;
        self.op("conv2d/weight", &spec.weight_shape(), |g, w, rng| {
            let x = g.constant(random(&[2, 2, 7, 6], rng));
            let b = g.constant(random(&[3], rng));
            Ok(g.conv2d(x, w, Some(b), spec)?)
        })?;
        self.op("conv2d/bias", &[3], |g, b, rng| {
            let x = g.constant(random(&[1, 2, 5, 5], rng));
            let w = g.constant(random(&spec.weight_shape(), rng));
            Ok(g.conv2d(x, w, Some(b), spec)?)
        })?;
        let same = ConvSpec::same(2, 2, 3);
        self.op("conv2d_per_sample/weight", &[2, 2, 2, 3, 3], |g, w, rng| {
            let x = g.constant(random(&[2, 2, 5, 5], rng));
            let b = g.constant(random(&[2, 2], rng));
            Ok(g.conv2d_per_sample(x, w, Some(b), same)?)
        })?;
        self.op("conv2d_per_sample/input", &[2, 2, 5, 5], |g, x, rng| {
            let w = g.constant(random(&[2, 2, 2, 3, 3], rng));
            let b = g.constant(random(&[2, 2], rng));
            Ok(g.conv2d_per_sample(x, w, Some(b), same)?)
        })?;
        for (mode, label) in [(BnMode::Train, "train"), (BnMode::Eval, "eval")] {
            self.op(&format!("batch_norm/{label}/input"), &[3, 2, 3, 3], |g, x, rng| {
                let gamma = g.constant(random(&[2], rng));
                let beta = g.constant(random(&[2], rng));
                let mut stats = BnStats {
                    running_mean: vec![0.1, -0.3],
                    running_var: vec![0.8, 1.7],
                };
                Ok(g.batch_norm(x, gamma, beta, &mut stats, mode)?)
            })?;
            self.op(&format!("batch_norm/{label}/gamma"), &[2], |g, gamma, rng| {
                let x = g.constant(random(&[3, 2, 3, 3], rng));
                let beta = g.constant(random(&[2], rng));
                let mut stats = BnStats::new(2);
                Ok(g.batch_norm(x, gamma, beta, &mut stats, mode)?)
            })?;
        }
        self.op("max_pool2", &[2, 2, 4, 6], |g, x, _| Ok(g.max_pool2(x)?))?;
        self.op("upsample_nearest2", &[1, 2, 3, 2], |g, x, _| {
            Ok(g.upsample_nearest2(x)?)
        })?;
        self.op("pixel_shuffle", &[2, 8, 2, 3], |g, x, _| Ok(g.pixel_shuffle(x, 2)?))?;
        self.op("global_avg_pool", &[2, 3, 3, 4], |g, x, _| {
            Ok(g.global_avg_pool(x)?)
        })?;
        self.op("pad2d", &[1, 2, 3, 3], |g, x, _| Ok(g.pad2d(x, 2)?))?;
        self.op("concat_channels", &[1, 2, 3, 3], |g, x, rng| {
            let other = g.constant(random(&[1, 3, 3, 3], rng));
            let sq = g.square(x);
            Ok(g.concat_channels(&[x, other, sq])?)
        })?;
        self.op("reshape", &[2, 3, 4], |g, x, _| Ok(g.reshape(x, &[4, 6])?))?;
        self.op("relu", &[3, 7], |g, x, _| Ok(g.relu(x)))?;
        self.op("leaky_relu", &[3, 7], |g, x, _| Ok(g.leaky_relu(x, 0.2)))?;
        self.op("sigmoid", &[3, 7], |g, x, _| Ok(g.sigmoid(x)))?;
        self.op("softmax", &[3, 4, 2], |g, x, _| Ok(g.softmax(x, 1)?))?;
        self.op("linear/input", &[3, 4], |g, x, rng| {
            let w = g.constant(random(&[5, 4], rng));
            let b = g.constant(random(&[5], rng));
            Ok(g.linear(x, w, Some(b))?)
        })?;
        self.op("linear/weight", &[5, 4], |g, w, rng| {
            let x = g.constant(random(&[3, 4], rng));
            let b = g.constant(random(&[5], rng));
            Ok(g.linear(x, w, Some(b))?)
        })?;
        self.op("matmul", &[3, 4], |g, a, rng| {
            let b = g.constant(random(&[4, 2], rng));
            Ok(g.matmul(a, b)?)
        })?;
        self.op("elementwise", &[2, 5], |g, x, rng| {
            let other = g.constant(random(&[2, 5], rng).map(|v| v.abs() + 0.5));
            let a = g.add(x, other)?;
            let m = g.mul(a, x)?;
            let d = g.div(m, other)?;
            let s = g.sub(d, other)?;
            let s = g.mul_scalar(s, 1.7);
            Ok(g.add_scalar(s, 0.3))
        })?;
        self.op("log/sqrt/clamp", &[2, 5], |g, x, _| {
            let sq = g.square(x);
            let pos = g.add_scalar(sq, 0.2);
            let l = g.log(pos);
            let r = g.sqrt(pos);
            let c = g.clamp(x, -0.5, 0.5);
            let y = g.add(l, r)?;
            Ok(g.add(y, c)?)
        })?;
        self.op("sum/mean", &[3, 3], |g, x, _| {
            let sq = g.square(x);
            let s = g.sum(sq);
            let m = g.mean(x);
            Ok(g.add(s, m)?)
        })
    }

    fn losses(&mut self) -> Result<()> {
        let w = LossWeights::default();
        for seed in 0..self.opts.op_seeds {
            let mut rng = ChaCha8Rng::seed_from_u64(seed + 50);
            let target = unit(&[1, 1, 12, 12], &mut rng);
            let x = unit(&[1, 1, 12, 12], &mut rng);
            let err = grad_check(
                |g, v| {
                    let t = g.constant(target.clone());
                    loss_sr(g, v, t, &w)
                },
                &x,
                STEP,
            )?;
            self.record("loss_sr", err);

            let x = unit(&[1, 1, 10, 9], &mut rng);
            let err = grad_check(
                |g, v| {
                    let e = soft_edge_map(g, v)?;
                    project(g, e, seed)
                },
                &x,
                STEP,
            )?;
            self.record("soft_edge_map", err);

            let reference = unit(&[2, 1, 16, 16], &mut rng);
            let grids: Vec<SparseWeightGrid> = (0..2)
                .map(|_| {
                    let w_hat: Vec<f64> = (0..4).map(|_| rng.gen_range(0.0..1.0)).collect();
                    SparseWeightGrid {
                        n: 4,
                        rows: 2,
                        cols: 2,
                        d: w_hat.clone(),
                        w_hat,
                        lambda: 0.05,
                        epsilon: 1e-12,
                    }
                })
                .collect();
            let x = unit(&[2, 1, 16, 16], &mut rng);
            let err = grad_check(
                |g, v| {
                    let f = g.constant(reference.clone());
                    loss_sparse_edge(g, v, f, &grids)
                },
                &x,
                STEP,
            )?;
            self.record("loss_sparse_edge", err);

            let logits = random(&[2, 1, 3, 3], &mut rng);
            let err = grad_check(
                |g, v| {
                    let p = g.sigmoid(v);
                    loss_adv_generator(g, p)
                },
                &logits,
                STEP,
            )?;
            self.record("loss_adv_generator", err);
            let other = random(&[2, 1, 3, 3], &mut rng);
            let err = grad_check(
                |g, v| {
                    let p = g.sigmoid(v);
                    let q = g.constant(other.clone());
                    let q = g.sigmoid(q);
                    let a = loss_adv_discriminator(g, p, q)?;
                    let b = loss_adv_discriminator(g, q, p)?;
                    Ok::<_, crate::SasrError>(g.add(a, b)?)
                },
                &logits,
                STEP,
            )?;
            self.record("loss_adv_discriminator", err);
        }
        Ok(())
    }

    /// Checks a component forward pass with respect to its input and to sampled
    /// coordinates of selected parameter tensors.
    #[allow(clippy::too_many_arguments)]
    fn component(
        &mut self,
        name: &str,
        params: &ModelParams<f64>,
        stats: &[BnStats<f64>],
        checked: &[ParamId],
        input: &[Tensor<f64>],
        seed: u64,
        forward: impl Fn(&mut Ctx<'_, f64>, &[Var]) -> Result<Var>,
    ) -> Result<()> {
        let run = |g: &mut Graph<f64>, vars: &Bindings, xs: &[Var]| -> Result<Var> {
            let mut stats = stats.to_vec();
            let mut ctx = Ctx {
                g,
                vars,
                stats: &mut stats,
                mode: BnMode::Train,
            };
            let y = forward(&mut ctx, xs)?;
            project(ctx.g, y, seed)
        };
        // Central differences are only meaningful on a smooth piece and above
        // rounding noise. Jitter the input until no probe flips a ReLU, pool
        // winner or clamp region, and no coordinate sits at an accidental zero.
        let mut x0 = input[0].clone();
        let mut report = GradReport::default();
        for attempt in 0..=MAX_REDRAWS {
            if attempt > 0 {
                let mut jitter = ChaCha8Rng::seed_from_u64(seed * 1000 + attempt);
                let shape = input[0].shape().to_vec();
                let data = input[0].data().iter().map(|v| v + 0.01 * jitter.gen_range(-1.0..1.0)).collect();
                x0 = Tensor::new(shape, data)?;
            }
            let all: Vec<usize> = (0..x0.numel()).collect();
            report = grad_check_report(
                |g, v| {
                    let vars = params.bind(g, false);
                    let mut xs = vec![v];
                    xs.extend(input[1..].iter().map(|t| g.constant(t.clone())));
                    run(g, &vars, &xs)
                },
                &x0,
                STEP,
                &all,
            )?;
            if report.is_clean() {
                break;
            }
        }
        self.record(&format!("{name}/input"), report.max_rel_error);

        let mut rng = ChaCha8Rng::seed_from_u64(seed + 77);
        for &id in checked {
            let p = params.get(id);
            for _ in 0..self.opts.param_samples {
                // A coordinate that is kinked or unresolvable is swapped for another.
                let mut report = GradReport::default();
                for _ in 0..=MAX_REDRAWS {
                    let index = rng.gen_range(0..p.numel());
                    report = grad_check_report(
                        |g, v| {
                            let mut vars = params.bind(g, false);
                            vars.replace(id, v);
                            let xs: Vec<Var> = input.iter().map(|t| g.constant(t.clone())).collect();
                            run(g, &vars, &xs)
                        },
                        p,
                        STEP,
                        &[index],
                    )?;
                    if report.is_clean() {
                        break;
                    }
                }
                self.record(&format!("{name}/params"), report.max_rel_error);
            }
        }
        Ok(())
    }

    fn models(&mut self) -> Result<()> {
        for seed in 0..self.opts.model_seeds {
            let gen: Generator<f64> = Generator::new(GeneratorConfig::tiny(), seed);
            let mut rng = ChaCha8Rng::seed_from_u64(seed + 200);
            let layout = &gen.layout;
            let c = gen.config.base;
            let by_name = |n: &str| gen.params.find(n).expect("known parameter");

            let block = &layout.encdec.levels[1].blocks[0];
            self.component(
                "residual_module",
                &gen.params,
                &gen.stats,
                &[block.convs[0].weight, block.norms[1].gamma],
                &[random(&[2, c, 8, 8], &mut rng)],
                seed,
                |ctx, xs| block.forward(ctx, xs[0]),
            )?;
            self.component(
                "rdb",
                &gen.params,
                &gen.stats,
                &[layout.backbone.rdbs[0].layers[1].weight],
                &[random(&[1, c, 6, 6], &mut rng)],
                seed,
                |ctx, xs| layout.backbone.rdbs[0].forward(ctx, xs[0]),
            )?;
            self.component(
                "backbone",
                &gen.params,
                &gen.stats,
                &[by_name("backbone.sfe0.weight"), by_name("backbone.dff.weight")],
                &[unit(&[1, 1, 8, 8], &mut rng)],
                seed,
                |ctx, xs| layout.backbone.forward(ctx, xs[0]),
            )?;
            self.component(
                "encoder_decoder",
                &gen.params,
                &gen.stats,
                &[by_name("encdec.level0.enc0.proj.weight"), by_name("encdec.level2.skip.fusion.weight")],
                &[unit(&[2, 1, 16, 16], &mut rng)],
                seed,
                |ctx, xs| layout.encdec.forward(ctx, xs[0]),
            )?;
            self.component(
                "dynamic_conv",
                &gen.params,
                &gen.stats,
                &[layout.head.dynamic.banks, layout.head.dynamic.squeeze.weight],
                &[random(&[2, 2 * c, 5, 5], &mut rng)],
                seed,
                |ctx, xs| layout.head.dynamic.forward(ctx, xs[0]),
            )?;
            self.component(
                "fusion_head",
                &gen.params,
                &gen.stats,
                &[layout.head.expand.weight, layout.head.dynamic.excite.bias],
                &[random(&[1, c, 6, 6], &mut rng), random(&[1, c, 6, 6], &mut rng)],
                seed,
                |ctx, xs| layout.head.forward(ctx, xs[0], xs[1]),
            )?;
            self.component(
                "generator",
                &gen.params,
                &gen.stats,
                &[
                    by_name("backbone.sfe0.weight"),
                    by_name("backbone.rdb5.dense1.weight"),
                    by_name("encdec.level0.enc1.bn2.gamma"),
                    by_name("encdec.bottleneck.conv1.weight"),
                    layout.head.dynamic.banks,
                    layout.head.expand.bias,
                ],
                &[unit(&[1, 1, 16, 16], &mut rng)],
                seed,
                |ctx, xs| layout.mlsr_forward(ctx, xs[0]),
            )?;

            let disc: Discriminator<f64> = Discriminator::new(2, seed);
            let input = unit(&[2, 1, 70, 70], &mut rng);
            let layers = disc.layers();
            self.component(
                "discriminator",
                &disc.params,
                &disc.stats,
                &[
                    disc.convs[0].weight,
                    disc.convs[2].weight,
                    disc.norms[1].gamma,
                    disc.convs[4].bias,
                ],
                &[input],
                seed,
                |ctx, xs| layers.forward(ctx, xs[0]),
            )?;
        }
        Ok(())
    }
}

/// Runs every gradient check and returns one entry per case.
pub fn run_suite(opts: SuiteOptions) -> Result<Vec<GradCase>> {
    let mut suite = Suite {
        opts,
        cases: Vec::new(),
    };
    suite.primitives()?;
    suite.losses()?;
    suite.models()?;
    Ok(suite.cases)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reduced_suite_passes() {
        let opts = SuiteOptions {
            op_seeds: 2,
            model_seeds: 1,
            param_samples: 3,
        };
        let cases = run_suite(opts).unwrap();
        assert!(cases.len() > 30);
        for c in &cases {
            assert!(c.passed(), "{} rel error {:e}", c.name, c.max_rel_error);
        }
    }
}
