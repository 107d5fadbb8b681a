//! Tape of recorded operations and the reverse sweep over it.
//!
//! Nodes are appended in evaluation order, so an operation's inputs always
//! carry smaller indices than the operation itself. The backward pass walks
//! the tape once from the loss towards the leaves.

use crate::error::{Result, TensorError};
use crate::ops::{activation, conv, elementwise, linear, norm, pool, shape};
use crate::real::Real;
use crate::tensor::Tensor;

/// Handle to a node on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(pub(crate) usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
pub(crate) enum Op<T> {
    Leaf,
    Conv2d {
        x: Var,
        w: Var,
        b: Option<Var>,
        geom: conv::Geom,
    },
    BatchNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        xhat: Vec<T>,
        inv_std: Vec<T>,
        batch_stats: bool,
    },
    MaxPool2 {
        x: Var,
        argmax: Vec<u32>,
    },
    UpsampleNearest2 {
        x: Var,
    },
    PixelShuffle {
        x: Var,
        r: usize,
    },
    GlobalAvgPool {
        x: Var,
    },
    Relu {
        x: Var,
    },
    LeakyRelu {
        x: Var,
        slope: T,
    },
    Sigmoid {
        x: Var,
    },
    Softmax {
        x: Var,
        axis: usize,
    },
    Linear {
        x: Var,
        w: Var,
        b: Option<Var>,
    },
    MatMul {
        a: Var,
        b: Var,
    },
    Concat {
        xs: Vec<Var>,
    },
    Reshape {
        x: Var,
    },
    Pad2d {
        x: Var,
        pad: usize,
    },
    Add {
        a: Var,
        b: Var,
    },
    Sub {
        a: Var,
        b: Var,
    },
    Mul {
        a: Var,
        b: Var,
    },
    Div {
        a: Var,
        b: Var,
    },
    AddScalar {
        x: Var,
    },
    MulScalar {
        x: Var,
        s: T,
    },
    Square {
        x: Var,
    },
    Sqrt {
        x: Var,
    },
    Log {
        x: Var,
    },
    Clamp {
        x: Var,
        lo: T,
        hi: T,
    },
    Sum {
        x: Var,
    },
    Mean {
        x: Var,
    },
}

struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    requires_grad: bool,
    grad: Option<Tensor<T>>,
}

/// Records forward computations so gradients can be pulled back from a scalar.
///
/// A graph is single-threaded and single-use per training step: build it,
/// call [`Graph::backward`], read leaf gradients, drop it.
pub struct Graph<T: Real = f32> {
    nodes: Vec<Node<T>>,
}

impl<T: Real> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Real> Graph<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Leaf that receives a gradient slot.
    pub fn param(&mut self, value: Tensor<T>) -> Var {
        self.leaf(value, true)
    }

    /// Leaf excluded from differentiation.
    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.leaf(value, false)
    }

    pub fn leaf(&mut self, value: Tensor<T>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad,
            grad: None,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Accumulated gradient of a leaf, `None` until a backward pass reached it.
    pub fn grad(&self, v: Var) -> Option<&Tensor<T>> {
        self.nodes[v.0].grad.as_ref()
    }

    /// Gradient of a leaf, zeros when nothing flowed into it.
    pub fn grad_or_zeros(&self, v: Var) -> Tensor<T> {
        self.grad(v)
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(self.shape(v).to_vec()))
    }

    /// Hash of every data-dependent branch taken so far: ReLU and LeakyReLU
    /// input signs, max-pool winners and clamp regions. Two evaluations with
    /// equal signatures lie on the same smooth piece of the function.
    pub fn branch_signature(&self) -> u64 {
        use std::hash::{Hash, Hasher};
        let mut h = std::collections::hash_map::DefaultHasher::new();
        for node in &self.nodes {
            match &node.op {
                Op::Relu { x } | Op::LeakyRelu { x, .. } => {
                    for v in self.value(*x).data() {
                        (*v > T::zero()).hash(&mut h);
                    }
                }
                Op::MaxPool2 { argmax, .. } => argmax.hash(&mut h),
                Op::Clamp { x, lo, hi } => {
                    for v in self.value(*x).data() {
                        let region: u8 = if *v < *lo { 0 } else if *v > *hi { 2 } else { 1 };
                        region.hash(&mut h);
                    }
                }
                _ => {}
            }
        }
        h.finish()
    }

    pub fn zero_grad(&mut self) {
        for node in &mut self.nodes {
            node.grad = None;
        }
    }

    pub(crate) fn push(&mut self, value: Tensor<T>, op: Op<T>, inputs: &[Var]) -> Var {
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
            grad: None,
        });
        Var(self.nodes.len() - 1)
    }

    /// Reverse sweep from a scalar `loss`. Leaf gradients accumulate across calls
    /// until [`Graph::zero_grad`].
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        let loss_shape = self.shape(loss).to_vec();
        if loss_shape.iter().product::<usize>() != 1 {
            return Err(TensorError::NonScalarLoss(loss_shape));
        }
        if !self.nodes[loss.0].requires_grad {
            return Ok(());
        }
        let mut pending: Vec<Option<Tensor<T>>> = Vec::new();
        pending.resize_with(loss.0 + 1, || None);
        pending[loss.0] = Some(Tensor::ones(loss_shape));

        for id in (0..=loss.0).rev() {
            let Some(gout) = pending[id].take() else {
                continue;
            };
            if matches!(self.nodes[id].op, Op::Leaf) {
                let node = &mut self.nodes[id];
                match &mut node.grad {
                    Some(acc) => acc.add_assign(&gout),
                    slot => *slot = Some(gout),
                }
                continue;
            }
            for (input, g) in self.backward_op(id, &gout) {
                if !self.nodes[input.0].requires_grad {
                    continue;
                }
                match &mut pending[input.0] {
                    Some(acc) => acc.add_assign(&g),
                    slot => *slot = Some(g),
                }
            }
        }
        Ok(())
    }

    fn backward_op(&self, id: usize, gout: &Tensor<T>) -> Vec<(Var, Tensor<T>)> {
        let out = &self.nodes[id].value;
        let need = |v: Var| self.nodes[v.0].requires_grad;
        let val = |v: Var| &self.nodes[v.0].value;
        match &self.nodes[id].op {
            Op::Leaf => Vec::new(),
            Op::Conv2d { x, w, b, geom } => {
                conv::backward(geom, *x, val(*x), *w, val(*w), *b, gout, need)
            }
            Op::BatchNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
                batch_stats,
            } => norm::backward(
                *x,
                *gamma,
                *beta,
                val(*gamma),
                xhat,
                inv_std,
                *batch_stats,
                gout,
                need,
            ),
            Op::MaxPool2 { x, argmax } => vec![(*x, pool::max_pool2_backward(val(*x), argmax, gout))],
            Op::UpsampleNearest2 { x } => vec![(*x, pool::upsample_backward(val(*x), gout))],
            Op::PixelShuffle { x, r } => vec![(*x, pool::pixel_unshuffle(gout, *r))],
            Op::GlobalAvgPool { x } => vec![(*x, pool::gap_backward(val(*x), gout))],
            Op::Relu { x } => vec![(*x, activation::relu_backward(val(*x), gout))],
            Op::LeakyRelu { x, slope } => {
                vec![(*x, activation::leaky_relu_backward(val(*x), *slope, gout))]
            }
            Op::Sigmoid { x } => vec![(*x, activation::sigmoid_backward(out, gout))],
            Op::Softmax { x, axis } => vec![(*x, activation::softmax_backward(out, *axis, gout))],
            Op::Linear { x, w, b } => linear::linear_backward(*x, val(*x), *w, val(*w), *b, gout, need),
            Op::MatMul { a, b } => linear::matmul_backward(*a, val(*a), *b, val(*b), gout, need),
            Op::Concat { xs } => {
                let widths: Vec<usize> = xs.iter().map(|v| val(*v).shape()[1]).collect();
                shape::concat_backward(xs, &widths, gout)
            }
            Op::Reshape { x } => vec![(*x, shape::reshape_backward(val(*x), gout))],
            Op::Pad2d { x, pad } => vec![(*x, shape::pad2d_backward(val(*x), *pad, gout))],
            Op::Add { a, b } => vec![(*a, gout.clone()), (*b, gout.clone())],
            Op::Sub { a, b } => vec![(*a, gout.clone()), (*b, gout.map(|g| -g))],
            Op::Mul { a, b } => elementwise::mul_backward(*a, val(*a), *b, val(*b), gout, need),
            Op::Div { a, b } => elementwise::div_backward(*a, val(*a), *b, val(*b), gout, need),
            Op::AddScalar { x } => vec![(*x, gout.clone())],
            Op::MulScalar { x, s } => vec![(*x, gout.map(|g| g * *s))],
            Op::Square { x } => vec![(*x, elementwise::zip_map(val(*x), gout, |v, g| g * v * T::lit(2.0)))],
            Op::Sqrt { x } => vec![(*x, elementwise::zip_map(out, gout, |y, g| g / (y * T::lit(2.0))))],
            Op::Log { x } => vec![(*x, elementwise::zip_map(val(*x), gout, |v, g| g / v))],
            Op::Clamp { x, lo, hi } => vec![(
                *x,
                elementwise::zip_map(val(*x), gout, |v, g| {
                    if v >= *lo && v <= *hi {
                        g
                    } else {
                        T::zero()
                    }
                }),
            )],
            Op::Sum { x } => vec![(*x, Tensor::full(val(*x).shape().to_vec(), gout.item()))],
            Op::Mean { x } => {
                let n = T::lit(val(*x).numel() as f64);
                vec![(*x, Tensor::full(val(*x).shape().to_vec(), gout.item() / n))]
            }
        }
    }
}
