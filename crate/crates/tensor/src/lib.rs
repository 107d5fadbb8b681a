//! Dense CPU tensors and a tape-based reverse-mode differentiation engine.
//!
//! Every operation lives on [`Graph`]: it evaluates eagerly, records what the
//! backward sweep needs, and returns a [`Var`] handle to the result. All
//! kernels run single-threaded with a fixed summation order, so identical
//! inputs give bit-identical outputs and gradients.
//!
//! ```
//! use sasr_tensor::{Graph, Tensor};
//!
//! let mut g = Graph::<f64>::new();
//! let x = g.param(Tensor::new([3], vec![1.0, -2.0, 0.5]).unwrap());
//! let sq = g.square(x);
//! let loss = g.sum(sq);
//! g.backward(loss).unwrap();
//! assert_eq!(g.grad(x).unwrap().data(), &[2.0, -4.0, 1.0]);
//! ```

mod error;
pub mod gradcheck;
mod graph;
mod ops;
mod real;
mod tensor;

pub use error::{Result, TensorError};
pub use gradcheck::{
    grad_check, grad_check_indices, grad_check_report, relative_error, GradReport, RESOLUTION_TOLERANCE,
};
pub use graph::{Graph, Var};
pub use ops::activation::sigmoid_scalar;
pub use ops::conv::ConvSpec;
pub use ops::norm::{BnMode, BnStats, BN_EPS, BN_MOMENTUM};
pub use ops::pool::{pixel_shuffle, pixel_unshuffle};
pub use real::Real;
pub use tensor::Tensor;
