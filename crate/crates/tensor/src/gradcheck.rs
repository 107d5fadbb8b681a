//! Central-difference verification of reverse-mode gradients.

use crate::error::TensorError;
use crate::graph::{Graph, Var};
use crate::tensor::Tensor;

/// `|a - b| / max(|a|, |b|, 1e-8)`.
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
}

/// Largest relative error between the autodiff gradient of the scalar `f` at `x`
/// and the central difference `(f(x + h e_i) - f(x - h e_i)) / 2h`, over all `i`.
///
/// `f` may use any error type that a [`TensorError`] converts into.
pub fn grad_check<F, E>(f: F, x: &Tensor<f64>, h: f64) -> std::result::Result<f64, E>
where
    F: Fn(&mut Graph<f64>, Var) -> std::result::Result<Var, E>,
    E: From<TensorError>,
{
    let all: Vec<usize> = (0..x.numel()).collect();
    grad_check_indices(f, x, h, &all)
}

/// [`grad_check`] restricted to the listed coordinates of `x`.
pub fn grad_check_indices<F, E>(
    f: F,
    x: &Tensor<f64>,
    h: f64,
    indices: &[usize],
) -> std::result::Result<f64, E>
where
    F: Fn(&mut Graph<f64>, Var) -> std::result::Result<Var, E>,
    E: From<TensorError>,
{
    Ok(grad_check_report(f, x, h, indices)?.max_rel_error)
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct GradReport {
    pub max_rel_error: f64,
    /// Coordinates whose `x +- h` probes took a different branch (ReLU sign,
    /// max-pool winner, clamp region) than `x` itself. A central difference
    /// across such a kink is not an estimate of the gradient at `x`.
    pub branch_changes: usize,
    /// Coordinates where a few ulps of rounding in `f` could move the central
    /// difference by more than [`RESOLUTION_TOLERANCE`] in relative terms, so
    /// the check cannot resolve that tolerance whatever the backward pass does.
    pub unresolved: usize,
}

/// Relative tolerance used to decide whether a central difference is resolvable.
pub const RESOLUTION_TOLERANCE: f64 = 1e-4;

impl GradReport {
    /// No probe crossed a kink or fell below rounding resolution.
    pub fn is_clean(&self) -> bool {
        self.branch_changes == 0 && self.unresolved == 0
    }
}

/// [`grad_check_indices`] that also counts probes straddling a non-differentiable point.
pub fn grad_check_report<F, E>(
    f: F,
    x: &Tensor<f64>,
    h: f64,
    indices: &[usize],
) -> std::result::Result<GradReport, E>
where
    F: Fn(&mut Graph<f64>, Var) -> std::result::Result<Var, E>,
    E: From<TensorError>,
{
    let (analytic, base) = {
        let mut g = Graph::new();
        let xv = g.param(x.clone());
        let y = f(&mut g, xv)?;
        let base = g.branch_signature();
        g.backward(y)?;
        (g.grad_or_zeros(xv), base)
    };
    let eval = |probe: Tensor<f64>| -> std::result::Result<(f64, u64), E> {
        let mut g = Graph::new();
        let xv = g.constant(probe);
        let y = f(&mut g, xv)?;
        let out = g.value(y);
        if out.numel() != 1 {
            return Err(TensorError::NonScalarLoss(out.shape().to_vec()).into());
        }
        Ok((out.item(), g.branch_signature()))
    };
    let mut report = GradReport {
        max_rel_error: 0.0,
        branch_changes: 0,
        unresolved: 0,
    };
    for &i in indices {
        let mut plus = x.clone();
        plus.data_mut()[i] += h;
        let mut minus = x.clone();
        minus.data_mut()[i] -= h;
        let (fp, sp) = eval(plus)?;
        let (fm, sm) = eval(minus)?;
        if sp != base || sm != base {
            report.branch_changes += 1;
        }
        let numeric = (fp - fm) / (2.0 * h);
        let a = analytic.data()[i];
        // A few ulps of rounding noise on each probe, carried into the quotient.
        // Identical probes with a zero gradient are exact, not noisy.
        let noise = 4.0 * f64::EPSILON * fp.abs().max(fm.abs()) / (2.0 * h);
        let exact_zero = fp == fm && a == 0.0;
        if !exact_zero && noise > RESOLUTION_TOLERANCE * a.abs().max(numeric.abs()).max(1e-8) {
            report.unresolved += 1;
        }
        report.max_rel_error = report.max_rel_error.max(relative_error(a, numeric));
    }
    Ok(report)
}
