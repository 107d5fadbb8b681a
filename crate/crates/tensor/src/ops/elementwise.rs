use crate::error::{shape_err, Result};
use crate::graph::{Graph, Op, Var};
use crate::real::Real;
use crate::tensor::Tensor;

pub(crate) fn zip_map<T: Real>(a: &Tensor<T>, b: &Tensor<T>, f: impl Fn(T, T) -> T) -> Tensor<T> {
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
    Tensor::from_parts(a.shape().to_vec(), data)
}

impl<T: Real> Graph<T> {
    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        if self.shape(a) == self.shape(b) {
            Ok(())
        } else {
            shape_err(
                op,
                format!("operands {:?} and {:?} differ", self.shape(a), self.shape(b)),
            )
        }
    }

    fn binary(
        &mut self,
        name: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(T, T) -> T,
        op: Op<T>,
    ) -> Result<Var> {
        self.same_shape(name, a, b)?;
        let out = zip_map(self.value(a), self.value(b), f);
        Ok(self.push(out, op, &[a, b]))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("add", a, b, |x, y| x + y, Op::Add { a, b })
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("sub", a, b, |x, y| x - y, Op::Sub { a, b })
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("mul", a, b, |x, y| x * y, Op::Mul { a, b })
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("div", a, b, |x, y| x / y, Op::Div { a, b })
    }

    pub fn add_scalar(&mut self, x: Var, s: f64) -> Var {
        let s = T::lit(s);
        let out = self.value(x).map(|v| v + s);
        self.push(out, Op::AddScalar { x }, &[x])
    }

    pub fn mul_scalar(&mut self, x: Var, s: f64) -> Var {
        let s = T::lit(s);
        let out = self.value(x).map(|v| v * s);
        self.push(out, Op::MulScalar { x, s }, &[x])
    }

    pub fn square(&mut self, x: Var) -> Var {
        let out = self.value(x).map(|v| v * v);
        self.push(out, Op::Square { x }, &[x])
    }

    pub fn sqrt(&mut self, x: Var) -> Var {
        let out = self.value(x).map(|v| v.sqrt());
        self.push(out, Op::Sqrt { x }, &[x])
    }

    pub fn log(&mut self, x: Var) -> Var {
        let out = self.value(x).map(|v| v.ln());
        self.push(out, Op::Log { x }, &[x])
    }

    /// Clamp into `[lo, hi]`; the gradient passes only inside the interval.
    pub fn clamp(&mut self, x: Var, lo: f64, hi: f64) -> Var {
        let (lo, hi) = (T::lit(lo), T::lit(hi));
        let out = self.value(x).map(|v| v.max(lo).min(hi));
        self.push(out, Op::Clamp { x, lo, hi }, &[x])
    }

    /// Sum of all elements as a `[1]` tensor.
    pub fn sum(&mut self, x: Var) -> Var {
        let out = Tensor::scalar(self.value(x).sum());
        self.push(out, Op::Sum { x }, &[x])
    }

    /// Mean of all elements as a `[1]` tensor.
    pub fn mean(&mut self, x: Var) -> Var {
        let v = self.value(x);
        let out = Tensor::scalar(v.sum() / T::lit(v.numel() as f64));
        self.push(out, Op::Mean { x }, &[x])
    }
}

pub(crate) fn mul_backward<T: Real>(
    a: Var,
    av: &Tensor<T>,
    b: Var,
    bv: &Tensor<T>,
    gout: &Tensor<T>,
    need: impl Fn(Var) -> bool,
) -> Vec<(Var, Tensor<T>)> {
    let mut grads = Vec::new();
    if need(a) {
        grads.push((a, zip_map(bv, gout, |y, g| g * y)));
    }
    if need(b) {
        grads.push((b, zip_map(av, gout, |x, g| g * x)));
    }
    grads
}

pub(crate) fn div_backward<T: Real>(
    a: Var,
    av: &Tensor<T>,
    b: Var,
    bv: &Tensor<T>,
    gout: &Tensor<T>,
    need: impl Fn(Var) -> bool,
) -> Vec<(Var, Tensor<T>)> {
    let mut grads = Vec::new();
    if need(a) {
        grads.push((a, zip_map(bv, gout, |y, g| g / y)));
    }
    if need(b) {
        let data = av
            .data()
            .iter()
            .zip(bv.data())
            .zip(gout.data())
            .map(|((&x, &y), &g)| -g * x / (y * y))
            .collect();
        grads.push((b, Tensor::from_parts(bv.shape().to_vec(), data)));
    }
    grads
}
