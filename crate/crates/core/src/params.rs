use rand::Rng;
use rand_chacha::ChaCha8Rng;
use sasr_tensor::{Graph, Real, Tensor, Var};

/// Position of a tensor inside a [`ModelParams`] collection.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ParamId(pub usize);

/// Named, ordered parameter tensors of one network.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams<T = f32> {
    entries: Vec<(String, Tensor<T>)>,
}

impl<T: Real> Default for ModelParams<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Real> ModelParams<T> {
    pub fn new() -> Self {
        Self {
            entries: Vec::new(),
        }
    }

    pub fn push(&mut self, name: impl Into<String>, tensor: Tensor<T>) -> ParamId {
        let name = name.into();
        debug_assert!(self.find(&name).is_none(), "duplicate parameter {name}");
        self.entries.push((name, tensor));
        ParamId(self.entries.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Tensor<T> {
        &self.entries[id.0].1
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor<T> {
        &mut self.entries[id.0].1
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.entries[id.0].0
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.entries.iter().position(|(n, _)| n == name).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<T>)> {
        self.entries.iter().map(|(n, t)| (n.as_str(), t))
    }

    pub fn tensors_mut(&mut self) -> impl Iterator<Item = &mut Tensor<T>> {
        self.entries.iter_mut().map(|(_, t)| t)
    }

    /// Total number of scalar weights.
    pub fn scalar_count(&self) -> usize {
        self.entries.iter().map(|(_, t)| t.numel()).sum()
    }

    /// Places every tensor on `g`, as trainable leaves or constants.
    pub fn bind(&self, g: &mut Graph<T>, trainable: bool) -> Bindings {
        Bindings(
            self.entries
                .iter()
                .map(|(_, t)| g.leaf(t.clone(), trainable))
                .collect(),
        )
    }

    /// Reads the gradients accumulated for `bindings` (zeros where none flowed).
    pub fn grads(&self, g: &Graph<T>, bindings: &Bindings) -> Vec<Tensor<T>> {
        bindings.0.iter().map(|&v| g.grad_or_zeros(v)).collect()
    }

    pub fn cast<U: Real>(&self) -> ModelParams<U> {
        ModelParams {
            entries: self
                .entries
                .iter()
                .map(|(n, t)| (n.clone(), t.cast()))
                .collect(),
        }
    }
}

/// Graph handles for every parameter of a model, indexed by [`ParamId`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Bindings(pub Vec<Var>);

impl Bindings {
    pub fn var(&self, id: ParamId) -> Var {
        self.0[id.0]
    }

    /// Substitutes one parameter, e.g. with a probe variable during gradient checks.
    pub fn replace(&mut self, id: ParamId, var: Var) {
        self.0[id.0] = var;
    }
}

/// Creates parameters with PyTorch-style default initialization.
pub(crate) struct ParamBuilder<'a, T> {
    pub params: &'a mut ModelParams<T>,
    pub rng: &'a mut ChaCha8Rng,
}

impl<T: Real> ParamBuilder<'_, T> {
    /// Uniform in `(-1/sqrt(fan_in), 1/sqrt(fan_in))`.
    pub fn uniform(&mut self, name: String, shape: &[usize], fan_in: usize) -> ParamId {
        let bound = 1.0 / (fan_in as f64).sqrt();
        let rng = &mut *self.rng;
        let t = Tensor::from_fn(shape.to_vec(), |_| T::lit(rng.gen_range(-bound..bound)));
        self.params.push(name, t)
    }

    pub fn constant(&mut self, name: String, shape: &[usize], value: f64) -> ParamId {
        self.params.push(name, Tensor::full(shape.to_vec(), T::lit(value)))
    }
}
