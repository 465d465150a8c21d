use std::collections::HashMap;

use rand::Rng;

use super::{Float, Gradients, Tensor};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Named, trainable tensors. Insertion order is stable and defines the
/// checkpoint layout.
#[derive(Clone, Debug, Default)]
pub struct ParamSet<F> {
    names: Vec<String>,
    tensors: Vec<Tensor<F>>,
    index: HashMap<String, ParamId>,
}

impl<F: Float> ParamSet<F> {
    pub fn new() -> Self {
        ParamSet {
            names: Vec::new(),
            tensors: Vec::new(),
            index: HashMap::new(),
        }
    }

    pub fn add(&mut self, name: impl Into<String>, tensor: Tensor<F>) -> ParamId {
        let name = name.into();
        assert!(!self.index.contains_key(&name), "duplicate parameter {name}");
        let id = ParamId(self.tensors.len());
        self.index.insert(name.clone(), id);
        self.names.push(name);
        self.tensors.push(tensor.with_requires_grad());
        id
    }

    /// Glorot-uniform `rows × cols` matrix.
    pub fn add_xavier(
        &mut self,
        name: impl Into<String>,
        rows: usize,
        cols: usize,
        rng: &mut impl Rng,
    ) -> ParamId {
        let limit = (6.0 / (rows + cols) as f64).sqrt();
        let data = (0..rows * cols)
            .map(|_| F::of(rng.gen_range(-limit..limit)))
            .collect();
        self.add(name, Tensor::new(vec![rows, cols], data).unwrap())
    }

    pub fn add_uniform(
        &mut self,
        name: impl Into<String>,
        shape: &[usize],
        scale: f64,
        rng: &mut impl Rng,
    ) -> ParamId {
        let n = shape.iter().product();
        let data = (0..n).map(|_| F::of(rng.gen_range(-scale..scale))).collect();
        self.add(name, Tensor::new(shape.to_vec(), data).unwrap())
    }

    pub fn add_filled(&mut self, name: impl Into<String>, shape: &[usize], value: f64) -> ParamId {
        self.add(name, Tensor::filled(shape, F::of(value)))
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Tensor<F> {
        &self.tensors[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor<F> {
        &mut self.tensors[id.0]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).copied()
    }

    pub fn by_name(&self, name: &str) -> Option<&Tensor<F>> {
        self.id(name).map(|id| self.get(id))
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.tensors.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &str, &Tensor<F>)> {
        self.tensors
            .iter()
            .enumerate()
            .map(|(i, t)| (ParamId(i), self.names[i].as_str(), t))
    }

    pub fn num_scalars(&self) -> usize {
        self.tensors.iter().map(|t| t.numel()).sum()
    }

    pub fn zero_grad(&mut self) {
        for t in &mut self.tensors {
            *t.grad_mut() = None;
        }
    }

    /// Adds `grads` into each parameter's gradient buffer. Parameters that
    /// took no part in the forward pass get a zero buffer.
    pub fn accumulate(&mut self, grads: &Gradients<F>) {
        for (i, t) in self.tensors.iter_mut().enumerate() {
            let numel = t.numel();
            let buf = t.grad_mut().get_or_insert_with(|| vec![F::zero(); numel]);
            if let Some(g) = grads.param(ParamId(i)) {
                for (b, &x) in buf.iter_mut().zip(g) {
                    *b += x;
                }
            }
        }
    }

    /// Multiplies every gradient buffer by `factor`.
    pub fn scale_grads(&mut self, factor: f64) {
        let f = F::of(factor);
        for t in &mut self.tensors {
            if let Some(g) = t.grad_mut() {
                g.iter_mut().for_each(|x| *x *= f);
            }
        }
    }

    pub fn grad_norm(&self) -> f64 {
        self.tensors
            .iter()
            .filter_map(|t| t.grad())
            .flat_map(|g| g.iter().map(|x| x.as_f64() * x.as_f64()))
            .sum::<f64>()
            .sqrt()
    }

    /// Rescales gradients so their global norm is at most `max_norm`.
    pub fn clip_grad_norm(&mut self, max_norm: f64) -> f64 {
        let norm = self.grad_norm();
        if norm > max_norm && norm > 0.0 {
            self.scale_grads(max_norm / norm);
        }
        norm
    }

    /// Copies values from `other` for every parameter whose name and shape
    /// match. Returns the number of tensors copied.
    pub fn copy_matching(&mut self, other: &ParamSet<F>) -> usize {
        let mut copied = 0;
        for (i, name) in self.names.iter().enumerate() {
            if let Some(src) = other.by_name(name) {
                if src.shape() == self.tensors[i].shape() {
                    self.tensors[i].data_mut().copy_from_slice(src.data());
                    copied += 1;
                }
            }
        }
        copied
    }

    /// Overwrites this set's values with tensors from `loaded`, which must
    /// contain every parameter with an identical shape.
    pub fn load_from(&mut self, loaded: &[(String, Tensor<F>)]) -> Result<()> {
        let by_name: HashMap<&str, &Tensor<F>> =
            loaded.iter().map(|(n, t)| (n.as_str(), t)).collect();
        for (i, name) in self.names.iter().enumerate() {
            let src = by_name
                .get(name.as_str())
                .ok_or_else(|| Error::Checkpoint(format!("missing tensor {name}")))?;
            if src.shape() != self.tensors[i].shape() {
                return Err(Error::dim("checkpoint", src.shape(), self.tensors[i].shape()));
            }
            self.tensors[i].data_mut().copy_from_slice(src.data());
        }
        Ok(())
    }

    pub fn cast<G: Float>(&self) -> ParamSet<G> {
        ParamSet {
            names: self.names.clone(),
            tensors: self.tensors.iter().map(|t| t.cast()).collect(),
            index: self.index.clone(),
        }
    }
}
