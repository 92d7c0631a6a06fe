//! Named parameter storage with a parallel gradient buffer.

use indexmap::IndexMap;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Index of a parameter inside a [`ParamStore`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// How a parameter is filled by [`ParamStore::initialize`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Init {
    /// Xavier-uniform with bound `sqrt(6 / (fan_in + fan_out))`.
    Xavier { fan_in: usize, fan_out: usize },
    Constant(f64),
}

#[derive(Debug, Clone, PartialEq)]
struct Entry {
    value: Tensor,
    grad: Tensor,
    init: Init,
}

/// Ordered map from parameter path (e.g. `lsthm.language.W_i`) to value,
/// gradient and initializer. Iteration follows insertion order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamStore {
    entries: IndexMap<String, Entry>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers a zero-filled parameter. Panics on a duplicate name since
    /// layouts are built by code, never by user input.
    pub fn add(&mut self, name: impl Into<String>, shape: &[usize], init: Init) -> ParamId {
        let name = name.into();
        assert!(!self.entries.contains_key(&name), "duplicate parameter {name}");
        let (idx, _) = self.entries.insert_full(
            name,
            Entry { value: Tensor::zeros(shape), grad: Tensor::zeros(shape), init },
        );
        ParamId(idx)
    }

    /// Fills every parameter from its initializer; fully determined by `seed`.
    pub fn initialize(&mut self, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for entry in self.entries.values_mut() {
            match entry.init {
                Init::Xavier { fan_in, fan_out } => {
                    let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
                    for v in entry.value.data_mut() {
                        *v = rng.gen_range(-bound..=bound);
                    }
                }
                Init::Constant(c) => entry.value.data_mut().fill(c),
            }
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Total number of scalar parameters.
    pub fn numel(&self) -> usize {
        self.entries.values().map(|e| e.value.len()).sum()
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.entries.get_index_of(name).map(ParamId)
    }

    pub fn name(&self, id: ParamId) -> &str {
        self.entries.get_index(id.0).expect("valid param id").0
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.entries.len()).map(ParamId)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn init_of(&self, id: ParamId) -> Init {
        self.entries[id.0].init
    }

    pub fn value(&self, id: ParamId) -> &Tensor {
        &self.entries[id.0].value
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.entries[id.0].value
    }

    pub fn grad(&self, id: ParamId) -> &Tensor {
        &self.entries[id.0].grad
    }

    pub fn grad_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.entries[id.0].grad
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.entries.get(name).map(|e| &e.value)
    }

    /// Replaces a value, checking the shape against the registered layout.
    pub fn set(&mut self, name: &str, value: Tensor) -> Result<()> {
        let entry = self
            .entries
            .get_mut(name)
            .ok_or_else(|| Error::UnknownParam(name.to_string()))?;
        if entry.value.shape() != value.shape() {
            return Err(crate::error::shape_err(name, entry.value.shape(), value.shape()));
        }
        entry.value = value;
        Ok(())
    }

    pub fn zero_grad(&mut self) {
        for e in self.entries.values_mut() {
            e.grad.data_mut().fill(0.0);
        }
    }

    pub fn scale_grads(&mut self, factor: f64) {
        for e in self.entries.values_mut() {
            e.grad.data_mut().iter_mut().for_each(|g| *g *= factor);
        }
    }

    pub fn grad_norm(&self) -> f64 {
        self.entries
            .values()
            .flat_map(|e| e.grad.data().iter())
            .map(|g| g * g)
            .sum::<f64>()
            .sqrt()
    }

    /// Rescales gradients so their global L2 norm is at most `max_norm`.
    pub fn clip_grad_norm(&mut self, max_norm: f64) -> f64 {
        let norm = self.grad_norm();
        if norm > max_norm && norm > 0.0 {
            self.scale_grads(max_norm / norm);
        }
        norm
    }

    /// Copies values from `other`, which must share the exact layout.
    pub fn copy_values_from(&mut self, other: &ParamStore) {
        assert_eq!(self.len(), other.len(), "layout mismatch");
        for (a, b) in self.entries.values_mut().zip(other.entries.values()) {
            a.value.data_mut().copy_from_slice(b.value.data());
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.entries.iter().map(|(k, e)| (k.as_str(), &e.value))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn layout() -> ParamStore {
        let mut s = ParamStore::new();
        s.add("w", &[3, 4], Init::Xavier { fan_in: 4, fan_out: 3 });
        s.add("b_f", &[3], Init::Constant(1.0));
        s.add("b", &[3], Init::Constant(0.0));
        s
    }

    #[test]
    fn same_seed_is_bitwise_identical() {
        let mut a = layout();
        let mut b = layout();
        a.initialize(9);
        b.initialize(9);
        assert_eq!(a, b);
        let mut c = layout();
        c.initialize(10);
        assert_ne!(a, c);
    }

    #[test]
    fn xavier_bound_and_constants() {
        let mut s = layout();
        s.initialize(1);
        let bound = (6.0f64 / 7.0).sqrt();
        assert!(s.get("w").unwrap().data().iter().all(|v| v.abs() <= bound));
        assert!(s.get("b_f").unwrap().data().iter().all(|&v| v == 1.0));
        assert!(s.get("b").unwrap().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn insertion_order_and_grad_shapes() {
        let s = layout();
        assert_eq!(s.names().collect::<Vec<_>>(), ["w", "b_f", "b"]);
        for id in s.ids() {
            assert_eq!(s.value(id).shape(), s.grad(id).shape());
        }
    }

    #[test]
    fn set_checks_shape() {
        let mut s = layout();
        assert!(s.set("b", Tensor::zeros(&[4])).is_err());
        assert!(s.set("nope", Tensor::zeros(&[3])).is_err());
        assert!(s.set("b", Tensor::full(&[3], 2.0)).is_ok());
    }

    #[test]
    fn clipping_bounds_norm() {
        let mut s = layout();
        s.grad_mut(ParamId(2)).data_mut().copy_from_slice(&[3.0, 4.0, 0.0]);
        let before = s.clip_grad_norm(1.0);
        assert_eq!(before, 5.0);
        assert!((s.grad_norm() - 1.0).abs() < 1e-12);
    }
}
