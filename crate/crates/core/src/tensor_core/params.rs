use indexmap::IndexMap;
use rand::Rng;

use super::tensor::{Scalar, Tensor};
use crate::error::{invalid, shape_err, Error, Result};

/// Value, accumulated gradient and trainable flag of one named parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamEntry<T> {
    pub value: Tensor<T>,
    pub grad: Tensor<T>,
    pub trainable: bool,
}

/// Ordered collection of named parameters. Insertion order is the checkpoint order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParameterStore<T> {
    entries: IndexMap<String, ParamEntry<T>>,
}

impl<T: Scalar> ParameterStore<T> {
    pub fn new() -> Self {
        Self {
            entries: IndexMap::new(),
        }
    }

    pub fn insert(&mut self, name: &str, value: Tensor<T>, trainable: bool) -> Result<()> {
        if self.entries.contains_key(name) {
            return Err(invalid!("duplicate parameter `{name}`"));
        }
        let grad = Tensor::zeros(value.shape());
        self.entries.insert(
            name.to_string(),
            ParamEntry {
                value,
                grad,
                trainable,
            },
        );
        Ok(())
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.contains_key(name)
    }

    pub fn get(&self, name: &str) -> Option<&ParamEntry<T>> {
        self.entries.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut ParamEntry<T>> {
        self.entries.get_mut(name)
    }

    pub fn value(&self, name: &str) -> Option<&Tensor<T>> {
        self.entries.get(name).map(|e| &e.value)
    }

    pub fn grad(&self, name: &str) -> Option<&Tensor<T>> {
        self.entries.get(name).map(|e| &e.grad)
    }

    /// Replace a value, keeping its shape.
    pub fn set_value(&mut self, name: &str, value: Tensor<T>) -> Result<()> {
        let entry = self
            .entries
            .get_mut(name)
            .ok_or_else(|| invalid!("unknown parameter `{name}`"))?;
        if entry.value.shape() != value.shape() {
            return Err(shape_err!(
                "parameter `{name}` has shape {:?}, got {:?}",
                entry.value.shape(),
                value.shape()
            ));
        }
        entry.value = value;
        Ok(())
    }

    pub fn accumulate_grad(&mut self, name: &str, grad: &Tensor<T>) -> Result<()> {
        let entry = self
            .entries
            .get_mut(name)
            .ok_or_else(|| Error::Graph(format!("unknown parameter `{name}`")))?;
        if entry.grad.numel() != grad.numel() {
            return Err(shape_err!(
                "gradient for `{name}` has {} entries, expected {}",
                grad.numel(),
                entry.grad.numel()
            ));
        }
        for (g, &d) in entry.grad.data_mut().iter_mut().zip(grad.data()) {
            *g += d;
        }
        Ok(())
    }

    pub fn zero_grad(&mut self) {
        for e in self.entries.values_mut() {
            e.grad.data_mut().iter_mut().for_each(|g| *g = T::zero());
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &ParamEntry<T>)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut ParamEntry<T>)> {
        self.entries.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Number of trainable scalars.
    pub fn num_trainable(&self) -> usize {
        self.entries
            .values()
            .filter(|e| e.trainable)
            .map(|e| e.value.numel())
            .sum()
    }

    pub fn cast<U: Scalar>(&self) -> ParameterStore<U> {
        let mut out = ParameterStore::new();
        for (name, e) in &self.entries {
            out.entries.insert(
                name.clone(),
                ParamEntry {
                    value: e.value.cast(),
                    grad: e.grad.cast(),
                    trainable: e.trainable,
                },
            );
        }
        out
    }

    /// Register `{name}.weight` [fan_in×fan_out] and `{name}.bias` [fan_out],
    /// both uniform in ±√(1/fan_in).
    pub fn init_linear<R: Rng>(
        &mut self,
        rng: &mut R,
        name: &str,
        fan_in: usize,
        fan_out: usize,
    ) -> Result<()> {
        let bound = (1.0 / fan_in.max(1) as f64).sqrt();
        let w = uniform(rng, &[fan_in, fan_out], bound);
        let b = uniform(rng, &[fan_out], bound);
        self.insert(&format!("{name}.weight"), w, true)?;
        self.insert(&format!("{name}.bias"), b, true)
    }

    /// Two linear layers `{name}.fc1` (d_in→hidden) and `{name}.fc2` (hidden→d_out).
    /// Register `{name}.weight [fan_in×fan_out]` with no bias.
    pub fn init_weight<R: Rng>(
        &mut self,
        rng: &mut R,
        name: &str,
        fan_in: usize,
        fan_out: usize,
    ) -> Result<()> {
        let bound = (1.0 / fan_in.max(1) as f64).sqrt();
        let w = uniform(rng, &[fan_in, fan_out], bound);
        self.insert(&format!("{name}.weight"), w, true)
    }

    pub fn init_ffn<R: Rng>(
        &mut self,
        rng: &mut R,
        name: &str,
        d_in: usize,
        hidden: usize,
        d_out: usize,
    ) -> Result<()> {
        self.init_linear(rng, &format!("{name}.fc1"), d_in, hidden)?;
        self.init_linear(rng, &format!("{name}.fc2"), hidden, d_out)
    }
}

pub fn uniform<T: Scalar, R: Rng>(rng: &mut R, shape: &[usize], bound: f64) -> Tensor<T> {
    let n: usize = shape.iter().product();
    let data = (0..n)
        .map(|_| T::of(rng.gen_range(-bound..=bound)))
        .collect();
    Tensor::new(shape.to_vec(), data).expect("shape and data agree by construction")
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn duplicate_names_rejected() {
        let mut s: ParameterStore<f64> = ParameterStore::new();
        s.insert("a", Tensor::scalar(1.0), true).unwrap();
        assert!(s.insert("a", Tensor::scalar(2.0), true).is_err());
    }

    #[test]
    fn linear_init_within_bound_and_ordered() {
        let mut s: ParameterStore<f64> = ParameterStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        s.init_linear(&mut rng, "lin", 4, 3).unwrap();
        let names: Vec<_> = s.names().collect();
        assert_eq!(names, ["lin.weight", "lin.bias"]);
        assert_eq!(s.value("lin.weight").unwrap().shape(), &[4, 3]);
        assert_eq!(s.value("lin.bias").unwrap().shape(), &[3]);
        for (_, e) in s.iter() {
            assert!(e.value.data().iter().all(|v| v.abs() <= 0.5));
            assert_eq!(e.grad.shape(), e.value.shape());
        }
        assert_eq!(s.num_trainable(), 15);
    }

    #[test]
    fn accumulate_checks_size() {
        let mut s: ParameterStore<f64> = ParameterStore::new();
        s.insert("a", Tensor::zeros(&[2]), true).unwrap();
        assert!(s.accumulate_grad("a", &Tensor::zeros(&[3])).is_err());
        assert!(s.accumulate_grad("b", &Tensor::zeros(&[2])).is_err());
    }
}
