//! Named parameter storage and matching gradient buffers.

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// How a parameter is initialized.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Init {
    /// Uniform in `±sqrt(6 / (rows + cols))`.
    Xavier,
    Zeros,
    Ones,
}

/// Parameters sorted by name; indices are stable for a given name set.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamStore<S> {
    names: Vec<String>,
    tensors: Vec<Arc<Tensor<S>>>,
}

impl<S: Scalar> ParamStore<S> {
    /// Builds and initializes a store. Duplicate names are rejected.
    pub fn init<R: Rng>(specs: &[(String, [usize; 2], Init)], rng: &mut R) -> Result<Self> {
        let mut sorted: Vec<&(String, [usize; 2], Init)> = specs.iter().collect();
        sorted.sort_by(|a, b| a.0.cmp(&b.0));
        if let Some(w) = sorted.windows(2).find(|w| w[0].0 == w[1].0) {
            return Err(Error::InvalidConfig(format!("parameter {} declared twice", w[0].0)));
        }
        let mut names = Vec::with_capacity(sorted.len());
        let mut tensors = Vec::with_capacity(sorted.len());
        for (name, [r, c], init) in sorted {
            let t = match init {
                Init::Xavier => {
                    let bound = (6.0 / (*r + *c) as f64).sqrt();
                    Tensor::from_fn(*r, *c, |_, _| S::lit(rng.random_range(-bound..bound)))
                }
                Init::Zeros => Tensor::zeros(*r, *c),
                Init::Ones => Tensor::filled(*r, *c, S::one()),
            };
            names.push(name.clone());
            tensors.push(Arc::new(t));
        }
        Ok(Self { names, tensors })
    }

    /// Builds a store from already-materialized tensors.
    pub fn from_named(mut named: Vec<(String, Tensor<S>)>) -> Result<Self> {
        named.sort_by(|a, b| a.0.cmp(&b.0));
        if let Some(w) = named.windows(2).find(|w| w[0].0 == w[1].0) {
            return Err(Error::InvalidConfig(format!("parameter {} declared twice", w[0].0)));
        }
        let (names, tensors) = named.into_iter().map(|(n, t)| (n, Arc::new(t))).unzip();
        Ok(Self { names, tensors })
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn index(&self, name: &str) -> Option<usize> {
        self.names.binary_search_by(|n| n.as_str().cmp(name)).ok()
    }

    pub fn get(&self, index: usize) -> &Tensor<S> {
        &self.tensors[index]
    }

    pub(crate) fn shared(&self, index: usize) -> Arc<Tensor<S>> {
        Arc::clone(&self.tensors[index])
    }

    /// Mutable access; copies the tensor first if a tape still shares it.
    pub fn get_mut(&mut self, index: usize) -> &mut Tensor<S> {
        Arc::make_mut(&mut self.tensors[index])
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<S>)> {
        self.names.iter().map(String::as_str).zip(self.tensors.iter().map(|t| &**t))
    }

    pub fn num_scalars(&self) -> usize {
        self.tensors.iter().map(|t| t.len()).sum()
    }

    /// Checks that `other` has the same names and shapes.
    pub fn check_compatible(&self, other: &ParamStore<S>) -> Result<()> {
        if self.names != other.names {
            return Err(Error::ConfigMismatch("parameter names differ".into()));
        }
        for (name, (a, b)) in self.names.iter().zip(self.tensors.iter().zip(&other.tensors)) {
            if a.shape() != b.shape() {
                return Err(Error::ConfigMismatch(format!(
                    "parameter {name}: shape {:?} vs {:?}",
                    a.shape(),
                    b.shape()
                )));
            }
        }
        Ok(())
    }

    pub fn cast<T: Scalar>(&self) -> ParamStore<T> {
        ParamStore {
            names: self.names.clone(),
            tensors: self.tensors.iter().map(|t| Arc::new(t.cast())).collect(),
        }
    }
}

impl<S: Scalar> Serialize for ParamStore<S> {
    fn serialize<Ser: Serializer>(&self, serializer: Ser) -> std::result::Result<Ser::Ok, Ser::Error> {
        serializer.collect_map(self.iter())
    }
}

impl<'de, S: Scalar> Deserialize<'de> for ParamStore<S> {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let map = BTreeMap::<String, Tensor<S>>::deserialize(deserializer)?;
        for (name, t) in &map {
            if t.data().len() != t.rows() * t.cols() {
                return Err(serde::de::Error::custom(format!(
                    "parameter {name}: {} values for shape {:?}",
                    t.data().len(),
                    t.shape()
                )));
            }
        }
        Self::from_named(map.into_iter().collect()).map_err(serde::de::Error::custom)
    }
}

/// One gradient tensor per parameter of a store, in store order.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamGrads<S> {
    tensors: Vec<Tensor<S>>,
}

impl<S: Scalar> ParamGrads<S> {
    pub fn zeros_like(store: &ParamStore<S>) -> Self {
        Self {
            tensors: store
                .tensors
                .iter()
                .map(|t| Tensor::zeros(t.rows(), t.cols()))
                .collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn tensor(&self, index: usize) -> &Tensor<S> {
        &self.tensors[index]
    }

    pub fn tensor_mut(&mut self, index: usize) -> &mut Tensor<S> {
        &mut self.tensors[index]
    }

    pub fn tensors(&self) -> &[Tensor<S>] {
        &self.tensors
    }

    pub fn add_assign(&mut self, other: &ParamGrads<S>) {
        for (a, b) in self.tensors.iter_mut().zip(&other.tensors) {
            a.add_assign(b);
        }
    }

    pub fn scale(&mut self, c: S) {
        for t in &mut self.tensors {
            for v in t.data_mut() {
                *v *= c;
            }
        }
    }

    pub fn max_abs(&self) -> S {
        self.tensors
            .iter()
            .flat_map(|t| t.data().iter().map(|v| v.abs()))
            .fold(S::zero(), S::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use kemeny_core::rng::rng_from_seed;

    fn specs() -> Vec<(String, [usize; 2], Init)> {
        vec![
            ("b".into(), [2, 3], Init::Xavier),
            ("a".into(), [1, 3], Init::Ones),
            ("c".into(), [1, 1], Init::Zeros),
        ]
    }

    #[test]
    fn sorted_and_seeded() {
        let a = ParamStore::<f64>::init(&specs(), &mut rng_from_seed(3)).unwrap();
        let b = ParamStore::<f64>::init(&specs(), &mut rng_from_seed(3)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.names(), ["a", "b", "c"]);
        assert_eq!(a.index("b"), Some(1));
        assert_eq!(a.get(0).data(), &[1.0; 3]);
        let bound = (6.0f64 / 5.0).sqrt();
        assert!(a.get(1).data().iter().all(|v| v.abs() <= bound));
        assert_eq!(a.num_scalars(), 10);
    }

    #[test]
    fn duplicates_rejected() {
        let mut s = specs();
        s.push(("a".into(), [1, 1], Init::Zeros));
        assert!(ParamStore::<f32>::init(&s, &mut rng_from_seed(0)).is_err());
    }

    #[test]
    fn compatibility() {
        let a = ParamStore::<f32>::init(&specs(), &mut rng_from_seed(0)).unwrap();
        let mut s = specs();
        s[0].1 = [3, 2];
        let b = ParamStore::<f32>::init(&s, &mut rng_from_seed(0)).unwrap();
        assert!(a.check_compatible(&a.clone()).is_ok());
        assert!(matches!(a.check_compatible(&b), Err(Error::ConfigMismatch(_))));
    }
}
