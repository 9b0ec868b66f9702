use indexmap::IndexMap;

use crate::error::{GdnnError, Result};
use crate::nn::Matrix;
use crate::scalar::Scalar;

#[derive(Clone, Debug)]
struct Slot<T> {
    value: Matrix<T>,
    grad: Matrix<T>,
}

/// Named parameters with parallel gradient accumulators, iterated in
/// insertion order.
#[derive(Clone, Debug, Default)]
pub struct ParamStore<T> {
    slots: IndexMap<String, Slot<T>>,
}

impl<T: Scalar> ParamStore<T> {
    pub fn new() -> Self {
        Self {
            slots: IndexMap::new(),
        }
    }

    /// Converts values and gradients to another precision.
    pub fn cast<U: Scalar>(&self) -> ParamStore<U> {
        let slots = self
            .slots
            .iter()
            .map(|(k, s)| {
                let slot = Slot {
                    value: s.value.cast(),
                    grad: s.grad.cast(),
                };
                (k.clone(), slot)
            })
            .collect();
        ParamStore { slots }
    }

    /// Inserts or replaces a parameter; its gradient is reset to zero.
    pub fn insert(&mut self, name: impl Into<String>, value: Matrix<T>) {
        let grad = Matrix::zeros(value.rows(), value.cols());
        self.slots.insert(name.into(), Slot { value, grad });
    }

    pub fn contains(&self, name: &str) -> bool {
        self.slots.contains_key(name)
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.slots.keys().map(String::as_str)
    }

    /// Total number of scalar coordinates.
    pub fn num_scalars(&self) -> usize {
        self.slots.values().map(|s| s.value.data().len()).sum()
    }

    pub fn value(&self, name: &str) -> Result<&Matrix<T>> {
        self.slots
            .get(name)
            .map(|s| &s.value)
            .ok_or_else(|| GdnnError::UnknownParam(name.to_string()))
    }

    pub fn value_mut(&mut self, name: &str) -> Result<&mut Matrix<T>> {
        self.slots
            .get_mut(name)
            .map(|s| &mut s.value)
            .ok_or_else(|| GdnnError::UnknownParam(name.to_string()))
    }

    pub fn grad(&self, name: &str) -> Result<&Matrix<T>> {
        self.slots
            .get(name)
            .map(|s| &s.grad)
            .ok_or_else(|| GdnnError::UnknownParam(name.to_string()))
    }

    pub fn grad_mut(&mut self, name: &str) -> Result<&mut Matrix<T>> {
        self.slots
            .get_mut(name)
            .map(|s| &mut s.grad)
            .ok_or_else(|| GdnnError::UnknownParam(name.to_string()))
    }

    /// Adds `delta` into the named gradient accumulator.
    pub fn accumulate(&mut self, name: &str, delta: &Matrix<T>) -> Result<()> {
        self.grad_mut(name)?.add_assign(delta)
    }

    pub fn zero_grads(&mut self) {
        for s in self.slots.values_mut() {
            s.grad.fill(T::zero());
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Matrix<T>)> {
        self.slots.iter().map(|(k, s)| (k.as_str(), &s.value))
    }

    pub fn iter_grads(&self) -> impl Iterator<Item = (&str, &Matrix<T>, &Matrix<T>)> {
        self.slots
            .iter()
            .map(|(k, s)| (k.as_str(), &s.value, &s.grad))
    }

    pub(crate) fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Matrix<T>, &mut Matrix<T>)> {
        self.slots
            .iter_mut()
            .map(|(k, s)| (k.as_str(), &mut s.value, &mut s.grad))
    }

    /// FNV-1a over names, shapes and value bits. Equal iff bit-identical
    /// (up to hash collisions).
    pub fn checksum(&self) -> u64 {
        const PRIME: u64 = 0x0000_0100_0000_01b3;
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut eat = |bytes: &[u8]| {
            for &b in bytes {
                h ^= b as u64;
                h = h.wrapping_mul(PRIME);
            }
        };
        for (name, value) in self.iter() {
            eat(name.as_bytes());
            eat(&(value.rows() as u64).to_le_bytes());
            eat(&(value.cols() as u64).to_le_bytes());
            for v in value.data() {
                eat(&v.as_f64().to_bits().to_le_bytes());
            }
        }
        h
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn insertion_order_is_preserved() {
        let mut p = ParamStore::<f64>::new();
        p.insert("b", Matrix::zeros(1, 1));
        p.insert("a", Matrix::zeros(2, 2));
        p.insert("c", Matrix::zeros(1, 3));
        assert_eq!(p.names().collect::<Vec<_>>(), ["b", "a", "c"]);
        assert_eq!(p.num_scalars(), 8);
    }

    #[test]
    fn accumulate_checks_shape_and_name() {
        let mut p = ParamStore::<f64>::new();
        p.insert("w", Matrix::zeros(2, 2));
        p.accumulate("w", &Matrix::filled(2, 2, 1.5)).unwrap();
        p.accumulate("w", &Matrix::filled(2, 2, 1.0)).unwrap();
        assert_eq!(p.grad("w").unwrap().get(1, 1), 2.5);
        assert!(p.accumulate("w", &Matrix::zeros(1, 2)).is_err());
        assert!(matches!(p.value("nope"), Err(GdnnError::UnknownParam(_))));
        p.zero_grads();
        assert_eq!(p.grad("w").unwrap(), &Matrix::zeros(2, 2));
    }

    #[test]
    fn checksum_tracks_values() {
        let mut p = ParamStore::<f64>::new();
        p.insert("w", Matrix::filled(2, 2, 1.0));
        let before = p.checksum();
        p.accumulate("w", &Matrix::filled(2, 2, 3.0)).unwrap();
        assert_eq!(before, p.checksum(), "gradients are not part of the checksum");
        p.value_mut("w").unwrap().set(0, 0, 1.0 + 1e-15);
        assert_ne!(before, p.checksum());
    }
}
