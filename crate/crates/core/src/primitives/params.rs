//! Named parameter storage and seeded initialization.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::Tensor;

/// Parameters keyed by dotted name, iterated in sorted order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamStore {
    seed: u64,
    params: BTreeMap<String, Tensor>,
}

impl ParamStore {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            params: BTreeMap::new(),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn insert(&mut self, name: &str, value: Tensor) {
        self.params.insert(name.to_string(), value);
    }

    /// Registers `rows×cols` entries drawn from `U(−1/√fan_in, 1/√fan_in)`.
    /// The stream depends only on the store seed and `name`, not on
    /// registration order.
    pub fn init_uniform(&mut self, name: &str, rows: usize, cols: usize, fan_in: usize) {
        let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
        let mut rng = named_rng(self.seed, name);
        let t = Tensor::from_fn(rows, cols, |_, _| rng.random_range(-bound..bound));
        self.insert(name, t);
    }

    pub fn init_zeros(&mut self, name: &str, rows: usize, cols: usize) {
        self.insert(name, Tensor::zeros(rows, cols));
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.params.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.params.get_mut(name)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.params.contains_key(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.params.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor)> {
        self.params.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.params.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// Total number of scalar entries.
    pub fn num_scalars(&self) -> usize {
        self.params.values().map(Tensor::len).sum()
    }

    /// Names starting with `prefix`.
    pub fn names_with_prefix<'a>(&'a self, prefix: &'a str) -> impl Iterator<Item = &'a str> + 'a {
        self.names().filter(move |n| n.starts_with(prefix))
    }
}

/// FNV-1a over `name`, mixed with `seed`.
pub fn stable_hash(seed: u64, name: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325 ^ seed.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    for b in name.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

pub fn named_rng(seed: u64, name: &str) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(stable_hash(seed, name))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn init_is_order_independent() {
        let mut a = ParamStore::new(7);
        a.init_uniform("x.weight", 3, 4, 3);
        a.init_uniform("y.weight", 2, 2, 2);
        let mut b = ParamStore::new(7);
        b.init_uniform("y.weight", 2, 2, 2);
        b.init_uniform("x.weight", 3, 4, 3);
        assert_eq!(a, b);
    }

    #[test]
    fn init_respects_bound() {
        let mut s = ParamStore::new(1);
        s.init_uniform("w", 16, 16, 16);
        assert!(s.get("w").unwrap().data().iter().all(|v| v.abs() < 0.25));
        let mut other = ParamStore::new(2);
        other.init_uniform("w", 16, 16, 16);
        assert_ne!(s.get("w"), other.get("w"));
    }
}
