use std::hash::{Hash, Hasher};

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

use super::ROW_SUM_TOL;

/// Probability vector over the partially observable states.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Belief(Vec<f64>);

impl Belief {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::InvalidBelief("empty belief".into()));
        }
        if let Some(p) = probs.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(Error::InvalidBelief(format!("entry {p} is not a probability")));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > ROW_SUM_TOL {
            return Err(Error::InvalidBelief(format!("entries sum to {sum}")));
        }
        Ok(Belief(probs))
    }

    pub fn uniform(n: usize) -> Self {
        Belief(vec![1.0 / n as f64; n])
    }

    pub fn point(n: usize, e: usize) -> Self {
        let mut probs = vec![0.0; n];
        probs[e] = 1.0;
        Belief(probs)
    }

    /// Joint belief over `2^k` environment states from independent
    /// per-bit probabilities of being set (bit `i` of the index).
    pub fn from_bit_marginals(marginals: &[f64]) -> Result<Self> {
        let n = 1usize << marginals.len();
        let probs = (0..n)
            .map(|e| {
                marginals
                    .iter()
                    .enumerate()
                    .map(|(i, &p)| if e >> i & 1 == 1 { p } else { 1.0 - p })
                    .product()
            })
            .collect();
        Belief::new(probs)
    }

    /// Normalizes a nonnegative vector with a positive sum.
    pub(crate) fn from_unnormalized(mut probs: Vec<f64>) -> Self {
        let z: f64 = probs.iter().sum();
        probs.iter_mut().for_each(|p| *p /= z);
        Belief(probs)
    }

    pub fn probs(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, e: usize) -> f64 {
        self.0[e]
    }

    /// Probability that bit `bit` of the environment index is set.
    pub fn bit_marginal(&self, bit: usize) -> f64 {
        self.0
            .iter()
            .enumerate()
            .filter(|(e, _)| e >> bit & 1 == 1)
            .map(|(_, p)| p)
            .sum()
    }

    /// Bit-exact fingerprint, used as a cache key.
    pub fn fingerprint(&self) -> u64 {
        let mut h = std::collections::hash_map::DefaultHasher::new();
        for p in &self.0 {
            p.to_bits().hash(&mut h);
        }
        h.finish()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_unnormalized() {
        assert!(Belief::new(vec![0.5, 0.4]).is_err());
        assert!(Belief::new(vec![1.5, -0.5]).is_err());
        assert!(Belief::new(vec![]).is_err());
    }

    #[test]
    fn bit_marginals_round_trip() {
        let b = Belief::from_bit_marginals(&[0.2, 0.7]).unwrap();
        assert_eq!(b.len(), 4);
        assert!((b.bit_marginal(0) - 0.2).abs() < 1e-12);
        assert!((b.bit_marginal(1) - 0.7).abs() < 1e-12);
        assert!((b.get(3) - 0.14).abs() < 1e-12);
    }
}
