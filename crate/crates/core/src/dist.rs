//! Probability vectors over the five discrete actions.

use crate::error::{Error, Result};
use crate::gridworld::Action;

pub const NUM_ACTIONS: usize = 5;

/// Tolerance on the total mass of a distribution.
pub const MASS_TOLERANCE: f64 = 1e-9;

/// A probability vector over [`Action`]s: the common currency of the agent
/// policy, the advisor's advice and their mixtures.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActionDistribution([f64; NUM_ACTIONS]);

impl ActionDistribution {
    pub fn new(probs: [f64; NUM_ACTIONS]) -> Result<Self> {
        if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::Config(format!("invalid probabilities {probs:?}")));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > MASS_TOLERANCE {
            return Err(Error::Config(format!(
                "probabilities sum to {total}, not 1"
            )));
        }
        Ok(Self(probs))
    }

    pub fn uniform() -> Self {
        Self([1.0 / NUM_ACTIONS as f64; NUM_ACTIONS])
    }

    pub fn one_hot(action: Action) -> Self {
        let mut p = [0.0; NUM_ACTIONS];
        p[action.index()] = 1.0;
        Self(p)
    }

    /// Numerically stable softmax.
    pub fn from_logits(logits: &[f64; NUM_ACTIONS]) -> Self {
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut p = logits.map(|z| (z - max).exp());
        let total: f64 = p.iter().sum();
        for v in &mut p {
            *v /= total;
        }
        Self(p)
    }

    /// Arithmetic mean of a non-empty set of distributions.
    pub fn mean<'a>(dists: impl IntoIterator<Item = &'a ActionDistribution>) -> Result<Self> {
        let mut acc = [0.0; NUM_ACTIONS];
        let mut n = 0usize;
        for d in dists {
            for (a, p) in acc.iter_mut().zip(d.0) {
                *a += p;
            }
            n += 1;
        }
        if n == 0 {
            return Err(Error::Empty("distribution set"));
        }
        Ok(Self(acc.map(|a| a / n as f64)))
    }

    pub(crate) fn from_raw(probs: [f64; NUM_ACTIONS]) -> Self {
        Self(probs)
    }

    pub fn probs(&self) -> &[f64; NUM_ACTIONS] {
        &self.0
    }

    pub fn prob(&self, action: Action) -> f64 {
        self.0[action.index()]
    }

    /// Most probable action; the lowest id wins ties.
    pub fn argmax(&self) -> Action {
        let mut best = 0;
        for i in 1..NUM_ACTIONS {
            if self.0[i] > self.0[best] {
                best = i;
            }
        }
        Action::ALL[best]
    }

    pub fn max_prob(&self) -> f64 {
        self.0.iter().copied().fold(0.0, f64::max)
    }

    pub fn total(&self) -> f64 {
        self.0.iter().sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_mass() {
        assert!(ActionDistribution::new([0.5, 0.5, 0.1, 0.0, 0.0]).is_err());
        assert!(ActionDistribution::new([1.5, -0.5, 0.0, 0.0, 0.0]).is_err());
        assert!(ActionDistribution::new([0.2; 5]).is_ok());
    }

    #[test]
    fn softmax_of_zero_logits_is_uniform() {
        let d = ActionDistribution::from_logits(&[0.0; 5]);
        assert_eq!(d, ActionDistribution::uniform());
    }

    #[test]
    fn softmax_survives_huge_logits() {
        let d = ActionDistribution::from_logits(&[1e6, 0.0, 0.0, 0.0, 0.0]);
        assert_eq!(d.probs()[0], 1.0);
        assert_eq!(d.argmax(), Action::TurnLeft);
    }

    #[test]
    fn argmax_prefers_lowest_id() {
        let d = ActionDistribution::new([0.1, 0.4, 0.4, 0.05, 0.05]).unwrap();
        assert_eq!(d.argmax(), Action::TurnRight);
    }
}
