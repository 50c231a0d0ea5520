//! Simulated advisor standing in for a fine-tuned language model.
//!
//! Each state is hashed under `error_seed`; the hash decides once and for all
//! whether the advisor knows the state (probability `accuracy`) and, if not,
//! which wrong action it insists on. A noiseless pass is the softmax of a
//! logit vector with `concentration` on the advised action and zero
//! elsewhere. Ensembled passes add Gaussian logit noise, playing the role of
//! inference-time dropout, and are averaged before the entropy is taken.

use std::cell::Cell;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::dist::{ActionDistribution, NUM_ACTIONS};
use crate::error::{Error, Result};
use crate::gridworld::{Action, GridState, UnlockPickup};
use crate::oracle;
use crate::rng::{hash_words, unit_interval};

#[derive(Debug, Clone, PartialEq)]
pub struct AdvisorProfile {
    /// Fraction of states where the advised action equals the oracle's.
    pub accuracy: f64,
    /// Logit gap between the advised action and the rest.
    pub concentration: f64,
    /// Per-pass logit noise scale on states the advisor knows.
    pub pass_noise: f64,
    /// Per-pass logit noise scale on states the advisor gets wrong.
    pub error_pass_noise: f64,
    /// Fixes which states are systematically wrong.
    pub error_seed: u64,
}

impl Default for AdvisorProfile {
    fn default() -> Self {
        Self {
            accuracy: 0.93,
            concentration: 7.0,
            pass_noise: 1.0,
            error_pass_noise: 5.0,
            error_seed: 0x5eed,
        }
    }
}

impl AdvisorProfile {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.accuracy) {
            return Err(Error::Config(format!("accuracy {} outside [0, 1]", self.accuracy)));
        }
        if !(self.concentration > 0.0) || !self.concentration.is_finite() {
            return Err(Error::Config(format!(
                "concentration {} must be positive",
                self.concentration
            )));
        }
        if !(self.pass_noise >= 0.0) || !(self.error_pass_noise >= 0.0) {
            return Err(Error::Config("pass noise must be non-negative".into()));
        }
        Ok(())
    }
}

/// Averaged advice with its uncertainty summaries.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibratedAdvice {
    pub mean_dist: ActionDistribution,
    /// Normalized entropy of `mean_dist`, in `[0, 1]`.
    pub entropy_norm: f64,
    pub one_minus_max: f64,
    pub predicted_action: Action,
    pub passes_used: usize,
}

impl CalibratedAdvice {
    fn from_mean(mean_dist: ActionDistribution, passes_used: usize) -> Self {
        Self {
            entropy_norm: normalized_entropy(&mean_dist),
            one_minus_max: 1.0 - mean_dist.max_prob(),
            predicted_action: mean_dist.argmax(),
            mean_dist,
            passes_used,
        }
    }
}

/// Shannon entropy divided by `ln 5`, with `0 ln 0 = 0`.
pub fn normalized_entropy(dist: &ActionDistribution) -> f64 {
    let h: f64 = dist
        .probs()
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| -p * p.ln())
        .sum();
    (h / (NUM_ACTIONS as f64).ln()).clamp(0.0, 1.0)
}

/// What the advisor believes about one state.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Judgement {
    pub advised: Action,
    pub oracle: Action,
    pub correct: bool,
}

#[derive(Debug)]
pub struct Advisor<'e> {
    env: &'e UnlockPickup,
    profile: AdvisorProfile,
    queries: Cell<u64>,
}

impl<'e> Advisor<'e> {
    pub fn new(env: &'e UnlockPickup, profile: AdvisorProfile) -> Result<Self> {
        profile.validate()?;
        Ok(Self {
            env,
            profile,
            queries: Cell::new(0),
        })
    }

    pub fn profile(&self) -> &AdvisorProfile {
        &self.profile
    }

    /// Number of advice requests served so far.
    pub fn queries(&self) -> u64 {
        self.queries.get()
    }

    fn state_hash(&self, state: &GridState, salt: u64) -> u64 {
        let key = state
            .key_pos
            .map(|p| (p.col as u64) << 16 | p.row as u64)
            .unwrap_or(u64::MAX);
        hash_words(
            self.profile.error_seed ^ salt,
            &[
                state.agent_pos.col as u64,
                state.agent_pos.row as u64,
                state.agent_dir.code() as u64,
                state.carrying_key as u64,
                state.door_open as u64,
                key,
                state.door_pos.row as u64,
                state.goal_pos.col as u64,
                state.goal_pos.row as u64,
                state.mission.index() as u64,
            ],
        )
    }

    /// Decides the advised action. Depends only on the state's layout and
    /// pose, never on the step counter, so errors are stable per state.
    pub fn judge(&self, state: &GridState) -> Result<Judgement> {
        let oracle = oracle::optimal_action(self.env, state)?;
        let correct = unit_interval(self.state_hash(state, 0)) < self.profile.accuracy;
        let advised = if correct {
            oracle
        } else {
            let pick = (self.state_hash(state, 0xa11ce) % (NUM_ACTIONS as u64 - 1)) as usize;
            Action::ALL
                .into_iter()
                .filter(|&a| a != oracle)
                .nth(pick)
                .expect("four wrong actions")
        };
        Ok(Judgement {
            advised,
            oracle,
            correct,
        })
    }

    fn base_logits(&self, advised: Action) -> [f64; NUM_ACTIONS] {
        let mut logits = [0.0; NUM_ACTIONS];
        logits[advised.index()] = self.profile.concentration;
        logits
    }

    /// One noiseless forward pass.
    pub fn base_distribution(&self, state: &GridState) -> Result<ActionDistribution> {
        let judgement = self.judge(state)?;
        Ok(ActionDistribution::from_logits(&self.base_logits(judgement.advised)))
    }

    /// Single-pass advice with its raw, uncalibrated confidence.
    pub fn advise_deterministic(&self, state: &GridState) -> Result<CalibratedAdvice> {
        self.queries.set(self.queries.get() + 1);
        Ok(CalibratedAdvice::from_mean(self.base_distribution(state)?, 1))
    }

    /// Ensemble of `passes` noisy forward passes, averaged.
    pub fn advise_mc<R: Rng + ?Sized>(
        &self,
        state: &GridState,
        passes: usize,
        rng: &mut R,
    ) -> Result<CalibratedAdvice> {
        Ok(self.advise_mc_passes(state, passes, rng)?.0)
    }

    /// Like [`Advisor::advise_mc`] but also returns the individual passes.
    pub fn advise_mc_passes<R: Rng + ?Sized>(
        &self,
        state: &GridState,
        passes: usize,
        rng: &mut R,
    ) -> Result<(CalibratedAdvice, Vec<ActionDistribution>)> {
        if passes < 2 {
            return Err(Error::Config(format!(
                "ensembled advice needs at least 2 passes, got {passes}"
            )));
        }
        self.queries.set(self.queries.get() + 1);
        let judgement = self.judge(state)?;
        let base = self.base_logits(judgement.advised);
        let sigma = if judgement.correct {
            self.profile.pass_noise
        } else {
            self.profile.error_pass_noise
        };
        let runs: Vec<ActionDistribution> = (0..passes)
            .map(|_| {
                let noisy = base.map(|z| {
                    let eps: f64 = rng.sample(StandardNormal);
                    z + sigma * eps
                });
                ActionDistribution::from_logits(&noisy)
            })
            .collect();
        let mean = ActionDistribution::mean(&runs)?;
        Ok((CalibratedAdvice::from_mean(mean, passes), runs))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gridworld::GridConfig;
    use crate::rng::{stream, StreamId};

    fn env() -> UnlockPickup {
        UnlockPickup::new(GridConfig::new(3, 3, 1)).unwrap()
    }

    fn dist(p: [f64; 5]) -> ActionDistribution {
        ActionDistribution::new(p).unwrap()
    }

    #[test]
    fn entropy_examples() {
        assert!((normalized_entropy(&ActionDistribution::uniform()) - 1.0).abs() < 1e-12);
        assert_eq!(normalized_entropy(&dist([1.0, 0.0, 0.0, 0.0, 0.0])), 0.0);
        let half = normalized_entropy(&dist([0.5, 0.5, 0.0, 0.0, 0.0]));
        assert!((half - 2f64.ln() / 5f64.ln()).abs() < 1e-12);
        assert!((half - 0.4307).abs() < 1e-4);
    }

    #[test]
    fn perfect_accuracy_follows_oracle() {
        let env = env();
        let profile = AdvisorProfile {
            accuracy: 1.0,
            ..AdvisorProfile::default()
        };
        let advisor = Advisor::new(&env, profile).unwrap();
        let mut rng = stream(3, StreamId::Layout);
        for _ in 0..200 {
            let s = env.reset(&mut rng).unwrap();
            let j = advisor.judge(&s).unwrap();
            assert!(j.correct);
            assert_eq!(advisor.base_distribution(&s).unwrap().argmax(), j.oracle);
        }
    }

    #[test]
    fn large_concentration_is_nearly_one_hot() {
        let env = env();
        let profile = AdvisorProfile {
            concentration: 60.0,
            ..AdvisorProfile::default()
        };
        let advisor = Advisor::new(&env, profile).unwrap();
        let s = env.reset(&mut stream(0, StreamId::Layout)).unwrap();
        assert!(advisor.base_distribution(&s).unwrap().max_prob() > 1.0 - 1e-12);
    }

    #[test]
    fn deterministic_advice_summaries() {
        let env = env();
        // ln(6): e^k / (e^k + 4) = 0.6 when e^k = 6
        let profile = AdvisorProfile {
            concentration: 6f64.ln(),
            ..AdvisorProfile::default()
        };
        let advisor = Advisor::new(&env, profile).unwrap();
        let s = env.reset(&mut stream(0, StreamId::Layout)).unwrap();
        let advice = advisor.advise_deterministic(&s).unwrap();
        assert!((advice.one_minus_max - 0.4).abs() < 1e-12);
        assert_eq!(advice.passes_used, 1);
        assert_eq!(advisor.queries(), 1);
    }

    #[test]
    fn zero_noise_ensemble_matches_single_pass() {
        let env = env();
        let profile = AdvisorProfile {
            pass_noise: 0.0,
            error_pass_noise: 0.0,
            ..AdvisorProfile::default()
        };
        let advisor = Advisor::new(&env, profile).unwrap();
        let mut rng = stream(5, StreamId::Advice);
        let s = env.reset(&mut stream(5, StreamId::Layout)).unwrap();
        let det = advisor.advise_deterministic(&s).unwrap();
        for k in [2, 7, 30] {
            let mc = advisor.advise_mc(&s, k, &mut rng).unwrap();
            for (a, b) in mc.mean_dist.probs().iter().zip(det.mean_dist.probs()) {
                assert!((a - b).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn ensemble_rejects_single_pass() {
        let env = env();
        let advisor = Advisor::new(&env, AdvisorProfile::default()).unwrap();
        let s = env.reset(&mut stream(5, StreamId::Layout)).unwrap();
        assert!(advisor.advise_mc(&s, 1, &mut stream(0, StreamId::Advice)).is_err());
    }

    #[test]
    fn mixture_entropy_dominates_mean_pass_entropy() {
        let env = env();
        let advisor = Advisor::new(&env, AdvisorProfile::default()).unwrap();
        let mut rng = stream(11, StreamId::Advice);
        let mut layouts = stream(11, StreamId::Layout);
        for _ in 0..50 {
            let s = env.reset(&mut layouts).unwrap();
            let (advice, passes) = advisor.advise_mc_passes(&s, 10, &mut rng).unwrap();
            let mean_pass: f64 =
                passes.iter().map(normalized_entropy).sum::<f64>() / passes.len() as f64;
            assert!(advice.entropy_norm >= mean_pass - 1e-12);
        }
    }

    #[test]
    fn ensemble_is_reproducible() {
        let env = env();
        let advisor = Advisor::new(&env, AdvisorProfile::default()).unwrap();
        let s = env.reset(&mut stream(2, StreamId::Layout)).unwrap();
        let a = advisor.advise_mc(&s, 10, &mut stream(4, StreamId::Advice)).unwrap();
        let b = advisor.advise_mc(&s, 10, &mut stream(4, StreamId::Advice)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn invalid_profiles_rejected() {
        let env = env();
        for p in [
            AdvisorProfile { accuracy: 1.5, ..Default::default() },
            AdvisorProfile { concentration: 0.0, ..Default::default() },
            AdvisorProfile { pass_noise: -1.0, ..Default::default() },
        ] {
            assert!(Advisor::new(&env, p).is_err());
        }
    }
}
