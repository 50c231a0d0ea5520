//! Action-level policy shaping: convex mixtures of advisor and agent
//! distributions, and behavior-action sampling.

use rand::Rng;

use crate::dist::{ActionDistribution, NUM_ACTIONS};
use crate::error::{Error, Result};
use crate::gridworld::Action;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MixSource {
    EntropyMix,
    LinearDecayMix,
    AgentOnly,
    AdvisorOnly,
}

/// Behavior policy `coeff_llm * p_llm + coeff_agent * p_agent`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MixedPolicy {
    pub dist: ActionDistribution,
    /// Weight on the agent's own distribution.
    pub coeff_agent: f64,
    pub source: MixSource,
}

impl MixedPolicy {
    pub fn agent_only(p_agent: ActionDistribution) -> Self {
        Self {
            dist: p_agent,
            coeff_agent: 1.0,
            source: MixSource::AgentOnly,
        }
    }

    pub fn advisor_only(p_llm: ActionDistribution) -> Self {
        Self {
            dist: p_llm,
            coeff_agent: 0.0,
            source: MixSource::AdvisorOnly,
        }
    }

    pub fn coeff_llm(&self) -> f64 {
        1.0 - self.coeff_agent
    }
}

fn check_coefficient(c: f64) -> Result<()> {
    if (0.0..=1.0).contains(&c) {
        Ok(())
    } else {
        Err(Error::Coefficient(c))
    }
}

/// Weighted sum with the advisor weight `1 - coeff_agent`. The endpoints
/// return the corresponding input unchanged.
pub(crate) fn blend(
    p_llm: &ActionDistribution,
    p_agent: &ActionDistribution,
    coeff_agent: f64,
) -> ActionDistribution {
    if coeff_agent == 0.0 {
        return *p_llm;
    }
    if coeff_agent == 1.0 {
        return *p_agent;
    }
    let coeff_llm = 1.0 - coeff_agent;
    let mut out = [0.0; NUM_ACTIONS];
    for (i, o) in out.iter_mut().enumerate() {
        *o = coeff_llm * p_llm.probs()[i] + coeff_agent * p_agent.probs()[i];
    }
    ActionDistribution::from_raw(out)
}

/// Uncertainty-aware mixture: the advisor's weight is `1 - entropy_norm`.
pub fn mix_entropy(
    p_llm: &ActionDistribution,
    p_agent: &ActionDistribution,
    entropy_norm: f64,
) -> Result<MixedPolicy> {
    check_coefficient(entropy_norm)?;
    Ok(MixedPolicy {
        dist: blend(p_llm, p_agent, entropy_norm),
        coeff_agent: entropy_norm,
        source: MixSource::EntropyMix,
    })
}

/// Advisor weight that falls linearly from 1 at the first episode to 0 at
/// the last.
pub fn linear_decay_coeff(episode: usize, total_episodes: usize) -> Result<f64> {
    if total_episodes < 2 {
        return Err(Error::Config(format!(
            "linear decay needs at least 2 episodes, got {total_episodes}"
        )));
    }
    if episode >= total_episodes {
        return Err(Error::Config(format!(
            "episode {episode} outside 0..{total_episodes}"
        )));
    }
    Ok(1.0 - episode as f64 / (total_episodes - 1) as f64)
}

/// Fixed-weight mixture `lambda * p_llm + (1 - lambda) * p_agent`.
pub fn mix_fixed(
    p_llm: &ActionDistribution,
    p_agent: &ActionDistribution,
    lambda: f64,
) -> Result<MixedPolicy> {
    check_coefficient(lambda)?;
    Ok(MixedPolicy {
        dist: blend(p_llm, p_agent, 1.0 - lambda),
        coeff_agent: 1.0 - lambda,
        source: MixSource::LinearDecayMix,
    })
}

/// Draws an action from the mixed policy and returns it with its log-mass
/// under that same policy.
pub fn sample_action<R: Rng + ?Sized>(policy: &MixedPolicy, rng: &mut R) -> (Action, f64) {
    let probs = policy.dist.probs();
    let u: f64 = rng.random::<f64>() * policy.dist.total();
    let mut acc = 0.0;
    let mut chosen = None;
    for (i, &p) in probs.iter().enumerate() {
        if p <= 0.0 {
            continue;
        }
        acc += p;
        chosen = Some(i);
        if u < acc {
            break;
        }
    }
    let i = chosen.expect("distribution has positive mass");
    (Action::ALL[i], probs[i].ln())
}
