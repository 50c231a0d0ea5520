//! Actor-critic PPO with hand-written backpropagation.
//!
//! Both networks are two-layer perceptrons (`input -> tanh hidden -> output`)
//! stored in one flat parameter vector, so the optimizer, the gradient check
//! and checkpoints all work on plain slices. Forward and backward passes skip
//! zero inputs, which keeps the one-hot observations cheap.
//!
//! The clipped surrogate is evaluated under the behavior mixture: the current
//! actor output is re-mixed with each transition's cached advisor
//! distribution and agent coefficient before forming the probability ratio.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::dist::{ActionDistribution, NUM_ACTIONS};
use crate::error::{Error, Result};
use crate::gridworld::Action;
use crate::rng::fnv1a;
use crate::shaping::blend;

#[derive(Debug, Clone, PartialEq)]
pub struct PpoConfig {
    pub gamma: f64,
    pub clip_epsilon: f64,
    pub learning_rate: f64,
    pub minibatch_size: usize,
    pub epochs_per_update: usize,
    pub hidden_width: usize,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub value_loss_weight: f64,
    pub entropy_bonus_weight: f64,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            clip_epsilon: 0.2,
            learning_rate: 1e-4,
            minibatch_size: 15,
            epochs_per_update: 4,
            hidden_width: 64,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            value_loss_weight: 0.5,
            entropy_bonus_weight: 0.01,
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return bad("gamma must lie in (0, 1]");
        }
        if !(self.clip_epsilon > 0.0) {
            return bad("clip_epsilon must be positive");
        }
        if !(self.learning_rate > 0.0) {
            return bad("learning_rate must be positive");
        }
        if self.minibatch_size == 0 || self.epochs_per_update == 0 || self.hidden_width == 0 {
            return bad("minibatch_size, epochs_per_update and hidden_width must be positive");
        }
        Ok(())
    }

    /// Stable fingerprint written into checkpoints.
    pub fn fingerprint(&self) -> u64 {
        fnv1a(format!("{self:?}").as_bytes())
    }
}

/// Flat storage for actor and critic weights.
///
/// Layout: actor `w1 (in x hidden)`, `b1`, `w2 (hidden x 5)`, `b2`, then
/// critic `w1`, `b1`, `w2 (hidden x 1)`, `b2`. Matrices are row-major with
/// one row per input unit.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParams {
    obs_len: usize,
    hidden: usize,
    data: Vec<f64>,
}

struct Mlp<'a> {
    w1: &'a [f64],
    b1: &'a [f64],
    w2: &'a [f64],
    b2: &'a [f64],
}

struct MlpMut<'a> {
    w1: &'a mut [f64],
    b1: &'a mut [f64],
    w2: &'a mut [f64],
    b2: &'a mut [f64],
}

fn mlp_len(obs_len: usize, hidden: usize, out: usize) -> usize {
    obs_len * hidden + hidden + hidden * out + out
}

fn split_mlp(data: &[f64], obs_len: usize, hidden: usize, out: usize) -> Mlp<'_> {
    let (w1, rest) = data.split_at(obs_len * hidden);
    let (b1, rest) = rest.split_at(hidden);
    let (w2, b2) = rest.split_at(hidden * out);
    Mlp { w1, b1, w2, b2 }
}

fn split_mlp_mut(data: &mut [f64], obs_len: usize, hidden: usize, out: usize) -> MlpMut<'_> {
    let (w1, rest) = data.split_at_mut(obs_len * hidden);
    let (b1, rest) = rest.split_at_mut(hidden);
    let (w2, b2) = rest.split_at_mut(hidden * out);
    MlpMut { w1, b1, w2, b2 }
}

impl Mlp<'_> {
    /// Returns tanh hidden activations and the raw outputs.
    fn forward(&self, x: &[f64], out: &mut [f64]) -> Vec<f64> {
        let hidden = self.b1.len();
        let mut h = self.b1.to_vec();
        for (i, &xi) in x.iter().enumerate() {
            if xi == 0.0 {
                continue;
            }
            let row = &self.w1[i * hidden..(i + 1) * hidden];
            for (hj, w) in h.iter_mut().zip(row) {
                *hj += xi * w;
            }
        }
        for hj in &mut h {
            *hj = hj.tanh();
        }
        let n_out = out.len();
        out.copy_from_slice(self.b2);
        for (j, &hj) in h.iter().enumerate() {
            let row = &self.w2[j * n_out..(j + 1) * n_out];
            for (o, w) in out.iter_mut().zip(row) {
                *o += hj * w;
            }
        }
        h
    }

    /// Accumulates `d loss / d params` into `grad` given `d loss / d output`.
    fn backward(&self, x: &[f64], h: &[f64], d_out: &[f64], grad: &mut MlpMut<'_>) {
        let n_out = d_out.len();
        for (g, d) in grad.b2.iter_mut().zip(d_out) {
            *g += d;
        }
        let mut d_pre = vec![0.0; h.len()];
        for (j, &hj) in h.iter().enumerate() {
            let row = &self.w2[j * n_out..(j + 1) * n_out];
            let grow = &mut grad.w2[j * n_out..(j + 1) * n_out];
            let mut dh = 0.0;
            for k in 0..n_out {
                grow[k] += hj * d_out[k];
                dh += row[k] * d_out[k];
            }
            d_pre[j] = dh * (1.0 - hj * hj);
        }
        for (g, d) in grad.b1.iter_mut().zip(&d_pre) {
            *g += d;
        }
        let hidden = h.len();
        for (i, &xi) in x.iter().enumerate() {
            if xi == 0.0 {
                continue;
            }
            let grow = &mut grad.w1[i * hidden..(i + 1) * hidden];
            for (g, d) in grow.iter_mut().zip(&d_pre) {
                *g += xi * d;
            }
        }
    }
}

impl NetworkParams {
    pub fn zeros(obs_len: usize, hidden: usize) -> Self {
        let len = mlp_len(obs_len, hidden, NUM_ACTIONS) + mlp_len(obs_len, hidden, 1);
        Self {
            obs_len,
            hidden,
            data: vec![0.0; len],
        }
    }

    pub fn zeros_like(other: &Self) -> Self {
        Self::zeros(other.obs_len, other.hidden)
    }

    pub fn obs_len(&self) -> usize {
        self.obs_len
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    fn actor_len(&self) -> usize {
        mlp_len(self.obs_len, self.hidden, NUM_ACTIONS)
    }

    fn actor(&self) -> Mlp<'_> {
        split_mlp(&self.data[..self.actor_len()], self.obs_len, self.hidden, NUM_ACTIONS)
    }

    fn critic(&self) -> Mlp<'_> {
        split_mlp(&self.data[self.actor_len()..], self.obs_len, self.hidden, 1)
    }

    fn actor_mut(&mut self) -> MlpMut<'_> {
        let n = self.actor_len();
        split_mlp_mut(&mut self.data[..n], self.obs_len, self.hidden, NUM_ACTIONS)
    }

    fn critic_mut(&mut self) -> MlpMut<'_> {
        let n = self.actor_len();
        split_mlp_mut(&mut self.data[n..], self.obs_len, self.hidden, 1)
    }

    /// Scales the final critic layer (weights and bias).
    pub fn scale_critic_output(&mut self, factor: f64) {
        let c = self.critic_mut();
        c.w2.iter_mut().chain(c.b2.iter_mut()).for_each(|w| *w *= factor);
    }

    /// Mutable view of the actor's output weights, `hidden x 5` row-major.
    pub fn actor_output_weights_mut(&mut self) -> &mut [f64] {
        self.actor_mut().w2
    }

    fn check_obs(&self, observation: &[f64]) -> Result<()> {
        if observation.len() != self.obs_len {
            return Err(Error::Config(format!(
                "observation length {} does not match network input {}",
                observation.len(),
                self.obs_len
            )));
        }
        Ok(())
    }

    pub fn save(&self, path: &Path, config: &PpoConfig) -> Result<()> {
        let mut text = String::new();
        let _ = writeln!(text, "{CHECKPOINT_MAGIC}");
        let _ = writeln!(text, "config_hash {:016x}", config.fingerprint());
        let _ = writeln!(text, "obs_len {}", self.obs_len);
        let _ = writeln!(text, "hidden {}", self.hidden);
        let _ = writeln!(text, "params {}", self.data.len());
        for v in &self.data {
            let _ = writeln!(text, "{:016x}", v.to_bits());
        }
        crate::experiment::write_atomic(path, text.as_bytes())
    }

    /// Loads a checkpoint, refusing files written under a different config.
    pub fn load(path: &Path, config: &PpoConfig) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let perr = |message: String| Error::Parse {
            origin: path.display().to_string(),
            message,
        };
        let mut lines = text.lines();
        if lines.next() != Some(CHECKPOINT_MAGIC) {
            return Err(perr("missing checkpoint header".into()));
        }
        let mut field = |name: &str| -> Result<String> {
            let line = lines.next().ok_or_else(|| perr(format!("missing {name}")))?;
            line.strip_prefix(name)
                .map(|v| v.trim().to_string())
                .ok_or_else(|| perr(format!("expected {name}, found {line:?}")))
        };
        let hash = field("config_hash")?;
        if hash != format!("{:016x}", config.fingerprint()) {
            return Err(perr(format!("config hash {hash} does not match")));
        }
        let num = |s: String| s.parse::<usize>().map_err(|e| perr(e.to_string()));
        let obs_len = num(field("obs_len")?)?;
        let hidden = num(field("hidden")?)?;
        let count = num(field("params")?)?;
        let mut params = NetworkParams::zeros(obs_len, hidden);
        if params.data.len() != count {
            return Err(perr(format!("expected {} params, header says {count}", params.data.len())));
        }
        for (slot, line) in params.data.iter_mut().zip(lines.by_ref()) {
            let bits = u64::from_str_radix(line.trim(), 16).map_err(|e| perr(e.to_string()))?;
            *slot = f64::from_bits(bits);
        }
        if params.data.iter().any(|v| !v.is_finite()) {
            return Err(perr("non-finite parameter".into()));
        }
        Ok(params)
    }
}

const CHECKPOINT_MAGIC: &str = "guided-rl-checkpoint v1";

/// Hidden layers uniform in `±1/sqrt(fan_in)`, biases and output layers zero,
/// so the initial policy is uniform and the initial value is 0.
pub fn init_params<R: Rng + ?Sized>(obs_len: usize, config: &PpoConfig, rng: &mut R) -> NetworkParams {
    let mut params = NetworkParams::zeros(obs_len, config.hidden_width);
    let scale = 1.0 / (obs_len as f64).sqrt();
    for w in params.actor_mut().w1.iter_mut() {
        *w = rng.random_range(-scale..scale);
    }
    for w in params.critic_mut().w1.iter_mut() {
        *w = rng.random_range(-scale..scale);
    }
    params
}

fn ensure_finite(values: &[f64], what: &str) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what.to_string()))
    }
}

pub fn forward_actor(params: &NetworkParams, observation: &[f64]) -> Result<ActionDistribution> {
    params.check_obs(observation)?;
    let mut logits = [0.0; NUM_ACTIONS];
    params.actor().forward(observation, &mut logits);
    ensure_finite(&logits, "actor logits")?;
    Ok(ActionDistribution::from_logits(&logits))
}

pub fn forward_critic(params: &NetworkParams, observation: &[f64]) -> Result<f64> {
    params.check_obs(observation)?;
    let mut v = [0.0];
    params.critic().forward(observation, &mut v);
    ensure_finite(&v, "critic value")?;
    Ok(v[0])
}

/// Advisor inputs cached at sampling time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Guidance {
    pub p_llm: ActionDistribution,
    pub coeff_agent: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub observation: Vec<f64>,
    pub action: Action,
    /// Log-probability of `action` under the behavior mixture.
    pub behavior_log_prob: f64,
    pub reward: f64,
    pub done: bool,
    /// Present exactly when a guided condition produced the action.
    pub guidance: Option<Guidance>,
}

/// One finished (terminated or truncated) episode.
#[derive(Debug, Clone, Default)]
pub struct Trajectory {
    pub transitions: Vec<Transition>,
    /// Observation after the last step when the horizon cut the episode.
    pub truncated_at: Option<Vec<f64>>,
}

/// Discounted returns (bootstrapped with the critic when truncated) and raw
/// advantages `return - value`.
pub fn compute_returns_and_advantages(
    trajectory: &Trajectory,
    params: &NetworkParams,
    gamma: f64,
) -> Result<Vec<(f64, f64)>> {
    if trajectory.transitions.is_empty() {
        return Err(Error::Empty("trajectory"));
    }
    let mut running = match &trajectory.truncated_at {
        Some(obs) => forward_critic(params, obs)?,
        None => 0.0,
    };
    let mut out = vec![(0.0, 0.0); trajectory.transitions.len()];
    for (t, tr) in trajectory.transitions.iter().enumerate().rev() {
        running = tr.reward + gamma * running;
        let value = forward_critic(params, &tr.observation)?;
        out[t] = (running, running - value);
    }
    Ok(out)
}

/// Shifts to mean 0 and scales to unit standard deviation (std floored at
/// 1e-8).
pub fn standardize(values: &mut [f64]) {
    if values.is_empty() {
        return;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt().max(1e-8);
    for v in values {
        *v = (*v - mean) / std;
    }
}

/// A transition with its regression target and standardized advantage.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSample {
    pub transition: Transition,
    pub ret: f64,
    pub advantage: f64,
}

/// Builds update samples from episodes, standardizing advantages over the
/// whole batch.
pub fn prepare_batch(
    trajectories: &[Trajectory],
    params: &NetworkParams,
    gamma: f64,
) -> Result<Vec<TrainingSample>> {
    let mut samples = Vec::new();
    for traj in trajectories {
        let targets = compute_returns_and_advantages(traj, params, gamma)?;
        for (tr, (ret, adv)) in traj.transitions.iter().zip(targets) {
            samples.push(TrainingSample {
                transition: tr.clone(),
                ret,
                advantage: adv,
            });
        }
    }
    let mut adv: Vec<f64> = samples.iter().map(|s| s.advantage).collect();
    standardize(&mut adv);
    for (s, a) in samples.iter_mut().zip(adv) {
        s.advantage = a;
    }
    Ok(samples)
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossBreakdown {
    pub total: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub mean_ratio: f64,
    /// Largest `|ratio - 1|` in the minibatch.
    pub max_ratio_deviation: f64,
}

/// Full clipped PPO loss on a minibatch and its gradient.
pub fn loss_and_gradient(
    params: &NetworkParams,
    batch: &[&TrainingSample],
    config: &PpoConfig,
) -> Result<(LossBreakdown, NetworkParams)> {
    if batch.is_empty() {
        return Err(Error::Empty("minibatch"));
    }
    let n = batch.len() as f64;
    let eps = config.clip_epsilon;
    let mut grad = NetworkParams::zeros_like(params);
    let mut stats = LossBreakdown::default();
    let actor = params.actor();
    let critic = params.critic();

    for sample in batch {
        let tr = &sample.transition;
        params.check_obs(&tr.observation)?;
        let a = tr.action.index();

        let mut logits = [0.0; NUM_ACTIONS];
        let h_actor = actor.forward(&tr.observation, &mut logits);
        ensure_finite(&logits, "actor logits")?;
        let p = ActionDistribution::from_logits(&logits);
        let probs = p.probs();

        let (coeff_agent, mixed) = match &tr.guidance {
            Some(g) => (g.coeff_agent, blend(&g.p_llm, &p, g.coeff_agent).prob(tr.action)),
            None => (1.0, probs[a]),
        };
        let ratio = (mixed.ln() - tr.behavior_log_prob).exp();
        let adv = sample.advantage;
        let unclipped = ratio * adv;
        let clipped = ratio.clamp(1.0 - eps, 1.0 + eps) * adv;
        stats.policy_loss -= unclipped.min(clipped) / n;
        stats.mean_ratio += ratio / n;
        stats.max_ratio_deviation = stats.max_ratio_deviation.max((ratio - 1.0).abs());

        let entropy: f64 = probs.iter().filter(|&&q| q > 0.0).map(|&q| -q * q.ln()).sum();
        stats.entropy += entropy / n;

        let mut d_logits = [0.0; NUM_ACTIONS];
        if unclipped <= clipped {
            // d ratio / d z_j = ratio / mixed * coeff_agent * p_a (1[a=j] - p_j)
            let scale = -adv / n * ratio / mixed * coeff_agent * probs[a];
            for (j, d) in d_logits.iter_mut().enumerate() {
                let indicator = if j == a { 1.0 } else { 0.0 };
                *d += scale * (indicator - probs[j]);
            }
        }
        // entropy bonus: d H / d z_j = -p_j (ln p_j + H)
        for (j, d) in d_logits.iter_mut().enumerate() {
            let q = probs[j];
            if q > 0.0 {
                *d += config.entropy_bonus_weight / n * q * (q.ln() + entropy);
            }
        }
        actor.backward(&tr.observation, &h_actor, &d_logits, &mut grad.actor_mut());

        let mut v = [0.0];
        let h_critic = critic.forward(&tr.observation, &mut v);
        ensure_finite(&v, "critic value")?;
        let err = v[0] - sample.ret;
        stats.value_loss += err * err / n;
        let dv = [2.0 * config.value_loss_weight * err / n];
        critic.backward(&tr.observation, &h_critic, &dv, &mut grad.critic_mut());
    }
    stats.total = stats.policy_loss + config.value_loss_weight * stats.value_loss
        - config.entropy_bonus_weight * stats.entropy;
    if !stats.total.is_finite() {
        return Err(Error::NonFinite(format!("PPO loss {stats:?}")));
    }
    ensure_finite(grad.as_slice(), "PPO gradient")?;
    Ok((stats, grad))
}

/// Adam with bias correction.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl Adam {
    pub fn new(len: usize) -> Self {
        Self {
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64], config: &PpoConfig) {
        self.t += 1;
        let (b1, b2) = (config.adam_beta1, config.adam_beta2);
        let c1 = 1.0 - b1.powi(self.t as i32);
        let c2 = 1.0 - b2.powi(self.t as i32);
        for i in 0..params.len() {
            let g = grad[i];
            if g == 0.0 && self.m[i] == 0.0 && self.v[i] == 0.0 {
                continue;
            }
            self.m[i] = b1 * self.m[i] + (1.0 - b1) * g;
            self.v[i] = b2 * self.v[i] + (1.0 - b2) * g * g;
            let m_hat = self.m[i] / c1;
            let v_hat = self.v[i] / c2;
            params[i] -= config.learning_rate * m_hat / (v_hat.sqrt() + config.adam_eps);
        }
    }
}

/// Diagnostics averaged over every minibatch of one update.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct UpdateStats {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub mean_ratio: f64,
    pub mean_entropy: f64,
    /// `max |ratio - 1|` on the very first minibatch; 0 when the behavior
    /// log-probabilities were recorded under the current parameters.
    pub initial_ratio_deviation: f64,
    pub minibatches: usize,
}

/// Parameters plus optimizer state: the single writer during training.
#[derive(Debug, Clone)]
pub struct PpoLearner {
    pub params: NetworkParams,
    pub config: PpoConfig,
    adam: Adam,
}

impl PpoLearner {
    pub fn new(params: NetworkParams, config: PpoConfig) -> Result<Self> {
        config.validate()?;
        let adam = Adam::new(params.as_slice().len());
        Ok(Self {
            params,
            config,
            adam,
        })
    }

    /// Runs `epochs_per_update` passes of shuffled minibatches over `batch`.
    pub fn update<R: Rng + ?Sized>(
        &mut self,
        batch: &[TrainingSample],
        rng: &mut R,
    ) -> Result<UpdateStats> {
        if batch.is_empty() {
            return Err(Error::Empty("update batch"));
        }
        let mut stats = UpdateStats::default();
        let mut order: Vec<usize> = (0..batch.len()).collect();
        for epoch in 0..self.config.epochs_per_update {
            order.shuffle(rng);
            for (mb, chunk) in order.chunks(self.config.minibatch_size).enumerate() {
                let minibatch: Vec<&TrainingSample> = chunk.iter().map(|&i| &batch[i]).collect();
                let (loss, grad) = loss_and_gradient(&self.params, &minibatch, &self.config)?;
                if epoch == 0 && mb == 0 {
                    stats.initial_ratio_deviation = loss.max_ratio_deviation;
                }
                stats.policy_loss += loss.policy_loss;
                stats.value_loss += loss.value_loss;
                stats.mean_ratio += loss.mean_ratio;
                stats.mean_entropy += loss.entropy;
                stats.minibatches += 1;
                self.adam
                    .step(self.params.as_mut_slice(), grad.as_slice(), &self.config);
            }
        }
        let k = stats.minibatches as f64;
        stats.policy_loss /= k;
        stats.value_loss /= k;
        stats.mean_ratio /= k;
        stats.mean_entropy /= k;
        ensure_finite(self.params.as_slice(), "parameters after update")?;
        Ok(stats)
    }
}
