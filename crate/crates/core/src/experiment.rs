//! Condition runner, multi-seed suites and on-disk outputs.
//!
//! A run is fully determined by its [`ExperimentConfig`]: layouts, network
//! initialisation, advisor passes, behavior sampling and minibatch shuffles
//! each draw from their own stream derived from `seed`.

use std::fmt::{self, Write as _};
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::{Duration, Instant};

use crate::advisor::{Advisor, AdvisorProfile, CalibratedAdvice};
use crate::error::{Error, Result};
use crate::gridworld::{Action, GridConfig, UnlockPickup};
use crate::metrics::{self, CalibrationRecord, ConfidenceFlavor};
use crate::oracle;
use crate::ppo::{self, Guidance, PpoConfig, PpoLearner, Trajectory, Transition};
use crate::rng::{fnv1a, stream, StreamId};
use crate::shaping::{self, MixedPolicy};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Condition {
    Unguided,
    UncalibratedGuided,
    CalibratedEntropy,
    CalibratedLinearDecay,
}

impl Condition {
    pub const ALL: [Condition; 4] = [
        Condition::Unguided,
        Condition::UncalibratedGuided,
        Condition::CalibratedEntropy,
        Condition::CalibratedLinearDecay,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Condition::Unguided => "unguided",
            Condition::UncalibratedGuided => "uncalibrated-guided",
            Condition::CalibratedEntropy => "calibrated-entropy",
            Condition::CalibratedLinearDecay => "calibrated-linear-decay",
        }
    }

    pub fn is_guided(self) -> bool {
        self != Condition::Unguided
    }

    pub fn is_calibrated(self) -> bool {
        matches!(
            self,
            Condition::CalibratedEntropy | Condition::CalibratedLinearDecay
        )
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Condition {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Condition::ALL
            .into_iter()
            .find(|c| c.label() == s.trim())
            .ok_or_else(|| Error::Config(format!("unknown condition {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub condition: Condition,
    pub episodes: usize,
    pub room_width: usize,
    pub room_height: usize,
    /// Overrides the default horizon of eight steps per grid cell.
    pub max_steps: Option<usize>,
    pub advisor: AdvisorProfile,
    pub passes: usize,
    pub ppo: PpoConfig,
    pub seed: u64,
    /// Reuse the first episode's layout for every episode.
    pub fixed_layout: bool,
    pub window: usize,
    pub bins: usize,
}

impl Default for ExperimentConfig {
    /// Full-scale setting: 4x4 rooms, 3040 episodes, 90% advisor accuracy.
    fn default() -> Self {
        Self {
            condition: Condition::CalibratedEntropy,
            episodes: 3040,
            room_width: 4,
            room_height: 4,
            max_steps: None,
            advisor: AdvisorProfile {
                accuracy: 0.90,
                ..AdvisorProfile::default()
            },
            passes: 10,
            ppo: PpoConfig::default(),
            seed: 0,
            fixed_layout: false,
            window: metrics::DEFAULT_WINDOW,
            bins: metrics::DEFAULT_BINS,
        }
    }
}

impl ExperimentConfig {
    /// Desk-scale preset: 3x3 rooms, 1500 episodes, 93% advisor accuracy.
    pub fn desk(condition: Condition) -> Self {
        Self {
            condition,
            episodes: 1500,
            room_width: 3,
            room_height: 3,
            advisor: AdvisorProfile {
                accuracy: 0.93,
                ..AdvisorProfile::default()
            },
            ..Self::default()
        }
    }

    pub fn grid(&self) -> GridConfig {
        let mut g = GridConfig::new(self.room_width, self.room_height, self.seed);
        if let Some(m) = self.max_steps {
            g.max_steps = m;
        }
        g
    }

    pub fn validate(&self) -> Result<()> {
        self.grid().validate()?;
        self.ppo.validate()?;
        if self.episodes == 0 {
            return Err(Error::Config("episodes must be positive".into()));
        }
        if self.condition.is_guided() {
            self.advisor.validate()?;
        }
        if self.condition.is_calibrated() && self.passes < 2 {
            return Err(Error::Config(format!(
                "{} needs at least 2 passes, got {}",
                self.condition, self.passes
            )));
        }
        if self.condition == Condition::CalibratedLinearDecay && self.episodes < 2 {
            return Err(Error::Config("linear decay needs at least 2 episodes".into()));
        }
        if self.window == 0 || self.bins == 0 {
            return Err(Error::Config("window and bins must be positive".into()));
        }
        Ok(())
    }

    /// Applies one `key = value` setting. Returns `false` for keys this
    /// struct does not own.
    pub fn set(&mut self, key: &str, value: &str) -> Result<bool> {
        fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
            value.trim().parse().map_err(|_| Error::Parse {
                origin: key.to_string(),
                message: format!("cannot parse {value:?}"),
            })
        }
        match key {
            "condition" => self.condition = value.parse()?,
            "episodes" => self.episodes = parse(key, value)?,
            "room" => {
                let (w, h) = parse_room(value)?;
                self.room_width = w;
                self.room_height = h;
            }
            "max_steps" => self.max_steps = Some(parse(key, value)?),
            "passes" => self.passes = parse(key, value)?,
            "accuracy" => self.advisor.accuracy = parse(key, value)?,
            "concentration" => self.advisor.concentration = parse(key, value)?,
            "pass_noise" => self.advisor.pass_noise = parse(key, value)?,
            "error_pass_noise" => self.advisor.error_pass_noise = parse(key, value)?,
            "error_seed" => self.advisor.error_seed = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "fixed_layout" => self.fixed_layout = parse(key, value)?,
            "window" => self.window = parse(key, value)?,
            "bins" => self.bins = parse(key, value)?,
            "gamma" => self.ppo.gamma = parse(key, value)?,
            "clip_epsilon" => self.ppo.clip_epsilon = parse(key, value)?,
            "learning_rate" => self.ppo.learning_rate = parse(key, value)?,
            "minibatch_size" => self.ppo.minibatch_size = parse(key, value)?,
            "epochs" => self.ppo.epochs_per_update = parse(key, value)?,
            "hidden_width" => self.ppo.hidden_width = parse(key, value)?,
            "adam_beta1" => self.ppo.adam_beta1 = parse(key, value)?,
            "adam_beta2" => self.ppo.adam_beta2 = parse(key, value)?,
            "adam_eps" => self.ppo.adam_eps = parse(key, value)?,
            "value_loss_weight" => self.ppo.value_loss_weight = parse(key, value)?,
            "entropy_bonus_weight" => self.ppo.entropy_bonus_weight = parse(key, value)?,
            _ => return Ok(false),
        }
        Ok(true)
    }
}

pub fn parse_room(value: &str) -> Result<(usize, usize)> {
    let err = || Error::Parse {
        origin: "room".into(),
        message: format!("expected <w>x<h>, got {value:?}"),
    };
    let (w, h) = value.trim().split_once('x').ok_or_else(err)?;
    Ok((
        w.trim().parse().map_err(|_| err())?,
        h.trim().parse().map_err(|_| err())?,
    ))
}

/// Parses a flat `key = value` file. Blank lines and `#` comments are
/// skipped; later keys override earlier ones.
pub fn parse_key_values(text: &str, origin: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
            origin: format!("{origin}:{}", lineno + 1),
            message: format!("expected key = value, got {line:?}"),
        })?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

/// Settings for a multi-condition, multi-seed suite.
#[derive(Debug, Clone, PartialEq)]
pub struct SuiteConfig {
    pub base: ExperimentConfig,
    pub conditions: Vec<Condition>,
    pub repeats: usize,
}

impl SuiteConfig {
    /// Four conditions, desk-scale, three seeds.
    pub fn desk() -> Self {
        Self {
            base: ExperimentConfig::desk(Condition::CalibratedEntropy),
            conditions: Condition::ALL.to_vec(),
            repeats: 3,
        }
    }

    pub fn apply(&mut self, settings: &[(String, String)]) -> Result<()> {
        for (k, v) in settings {
            match k.as_str() {
                "preset" => match v.as_str() {
                    "desk" => *self = SuiteConfig::desk(),
                    "full" => {
                        self.base = ExperimentConfig::default();
                    }
                    other => return Err(Error::Config(format!("unknown preset {other:?}"))),
                },
                "conditions" => {
                    self.conditions = v
                        .split(',')
                        .filter(|s| !s.trim().is_empty())
                        .map(str::parse)
                        .collect::<Result<_>>()?;
                }
                "repeats" => {
                    self.repeats = v.parse().map_err(|_| Error::Parse {
                        origin: "repeats".into(),
                        message: format!("cannot parse {v:?}"),
                    })?
                }
                _ => {
                    if !self.base.set(k, v)? {
                        return Err(Error::Config(format!("unknown key {k:?}")));
                    }
                }
            }
        }
        Ok(())
    }

    /// One config per (condition, seed) pair; seeds count up from the base
    /// seed.
    pub fn expand(&self) -> Vec<ExperimentConfig> {
        let mut out = Vec::new();
        for &condition in &self.conditions {
            for r in 0..self.repeats {
                out.push(ExperimentConfig {
                    condition,
                    seed: self.base.seed + r as u64,
                    ..self.base.clone()
                });
            }
        }
        out
    }
}

/// Per-step advice log entry.
#[derive(Debug, Clone, PartialEq)]
pub struct AdviceRow {
    pub episode: usize,
    pub step: usize,
    pub prompt_hash: u64,
    pub predicted: Action,
    pub oracle: Action,
    pub entropy_norm: f64,
    pub one_minus_max: f64,
    pub passes: usize,
}

impl AdviceRow {
    pub fn record(&self, flavor: ConfidenceFlavor) -> CalibrationRecord {
        let confidence = match flavor {
            ConfidenceFlavor::MeanEntropy => 1.0 - self.entropy_norm,
            ConfidenceFlavor::MaxProbability => 1.0 - self.one_minus_max,
        };
        CalibrationRecord::new(confidence, self.predicted, self.oracle)
    }
}

pub fn calibration_records(advice: &[AdviceRow], flavor: ConfidenceFlavor) -> Vec<CalibrationRecord> {
    advice.iter().map(|a| a.record(flavor)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibrationSummary {
    pub ece: f64,
    pub brier: f64,
    pub discrimination: Option<f64>,
    pub records: usize,
    pub incorrect: usize,
}

impl CalibrationSummary {
    pub fn compute(records: &[CalibrationRecord], bins: usize) -> Result<Self> {
        Ok(Self {
            ece: metrics::ece(records, bins)?,
            brier: metrics::brier(records)?,
            discrimination: metrics::discrimination(records, metrics::DISCRIMINATION_THRESHOLD),
            records: records.len(),
            incorrect: records.iter().filter(|r| !r.outcome).count(),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub auc: f64,
    pub mean_return: f64,
    /// Mean raw return over the last `window` episodes.
    pub final_return: f64,
    pub mean_entropy: Option<CalibrationSummary>,
    pub max_probability: Option<CalibrationSummary>,
}

impl RunSummary {
    pub fn calibration(&self, flavor: ConfidenceFlavor) -> Option<&CalibrationSummary> {
        match flavor {
            ConfidenceFlavor::MeanEntropy => self.mean_entropy.as_ref(),
            ConfidenceFlavor::MaxProbability => self.max_probability.as_ref(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub config: ExperimentConfig,
    pub rewards: Vec<f64>,
    pub advice: Vec<AdviceRow>,
    pub summary: RunSummary,
    pub advisor_queries: u64,
    pub total_steps: usize,
    pub params: ppo::NetworkParams,
    pub duration: Duration,
}

impl RunResult {
    pub fn smoothed(&self) -> Vec<f64> {
        metrics::moving_average(&self.rewards, self.config.window).unwrap_or_default()
    }
}

fn choose_policy(
    config: &ExperimentConfig,
    advisor: &Advisor<'_>,
    state: &crate::gridworld::GridState,
    p_agent: &crate::dist::ActionDistribution,
    episode: usize,
    advice_rng: &mut crate::rng::Stream,
) -> Result<(MixedPolicy, Option<CalibratedAdvice>)> {
    Ok(match config.condition {
        Condition::Unguided => (MixedPolicy::agent_only(*p_agent), None),
        Condition::UncalibratedGuided => {
            let advice = advisor.advise_deterministic(state)?;
            let mix = shaping::mix_entropy(&advice.mean_dist, p_agent, advice.entropy_norm)?;
            (mix, Some(advice))
        }
        Condition::CalibratedEntropy => {
            let advice = advisor.advise_mc(state, config.passes, advice_rng)?;
            let mix = shaping::mix_entropy(&advice.mean_dist, p_agent, advice.entropy_norm)?;
            (mix, Some(advice))
        }
        Condition::CalibratedLinearDecay => {
            let advice = advisor.advise_mc(state, config.passes, advice_rng)?;
            let lambda = shaping::linear_decay_coeff(episode, config.episodes)?;
            let mix = shaping::mix_fixed(&advice.mean_dist, p_agent, lambda)?;
            (mix, Some(advice))
        }
    })
}

/// Trains one agent under one condition and scores it.
pub fn run_condition(config: &ExperimentConfig) -> Result<RunResult> {
    config.validate()?;
    let started = Instant::now();
    let env = UnlockPickup::new(config.grid())?;
    let advisor = Advisor::new(&env, config.advisor.clone())?;

    let mut layout_rng = stream(config.seed, StreamId::Layout);
    let mut advice_rng = stream(config.seed, StreamId::Advice);
    let mut behavior_rng = stream(config.seed, StreamId::Behavior);
    let mut shuffle_rng = stream(config.seed, StreamId::Shuffle);
    let params = ppo::init_params(
        env.config().observation_len(),
        &config.ppo,
        &mut stream(config.seed, StreamId::Init),
    );
    let mut learner = PpoLearner::new(params, config.ppo.clone())?;

    let first_layout = env.reset(&mut layout_rng)?;
    let mut rewards = Vec::with_capacity(config.episodes);
    let mut advice_log = Vec::new();
    let mut total_steps = 0;

    for episode in 0..config.episodes {
        let mut state = if config.fixed_layout || episode == 0 {
            first_layout.clone()
        } else {
            env.reset(&mut layout_rng)?
        };
        let mut traj = Trajectory::default();
        let mut episode_return = 0.0;
        loop {
            let step = state.step_count;
            let ctx = |e: Error| e.at_step(episode, step);
            let observation = env.encode_observation(&state);
            let p_agent = ppo::forward_actor(&learner.params, &observation).map_err(ctx)?;
            let (policy, advice) =
                choose_policy(config, &advisor, &state, &p_agent, episode, &mut advice_rng)
                    .map_err(ctx)?;
            let (action, behavior_log_prob) = shaping::sample_action(&policy, &mut behavior_rng);

            if let Some(advice) = &advice {
                advice_log.push(AdviceRow {
                    episode,
                    step,
                    prompt_hash: fnv1a(env.render_prompt(&state).as_bytes()),
                    predicted: advice.predicted_action,
                    oracle: oracle::optimal_action(&env, &state).map_err(ctx)?,
                    entropy_norm: advice.entropy_norm,
                    one_minus_max: advice.one_minus_max,
                    passes: advice.passes_used,
                });
            }

            let (next, outcome) = env.step(&state, action).map_err(ctx)?;
            episode_return += outcome.reward;
            traj.transitions.push(Transition {
                observation,
                action,
                behavior_log_prob,
                reward: outcome.reward,
                done: outcome.done,
                guidance: advice.map(|a| Guidance {
                    p_llm: a.mean_dist,
                    coeff_agent: policy.coeff_agent,
                }),
            });
            if outcome.done {
                if outcome.truncated {
                    traj.truncated_at = Some(env.encode_observation(&next));
                }
                break;
            }
            state = next;
        }
        total_steps += traj.transitions.len();
        rewards.push(episode_return);
        let ctx = |e: Error| e.at_step(episode, traj.transitions.len());
        let batch = ppo::prepare_batch(std::slice::from_ref(&traj), &learner.params, config.ppo.gamma)
            .map_err(ctx)?;
        learner.update(&batch, &mut shuffle_rng).map_err(ctx)?;
    }

    let summary = summarize(config, &rewards, &advice_log)?;
    Ok(RunResult {
        config: config.clone(),
        rewards,
        advice: advice_log,
        summary,
        advisor_queries: advisor.queries(),
        total_steps,
        params: learner.params,
        duration: started.elapsed(),
    })
}

fn summarize(config: &ExperimentConfig, rewards: &[f64], advice: &[AdviceRow]) -> Result<RunSummary> {
    let smoothed = metrics::moving_average(rewards, config.window)?;
    let tail = &rewards[rewards.len().saturating_sub(config.window)..];
    let calib = |flavor| -> Result<Option<CalibrationSummary>> {
        if advice.is_empty() {
            return Ok(None);
        }
        CalibrationSummary::compute(&calibration_records(advice, flavor), config.bins).map(Some)
    };
    Ok(RunSummary {
        auc: metrics::auc(&smoothed),
        mean_return: rewards.iter().sum::<f64>() / rewards.len() as f64,
        final_return: tail.iter().sum::<f64>() / tail.len() as f64,
        mean_entropy: calib(ConfidenceFlavor::MeanEntropy)?,
        max_probability: calib(ConfidenceFlavor::MaxProbability)?,
    })
}

/// Mean and population standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Spread {
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

impl Spread {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Some(Self {
            mean,
            std: var.sqrt(),
            n: values.len(),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlavorRow {
    pub flavor: ConfidenceFlavor,
    pub ece: Spread,
    pub brier: Spread,
    pub discrimination: Option<Spread>,
    pub incorrect: usize,
}

/// Seed-aggregated metrics for one condition.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionRow {
    pub condition: Condition,
    pub runs: usize,
    pub failures: usize,
    pub auc: Option<Spread>,
    pub final_return: Option<Spread>,
    pub flavors: Vec<FlavorRow>,
}

impl ConditionRow {
    pub fn flavor(&self, flavor: ConfidenceFlavor) -> Option<&FlavorRow> {
        self.flavors.iter().find(|f| f.flavor == flavor)
    }
}

pub struct SuiteReport {
    pub runs: Vec<(ExperimentConfig, Result<RunResult>)>,
    pub rows: Vec<ConditionRow>,
}

impl SuiteReport {
    pub fn row(&self, condition: Condition) -> Option<&ConditionRow> {
        self.rows.iter().find(|r| r.condition == condition)
    }

    pub fn results(&self) -> impl Iterator<Item = &RunResult> {
        self.runs.iter().filter_map(|(_, r)| r.as_ref().ok())
    }
}

pub fn aggregate(condition: Condition, results: &[&RunResult], failures: usize) -> ConditionRow {
    let collect = |f: &dyn Fn(&RunResult) -> f64| Spread::of(&results.iter().map(|r| f(r)).collect::<Vec<_>>());
    let mut flavors = Vec::new();
    for flavor in ConfidenceFlavor::ALL {
        let per_run: Vec<&CalibrationSummary> = results
            .iter()
            .filter_map(|r| r.summary.calibration(flavor))
            .collect();
        if per_run.is_empty() {
            continue;
        }
        let ece: Vec<f64> = per_run.iter().map(|c| c.ece).collect();
        let brier: Vec<f64> = per_run.iter().map(|c| c.brier).collect();
        let disc: Vec<f64> = per_run.iter().filter_map(|c| c.discrimination).collect();
        flavors.push(FlavorRow {
            flavor,
            ece: Spread::of(&ece).unwrap_or_default(),
            brier: Spread::of(&brier).unwrap_or_default(),
            discrimination: Spread::of(&disc),
            incorrect: per_run.iter().map(|c| c.incorrect).sum(),
        });
    }
    ConditionRow {
        condition,
        runs: results.len(),
        failures,
        auc: collect(&|r| r.summary.auc),
        final_return: collect(&|r| r.summary.final_return),
        flavors,
    }
}

/// Runs every config, spreading independent runs over the available cores.
/// Failed runs are kept in the report and do not stop the suite.
pub fn run_all(configs: &[ExperimentConfig]) -> Vec<Result<RunResult>> {
    let workers = std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1)
        .min(configs.len().max(1));
    if workers <= 1 {
        return configs.iter().map(run_condition).collect();
    }
    let mut slots: Vec<Option<Result<RunResult>>> = (0..configs.len()).map(|_| None).collect();
    let next = std::sync::atomic::AtomicUsize::new(0);
    let done = std::sync::Mutex::new(&mut slots);
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                if i >= configs.len() {
                    break;
                }
                let result = run_condition(&configs[i]);
                done.lock().expect("result slots")[i] = Some(result);
            });
        }
    });
    slots.into_iter().map(|s| s.expect("every run finished")).collect()
}

pub fn run_suite(suite: &SuiteConfig) -> Result<SuiteReport> {
    if suite.conditions.is_empty() || suite.repeats == 0 {
        return Err(Error::Config("suite needs at least one condition and one repeat".into()));
    }
    let configs = suite.expand();
    let results = run_all(&configs);
    let runs: Vec<(ExperimentConfig, Result<RunResult>)> = configs.into_iter().zip(results).collect();
    let rows = suite
        .conditions
        .iter()
        .map(|&c| {
            let ok: Vec<&RunResult> = runs
                .iter()
                .filter(|(cfg, _)| cfg.condition == c)
                .filter_map(|(_, r)| r.as_ref().ok())
                .collect();
            let failures = runs
                .iter()
                .filter(|(cfg, r)| cfg.condition == c && r.is_err())
                .count();
            aggregate(c, &ok, failures)
        })
        .collect();
    Ok(SuiteReport { runs, rows })
}

/// Writes `bytes` to a temporary sibling and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn run_stem(result: &RunResult) -> String {
    format!("{}_{}", result.config.condition, result.config.seed)
}

pub fn curve_csv(result: &RunResult) -> String {
    let smoothed = result.smoothed();
    let mut out = String::from("episode,reward,smoothed_reward\n");
    for (i, (r, s)) in result.rewards.iter().zip(&smoothed).enumerate() {
        let _ = writeln!(out, "{i},{r},{s}");
    }
    out
}

pub fn advice_csv(result: &RunResult) -> String {
    let mut out = String::from(
        "episode,step,prompt_hash,predicted_action,oracle_action,entropy_norm,one_minus_max,passes\n",
    );
    for a in &result.advice {
        let _ = writeln!(
            out,
            "{},{},{:016x},{},{},{},{},{}",
            a.episode, a.step, a.prompt_hash, a.predicted, a.oracle, a.entropy_norm, a.one_minus_max, a.passes
        );
    }
    out
}

/// Writes one `curve_<condition>_<seed>.csv` per result.
pub fn emit_curves(results: &[&RunResult], dir: &Path) -> Result<Vec<PathBuf>> {
    ensure_dir(dir)?;
    results
        .iter()
        .map(|r| {
            let path = dir.join(format!("curve_{}.csv", run_stem(r)));
            write_atomic(&path, curve_csv(r).as_bytes())?;
            Ok(path)
        })
        .collect()
}

/// Curves, advice logs (guided runs only) and checkpoints for each result.
pub fn write_run_outputs(result: &RunResult, dir: &Path) -> Result<()> {
    ensure_dir(dir)?;
    emit_curves(&[result], dir)?;
    let stem = run_stem(result);
    if result.config.condition.is_guided() {
        write_atomic(
            &dir.join(format!("advice_{stem}.csv")),
            advice_csv(result).as_bytes(),
        )?;
    }
    result
        .params
        .save(&dir.join(format!("checkpoint_{stem}")), &result.config.ppo)
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x}")).unwrap_or_else(|| "NA".into())
}

pub const SUMMARY_HEADER: &str = "condition,runs,failures,auc_mean,auc_std,final_return_mean,flavor,ece_mean,ece_std,brier_mean,brier_std,discrimination_mean,discrimination_std,incorrect_records";

/// One line per (condition, confidence flavor); unguided rows carry NA
/// calibration columns.
pub fn summary_csv(rows: &[ConditionRow]) -> String {
    let mut out = format!("{SUMMARY_HEADER}\n");
    for row in rows {
        let auc = row.auc.unwrap_or_default();
        let fin = row.final_return.map(|s| s.mean);
        let head = format!(
            "{},{},{},{},{},{}",
            row.condition,
            row.runs,
            row.failures,
            opt(row.auc.map(|_| auc.mean)),
            opt(row.auc.map(|_| auc.std)),
            opt(fin)
        );
        if row.flavors.is_empty() {
            let _ = writeln!(out, "{head},NA,NA,NA,NA,NA,NA,NA,0");
        }
        for f in &row.flavors {
            let _ = writeln!(
                out,
                "{head},{},{},{},{},{},{},{},{}",
                f.flavor.label(),
                f.ece.mean,
                f.ece.std,
                f.brier.mean,
                f.brier.std,
                opt(f.discrimination.map(|d| d.mean)),
                opt(f.discrimination.map(|d| d.std)),
                f.incorrect
            );
        }
    }
    out
}

pub fn runs_csv(report: &SuiteReport) -> String {
    let mut out = String::from("condition,seed,status,auc,final_return,steps,advisor_queries,seconds\n");
    for (cfg, r) in &report.runs {
        match r {
            Ok(r) => {
                let _ = writeln!(
                    out,
                    "{},{},ok,{},{},{},{},{:.3}",
                    cfg.condition,
                    cfg.seed,
                    r.summary.auc,
                    r.summary.final_return,
                    r.total_steps,
                    r.advisor_queries,
                    r.duration.as_secs_f64()
                );
            }
            Err(e) => {
                let msg = e.to_string().replace([',', '\n'], ";");
                let _ = writeln!(out, "{},{},error: {msg},NA,NA,NA,NA,NA", cfg.condition, cfg.seed);
            }
        }
    }
    out
}

pub fn write_suite_outputs(report: &SuiteReport, dir: &Path) -> Result<()> {
    ensure_dir(dir)?;
    for r in report.results() {
        write_run_outputs(r, dir)?;
    }
    write_atomic(&dir.join("summary.csv"), summary_csv(&report.rows).as_bytes())?;
    write_atomic(&dir.join("runs.csv"), runs_csv(report).as_bytes())
}

/// Renders `summary.csv` content as two text tables: reward AUC per
/// condition and calibration metrics per (condition, flavor).
pub fn render_report(summary_csv_text: &str) -> Result<String> {
    let mut lines = summary_csv_text.lines();
    let header: Vec<&str> = lines
        .next()
        .ok_or(Error::Empty("summary.csv"))?
        .split(',')
        .collect();
    let col = |name: &str| {
        header.iter().position(|h| *h == name).ok_or_else(|| Error::Parse {
            origin: "summary.csv".into(),
            message: format!("missing column {name}"),
        })
    };
    let (c_cond, c_auc, c_auc_sd, c_final, c_flavor) =
        (col("condition")?, col("auc_mean")?, col("auc_std")?, col("final_return_mean")?, col("flavor")?);
    let (c_ece, c_bs, c_disc, c_inc) = (
        col("ece_mean")?,
        col("brier_mean")?,
        col("discrimination_mean")?,
        col("incorrect_records")?,
    );
    let rows: Vec<Vec<&str>> = lines.filter(|l| !l.trim().is_empty()).map(|l| l.split(',').collect()).collect();
    let short = |s: &str| match s.parse::<f64>() {
        Ok(v) => format!("{v:.3}"),
        Err(_) => s.to_string(),
    };
    let mut out = String::new();
    let _ = writeln!(out, "{:<26} {:>12} {:>10} {:>12}", "method", "AUC", "AUC sd", "final avg");
    let mut seen = Vec::new();
    for r in &rows {
        if seen.contains(&r[c_cond]) {
            continue;
        }
        seen.push(r[c_cond]);
        let _ = writeln!(
            out,
            "{:<26} {:>12} {:>10} {:>12}",
            r[c_cond],
            short(r[c_auc]),
            short(r[c_auc_sd]),
            short(r[c_final])
        );
    }
    let _ = writeln!(out);
    let _ = writeln!(
        out,
        "{:<26} {:<16} {:>7} {:>7} {:>15} {:>10}",
        "method", "confidence", "ECE", "BS", "discrimination", "incorrect"
    );
    for r in rows.iter().filter(|r| r[c_flavor] != "NA") {
        let _ = writeln!(
            out,
            "{:<26} {:<16} {:>7} {:>7} {:>15} {:>10}",
            r[c_cond],
            r[c_flavor],
            short(r[c_ece]),
            short(r[c_bs]),
            short(r[c_disc]),
            r[c_inc]
        );
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(condition: Condition) -> ExperimentConfig {
        ExperimentConfig {
            episodes: 6,
            window: 3,
            ..ExperimentConfig::desk(condition)
        }
    }

    #[test]
    fn condition_labels_round_trip() {
        for c in Condition::ALL {
            assert_eq!(c.label().parse::<Condition>().unwrap(), c);
        }
        assert!("guided".parse::<Condition>().is_err());
    }

    #[test]
    fn key_value_parsing() {
        let kv = parse_key_values("# comment\nepisodes = 12\n\nroom = 4x3 # trailing\n", "t").unwrap();
        let mut cfg = ExperimentConfig::default();
        for (k, v) in &kv {
            assert!(cfg.set(k, v).unwrap());
        }
        assert_eq!(cfg.episodes, 12);
        assert_eq!((cfg.room_width, cfg.room_height), (4, 3));
        assert!(!cfg.set("bogus", "1").unwrap());
        assert!(cfg.set("episodes", "many").is_err());
        assert!(parse_key_values("novalue\n", "t").is_err());
    }

    #[test]
    fn calibrated_conditions_need_two_passes() {
        let mut cfg = tiny(Condition::CalibratedEntropy);
        cfg.passes = 1;
        assert!(cfg.validate().is_err());
        cfg.condition = Condition::UncalibratedGuided;
        assert!(cfg.validate().is_ok());
    }

    #[test]
    fn unguided_makes_no_advisor_queries() {
        let r = run_condition(&tiny(Condition::Unguided)).unwrap();
        assert_eq!(r.advisor_queries, 0);
        assert!(r.advice.is_empty());
        assert!(r.summary.mean_entropy.is_none());
        assert_eq!(r.rewards.len(), 6);
    }

    #[test]
    fn guided_runs_log_one_record_per_step() {
        for c in [
            Condition::UncalibratedGuided,
            Condition::CalibratedEntropy,
            Condition::CalibratedLinearDecay,
        ] {
            let r = run_condition(&tiny(c)).unwrap();
            assert_eq!(r.advice.len(), r.total_steps);
            assert_eq!(r.advisor_queries as usize, r.total_steps);
            let expected_passes = if c.is_calibrated() { 10 } else { 1 };
            assert!(r.advice.iter().all(|a| a.passes == expected_passes));
        }
    }

    #[test]
    fn suite_bookkeeping() {
        let suite = SuiteConfig {
            base: ExperimentConfig {
                episodes: 3,
                ..ExperimentConfig::desk(Condition::Unguided)
            },
            conditions: Condition::ALL.to_vec(),
            repeats: 2,
        };
        let report = run_suite(&suite).unwrap();
        assert_eq!(report.runs.len(), 8);
        assert_eq!(report.rows.len(), 4);
        assert!(report.rows.iter().all(|r| r.runs == 2 && r.failures == 0));
        let csv = summary_csv(&report.rows);
        let text = render_report(&csv).unwrap();
        assert!(text.contains("calibrated-entropy"));
    }

    #[test]
    fn identical_configs_give_identical_rows() {
        let suite = SuiteConfig {
            base: ExperimentConfig {
                episodes: 3,
                ..ExperimentConfig::desk(Condition::CalibratedEntropy)
            },
            conditions: vec![Condition::CalibratedEntropy, Condition::CalibratedEntropy],
            repeats: 1,
        };
        let report = run_suite(&suite).unwrap();
        let mut a = report.rows[0].clone();
        let b = report.rows[1].clone();
        a.condition = b.condition;
        assert_eq!(a, b);
    }

    #[test]
    fn curve_file_has_one_row_per_episode() {
        let r = run_condition(&tiny(Condition::Unguided)).unwrap();
        let csv = curve_csv(&r);
        assert_eq!(csv.lines().count(), 1 + 6);
    }

    #[test]
    fn spread_of_values() {
        let s = Spread::of(&[1.0, 3.0]).unwrap();
        assert_eq!((s.mean, s.std, s.n), (2.0, 1.0, 2));
        assert!(Spread::of(&[]).is_none());
    }
}
