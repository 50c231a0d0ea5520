#![allow(dead_code)]

use std::collections::{HashMap, VecDeque};

use guided_rl::gridworld::{
    Action, Direction, GridConfig, GridState, Mission, Pos, UnlockPickup,
};

/// Step counter zeroed so states compare by configuration only.
pub fn canonical(state: &GridState) -> GridState {
    GridState {
        step_count: 0,
        ..state.clone()
    }
}

/// Minimal number of environment steps that complete the state's current
/// mission, found by forward breadth-first search through `UnlockPickup::step`
/// over the full state (pose, flags, key, mission).
pub fn brute_force_cost(env: &UnlockPickup, start: &GridState) -> Option<usize> {
    let target = start.mission;
    let mut seen: HashMap<GridState, usize> = HashMap::new();
    let mut queue = VecDeque::new();
    let root = canonical(start);
    seen.insert(root.clone(), 0);
    queue.push_back(root);
    while let Some(s) = queue.pop_front() {
        let depth = seen[&s];
        for a in Action::ALL {
            let (next, out) = env.step(&s, a).ok()?;
            if out.mission_completed == Some(target) {
                return Some(depth + 1);
            }
            let next = canonical(&next);
            if !seen.contains_key(&next) {
                seen.insert(next.clone(), depth + 1);
                queue.push_back(next);
            }
        }
    }
    None
}

/// Every admissible state of every layout for the given room size.
pub fn all_states(config: &GridConfig) -> Vec<GridState> {
    let mut out = Vec::new();
    let left = config.left_room_cells();
    let right = config.right_room_cells();
    for &key in &left {
        for door_row in 1..=config.room_height {
            let door = Pos::new(config.divider_col(), door_row);
            for &goal in &right {
                for dir in Direction::ALL {
                    for &p in &left {
                        if p != key {
                            out.push(state(p, dir, Some(key), door, goal, Mission::PickupKey));
                        }
                        out.push(state(p, dir, None, door, goal, Mission::OpenDoor));
                    }
                    for &p in left.iter().chain(&right).chain(std::iter::once(&door)) {
                        if p != goal {
                            out.push(state(p, dir, None, door, goal, Mission::ReachGoal));
                        }
                    }
                }
            }
        }
    }
    out
}

pub fn state(
    agent_pos: Pos,
    agent_dir: Direction,
    key_pos: Option<Pos>,
    door_pos: Pos,
    goal_pos: Pos,
    mission: Mission,
) -> GridState {
    GridState {
        agent_pos,
        agent_dir,
        carrying_key: key_pos.is_none(),
        door_open: mission == Mission::ReachGoal,
        key_pos,
        door_pos,
        goal_pos,
        mission,
        step_count: 0,
    }
}

pub mod gradcheck {
    use guided_rl::dist::ActionDistribution;
    use guided_rl::gridworld::Action;
    use guided_rl::ppo::{
        forward_actor, loss_and_gradient, Guidance, NetworkParams, PpoConfig, TrainingSample,
        Transition,
    };
    use guided_rl::shaping::mix_entropy;
    use rand::Rng;
    use rand_distr::{Distribution, StandardNormal};

    pub const STEP: f64 = 1e-5;
    /// Components smaller than this in both estimates are compared absolutely.
    pub const FLOOR: f64 = 1e-6;
    /// Batches with a ratio this close to a clip boundary are redrawn.
    pub const KINK_MARGIN: f64 = 1e-3;

    pub fn config() -> PpoConfig {
        PpoConfig {
            hidden_width: 6,
            ..PpoConfig::default()
        }
    }

    fn normal<R: Rng>(rng: &mut R) -> f64 {
        StandardNormal.sample(rng)
    }

    fn mixed_prob(params: &NetworkParams, tr: &Transition) -> f64 {
        let p = forward_actor(params, &tr.observation).unwrap();
        match &tr.guidance {
            Some(g) => mix_entropy(&g.p_llm, &p, g.coeff_agent).unwrap().dist.prob(tr.action),
            None => p.prob(tr.action),
        }
    }

    /// Random parameters and a random minibatch whose ratios straddle the
    /// clip range without sitting on a kink.
    pub fn draw<R: Rng>(rng: &mut R, config: &PpoConfig) -> (NetworkParams, Vec<TrainingSample>) {
        let obs_len = 9;
        loop {
            let mut params = NetworkParams::zeros(obs_len, config.hidden_width);
            for w in params.as_mut_slice() {
                *w = rng.random_range(-0.6..0.6);
            }
            let size = rng.random_range(2..=6);
            let mut batch = Vec::with_capacity(size);
            let mut near_kink = false;
            for _ in 0..size {
                let observation: Vec<f64> = (0..obs_len)
                    .map(|_| if rng.random_bool(0.4) { 0.0 } else { rng.random_range(-1.0..1.0) })
                    .collect();
                let guidance = rng.random_bool(0.6).then(|| {
                    let logits: [f64; 5] = std::array::from_fn(|_| 2.0 * normal(rng));
                    Guidance {
                        p_llm: ActionDistribution::from_logits(&logits),
                        coeff_agent: rng.random_range(0.05..1.0),
                    }
                });
                let mut transition = Transition {
                    observation,
                    action: Action::ALL[rng.random_range(0..5)],
                    behavior_log_prob: 0.0,
                    reward: 0.0,
                    done: false,
                    guidance,
                };
                let current = mixed_prob(&params, &transition).ln();
                transition.behavior_log_prob = current + 0.25 * normal(rng);
                let ratio = (current - transition.behavior_log_prob).exp();
                let eps = config.clip_epsilon;
                if (ratio - (1.0 - eps)).abs() < KINK_MARGIN || (ratio - (1.0 + eps)).abs() < KINK_MARGIN {
                    near_kink = true;
                }
                batch.push(TrainingSample {
                    transition,
                    ret: normal(rng),
                    advantage: normal(rng),
                });
            }
            if !near_kink {
                return (params, batch);
            }
        }
    }

    /// Largest relative error between the analytic gradient and central
    /// differences of the total loss.
    pub fn max_relative_error(params: &NetworkParams, batch: &[TrainingSample], config: &PpoConfig) -> f64 {
        let refs: Vec<&TrainingSample> = batch.iter().collect();
        let (_, grad) = loss_and_gradient(params, &refs, config).unwrap();
        let mut probe = params.clone();
        let mut worst: f64 = 0.0;
        for i in 0..params.as_slice().len() {
            let base = params.as_slice()[i];
            probe.as_mut_slice()[i] = base + STEP;
            let up = loss_and_gradient(&probe, &refs, config).unwrap().0.total;
            probe.as_mut_slice()[i] = base - STEP;
            let down = loss_and_gradient(&probe, &refs, config).unwrap().0.total;
            probe.as_mut_slice()[i] = base;
            let numeric = (up - down) / (2.0 * STEP);
            let analytic = grad.as_slice()[i];
            let scale = analytic.abs().max(numeric.abs()).max(FLOOR);
            worst = worst.max((analytic - numeric).abs() / scale);
        }
        worst
    }
}
