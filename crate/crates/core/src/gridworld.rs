//! Two-room unlock-pickup gridworld.
//!
//! The full grid is `2 * room_width + 3` columns by `room_height + 2` rows: a
//! boundary wall ring, a left room, a dividing wall column holding one locked
//! door, and a right room holding the goal. The agent must pick up the key,
//! open the door and then walk onto the goal, in that order. Completing the
//! first two missions pays `+0.5` each; reaching the goal pays
//! `0.2 + (1 - step_count / max_steps)`. Pickup or open-door attempts in any
//! other state cost `-0.02`.

use std::fmt;

use rand::Rng;

use crate::error::{Error, Result};

pub const SUBGOAL_REWARD: f64 = 0.5;
pub const GOAL_BONUS: f64 = 0.2;
pub const MISUSE_PENALTY: f64 = -0.02;

/// The five discrete actions. Ids are contiguous so every action
/// distribution shares the same support.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[repr(u8)]
pub enum Action {
    TurnLeft = 0,
    TurnRight = 1,
    Forward = 2,
    Pickup = 3,
    OpenDoor = 4,
}

impl Action {
    pub const ALL: [Action; 5] = [
        Action::TurnLeft,
        Action::TurnRight,
        Action::Forward,
        Action::Pickup,
        Action::OpenDoor,
    ];

    pub fn from_id(id: u8) -> Result<Self> {
        Self::ALL
            .get(id as usize)
            .copied()
            .ok_or(Error::InvalidAction(id))
    }

    pub fn id(self) -> u8 {
        self as u8
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.id())
    }
}

/// Facing direction; codes follow right (0), down (1), left (2), up (3).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[repr(u8)]
pub enum Direction {
    Right = 0,
    Down = 1,
    Left = 2,
    Up = 3,
}

impl Direction {
    pub const ALL: [Direction; 4] = [Direction::Right, Direction::Down, Direction::Left, Direction::Up];

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Self {
        Self::ALL[(code % 4) as usize]
    }

    pub fn turn_left(self) -> Self {
        Self::from_code(self.code() + 3)
    }

    pub fn turn_right(self) -> Self {
        Self::from_code(self.code() + 1)
    }

    fn glyph(self) -> char {
        match self {
            Direction::Right => '>',
            Direction::Down => 'v',
            Direction::Left => '<',
            Direction::Up => '^',
        }
    }
}

/// Cell coordinates, column first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Pos {
    pub col: usize,
    pub row: usize,
}

impl Pos {
    pub const fn new(col: usize, row: usize) -> Self {
        Self { col, row }
    }

    /// Neighbouring cell in `dir`. Callers only ask for neighbours of
    /// interior cells, which always exist thanks to the wall ring.
    pub fn step(self, dir: Direction) -> Self {
        match dir {
            Direction::Right => Pos::new(self.col + 1, self.row),
            Direction::Down => Pos::new(self.col, self.row + 1),
            Direction::Left => Pos::new(self.col - 1, self.row),
            Direction::Up => Pos::new(self.col, self.row - 1),
        }
    }
}

impl fmt::Display for Pos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.col, self.row)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[repr(u8)]
pub enum Mission {
    PickupKey = 1,
    OpenDoor = 2,
    ReachGoal = 3,
}

impl Mission {
    pub fn index(self) -> u8 {
        self as u8
    }

    fn describe(self) -> &'static str {
        match self {
            Mission::PickupKey => "pick up key",
            Mission::OpenDoor => "open door",
            Mission::ReachGoal => "go to the goal",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Cell {
    Wall,
    Empty,
    Key,
    Door { open: bool },
    Goal,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GridConfig {
    pub room_width: usize,
    pub room_height: usize,
    pub max_steps: usize,
    pub seed: u64,
}

impl GridConfig {
    /// Rooms of `room_width x room_height` interior cells with the default
    /// horizon of eight steps per grid cell.
    pub fn new(room_width: usize, room_height: usize, seed: u64) -> Self {
        let cells = (2 * room_width + 3) * (room_height + 2);
        Self {
            room_width,
            room_height,
            max_steps: 8 * cells,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.room_width < 3 || self.room_height < 3 {
            return Err(Error::Config(format!(
                "rooms must be at least 3x3, got {}x{}",
                self.room_width, self.room_height
            )));
        }
        if self.max_steps < 4 * self.cell_count() {
            return Err(Error::Config(format!(
                "max_steps {} is below 4 x {} grid cells",
                self.max_steps,
                self.cell_count()
            )));
        }
        Ok(())
    }

    pub fn width(&self) -> usize {
        2 * self.room_width + 3
    }

    pub fn height(&self) -> usize {
        self.room_height + 2
    }

    pub fn cell_count(&self) -> usize {
        self.width() * self.height()
    }

    pub fn divider_col(&self) -> usize {
        self.room_width + 1
    }

    pub fn index_of(&self, pos: Pos) -> usize {
        pos.row * self.width() + pos.col
    }

    pub fn in_left_room(&self, pos: Pos) -> bool {
        (1..=self.room_width).contains(&pos.col) && (1..=self.room_height).contains(&pos.row)
    }

    pub fn in_right_room(&self, pos: Pos) -> bool {
        let lo = self.divider_col() + 1;
        (lo..lo + self.room_width).contains(&pos.col) && (1..=self.room_height).contains(&pos.row)
    }

    pub fn left_room_cells(&self) -> Vec<Pos> {
        (1..=self.room_height)
            .flat_map(|row| (1..=self.room_width).map(move |col| Pos::new(col, row)))
            .collect()
    }

    pub fn right_room_cells(&self) -> Vec<Pos> {
        let lo = self.divider_col() + 1;
        (1..=self.room_height)
            .flat_map(|row| (lo..lo + self.room_width).map(move |col| Pos::new(col, row)))
            .collect()
    }

    /// Length of [`UnlockPickup::encode_observation`] vectors.
    pub fn observation_len(&self) -> usize {
        CELL_PLANES * self.cell_count() + self.cell_count() + 4 + 1 + 3
    }
}

/// Full environment configuration at one timestep.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct GridState {
    pub agent_pos: Pos,
    pub agent_dir: Direction,
    pub carrying_key: bool,
    pub door_open: bool,
    pub key_pos: Option<Pos>,
    pub door_pos: Pos,
    pub goal_pos: Pos,
    pub mission: Mission,
    pub step_count: usize,
}

impl GridState {
    pub fn front_pos(&self) -> Pos {
        self.agent_pos.step(self.agent_dir)
    }

    /// True once the goal is reached; truncation is tracked by the horizon.
    pub fn goal_reached(&self) -> bool {
        self.mission == Mission::ReachGoal && self.agent_pos == self.goal_pos
    }

    /// Checks every structural invariant, returning the first violation.
    pub fn check_invariants(&self, config: &GridConfig) -> std::result::Result<(), String> {
        if self.carrying_key != self.key_pos.is_none() {
            return Err("carrying_key must equal key_pos.is_none()".into());
        }
        let mission_ok = match self.mission {
            Mission::PickupKey => !self.carrying_key && !self.door_open,
            Mission::OpenDoor => self.carrying_key && !self.door_open,
            Mission::ReachGoal => self.door_open,
        };
        if !mission_ok {
            return Err(format!("mission {:?} inconsistent with flags", self.mission));
        }
        if self.door_pos.col != config.divider_col()
            || !(1..=config.room_height).contains(&self.door_pos.row)
        {
            return Err(format!("door {} not on the dividing wall", self.door_pos));
        }
        if !config.in_right_room(self.goal_pos) {
            return Err(format!("goal {} outside the right room", self.goal_pos));
        }
        if let Some(key) = self.key_pos {
            if !config.in_left_room(key) {
                return Err(format!("key {key} outside the left room"));
            }
        }
        if cell_at(config, self, self.agent_pos) == Cell::Wall {
            return Err(format!("agent inside wall at {}", self.agent_pos));
        }
        if Some(self.agent_pos) == self.key_pos {
            return Err("agent overlaps the key".into());
        }
        if config.in_right_room(self.agent_pos) && !self.door_open {
            return Err("agent in right room behind a closed door".into());
        }
        if self.step_count > config.max_steps {
            return Err("step_count beyond horizon".into());
        }
        Ok(())
    }
}

/// Result of a single transition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub reward: f64,
    pub done: bool,
    pub mission_completed: Option<Mission>,
    pub truncated: bool,
}

const CELL_PLANES: usize = 6;

/// Static content of `pos`, ignoring the agent.
pub fn cell_at(config: &GridConfig, state: &GridState, pos: Pos) -> Cell {
    if pos == state.door_pos {
        return Cell::Door {
            open: state.door_open,
        };
    }
    if pos.col == 0
        || pos.row == 0
        || pos.col + 1 >= config.width()
        || pos.row + 1 >= config.height()
        || pos.col == config.divider_col()
    {
        return Cell::Wall;
    }
    if Some(pos) == state.key_pos {
        return Cell::Key;
    }
    if pos == state.goal_pos {
        return Cell::Goal;
    }
    Cell::Empty
}

fn passable(cell: Cell) -> bool {
    matches!(cell, Cell::Empty | Cell::Goal | Cell::Door { open: true })
}

/// The unlock-pickup environment for one configuration.
#[derive(Debug, Clone)]
pub struct UnlockPickup {
    config: GridConfig,
}

impl UnlockPickup {
    pub fn new(config: GridConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self { config })
    }

    pub fn config(&self) -> &GridConfig {
        &self.config
    }

    /// Samples a fresh layout: key, agent, door row, goal and facing are all
    /// uniform over their admissible cells.
    pub fn reset<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<GridState> {
        let left = self.config.left_room_cells();
        let right = self.config.right_room_cells();
        if left.len() < 2 || right.is_empty() {
            return Err(Error::Config("no free cell for placement".into()));
        }
        let key = left[rng.random_range(0..left.len())];
        let door_row = rng.random_range(1..=self.config.room_height);
        let goal = right[rng.random_range(0..right.len())];
        let free: Vec<Pos> = left.into_iter().filter(|&p| p != key).collect();
        let agent = free[rng.random_range(0..free.len())];
        let dir = Direction::from_code(rng.random_range(0..4u8));
        Ok(GridState {
            agent_pos: agent,
            agent_dir: dir,
            carrying_key: false,
            door_open: false,
            key_pos: Some(key),
            door_pos: Pos::new(self.config.divider_col(), door_row),
            goal_pos: goal,
            mission: Mission::PickupKey,
            step_count: 0,
        })
    }

    pub fn cell(&self, state: &GridState, pos: Pos) -> Cell {
        cell_at(&self.config, state, pos)
    }

    pub fn is_terminal(&self, state: &GridState) -> bool {
        state.goal_reached() || state.step_count >= self.config.max_steps
    }

    /// Applies one action. Every call consumes one step of the horizon.
    pub fn step(&self, state: &GridState, action: Action) -> Result<(GridState, StepOutcome)> {
        if self.is_terminal(state) {
            return Err(Error::EpisodeOver(state.step_count));
        }
        let mut next = state.clone();
        next.step_count += 1;
        let mut reward = 0.0;
        let mut completed = None;
        let front = state.front_pos();
        match action {
            Action::TurnLeft => next.agent_dir = state.agent_dir.turn_left(),
            Action::TurnRight => next.agent_dir = state.agent_dir.turn_right(),
            Action::Forward => {
                let cell = self.cell(state, front);
                if passable(cell) {
                    next.agent_pos = front;
                    if cell == Cell::Goal && state.mission == Mission::ReachGoal {
                        completed = Some(Mission::ReachGoal);
                        reward = GOAL_BONUS
                            + (1.0 - next.step_count as f64 / self.config.max_steps as f64);
                    }
                }
            }
            Action::Pickup => {
                if state.mission == Mission::PickupKey && state.key_pos == Some(front) {
                    next.key_pos = None;
                    next.carrying_key = true;
                    next.mission = Mission::OpenDoor;
                    completed = Some(Mission::PickupKey);
                    reward = SUBGOAL_REWARD;
                } else {
                    reward = MISUSE_PENALTY;
                }
            }
            Action::OpenDoor => {
                if state.mission == Mission::OpenDoor
                    && state.carrying_key
                    && !state.door_open
                    && front == state.door_pos
                {
                    next.door_open = true;
                    next.mission = Mission::ReachGoal;
                    completed = Some(Mission::OpenDoor);
                    reward = SUBGOAL_REWARD;
                } else {
                    reward = MISUSE_PENALTY;
                }
            }
        }
        let finished = completed == Some(Mission::ReachGoal);
        let truncated = !finished && next.step_count >= self.config.max_steps;
        Ok((
            next,
            StepOutcome {
                reward,
                done: finished || truncated,
                mission_completed: completed,
                truncated,
            },
        ))
    }

    /// Binary feature vector: six one-hot cell-type planes (wall, key, closed
    /// door, open door, goal, empty), the agent position, direction, carry
    /// bit and mission.
    pub fn encode_observation(&self, state: &GridState) -> Vec<f64> {
        let cells = self.config.cell_count();
        let mut obs = vec![0.0; self.config.observation_len()];
        for row in 0..self.config.height() {
            for col in 0..self.config.width() {
                let pos = Pos::new(col, row);
                let plane = match self.cell(state, pos) {
                    Cell::Wall => 0,
                    Cell::Key => 1,
                    Cell::Door { open: false } => 2,
                    Cell::Door { open: true } => 3,
                    Cell::Goal => 4,
                    Cell::Empty => 5,
                };
                obs[plane * cells + self.config.index_of(pos)] = 1.0;
            }
        }
        let mut offset = CELL_PLANES * cells;
        obs[offset + self.config.index_of(state.agent_pos)] = 1.0;
        offset += cells;
        obs[offset + state.agent_dir.code() as usize] = 1.0;
        offset += 4;
        if state.carrying_key {
            obs[offset] = 1.0;
        }
        offset += 1;
        obs[offset + state.mission.index() as usize - 1] = 1.0;
        obs
    }

    /// Natural-language description of the state in the advisor's prompt
    /// format.
    pub fn render_prompt(&self, state: &GridState) -> String {
        let forward = match self.cell(state, state.front_pos()) {
            Cell::Wall => "wall",
            Cell::Empty => "empty cell",
            Cell::Key => "key",
            Cell::Door { open: false } => "closed door",
            Cell::Door { open: true } => "open door",
            Cell::Goal => "goal",
        };
        let key_pos = state.key_pos.unwrap_or(state.agent_pos);
        let carried = if state.carrying_key { "" } else { "not " };
        let door_flag = if state.door_open { "True" } else { "False" };
        format!(
            "The red agent is in a {w}x{h} grid environment surrounded by walls. \
             Each grid cell is identified by coordinates (i, j), where i denotes the column and j denotes the row. \
             The agent can turn left (action 0), turn right (action 1), move forward (action 2), pick up key (action 3), and open door (action 4). \
             The agent can face right (0), down (1), left (2), or up (3). \
             The agent cannot pass through walls. \
             It can open the door if it has the key and is facing the closed door, and it can pick up the key when facing it. \
             The agent needs to find the shortest route to key or door and then pickup the key or open the door. \
             Consider the direction as the way the agent is facing, not the way we are seeing the agent, to avoid mixing right and left. \
             In this state, the agent is at position {agent}, the agent direction is {glyph} and agent's direction number is {dir}, \
             and the forward object is {forward}, and the key position is {key_pos}, the key is {carried}being carried by the agent, \
             the door is at position {door}, the goal is at position {goal}, the door is {door_flag} open, and the mission is {mission}. \
             What is the optimal action for the agent to take in this state to accomplish the mission?just say the optimal action number",
            w = self.config.room_width,
            h = self.config.room_height,
            agent = state.agent_pos,
            glyph = state.agent_dir.glyph(),
            dir = state.agent_dir.code(),
            door = state.door_pos,
            goal = state.goal_pos,
            mission = state.mission.describe(),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, StreamId};

    fn env3() -> UnlockPickup {
        UnlockPickup::new(GridConfig::new(3, 3, 7)).unwrap()
    }

    /// Hand-built 3x3 layout: key at (2, 2), door at (4, 2), goal at (6, 2).
    fn fixed_state() -> GridState {
        GridState {
            agent_pos: Pos::new(1, 2),
            agent_dir: Direction::Right,
            carrying_key: false,
            door_open: false,
            key_pos: Some(Pos::new(2, 2)),
            door_pos: Pos::new(4, 2),
            goal_pos: Pos::new(6, 2),
            mission: Mission::PickupKey,
            step_count: 0,
        }
    }

    #[test]
    fn grid_dimensions_follow_layout_rule() {
        let cfg = GridConfig::new(4, 4, 0);
        assert_eq!((cfg.width(), cfg.height()), (11, 6));
        assert_eq!(cfg.max_steps, 8 * 66);
        assert!(cfg.validate().is_ok());
        assert!(GridConfig::new(2, 3, 0).validate().is_err());
        let mut short = GridConfig::new(3, 3, 0);
        short.max_steps = 10;
        assert!(short.validate().is_err());
    }

    #[test]
    fn reset_is_deterministic_per_seed() {
        let env = env3();
        let a = env.reset(&mut stream(7, StreamId::Layout)).unwrap();
        let b = env.reset(&mut stream(7, StreamId::Layout)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.mission, Mission::PickupKey);
        assert!(!a.carrying_key);
        a.check_invariants(env.config()).unwrap();
    }

    #[test]
    fn pickup_facing_key_completes_first_mission() {
        let env = env3();
        let (next, out) = env.step(&fixed_state(), Action::Pickup).unwrap();
        assert_eq!(out.reward, 0.5);
        assert_eq!(out.mission_completed, Some(Mission::PickupKey));
        assert_eq!(next.mission, Mission::OpenDoor);
        assert!(next.carrying_key && next.key_pos.is_none());
    }

    #[test]
    fn misplaced_pickup_is_penalised() {
        let env = env3();
        let mut s = fixed_state();
        s.agent_dir = Direction::Up;
        let (next, out) = env.step(&s, Action::Pickup).unwrap();
        assert_eq!(out.reward, -0.02);
        assert_eq!(next.step_count, 1);
        assert_eq!(next.mission, Mission::PickupKey);
        let (_, out) = env.step(&s, Action::OpenDoor).unwrap();
        assert_eq!(out.reward, -0.02);
    }

    #[test]
    fn forward_into_wall_or_key_is_blocked() {
        let env = env3();
        let mut s = fixed_state();
        s.agent_dir = Direction::Left;
        let (next, out) = env.step(&s, Action::Forward).unwrap();
        assert_eq!(next.agent_pos, s.agent_pos);
        assert_eq!(out.reward, 0.0);
        let (next, _) = env.step(&fixed_state(), Action::Forward).unwrap();
        assert_eq!(next.agent_pos, Pos::new(1, 2));
    }

    #[test]
    fn turns_rotate_direction() {
        let env = env3();
        let (n, _) = env.step(&fixed_state(), Action::TurnLeft).unwrap();
        assert_eq!(n.agent_dir, Direction::Up);
        let (n, _) = env.step(&fixed_state(), Action::TurnRight).unwrap();
        assert_eq!(n.agent_dir, Direction::Down);
    }

    #[test]
    fn goal_reward_depends_on_elapsed_steps() {
        let env = env3();
        let max = env.config().max_steps;
        let mut s = fixed_state();
        s.key_pos = None;
        s.carrying_key = true;
        s.door_open = true;
        s.mission = Mission::ReachGoal;
        s.agent_pos = Pos::new(5, 2);
        s.step_count = max / 2 - 1;
        let (next, out) = env.step(&s, Action::Forward).unwrap();
        assert!(out.done && !out.truncated);
        assert!((out.reward - 0.7).abs() < 1e-12);
        assert!(env.step(&next, Action::Forward).is_err());
    }

    #[test]
    fn horizon_truncates() {
        let env = env3();
        let mut s = fixed_state();
        s.step_count = env.config().max_steps - 1;
        let (next, out) = env.step(&s, Action::TurnLeft).unwrap();
        assert!(out.done && out.truncated);
        assert!(matches!(
            env.step(&next, Action::TurnLeft),
            Err(Error::EpisodeOver(_))
        ));
    }

    #[test]
    fn open_door_requires_facing_it_with_key() {
        let env = env3();
        let mut s = fixed_state();
        s.key_pos = None;
        s.carrying_key = true;
        s.mission = Mission::OpenDoor;
        s.agent_pos = Pos::new(3, 2);
        let (next, out) = env.step(&s, Action::OpenDoor).unwrap();
        assert_eq!(out.reward, 0.5);
        assert!(next.door_open);
        assert_eq!(next.mission, Mission::ReachGoal);
        let (moved, _) = env.step(&next, Action::Forward).unwrap();
        assert_eq!(moved.agent_pos, Pos::new(4, 2));
        moved.check_invariants(env.config()).unwrap();
    }

    #[test]
    fn invalid_action_id_rejected() {
        assert!(matches!(Action::from_id(5), Err(Error::InvalidAction(5))));
        assert_eq!(Action::from_id(4).unwrap(), Action::OpenDoor);
    }

    #[test]
    fn encoding_differs_only_in_direction_block() {
        let env = env3();
        let a = fixed_state();
        let mut b = a.clone();
        b.agent_dir = Direction::Down;
        let ea = env.encode_observation(&a);
        let eb = env.encode_observation(&b);
        assert_eq!(ea, env.encode_observation(&a));
        let cells = env.config().cell_count();
        let dir_block = 7 * cells..7 * cells + 4;
        for i in 0..ea.len() {
            if !dir_block.contains(&i) {
                assert_eq!(ea[i], eb[i], "index {i}");
            }
        }
        assert_ne!(ea[dir_block.clone()], eb[dir_block]);
        assert_eq!(ea.len(), 7 * 45 + 8);
        assert!(ea.iter().all(|&v| v == 0.0 || v == 1.0));
    }

    #[test]
    fn prompt_reports_state() {
        let env = UnlockPickup::new(GridConfig::new(4, 4, 0)).unwrap();
        let s = GridState {
            agent_pos: Pos::new(4, 2),
            agent_dir: Direction::Left,
            carrying_key: false,
            door_open: false,
            key_pos: Some(Pos::new(2, 1)),
            door_pos: Pos::new(5, 3),
            goal_pos: Pos::new(7, 1),
            mission: Mission::PickupKey,
            step_count: 3,
        };
        let text = env.render_prompt(&s);
        assert!(text.contains("the agent is at position (4, 2)"));
        assert!(text.contains("direction number is 2"));
        assert!(text.contains("the agent direction is <"));
        assert!(text.contains("the forward object is empty cell"));
        assert!(text.contains("the key is not being carried"));
        assert!(text.contains("the door is False open"));
        assert!(text.contains("the mission is pick up key"));
        assert!(text.starts_with("The red agent is in a 4x4 grid environment"));
        assert_eq!(text, env.render_prompt(&s));
    }
}
