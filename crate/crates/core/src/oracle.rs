//! Optimal-action planner.
//!
//! Within one mission the carried-key and door flags are fixed, so planning
//! runs over `(position, direction)` with unit cost per action, turns
//! included. Distances come from a reverse breadth-first search seeded at the
//! poses where the mission's terminal action succeeds.

use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::gridworld::{Action, Cell, Direction, GridState, Mission, Pos, UnlockPickup};

/// Where the current mission ends and which action finishes it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PlanTarget {
    pub target_pos: Pos,
    pub terminal_action: Action,
}

pub fn plan_target(state: &GridState) -> PlanTarget {
    match state.mission {
        Mission::PickupKey => PlanTarget {
            target_pos: state.key_pos.unwrap_or(state.agent_pos),
            terminal_action: Action::Pickup,
        },
        Mission::OpenDoor => PlanTarget {
            target_pos: state.door_pos,
            terminal_action: Action::OpenDoor,
        },
        Mission::ReachGoal => PlanTarget {
            target_pos: state.goal_pos,
            terminal_action: Action::Forward,
        },
    }
}

/// Cost-to-go for every pose under the current mission.
#[derive(Debug, Clone)]
pub struct CostTable {
    width: usize,
    dist: Vec<Option<usize>>,
    target: PlanTarget,
}

impl CostTable {
    pub fn build(env: &UnlockPickup, state: &GridState) -> Self {
        let cfg = env.config();
        let width = cfg.width();
        let n = cfg.cell_count() * 4;
        let target = plan_target(state);
        let pose = |p: Pos, d: Direction| (p.row * width + p.col) * 4 + d.code() as usize;

        let standable =
            |p: Pos| matches!(env.cell(state, p), Cell::Empty | Cell::Door { open: true });

        let mut preds: Vec<Vec<usize>> = vec![Vec::new(); n];
        let mut dist = vec![None; n];
        let mut queue = VecDeque::new();
        for row in 1..cfg.height() - 1 {
            for col in 1..cfg.width() - 1 {
                let p = Pos::new(col, row);
                if !standable(p) {
                    continue;
                }
                for d in Direction::ALL {
                    let here = pose(p, d);
                    preds[pose(p, d.turn_left())].push(here);
                    preds[pose(p, d.turn_right())].push(here);
                    let front = p.step(d);
                    if standable(front) {
                        preds[pose(front, d)].push(here);
                    }
                    if front == target.target_pos {
                        dist[here] = Some(1);
                        queue.push_back(here);
                    }
                }
            }
        }
        while let Some(s) = queue.pop_front() {
            let next = dist[s].map(|d| d + 1);
            for &p in &preds[s] {
                if dist[p].is_none() {
                    dist[p] = next;
                    queue.push_back(p);
                }
            }
        }
        Self {
            width,
            dist,
            target,
        }
    }

    pub fn cost(&self, pos: Pos, dir: Direction) -> Option<usize> {
        self.dist[(pos.row * self.width + pos.col) * 4 + dir.code() as usize]
    }

    pub fn target(&self) -> PlanTarget {
        self.target
    }
}

/// Minimal number of actions that complete the current mission.
pub fn cost_to_go(env: &UnlockPickup, state: &GridState) -> Result<usize> {
    CostTable::build(env, state)
        .cost(state.agent_pos, state.agent_dir)
        .ok_or(Error::Unsolvable {
            mission: state.mission.index(),
        })
}

/// First action of a minimum-cost completion of the current mission; ties
/// go to the lowest action id.
pub fn optimal_action(env: &UnlockPickup, state: &GridState) -> Result<Action> {
    let table = CostTable::build(env, state);
    let unsolvable = || Error::Unsolvable {
        mission: state.mission.index(),
    };
    let here = table
        .cost(state.agent_pos, state.agent_dir)
        .ok_or_else(unsolvable)?;
    if here == 1 {
        return Ok(table.target().terminal_action);
    }
    let moves = [
        (Action::TurnLeft, state.agent_pos, state.agent_dir.turn_left()),
        (Action::TurnRight, state.agent_pos, state.agent_dir.turn_right()),
        (Action::Forward, state.front_pos(), state.agent_dir),
    ];
    moves
        .into_iter()
        .find(|&(_, p, d)| table.cost(p, d) == Some(here - 1))
        .map(|(a, _, _)| a)
        .ok_or_else(unsolvable)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gridworld::GridConfig;

    fn env() -> UnlockPickup {
        UnlockPickup::new(GridConfig::new(3, 3, 0)).unwrap()
    }

    fn state() -> GridState {
        GridState {
            agent_pos: Pos::new(1, 2),
            agent_dir: Direction::Right,
            carrying_key: false,
            door_open: false,
            key_pos: Some(Pos::new(2, 2)),
            door_pos: Pos::new(4, 1),
            goal_pos: Pos::new(7, 3),
            mission: Mission::PickupKey,
            step_count: 0,
        }
    }

    #[test]
    fn facing_key_picks_up() {
        assert_eq!(optimal_action(&env(), &state()).unwrap(), Action::Pickup);
        assert_eq!(cost_to_go(&env(), &state()).unwrap(), 1);
    }

    #[test]
    fn one_cell_behind_costs_two() {
        let mut s = state();
        s.key_pos = Some(Pos::new(3, 2));
        assert_eq!(cost_to_go(&env(), &s).unwrap(), 2);
        assert_eq!(optimal_action(&env(), &s).unwrap(), Action::Forward);
    }

    #[test]
    fn facing_door_with_key_opens() {
        let mut s = state();
        s.key_pos = None;
        s.carrying_key = true;
        s.mission = Mission::OpenDoor;
        s.agent_pos = Pos::new(3, 1);
        assert_eq!(optimal_action(&env(), &s).unwrap(), Action::OpenDoor);
    }

    #[test]
    fn turn_ties_prefer_left() {
        let mut s = state();
        s.agent_dir = Direction::Left;
        // key is directly behind: two turns either way, left wins
        assert_eq!(cost_to_go(&env(), &s).unwrap(), 3);
        assert_eq!(optimal_action(&env(), &s).unwrap(), Action::TurnLeft);
    }

    #[test]
    fn goal_mission_ends_with_forward() {
        let mut s = state();
        s.key_pos = None;
        s.carrying_key = true;
        s.door_open = true;
        s.mission = Mission::ReachGoal;
        s.agent_pos = Pos::new(7, 2);
        s.agent_dir = Direction::Down;
        assert_eq!(optimal_action(&env(), &s).unwrap(), Action::Forward);
        assert_eq!(cost_to_go(&env(), &s).unwrap(), 1);
    }

    #[test]
    fn unreachable_goal_is_reported() {
        let mut s = state();
        s.key_pos = None;
        s.carrying_key = true;
        s.mission = Mission::ReachGoal;
        // door_open = false violates the mission invariant; the goal is walled off
        assert!(matches!(
            optimal_action(&env(), &s),
            Err(Error::Unsolvable { mission: 3 })
        ));
    }
}
