//! Multi-Robot Warehouse: oriented robots deliver requested shelves to goal
//! cells on a fixed "tiny" 10×11 layout for a sparse +1 reward.
//!
//! Layout (declared stand-in): shelf racks occupy the cell block
//! {1,2,4,5,7,8} × {1,2,4,5,7,8} with corridor rows/columns between, and two
//! goal cells sit at the bottom centre. Robots can pass under shelves when
//! unloaded; a loaded robot is blocked by occupied shelf cells. Delivering a
//! requested shelf replaces that request with a new shelf that is neither
//! requested nor currently carried.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{sample_distinct_cells, Env, JointStep, PosgSpec};
use crate::error::{Error, Result};

/// RWARE action space.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RwareAction {
    Noop = 0,
    Forward = 1,
    TurnLeft = 2,
    TurnRight = 3,
    ToggleLoad = 4,
}

pub const RWARE_ARITY: usize = 5;

pub const RWARE_WIDTH: usize = 10;
pub const RWARE_HEIGHT: usize = 11;

const SHELF_COLS: [usize; 6] = [1, 2, 4, 5, 7, 8];
const SHELF_ROWS: [usize; 6] = [1, 2, 4, 5, 7, 8];
const GOALS: [(usize, usize); 2] = [(4, 10), (5, 10)];
const N_SHELVES: usize = 36;

#[derive(Debug, Clone, PartialEq)]
pub struct RwareConfig {
    pub n_agents: usize,
    /// Outstanding request count R.
    pub queue_len: usize,
    /// Egocentric window radius; the observation covers (2s+1)² cells.
    pub sight: usize,
    pub max_steps: usize,
}

impl RwareConfig {
    pub fn spec(&self) -> Result<PosgSpec> {
        self.validate()?;
        let window = 2 * self.sight + 1;
        let obs_len = 4 * window * window + 4 + 1;
        Ok(PosgSpec {
            n_agents: self.n_agents,
            action_arities: vec![RWARE_ARITY; self.n_agents],
            obs_lens: vec![obs_len; self.n_agents],
            max_steps: self.max_steps,
            gamma: 0.99,
        })
    }

    fn validate(&self) -> Result<()> {
        if self.n_agents < 2 {
            return Err(Error::Config("RWARE needs at least 2 agents".into()));
        }
        if self.queue_len == 0 || self.queue_len > N_SHELVES {
            return Err(Error::Config(format!(
                "request queue length must be in 1..={N_SHELVES}"
            )));
        }
        if self.max_steps == 0 || self.sight == 0 {
            return Err(Error::Config("RWARE needs steps and sight > 0".into()));
        }
        if self.n_agents > RWARE_WIDTH * RWARE_HEIGHT {
            return Err(Error::Config("too many agents for the tiny grid".into()));
        }
        Ok(())
    }
}

fn is_shelf_home(x: usize, y: usize) -> bool {
    SHELF_COLS.contains(&x) && SHELF_ROWS.contains(&y)
}

fn shelf_home_cells() -> Vec<(usize, usize)> {
    let mut cells = Vec::with_capacity(N_SHELVES);
    for &y in SHELF_ROWS.iter() {
        for &x in SHELF_COLS.iter() {
            cells.push((x, y));
        }
    }
    cells
}

/// Facing direction; turning right cycles N → E → S → W.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Dir {
    North = 0,
    East = 1,
    South = 2,
    West = 3,
}

impl Dir {
    fn from_index(i: usize) -> Dir {
        match i % 4 {
            0 => Dir::North,
            1 => Dir::East,
            2 => Dir::South,
            _ => Dir::West,
        }
    }

    fn delta(self) -> (i64, i64) {
        match self {
            Dir::North => (0, -1),
            Dir::East => (1, 0),
            Dir::South => (0, 1),
            Dir::West => (-1, 0),
        }
    }

    fn left(self) -> Dir {
        Dir::from_index((self as usize + 3) % 4)
    }

    fn right(self) -> Dir {
        Dir::from_index((self as usize + 1) % 4)
    }
}

#[derive(Debug, Clone)]
struct Robot {
    x: usize,
    y: usize,
    dir: Dir,
    carrying: Option<usize>,
}

pub struct RwareEnv {
    cfg: RwareConfig,
    spec: PosgSpec,
    rng: ChaCha8Rng,
    robots: Vec<Robot>,
    /// Shelf id on each grid cell, if any.
    shelf_at: Vec<Option<usize>>,
    requests: Vec<usize>,
    step: usize,
    done: bool,
}

impl RwareEnv {
    pub fn new(cfg: RwareConfig) -> Result<Self> {
        let spec = cfg.spec()?;
        Ok(RwareEnv {
            cfg,
            spec,
            rng: ChaCha8Rng::seed_from_u64(0),
            robots: Vec::new(),
            shelf_at: vec![None; RWARE_WIDTH * RWARE_HEIGHT],
            requests: Vec::new(),
            step: 0,
            done: false,
        })
    }

    fn cell(x: usize, y: usize) -> usize {
        y * RWARE_WIDTH + x
    }

    fn robot_at(&self, x: usize, y: usize) -> bool {
        self.robots.iter().any(|r| r.x == x && r.y == y)
    }

    /// Draw a replacement request: a shelf that is neither requested nor in
    /// someone's hands, so goal-camping cannot re-deliver the same shelf.
    fn draw_request(&mut self) -> usize {
        let carried: Vec<usize> = self.robots.iter().filter_map(|r| r.carrying).collect();
        let candidates: Vec<usize> = (0..N_SHELVES)
            .filter(|id| !self.requests.contains(id) && !carried.contains(id))
            .collect();
        candidates[self.rng.random_range(0..candidates.len())]
    }

    fn observe(&self, agent: usize) -> Vec<f64> {
        let me = &self.robots[agent];
        let s = self.cfg.sight as i64;
        let mut obs = Vec::with_capacity(self.spec.obs_lens[agent]);
        for dy in -s..=s {
            for dx in -s..=s {
                let x = me.x as i64 + dx;
                let y = me.y as i64 + dy;
                let oob =
                    x < 0 || y < 0 || x >= RWARE_WIDTH as i64 || y >= RWARE_HEIGHT as i64;
                if oob {
                    obs.extend_from_slice(&[1.0, 0.0, 0.0, 0.0]);
                    continue;
                }
                let (x, y) = (x as usize, y as usize);
                let shelf = self.shelf_at[Self::cell(x, y)];
                let requested = shelf.is_some_and(|id| self.requests.contains(&id));
                obs.push(0.0);
                obs.push(if shelf.is_some() { 1.0 } else { 0.0 });
                obs.push(if requested { 1.0 } else { 0.0 });
                obs.push(if self.robot_at(x, y) { 1.0 } else { 0.0 });
            }
        }
        let mut orient = [0.0; 4];
        orient[me.dir as usize] = 1.0;
        obs.extend_from_slice(&orient);
        obs.push(if me.carrying.is_some() { 1.0 } else { 0.0 });
        obs
    }

    fn joint_step(&self, rewards: Vec<f64>) -> JointStep {
        JointStep {
            observations: (0..self.cfg.n_agents).map(|i| self.observe(i)).collect(),
            rewards,
            done: self.done,
            step_index: self.step,
        }
    }

    #[cfg(test)]
    fn shelf_count(&self) -> usize {
        self.shelf_at.iter().flatten().count()
            + self.robots.iter().filter(|r| r.carrying.is_some()).count()
    }
}

impl Env for RwareEnv {
    fn spec(&self) -> &PosgSpec {
        &self.spec
    }

    fn reset(&mut self, seed: u64) -> JointStep {
        self.rng = ChaCha8Rng::seed_from_u64(seed);
        self.shelf_at = vec![None; RWARE_WIDTH * RWARE_HEIGHT];
        for (id, (x, y)) in shelf_home_cells().into_iter().enumerate() {
            self.shelf_at[Self::cell(x, y)] = Some(id);
        }
        let cells =
            sample_distinct_cells(RWARE_WIDTH, RWARE_HEIGHT, self.cfg.n_agents, &mut self.rng);
        self.robots = cells
            .into_iter()
            .map(|(x, y)| Robot {
                x,
                y,
                dir: Dir::from_index(self.rng.random_range(0..4)),
                carrying: None,
            })
            .collect();
        let mut ids: Vec<usize> = (0..N_SHELVES).collect();
        ids.shuffle(&mut self.rng);
        self.requests = ids[..self.cfg.queue_len].to_vec();
        self.step = 0;
        self.done = false;
        self.joint_step(vec![0.0; self.cfg.n_agents])
    }

    fn step(&mut self, actions: &[usize]) -> Result<JointStep> {
        for (agent, &action) in actions.iter().enumerate() {
            if action >= RWARE_ARITY {
                return Err(Error::InvalidAction { agent, action, arity: RWARE_ARITY });
            }
        }
        let mut rewards = vec![0.0; self.cfg.n_agents];

        let mut order: Vec<usize> = (0..self.cfg.n_agents).collect();
        order.shuffle(&mut self.rng);
        for &i in &order {
            match actions[i] {
                1 => {
                    let (dx, dy) = self.robots[i].dir.delta();
                    let nx = self.robots[i].x as i64 + dx;
                    let ny = self.robots[i].y as i64 + dy;
                    if nx < 0
                        || ny < 0
                        || nx >= RWARE_WIDTH as i64
                        || ny >= RWARE_HEIGHT as i64
                    {
                        continue;
                    }
                    let (nx, ny) = (nx as usize, ny as usize);
                    if self.robot_at(nx, ny) {
                        continue;
                    }
                    // A loaded robot cannot pass under stored shelves.
                    if self.robots[i].carrying.is_some()
                        && self.shelf_at[Self::cell(nx, ny)].is_some()
                    {
                        continue;
                    }
                    self.robots[i].x = nx;
                    self.robots[i].y = ny;
                }
                2 => self.robots[i].dir = self.robots[i].dir.left(),
                3 => self.robots[i].dir = self.robots[i].dir.right(),
                4 => {
                    let (x, y) = (self.robots[i].x, self.robots[i].y);
                    let cell = Self::cell(x, y);
                    match self.robots[i].carrying {
                        None => {
                            if let Some(id) = self.shelf_at[cell] {
                                self.shelf_at[cell] = None;
                                self.robots[i].carrying = Some(id);
                            }
                        }
                        Some(id) => {
                            if is_shelf_home(x, y) && self.shelf_at[cell].is_none() {
                                self.shelf_at[cell] = Some(id);
                                self.robots[i].carrying = None;
                            }
                        }
                    }
                }
                _ => {}
            }
        }

        // Deliveries: a robot on a goal cell holding a requested shelf.
        for i in 0..self.cfg.n_agents {
            let robot = &self.robots[i];
            if let Some(id) = robot.carrying {
                if GOALS.contains(&(robot.x, robot.y)) {
                    if let Some(slot) = self.requests.iter().position(|&r| r == id) {
                        rewards[i] += 1.0;
                        let replacement = self.draw_request();
                        self.requests[slot] = replacement;
                    }
                }
            }
        }

        self.step += 1;
        self.done = self.step >= self.cfg.max_steps;
        Ok(self.joint_step(rewards))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> RwareConfig {
        RwareConfig { n_agents: 2, queue_len: 2, sight: 1, max_steps: 500 }
    }

    #[test]
    fn reset_is_deterministic_with_distinct_requests() {
        let mut a = RwareEnv::new(cfg()).unwrap();
        let mut b = RwareEnv::new(cfg()).unwrap();
        assert_eq!(a.reset(5), b.reset(5));
        let mut reqs = a.requests.clone();
        assert_eq!(reqs.len(), 2);
        reqs.dedup();
        assert_eq!(reqs.len(), 2, "requests must be distinct shelves");
        assert_eq!(a.shelf_count(), N_SHELVES);
    }

    #[test]
    fn forward_into_wall_is_noop() {
        let mut env = RwareEnv::new(cfg()).unwrap();
        env.reset(9);
        env.robots[0] = Robot { x: 0, y: 0, dir: Dir::North, carrying: None };
        env.robots[1] = Robot { x: 5, y: 6, dir: Dir::South, carrying: None };
        let step = env.step(&[1, 0]).unwrap();
        assert_eq!((env.robots[0].x, env.robots[0].y), (0, 0));
        assert_eq!(step.rewards, vec![0.0, 0.0]);
    }

    #[test]
    fn toggle_on_empty_corridor_is_noop() {
        let mut env = RwareEnv::new(cfg()).unwrap();
        env.reset(9);
        env.robots[0] = Robot { x: 0, y: 3, dir: Dir::North, carrying: None };
        env.robots[1] = Robot { x: 9, y: 3, dir: Dir::North, carrying: None };
        env.step(&[4, 0]).unwrap();
        assert!(env.robots[0].carrying.is_none());
        assert_eq!(env.shelf_count(), N_SHELVES);
    }

    #[test]
    fn pickup_carry_deliver_rewards_once_and_replaces_request() {
        let mut env = RwareEnv::new(cfg()).unwrap();
        env.reset(9);
        let shelf_id = env.shelf_at[RwareEnv::cell(4, 8)].unwrap();
        env.requests = vec![shelf_id, env.shelf_at[RwareEnv::cell(1, 1)].unwrap()];
        env.robots[0] = Robot { x: 4, y: 8, dir: Dir::South, carrying: None };
        env.robots[1] = Robot { x: 9, y: 0, dir: Dir::North, carrying: None };

        // Pick the shelf up, then walk two cells south onto the goal.
        env.step(&[4, 0]).unwrap();
        assert_eq!(env.robots[0].carrying, Some(shelf_id));
        env.step(&[1, 0]).unwrap();
        let step = env.step(&[1, 0]).unwrap();
        assert_eq!((env.robots[0].x, env.robots[0].y), (4, 10));
        assert_eq!(step.rewards[0], 1.0);
        assert!(!env.requests.contains(&shelf_id), "request not replaced");
        assert_eq!(env.requests.len(), 2);

        // Staying on the goal must not re-reward the same shelf.
        let step = env.step(&[0, 0]).unwrap();
        assert_eq!(step.rewards[0], 0.0);
        assert_eq!(env.shelf_count(), N_SHELVES);
    }

    #[test]
    fn loaded_robot_blocked_by_stored_shelves() {
        let mut env = RwareEnv::new(cfg()).unwrap();
        env.reset(9);
        env.robots[0] = Robot { x: 1, y: 2, dir: Dir::North, carrying: Some(35) };
        env.shelf_at[RwareEnv::cell(1, 1)] = Some(0);
        env.robots[1] = Robot { x: 9, y: 9, dir: Dir::North, carrying: None };
        env.step(&[1, 0]).unwrap();
        assert_eq!((env.robots[0].x, env.robots[0].y), (1, 2));
    }

    #[test]
    fn turns_cycle_directions() {
        let mut env = RwareEnv::new(cfg()).unwrap();
        env.reset(2);
        env.robots[0].dir = Dir::North;
        env.step(&[3, 0]).unwrap();
        assert_eq!(env.robots[0].dir, Dir::East);
        env.step(&[2, 0]).unwrap();
        assert_eq!(env.robots[0].dir, Dir::North);
        env.step(&[2, 0]).unwrap();
        assert_eq!(env.robots[0].dir, Dir::West);
    }

    #[test]
    fn noop_preserves_everything_but_step() {
        let mut env = RwareEnv::new(cfg()).unwrap();
        env.reset(33);
        let robots: Vec<(usize, usize, Dir, Option<usize>)> = env
            .robots
            .iter()
            .map(|r| (r.x, r.y, r.dir, r.carrying))
            .collect();
        let shelf_at = env.shelf_at.clone();
        let requests = env.requests.clone();
        let step = env.step(&[0, 0]).unwrap();
        assert_eq!(
            robots,
            env.robots
                .iter()
                .map(|r| (r.x, r.y, r.dir, r.carrying))
                .collect::<Vec<_>>()
        );
        assert_eq!(shelf_at, env.shelf_at);
        assert_eq!(requests, env.requests);
        assert_eq!(step.step_index, 1);
    }

    #[test]
    fn invariants_hold_under_random_play() {
        let mut env = RwareEnv::new(cfg()).unwrap();
        env.reset(44);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..300 {
            let a = [rng.random_range(0..RWARE_ARITY), rng.random_range(0..RWARE_ARITY)];
            env.step(&a).unwrap();
            assert_eq!(env.shelf_count(), N_SHELVES, "shelves not conserved");
            assert_eq!(env.requests.len(), 2, "request queue size drifted");
            let mut reqs = env.requests.clone();
            reqs.sort_unstable();
            reqs.dedup();
            assert_eq!(reqs.len(), 2, "duplicate requests");
        }
    }

    #[test]
    fn observation_layout_and_length() {
        let mut env = RwareEnv::new(cfg()).unwrap();
        let first = env.reset(3);
        let len = env.spec().obs_lens[0];
        assert_eq!(len, 4 * 9 + 5);
        assert_eq!(first.observations[0].len(), len);

        // Corner robot sees walls in out-of-bounds window cells.
        env.robots[0] = Robot { x: 0, y: 0, dir: Dir::North, carrying: None };
        let obs = env.observe(0);
        // Window rows at dy=-1 are all out of bounds.
        assert_eq!(&obs[0..4], &[1.0, 0.0, 0.0, 0.0]);
        // Centre cell holds the observing robot.
        let centre = 4 * 4;
        assert_eq!(obs[centre + 3], 1.0);
        // Orientation one-hot (north) and empty hands.
        assert_eq!(&obs[36..41], &[1.0, 0.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn done_only_at_horizon() {
        let mut env = RwareEnv::new(RwareConfig { max_steps: 3, ..cfg() }).unwrap();
        env.reset(1);
        assert!(!env.step(&[0, 0]).unwrap().done);
        assert!(!env.step(&[0, 0]).unwrap().done);
        assert!(env.step(&[0, 0]).unwrap().done);
    }

    #[test]
    fn config_validation() {
        assert!(RwareEnv::new(RwareConfig { queue_len: 0, ..cfg() }).is_err());
        assert!(RwareEnv::new(RwareConfig { queue_len: 37, ..cfg() }).is_err());
        assert!(RwareEnv::new(RwareConfig { n_agents: 1, ..cfg() }).is_err());
    }
}
