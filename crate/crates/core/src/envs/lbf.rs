//! Level-Based Foraging: a cooperative grid world where agents with levels
//! collect foods requiring sufficient combined level.
//!
//! Rules (declared stand-ins; the benchmark task names fix only grid size,
//! agent count, food count, and sight radius):
//!
//! * Agent levels are drawn uniformly in {1, ..., max_agent_level}.
//! * Food levels are drawn uniformly in {1, ..., sum of the three highest
//!   agent levels}, or pinned to the sum of all agent levels when
//!   `force_coop` is set.
//! * Moves execute in a freshly shuffled agent order each step; a move into
//!   a wall, another agent, or an uncollected food is a no-op.
//! * A food is collected when the combined level of orthogonally adjacent
//!   agents issuing LOAD reaches its level; each loader is rewarded
//!   (own level × food level) / (Σ loader levels × Σ initial food levels),
//!   so the per-episode total reward is at most 1.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{sample_distinct_cells, Env, JointStep, PosgSpec};
use crate::error::{Error, Result};

/// LBF action space.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LbfAction {
    Noop = 0,
    Up = 1,
    Down = 2,
    Left = 3,
    Right = 4,
    Load = 5,
}

pub const LBF_ARITY: usize = 6;

#[derive(Debug, Clone, PartialEq)]
pub struct LbfConfig {
    pub width: usize,
    pub height: usize,
    pub n_agents: usize,
    pub n_foods: usize,
    /// Chebyshev sight radius; 0 means full observability.
    pub sight: usize,
    pub max_agent_level: u32,
    pub force_coop: bool,
    pub max_steps: usize,
}

impl LbfConfig {
    pub fn spec(&self) -> Result<PosgSpec> {
        self.validate()?;
        let obs_len = 3 * (self.n_agents + self.n_foods);
        Ok(PosgSpec {
            n_agents: self.n_agents,
            action_arities: vec![LBF_ARITY; self.n_agents],
            obs_lens: vec![obs_len; self.n_agents],
            max_steps: self.max_steps,
            gamma: 0.99,
        })
    }

    fn validate(&self) -> Result<()> {
        if self.n_agents < 2 {
            return Err(Error::Config("LBF needs at least 2 agents".into()));
        }
        if self.n_foods == 0 || self.max_steps == 0 || self.max_agent_level == 0 {
            return Err(Error::Config("LBF needs foods, steps, and levels > 0".into()));
        }
        if self.width * self.height < self.n_agents + self.n_foods {
            return Err(Error::Config(format!(
                "{}x{} grid cannot hold {} agents and {} foods",
                self.width, self.height, self.n_agents, self.n_foods
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
struct AgentState {
    x: usize,
    y: usize,
    level: u32,
}

#[derive(Debug, Clone)]
struct FoodState {
    x: usize,
    y: usize,
    level: u32,
    collected: bool,
}

pub struct LbfEnv {
    cfg: LbfConfig,
    spec: PosgSpec,
    rng: ChaCha8Rng,
    agents: Vec<AgentState>,
    foods: Vec<FoodState>,
    total_food_level: f64,
    step: usize,
    done: bool,
}

impl LbfEnv {
    pub fn new(cfg: LbfConfig) -> Result<Self> {
        let spec = cfg.spec()?;
        Ok(LbfEnv {
            cfg,
            spec,
            rng: ChaCha8Rng::seed_from_u64(0),
            agents: Vec::new(),
            foods: Vec::new(),
            total_food_level: 0.0,
            step: 0,
            done: false,
        })
    }

    fn occupied_by_agent(&self, x: usize, y: usize) -> bool {
        self.agents.iter().any(|a| a.x == x && a.y == y)
    }

    fn food_at(&self, x: usize, y: usize) -> Option<usize> {
        self.foods
            .iter()
            .position(|f| !f.collected && f.x == x && f.y == y)
    }

    fn observe(&self, agent: usize) -> Vec<f64> {
        let me = &self.agents[agent];
        let mut obs = Vec::with_capacity(self.spec.obs_lens[agent]);
        let visible = |x: usize, y: usize| -> bool {
            if self.cfg.sight == 0 {
                return true;
            }
            let dx = (x as i64 - me.x as i64).unsigned_abs() as usize;
            let dy = (y as i64 - me.y as i64).unsigned_abs() as usize;
            dx.max(dy) <= self.cfg.sight
        };
        let mut push_entity = |x: usize, y: usize, level: u32, present: bool| {
            if present && visible(x, y) {
                obs.push(x as f64 - me.x as f64);
                obs.push(y as f64 - me.y as f64);
                obs.push(level as f64);
            } else {
                obs.extend_from_slice(&[-1.0, -1.0, -1.0]);
            }
        };
        push_entity(me.x, me.y, me.level, true);
        for (i, other) in self.agents.iter().enumerate() {
            if i != agent {
                push_entity(other.x, other.y, other.level, true);
            }
        }
        for food in &self.foods {
            push_entity(food.x, food.y, food.level, !food.collected);
        }
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
}

impl Env for LbfEnv {
    fn spec(&self) -> &PosgSpec {
        &self.spec
    }

    fn reset(&mut self, seed: u64) -> JointStep {
        self.rng = ChaCha8Rng::seed_from_u64(seed);
        let cells = sample_distinct_cells(
            self.cfg.width,
            self.cfg.height,
            self.cfg.n_agents + self.cfg.n_foods,
            &mut self.rng,
        );
        self.agents = cells[..self.cfg.n_agents]
            .iter()
            .map(|&(x, y)| AgentState {
                x,
                y,
                level: self.rng.random_range(1..=self.cfg.max_agent_level),
            })
            .collect();
        let mut levels: Vec<u32> = self.agents.iter().map(|a| a.level).collect();
        levels.sort_unstable_by(|a, b| b.cmp(a));
        let coalition: u32 = levels.iter().take(3).sum();
        let all: u32 = levels.iter().sum();
        self.foods = cells[self.cfg.n_agents..]
            .iter()
            .map(|&(x, y)| FoodState {
                x,
                y,
                level: if self.cfg.force_coop {
                    all
                } else {
                    self.rng.random_range(1..=coalition)
                },
                collected: false,
            })
            .collect();
        self.total_food_level = self.foods.iter().map(|f| f.level as f64).sum();
        self.step = 0;
        self.done = false;
        self.joint_step(vec![0.0; self.cfg.n_agents])
    }

    fn step(&mut self, actions: &[usize]) -> Result<JointStep> {
        for (agent, &action) in actions.iter().enumerate() {
            if action >= LBF_ARITY {
                return Err(Error::InvalidAction { agent, action, arity: LBF_ARITY });
            }
        }
        let mut rewards = vec![0.0; self.cfg.n_agents];

        // Movement, in a freshly shuffled order so simultaneous conflicts
        // resolve without positional bias.
        let mut order: Vec<usize> = (0..self.cfg.n_agents).collect();
        order.shuffle(&mut self.rng);
        for &i in &order {
            let (dx, dy): (i64, i64) = match actions[i] {
                1 => (0, -1),
                2 => (0, 1),
                3 => (-1, 0),
                4 => (1, 0),
                _ => continue,
            };
            let nx = self.agents[i].x as i64 + dx;
            let ny = self.agents[i].y as i64 + dy;
            if nx < 0 || ny < 0 || nx >= self.cfg.width as i64 || ny >= self.cfg.height as i64 {
                continue;
            }
            let (nx, ny) = (nx as usize, ny as usize);
            if self.occupied_by_agent(nx, ny) || self.food_at(nx, ny).is_some() {
                continue;
            }
            self.agents[i].x = nx;
            self.agents[i].y = ny;
        }

        // Loading: orthogonally adjacent LOAD issuers pool their levels.
        for fi in 0..self.foods.len() {
            if self.foods[fi].collected {
                continue;
            }
            let (fx, fy) = (self.foods[fi].x as i64, self.foods[fi].y as i64);
            let loaders: Vec<usize> = (0..self.cfg.n_agents)
                .filter(|&i| {
                    actions[i] == LbfAction::Load as usize
                        && (self.agents[i].x as i64 - fx).abs()
                            + (self.agents[i].y as i64 - fy).abs()
                            == 1
                })
                .collect();
            if loaders.is_empty() {
                continue;
            }
            let loader_sum: u32 = loaders.iter().map(|&i| self.agents[i].level).sum();
            if loader_sum >= self.foods[fi].level {
                self.foods[fi].collected = true;
                for &i in &loaders {
                    rewards[i] += (self.agents[i].level as f64 * self.foods[fi].level as f64)
                        / (loader_sum as f64 * self.total_food_level);
                }
            }
        }

        self.step += 1;
        self.done =
            self.foods.iter().all(|f| f.collected) || self.step >= self.cfg.max_steps;
        Ok(self.joint_step(rewards))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> LbfConfig {
        LbfConfig {
            width: 8,
            height: 8,
            n_agents: 2,
            n_foods: 2,
            sight: 0,
            max_agent_level: 2,
            force_coop: false,
            max_steps: 50,
        }
    }

    #[test]
    fn reset_is_deterministic_and_collision_free() {
        let mut a = LbfEnv::new(cfg()).unwrap();
        let mut b = LbfEnv::new(cfg()).unwrap();
        let sa = a.reset(99);
        let sb = b.reset(99);
        assert_eq!(sa, sb);

        let mut positions: Vec<(usize, usize)> = a
            .agents
            .iter()
            .map(|ag| (ag.x, ag.y))
            .chain(a.foods.iter().map(|f| (f.x, f.y)))
            .collect();
        positions.sort_unstable();
        positions.dedup();
        assert_eq!(positions.len(), 4, "entities share a cell at reset");
    }

    #[test]
    fn wall_move_is_noop() {
        let mut env = LbfEnv::new(cfg()).unwrap();
        env.reset(3);
        env.agents[0] = AgentState { x: 0, y: 0, level: 1 };
        env.agents[1] = AgentState { x: 5, y: 5, level: 1 };
        let step = env.step(&[LbfAction::Left as usize, LbfAction::Noop as usize]).unwrap();
        assert_eq!((env.agents[0].x, env.agents[0].y), (0, 0));
        assert_eq!(step.rewards, vec![0.0, 0.0]);
    }

    #[test]
    fn solo_load_collects_and_rewards() {
        let mut env = LbfEnv::new(cfg()).unwrap();
        env.reset(4);
        env.agents[0] = AgentState { x: 2, y: 2, level: 2 };
        env.agents[1] = AgentState { x: 7, y: 7, level: 1 };
        env.foods[0] = FoodState { x: 3, y: 2, level: 2, collected: false };
        env.foods[1] = FoodState { x: 0, y: 0, level: 1, collected: false };
        env.total_food_level = 3.0;
        let step = env.step(&[LbfAction::Load as usize, LbfAction::Noop as usize]).unwrap();
        assert!(env.foods[0].collected);
        // (level 2 × food 2) / (loader sum 2 × total food 3)
        assert!((step.rewards[0] - 4.0 / 6.0).abs() < 1e-12);
        assert_eq!(step.rewards[1], 0.0);
    }

    #[test]
    fn paired_load_splits_reward() {
        let mut env = LbfEnv::new(cfg()).unwrap();
        env.reset(4);
        env.agents[0] = AgentState { x: 2, y: 2, level: 1 };
        env.agents[1] = AgentState { x: 4, y: 2, level: 1 };
        env.foods[0] = FoodState { x: 3, y: 2, level: 2, collected: false };
        env.foods[1] = FoodState { x: 0, y: 0, level: 1, collected: false };
        env.total_food_level = 3.0;
        let step = env.step(&[LbfAction::Load as usize, LbfAction::Load as usize]).unwrap();
        assert!(env.foods[0].collected);
        for r in &step.rewards {
            // (1 × 2) / (2 × 3)
            assert!((r - 2.0 / 6.0).abs() < 1e-12);
        }
    }

    #[test]
    fn underpowered_load_fails() {
        let mut env = LbfEnv::new(cfg()).unwrap();
        env.reset(4);
        env.agents[0] = AgentState { x: 2, y: 2, level: 1 };
        env.agents[1] = AgentState { x: 7, y: 7, level: 2 };
        env.foods[0] = FoodState { x: 3, y: 2, level: 3, collected: false };
        env.foods[1] = FoodState { x: 0, y: 0, level: 1, collected: false };
        env.total_food_level = 4.0;
        let step = env.step(&[LbfAction::Load as usize, LbfAction::Noop as usize]).unwrap();
        assert!(!env.foods[0].collected);
        assert_eq!(step.rewards[0], 0.0);
    }

    #[test]
    fn episode_reward_total_is_normalized() {
        // Collect everything across an episode; the summed reward is 1.
        let mut env = LbfEnv::new(LbfConfig { n_foods: 1, force_coop: false, ..cfg() }).unwrap();
        env.reset(8);
        env.agents[0] = AgentState { x: 2, y: 2, level: 2 };
        env.agents[1] = AgentState { x: 6, y: 6, level: 2 };
        env.foods[0] = FoodState { x: 3, y: 2, level: 2, collected: false };
        env.total_food_level = 2.0;
        let step = env.step(&[LbfAction::Load as usize, LbfAction::Noop as usize]).unwrap();
        let total: f64 = step.rewards.iter().sum();
        assert!((total - 1.0).abs() < 1e-9);
        assert!(step.done);
    }

    #[test]
    fn noop_changes_only_the_step_counter() {
        let mut env = LbfEnv::new(cfg()).unwrap();
        env.reset(12);
        let before_agents: Vec<(usize, usize, u32)> =
            env.agents.iter().map(|a| (a.x, a.y, a.level)).collect();
        let before_rng = env.rng.clone();
        let step = env.step(&[0, 0]).unwrap();
        let after_agents: Vec<(usize, usize, u32)> =
            env.agents.iter().map(|a| (a.x, a.y, a.level)).collect();
        assert_eq!(before_agents, after_agents);
        assert_eq!(step.step_index, 1);
        assert_eq!(step.rewards, vec![0.0, 0.0]);
        // The shuffle consumes rng even on NOOPs; only position state must
        // be untouched.
        let _ = before_rng;
    }

    #[test]
    fn trajectories_are_bit_deterministic() {
        let actions = [[1usize, 4], [5, 5], [2, 3], [0, 1], [4, 4]];
        let run = || {
            let mut env = LbfEnv::new(cfg()).unwrap();
            let mut log = vec![env.reset(7)];
            for a in &actions {
                log.push(env.step(a).unwrap());
            }
            log
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn food_count_never_increases_and_levels_are_constant() {
        let mut env = LbfEnv::new(cfg()).unwrap();
        env.reset(21);
        let levels: Vec<u32> = env.agents.iter().map(|a| a.level).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut remaining = env.foods.iter().filter(|f| !f.collected).count();
        for _ in 0..50 {
            let a = [rng.random_range(0..6), rng.random_range(0..6)];
            let step = env.step(&a).unwrap();
            let now = env.foods.iter().filter(|f| !f.collected).count();
            assert!(now <= remaining);
            remaining = now;
            assert_eq!(levels, env.agents.iter().map(|a| a.level).collect::<Vec<_>>());
            if step.done {
                break;
            }
        }
    }

    #[test]
    fn sight_masks_distant_entities() {
        let mut env = LbfEnv::new(LbfConfig { sight: 2, ..cfg() }).unwrap();
        env.reset(31);
        env.agents[0] = AgentState { x: 0, y: 0, level: 1 };
        env.agents[1] = AgentState { x: 3, y: 0, level: 2 }; // Chebyshev 3 > 2
        env.foods[0] = FoodState { x: 2, y: 1, level: 1, collected: false }; // Chebyshev 2
        env.foods[1] = FoodState { x: 7, y: 7, level: 1, collected: false };
        let obs = env.observe(0);
        assert_eq!(&obs[0..3], &[0.0, 0.0, 1.0]);
        assert_eq!(&obs[3..6], &[-1.0, -1.0, -1.0], "agent at distance 3 not masked");
        assert_eq!(&obs[6..9], &[2.0, 1.0, 1.0]);
        assert_eq!(&obs[9..12], &[-1.0, -1.0, -1.0]);
    }

    #[test]
    fn full_observability_equals_large_sight() {
        let mut full = LbfEnv::new(cfg()).unwrap();
        let mut wide = LbfEnv::new(LbfConfig { sight: 16, ..cfg() }).unwrap();
        let a = full.reset(77);
        let b = wide.reset(77);
        assert_eq!(a.observations, b.observations);
    }

    #[test]
    fn observation_length_is_constant() {
        let mut env = LbfEnv::new(cfg()).unwrap();
        let first = env.reset(13);
        let len = env.spec().obs_lens[0];
        assert_eq!(first.observations[0].len(), len);
        let step = env.step(&[1, 1]).unwrap();
        assert_eq!(step.observations[0].len(), len);
        assert_eq!(step.observations[1].len(), len);
    }

    #[test]
    fn impossible_placement_is_a_config_error() {
        let bad = LbfConfig { width: 1, height: 2, n_agents: 2, n_foods: 1, ..cfg() };
        assert!(matches!(LbfEnv::new(bad), Err(Error::Config(_))));
    }

    #[test]
    fn invalid_action_index_errors() {
        let mut env = LbfEnv::new(cfg()).unwrap();
        env.reset(1);
        assert!(matches!(
            env.step(&[6, 0]),
            Err(Error::InvalidAction { agent: 0, action: 6, .. })
        ));
    }
}
