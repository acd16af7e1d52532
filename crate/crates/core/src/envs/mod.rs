//! Partially-observable stochastic game interface and the task registry.

mod lbf;
mod rware;

pub use lbf::{LbfAction, LbfConfig, LbfEnv};
pub use rware::{RwareAction, RwareConfig, RwareEnv};

use crate::error::{Error, Result};

/// Static description of a game: agent count, per-agent action arities and
/// observation lengths, episode horizon, and discount.
#[derive(Debug, Clone, PartialEq)]
pub struct PosgSpec {
    pub n_agents: usize,
    pub action_arities: Vec<usize>,
    pub obs_lens: Vec<usize>,
    pub max_steps: usize,
    pub gamma: f64,
}

/// One joint environment step: per-agent observations and rewards, terminal
/// flag, and the step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct JointStep {
    pub observations: Vec<Vec<f64>>,
    pub rewards: Vec<f64>,
    pub done: bool,
    pub step_index: usize,
}

/// A grid-world game. Instances are independent and single-threaded;
/// identical (seed, action sequence) pairs give identical trajectories.
pub trait Env {
    fn spec(&self) -> &PosgSpec;
    fn reset(&mut self, seed: u64) -> JointStep;
    fn step(&mut self, actions: &[usize]) -> Result<JointStep>;
}

/// Registry entry: a named task configuration.
#[derive(Debug, Clone, PartialEq)]
pub enum Task {
    Lbf(LbfConfig),
    Rware(RwareConfig),
}

impl Task {
    pub fn build(&self) -> Result<Box<dyn Env>> {
        Ok(match self {
            Task::Lbf(cfg) => Box::new(LbfEnv::new(cfg.clone())?),
            Task::Rware(cfg) => Box::new(RwareEnv::new(cfg.clone())?),
        })
    }

    pub fn spec(&self) -> Result<PosgSpec> {
        Ok(match self {
            Task::Lbf(cfg) => cfg.spec()?,
            Task::Rware(cfg) => cfg.spec()?,
        })
    }
}

fn lbf(grid: usize, agents: usize, foods: usize, sight: usize, coop: bool) -> Task {
    Task::Lbf(LbfConfig {
        width: grid,
        height: grid,
        n_agents: agents,
        n_foods: foods,
        sight,
        max_agent_level: 2,
        force_coop: coop,
        max_steps: 50,
    })
}

fn rware(agents: usize) -> Task {
    Task::Rware(RwareConfig {
        n_agents: agents,
        queue_len: agents,
        sight: 1,
        max_steps: 500,
    })
}

/// Canonical task names and their configurations: the nine benchmark layouts
/// plus a scaled-down cooperative smoke task.
pub fn registry() -> Vec<(&'static str, Task)> {
    vec![
        ("8x8-2p-2f", lbf(8, 2, 2, 0, false)),
        ("8x8-2p-2f-2s", lbf(8, 2, 2, 2, false)),
        ("10x10-3p-3f", lbf(10, 3, 3, 0, false)),
        ("10x10-3p-3f-2s", lbf(10, 3, 3, 2, false)),
        ("15x15-3p-5f", lbf(15, 3, 5, 0, false)),
        ("15x15-4p-3f", lbf(15, 4, 3, 0, false)),
        ("15x15-4p-5f", lbf(15, 4, 5, 0, false)),
        ("6x6-2p-1f", lbf(6, 2, 1, 0, true)),
        ("tiny-2ag", rware(2)),
        ("tiny-4ag", rware(4)),
    ]
}

/// Look a task up by its canonical name or with an `lbf-`/`rware-` prefix.
pub fn lookup_task(name: &str) -> Result<Task> {
    let stripped = name
        .strip_prefix("lbf-")
        .or_else(|| name.strip_prefix("rware-"))
        .unwrap_or(name);
    registry()
        .into_iter()
        .find(|(n, _)| *n == stripped)
        .map(|(_, t)| t)
        .ok_or_else(|| {
            Error::Config(format!(
                "unknown task '{name}'; known tasks: {}",
                registry()
                    .iter()
                    .map(|(n, _)| *n)
                    .collect::<Vec<_>>()
                    .join(", ")
            ))
        })
}

pub(crate) fn sample_distinct_cells(
    width: usize,
    height: usize,
    count: usize,
    rng: &mut impl rand::Rng,
) -> Vec<(usize, usize)> {
    let mut cells: Vec<usize> = (0..width * height).collect();
    for i in 0..count {
        let j = rng.random_range(i..cells.len());
        cells.swap(i, j);
    }
    cells[..count].iter().map(|&c| (c % width, c / width)).collect()
}
