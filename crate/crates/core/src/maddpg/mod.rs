//! MADDPG: centralised per-agent critics, decentralised policies, replay,
//! Polyak-averaged targets, and a pluggable discrete gradient estimator in
//! the actor update.

mod buffer;
mod checkpoint;
mod nets;
mod trainer;

pub use buffer::{ReplayBuffer, Transition};
pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use nets::{flatten_grads, polyak_update, AgentNets, Linear, Mlp};
pub use trainer::{
    actor_plans, actor_update, assemble_batch, build_actor_graph, build_critic_graph,
    critic_targets, critic_update, evaluate, evaluate_traced, other_agent_actions,
    random_policy_returns, select_actions, train, Batch, EvalRow, TrainConfig, TrainOutcome,
};

use crate::envs::PosgSpec;
