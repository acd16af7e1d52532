//! MADDPG training loop: centralised critics over joint observations and
//! actions, decentralised policies whose action gradient flows through a
//! pluggable discrete estimator, replay, Polyak targets, and periodic greedy
//! evaluation.

use std::io::Write;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::envs::Task;
use crate::error::{Error, Result};
use crate::estimators::{
    apply_plans_rows, sample_hard, sample_plans_rows, EstimatorConfig, RelaxationPlan,
};
use crate::evalstats::grad_variance_batch;
use crate::tape::{Tape, Var};
use crate::tensor::{self, Tensor};

use super::buffer::{ReplayBuffer, Transition};
use super::nets::{flatten_grads, polyak_update, AgentNets, Mlp};

/// All training hyperparameters for one seeded run.
#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub total_steps: u64,
    pub batch_size: usize,
    pub gamma: f64,
    pub polyak: f64,
    pub update_period: u64,
    pub warmup_steps: u64,
    pub eval_period: u64,
    pub eval_episodes: usize,
    pub buffer_capacity: usize,
    pub lr_policy: f64,
    pub lr_critic: f64,
    pub hidden_width: usize,
    /// Joint gradient-norm clip applied before each optimizer step; 0
    /// disables clipping.
    pub max_grad_norm: f64,
    pub estimator: EstimatorConfig,
    /// Bootstrap target actions: greedy argmax (default) or sampled.
    pub target_actions_sampled: bool,
    /// Actor update: replay buffered other-agent actions instead of
    /// recomputing them from current policies.
    pub replay_other_actions: bool,
    /// Log gradient variance every this many update rounds (when a sink is
    /// attached); 0 disables.
    pub gradvar_period: u64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            total_steps: 50_000,
            batch_size: 256,
            gamma: 0.99,
            polyak: 0.01,
            update_period: 100,
            warmup_steps: 1000,
            eval_period: 5000,
            eval_episodes: 20,
            buffer_capacity: 100_000,
            lr_policy: 3e-4,
            lr_critic: 3e-4,
            hidden_width: 64,
            max_grad_norm: 10.0,
            estimator: EstimatorConfig::stgs1(),
            target_actions_sampled: false,
            replay_other_actions: false,
            gradvar_period: 1,
            seed: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(Error::Config(format!("gamma must be in (0,1], got {}", self.gamma)));
        }
        if !(self.polyak > 0.0 && self.polyak <= 1.0) {
            return Err(Error::Config(format!(
                "polyak rate must be in (0,1], got {}",
                self.polyak
            )));
        }
        if self.batch_size == 0
            || self.update_period == 0
            || self.eval_period == 0
            || self.eval_episodes == 0
            || self.buffer_capacity == 0
            || self.hidden_width == 0
        {
            return Err(Error::Config(
                "batch, update period, eval period/episodes, buffer, and width must be > 0"
                    .into(),
            ));
        }
        if !(self.lr_policy > 0.0 && self.lr_critic > 0.0) {
            return Err(Error::Config("learning rates must be > 0".into()));
        }
        Ok(())
    }
}

/// A sampled mini-batch in matrix form.
pub struct Batch {
    pub per_agent_obs: Vec<Tensor>,
    pub per_agent_next_obs: Vec<Tensor>,
    pub joint_obs: Tensor,
    pub joint_next_obs: Tensor,
    /// Joint one-hot action blocks, and the critic input concat(o, a).
    pub per_agent_actions: Vec<Tensor>,
    pub critic_input: Tensor,
    pub rewards: Vec<Vec<f64>>,
    pub done: Vec<f64>,
}

pub fn assemble_batch(buffer: &ReplayBuffer, indices: &[usize], arities: &[usize]) -> Batch {
    let n_agents = arities.len();
    let b = indices.len();
    let mut per_agent_obs = Vec::with_capacity(n_agents);
    let mut per_agent_next_obs = Vec::with_capacity(n_agents);
    let mut per_agent_actions = Vec::with_capacity(n_agents);
    let mut rewards = vec![Vec::with_capacity(b); n_agents];
    let mut done = Vec::with_capacity(b);

    for agent in 0..n_agents {
        let obs_len = buffer.get(indices[0]).obs[agent].len();
        let mut obs = Vec::with_capacity(b * obs_len);
        let mut next_obs = Vec::with_capacity(b * obs_len);
        let mut act = vec![0.0; b * arities[agent]];
        for (row, &idx) in indices.iter().enumerate() {
            let t = buffer.get(idx);
            obs.extend_from_slice(&t.obs[agent]);
            next_obs.extend_from_slice(&t.next_obs[agent]);
            act[row * arities[agent] + t.actions[agent]] = 1.0;
            rewards[agent].push(t.rewards[agent]);
        }
        per_agent_obs.push(Tensor::matrix(b, obs_len, obs).expect("obs block"));
        per_agent_next_obs.push(Tensor::matrix(b, obs_len, next_obs).expect("obs block"));
        per_agent_actions.push(Tensor::matrix(b, arities[agent], act).expect("action block"));
    }
    for &idx in indices {
        done.push(if buffer.get(idx).done { 1.0 } else { 0.0 });
    }

    let obs_refs: Vec<&Tensor> = per_agent_obs.iter().collect();
    let joint_obs = tensor::concat_cols(&obs_refs).expect("joint obs");
    let next_refs: Vec<&Tensor> = per_agent_next_obs.iter().collect();
    let joint_next_obs = tensor::concat_cols(&next_refs).expect("joint next obs");
    let mut critic_parts: Vec<&Tensor> = vec![&joint_obs];
    critic_parts.extend(per_agent_actions.iter());
    let critic_input = tensor::concat_cols(&critic_parts).expect("critic input");

    Batch {
        per_agent_obs,
        per_agent_next_obs,
        joint_obs,
        joint_next_obs,
        per_agent_actions,
        critic_input,
        rewards,
        done,
    }
}

/// Greedy or sampled one-hot actions from a logits matrix.
fn hard_onehots(logits: &Tensor, sampled: bool, rng: &mut impl Rng) -> Tensor {
    let (b, n) = (logits.rows(), logits.cols());
    let mut data = vec![0.0; b * n];
    for r in 0..b {
        let idx = if sampled {
            sample_hard(logits.row(r), rng)
        } else {
            tensor::argmax(logits.row(r))
        };
        data[r * n + idx] = 1.0;
    }
    Tensor::matrix(b, n, data).expect("one-hot block")
}

/// Critic loss graph: mse(Q(x), y) with the critic parameters as leaves.
pub fn build_critic_graph(
    critic: &Mlp,
    x: &Tensor,
    y: &Tensor,
) -> Result<(Tape, Var, Vec<Var>)> {
    let mut tape = Tape::new();
    let leaves = critic.insert_leaves(&mut tape);
    let xv = tape.leaf(x.clone());
    let q = critic.forward_tape(&mut tape, &leaves, xv)?;
    let yv = tape.leaf(y.clone());
    let loss = tape.mse(q, yv)?;
    Ok((tape, loss, leaves))
}

/// TD targets y = r_i + gamma·(1−done)·Q̄_i(o′, ā′) with target-policy
/// actions ā′.
pub fn critic_targets(
    nets: &[AgentNets],
    agent: usize,
    batch: &Batch,
    gamma: f64,
    target_sampled: bool,
    rng: &mut impl Rng,
) -> Tensor {
    let b = batch.done.len();
    let mut parts: Vec<Tensor> = Vec::with_capacity(nets.len() + 1);
    parts.push(batch.joint_next_obs.clone());
    for (j, net) in nets.iter().enumerate() {
        let logits = net.target_policy.forward_plain(&batch.per_agent_next_obs[j]);
        parts.push(hard_onehots(&logits, target_sampled, rng));
    }
    let refs: Vec<&Tensor> = parts.iter().collect();
    let xnext = tensor::concat_cols(&refs).expect("target critic input");
    let qnext = nets[agent].target_critic.forward_plain(&xnext);
    let mut y = Vec::with_capacity(b);
    for row in 0..b {
        y.push(
            batch.rewards[agent][row]
                + gamma * (1.0 - batch.done[row]) * qnext.data()[row],
        );
    }
    Tensor::matrix(b, 1, y).expect("targets")
}

/// Scale the joint gradient down to `max_norm` when it exceeds it; a zero
/// or negative `max_norm` disables clipping.
fn clip_grad_norm(grads: &mut [Tensor], max_norm: f64) {
    if max_norm <= 0.0 {
        return;
    }
    let total: f64 = grads
        .iter()
        .map(|g| g.data().iter().map(|x| x * x).sum::<f64>())
        .sum::<f64>()
        .sqrt();
    if total > max_norm {
        let scale = max_norm / total;
        for g in grads.iter_mut() {
            g.data_mut().iter_mut().for_each(|x| *x *= scale);
        }
    }
}

/// One critic step for `agent`; returns the pre-step loss.
pub fn critic_update(
    nets: &mut [AgentNets],
    agent: usize,
    batch: &Batch,
    cfg: &TrainConfig,
    rng: &mut impl Rng,
) -> Result<f64> {
    let y = critic_targets(nets, agent, batch, cfg.gamma, cfg.target_actions_sampled, rng);
    let (mut tape, loss, leaves) = build_critic_graph(&nets[agent].critic, &batch.critic_input, &y)?;
    let loss_val = tape.value(loss).item();
    if !loss_val.is_finite() {
        return Err(Error::NonFiniteLoss(format!("critic {agent} loss {loss_val}")));
    }
    tape.backward(loss)?;
    let mut grads: Vec<Tensor> = leaves.iter().map(|&v| tape.grad(v)).collect();
    clip_grad_norm(&mut grads, cfg.max_grad_norm);
    let AgentNets { critic, critic_opt, .. } = &mut nets[agent];
    critic_opt.step(&mut critic.params_mut(), &grads)?;
    Ok(loss_val)
}

/// Other agents' hard one-hot actions for the actor update: recomputed from
/// current policies (default) or replayed from the batch. The `agent` slot
/// is a placeholder.
pub fn other_agent_actions(
    nets: &[AgentNets],
    agent: usize,
    batch: &Batch,
    replay: bool,
    rng: &mut impl Rng,
) -> Vec<Tensor> {
    nets.iter()
        .enumerate()
        .map(|(j, net)| {
            if j == agent || replay {
                batch.per_agent_actions[j].clone()
            } else {
                let logits = net.policy.forward_plain(&batch.per_agent_obs[j]);
                hard_onehots(&logits, true, rng)
            }
        })
        .collect()
}

/// Relaxation plans for the actor update of `agent` at schedule step `t`.
pub fn actor_plans(
    policy: &Mlp,
    obs: &Tensor,
    estimator: &EstimatorConfig,
    t: u64,
    rng: &mut impl Rng,
) -> Result<Vec<RelaxationPlan>> {
    let zeta = policy.forward_plain(obs);
    sample_plans_rows(estimator, &zeta, t, rng)
}

/// Actor objective graph −mean Q_i(o, a) with the policy parameters as
/// leaves. With `use_straight_through` the critic sees the hard one-hot and
/// differentiates through the surrogate; without it the critic sees the
/// surrogate itself (the tau-relaxed objective that finite differences are
/// taken over, with plans pinned).
#[allow(clippy::too_many_arguments)]
pub fn build_actor_graph(
    policy: &Mlp,
    critic: &Mlp,
    obs: &Tensor,
    joint_obs: &Tensor,
    agent: usize,
    other_actions: &[Tensor],
    plans: &[RelaxationPlan],
    use_straight_through: bool,
) -> Result<(Tape, Var, Vec<Var>)> {
    let mut tape = Tape::new();
    let policy_leaves = policy.insert_leaves(&mut tape);
    let obs_v = tape.leaf(obs.clone());
    let zeta = policy.forward_tape(&mut tape, &policy_leaves, obs_v)?;
    let relaxed = apply_plans_rows(&mut tape, zeta, plans)?;
    let action_i = if use_straight_through { relaxed.output } else { relaxed.surrogate };

    let critic_leaves = critic.insert_leaves(&mut tape);
    let mut parts = Vec::with_capacity(other_actions.len() + 1);
    parts.push(tape.leaf(joint_obs.clone()));
    for (j, onehots) in other_actions.iter().enumerate() {
        if j == agent {
            parts.push(action_i);
        } else {
            parts.push(tape.leaf(onehots.clone()));
        }
    }
    let x = tape.concat_cols(&parts)?;
    let q = critic.forward_tape(&mut tape, &critic_leaves, x)?;
    let total = tape.sum(q);
    let loss = tape.scale(total, -1.0 / joint_obs.rows() as f64);
    Ok((tape, loss, policy_leaves))
}

/// One policy step for `agent` through the configured estimator; returns
/// −mean Q as the loss.
pub fn actor_update(
    nets: &mut [AgentNets],
    agent: usize,
    batch: &Batch,
    cfg: &TrainConfig,
    t: u64,
    rng: &mut impl Rng,
) -> Result<f64> {
    let others = other_agent_actions(nets, agent, batch, cfg.replay_other_actions, rng);
    let plans =
        actor_plans(&nets[agent].policy, &batch.per_agent_obs[agent], &cfg.estimator, t, rng)?;
    let (mut tape, loss, leaves) = build_actor_graph(
        &nets[agent].policy,
        &nets[agent].critic,
        &batch.per_agent_obs[agent],
        &batch.joint_obs,
        agent,
        &others,
        &plans,
        true,
    )?;
    let loss_val = tape.value(loss).item();
    if !loss_val.is_finite() {
        return Err(Error::NonFiniteLoss(format!("actor {agent} loss {loss_val}")));
    }
    tape.backward(loss)?;
    let mut grads: Vec<Tensor> = leaves.iter().map(|&v| tape.grad(v)).collect();
    clip_grad_norm(&mut grads, cfg.max_grad_norm);
    let AgentNets { policy, policy_opt, .. } = &mut nets[agent];
    policy_opt.step(&mut policy.params_mut(), &grads)?;
    Ok(loss_val)
}

/// Per-agent hard actions from the policies' forward path. The forward draw
/// is a Gumbel-max categorical sample and consumes the same rng stream for
/// every estimator kind, so swapping estimators leaves environment
/// interaction unchanged until the first network update.
pub fn select_actions(nets: &[AgentNets], obs: &[Vec<f64>], rng: &mut impl Rng) -> Vec<usize> {
    nets.iter()
        .zip(obs)
        .map(|(net, o)| {
            let logits = net.policy.forward_plain(&Tensor::vector(o.clone()));
            sample_hard(logits.data(), rng)
        })
        .collect()
}

/// Greedy rollout returns (undiscounted sum over agents and steps), one per
/// episode. Optionally writes `step,agent,action,reward,done` trace lines.
pub fn evaluate_traced(
    nets: &[AgentNets],
    task: &Task,
    n_episodes: usize,
    seed: u64,
    mut trace: Option<&mut dyn Write>,
) -> Result<Vec<f64>> {
    if n_episodes == 0 {
        return Err(Error::Config("evaluation needs at least one episode".into()));
    }
    let mut env = task.build()?;
    let mut seeder = ChaCha8Rng::seed_from_u64(seed);
    let mut returns = Vec::with_capacity(n_episodes);
    for _ in 0..n_episodes {
        let mut step = env.reset(seeder.next_u64());
        let mut total = 0.0;
        while !step.done {
            let actions: Vec<usize> = nets
                .iter()
                .zip(&step.observations)
                .map(|(net, o)| {
                    let logits = net.policy.forward_plain(&Tensor::vector(o.clone()));
                    tensor::argmax(logits.data())
                })
                .collect();
            step = env.step(&actions)?;
            total += step.rewards.iter().sum::<f64>();
            if let Some(w) = trace.as_deref_mut() {
                for (agent, &action) in actions.iter().enumerate() {
                    writeln!(
                        w,
                        "{},{},{},{},{}",
                        step.step_index, agent, action, step.rewards[agent], step.done
                    )?;
                }
            }
        }
        returns.push(total);
    }
    Ok(returns)
}

pub fn evaluate(nets: &[AgentNets], task: &Task, n_episodes: usize, seed: u64) -> Result<Vec<f64>> {
    evaluate_traced(nets, task, n_episodes, seed, None)
}

/// Uniform-random rollout returns; the scripted baseline that trained
/// policies are measured against.
pub fn random_policy_returns(task: &Task, n_episodes: usize, seed: u64) -> Result<Vec<f64>> {
    let mut env = task.build()?;
    let arities = env.spec().action_arities.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut returns = Vec::with_capacity(n_episodes);
    for _ in 0..n_episodes {
        let mut step = env.reset(rng.next_u64());
        let mut total = 0.0;
        while !step.done {
            let actions: Vec<usize> =
                arities.iter().map(|&a| rng.random_range(0..a)).collect();
            step = env.step(&actions)?;
            total += step.rewards.iter().sum::<f64>();
        }
        returns.push(total);
    }
    Ok(returns)
}

/// One evaluation record as written to the metrics CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalRow {
    pub step: u64,
    pub mean_return: f64,
    pub se: f64,
}

/// Result of one seeded training run.
pub struct TrainOutcome {
    pub nets: Vec<AgentNets>,
    pub rows: Vec<EvalRow>,
    /// Update steps skipped after a non-finite loss or gradient.
    pub skipped_updates: u64,
}

fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Per-sample policy-gradient variance on one batch, written as
/// `step,agent,layer,param_class,variance` rows. Measurement draws from its
/// own rng so enabling it never perturbs the training trajectory.
#[allow(clippy::too_many_arguments)]
fn log_gradient_variance(
    nets: &[AgentNets],
    agent: usize,
    batch: &Batch,
    estimator: &EstimatorConfig,
    t: u64,
    rng: &mut impl Rng,
    sink: &mut dyn Write,
) -> Result<()> {
    let b = batch.done.len();
    let groups = nets[agent].policy.grad_groups();
    let mut rows = Vec::with_capacity(b);
    let obs_len = batch.per_agent_obs[agent].cols();
    let joint_len = batch.joint_obs.cols();
    for s in 0..b {
        let obs_row =
            Tensor::matrix(1, obs_len, batch.per_agent_obs[agent].row(s).to_vec())?;
        let joint_row = Tensor::matrix(1, joint_len, batch.joint_obs.row(s).to_vec())?;
        let others: Vec<Tensor> = nets
            .iter()
            .enumerate()
            .map(|(j, net)| {
                if j == agent {
                    let arity = batch.per_agent_actions[j].cols();
                    Tensor::matrix(1, arity, batch.per_agent_actions[j].row(s).to_vec())
                        .expect("row")
                } else {
                    let o = Tensor::matrix(
                        1,
                        batch.per_agent_obs[j].cols(),
                        batch.per_agent_obs[j].row(s).to_vec(),
                    )
                    .expect("row");
                    let logits = net.policy.forward_plain(&o);
                    hard_onehots(&logits, true, rng)
                }
            })
            .collect();
        let plans = actor_plans(&nets[agent].policy, &obs_row, estimator, t, rng)?;
        let (mut tape, loss, leaves) = build_actor_graph(
            &nets[agent].policy,
            &nets[agent].critic,
            &obs_row,
            &joint_row,
            agent,
            &others,
            &plans,
            true,
        )?;
        tape.backward(loss)?;
        let grads: Vec<Tensor> = leaves.iter().map(|&v| tape.grad(v)).collect();
        rows.push(flatten_grads(&grads));
    }
    for v in grad_variance_batch(&rows, &groups)? {
        writeln!(sink, "{},{},{},{},{}", t, agent, v.layer, v.class.label(), v.variance)?;
    }
    Ok(())
}

/// Run one seeded MADDPG training. Streams one metrics row per evaluation to
/// `metrics`; when `gradvar` is attached, also streams per-layer gradient
/// variance records every `gradvar_period` update rounds.
pub fn train(
    task: &Task,
    task_name: &str,
    cfg: &TrainConfig,
    metrics: &mut dyn Write,
    mut gradvar: Option<&mut dyn Write>,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let mut env = task.build()?;
    let spec = env.spec().clone();
    let n_agents = spec.n_agents;
    let estimator_id = cfg.estimator.kind.id();

    let stream_rng = |stream: u64| {
        let mut r = ChaCha8Rng::seed_from_u64(cfg.seed);
        r.set_stream(stream);
        r
    };
    let mut init_rng = stream_rng(0);
    let mut env_rng = stream_rng(1);
    let mut act_rng = stream_rng(2);
    let mut upd_rng = stream_rng(3);
    let mut eval_rng = stream_rng(4);
    let mut gv_rng = stream_rng(5);

    let mut nets: Vec<AgentNets> = (0..n_agents)
        .map(|i| {
            AgentNets::new(&spec, i, cfg.hidden_width, cfg.lr_policy, cfg.lr_critic, &mut init_rng)
        })
        .collect();
    let mut buffer = ReplayBuffer::new(cfg.buffer_capacity);
    let mut rows = Vec::new();
    let mut skipped = 0u64;

    writeln!(metrics, "step,seed,task,estimator,eval_mean_return,eval_se")?;
    if let Some(w) = gradvar.as_deref_mut() {
        writeln!(w, "step,agent,layer,param_class,variance")?;
    }

    let run_eval = |nets: &[AgentNets],
                        step: u64,
                        rows: &mut Vec<EvalRow>,
                        metrics: &mut dyn Write,
                        eval_rng: &mut ChaCha8Rng|
     -> Result<()> {
        let returns = evaluate(nets, task, cfg.eval_episodes, eval_rng.next_u64())?;
        let (mean, se) = mean_se(&returns);
        writeln!(
            metrics,
            "{},{},{},{},{},{}",
            step, cfg.seed, task_name, estimator_id, mean, se
        )?;
        rows.push(EvalRow { step, mean_return: mean, se });
        Ok(())
    };

    run_eval(&nets, 0, &mut rows, metrics, &mut eval_rng)?;

    let mut obs = env.reset(env_rng.next_u64()).observations;
    let mut update_round = 0u64;
    for t in 1..=cfg.total_steps {
        // Warm-up steps fill the buffer with uniform-random actions; the
        // untrained policies' sampled actions explore far worse (their
        // per-observation biases walk agents into walls), and no update has
        // happened yet that could make on-policy data matter.
        let actions = if t <= cfg.warmup_steps {
            spec.action_arities
                .iter()
                .map(|&a| act_rng.random_range(0..a))
                .collect()
        } else {
            select_actions(&nets, &obs, &mut act_rng)
        };
        let step = env.step(&actions)?;
        buffer.push(Transition {
            obs: std::mem::take(&mut obs),
            actions,
            rewards: step.rewards.clone(),
            next_obs: step.observations.clone(),
            done: step.done,
        });
        obs = if step.done {
            env.reset(env_rng.next_u64()).observations
        } else {
            step.observations
        };

        if t >= cfg.warmup_steps
            && t % cfg.update_period == 0
            && buffer.len() >= cfg.batch_size
        {
            update_round += 1;
            let log_now = gradvar.is_some()
                && cfg.gradvar_period > 0
                && update_round % cfg.gradvar_period == 0;
            for agent in 0..n_agents {
                let indices = buffer.sample_indices(cfg.batch_size, &mut upd_rng);
                let batch = assemble_batch(&buffer, &indices, &spec.action_arities);
                match critic_update(&mut nets, agent, &batch, cfg, &mut upd_rng) {
                    Ok(_) => {}
                    Err(Error::NonFiniteLoss(_)) | Err(Error::NonFiniteGradient(_)) => {
                        skipped += 1
                    }
                    Err(e) => return Err(e),
                }
                match actor_update(&mut nets, agent, &batch, cfg, t, &mut upd_rng) {
                    Ok(_) => {}
                    Err(Error::NonFiniteLoss(_)) | Err(Error::NonFiniteGradient(_)) => {
                        skipped += 1
                    }
                    Err(e) => return Err(e),
                }
                if log_now {
                    if let Some(w) = gradvar.as_deref_mut() {
                        log_gradient_variance(
                            &nets,
                            agent,
                            &batch,
                            &cfg.estimator,
                            t,
                            &mut gv_rng,
                            w,
                        )?;
                    }
                }
            }
            for agent in nets.iter_mut() {
                polyak_update(&agent.policy, &mut agent.target_policy, cfg.polyak)?;
                polyak_update(&agent.critic, &mut agent.target_critic, cfg.polyak)?;
            }
        }

        if t % cfg.eval_period == 0 || t == cfg.total_steps {
            run_eval(&nets, t, &mut rows, metrics, &mut eval_rng)?;
        }
    }

    Ok(TrainOutcome { nets, rows, skipped_updates: skipped })
}
