//! Finite-difference verification of every differentiable op and of the
//! critic/actor gradient paths on miniature networks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use dge_core::envs::PosgSpec;
use dge_core::estimators::{EstimatorConfig, RelaxationPlan};
use dge_core::maddpg::{
    actor_plans, assemble_batch, build_actor_graph, build_critic_graph, critic_targets,
    other_agent_actions, AgentNets, Mlp, ReplayBuffer, Transition,
};
use dge_core::tape::{finite_diff_check, Tape};
use dge_core::tensor::{self, Tensor};

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn rand_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-2.0..2.0)).collect()
}

/// Gradient of a scalar-valued graph w.r.t. one leaf, via a rebuilt tape.
fn graph_grad(build: impl Fn(&mut Tape, dge_core::tape::Var) -> dge_core::tape::Var, x: &Tensor) -> Tensor {
    let mut tape = Tape::new();
    let xv = tape.leaf(x.clone());
    let root = build(&mut tape, xv);
    tape.backward(root).unwrap();
    tape.grad(xv)
}

fn graph_value(
    build: impl Fn(&mut Tape, dge_core::tape::Var) -> dge_core::tape::Var,
    x: &Tensor,
) -> f64 {
    let mut tape = Tape::new();
    let xv = tape.leaf(x.clone());
    let root = build(&mut tape, xv);
    tape.value(root).item()
}

fn check_op(
    name: &str,
    x: &Tensor,
    build: impl Fn(&mut Tape, dge_core::tape::Var) -> dge_core::tape::Var + Copy,
) {
    let analytic = graph_grad(build, x);
    let err = finite_diff_check(|x| graph_value(build, x), &analytic, x, 1e-5);
    assert!(err < 1e-4, "{name}: finite-diff error {err}");
}

#[test]
fn every_op_matches_finite_differences() {
    let mut r = rng(101);

    let x = Tensor::matrix(3, 4, rand_vec(&mut r, 12)).unwrap();
    let w = Tensor::matrix(4, 2, rand_vec(&mut r, 8)).unwrap();
    check_op("matmul", &x, |t, xv| {
        let wv = t.leaf(w.clone());
        let m = t.matmul(xv, wv).unwrap();
        t.sum(m)
    });
    // Gradient w.r.t. the right operand as well.
    check_op("matmul-rhs", &w, |t, wv| {
        let xv = t.leaf(x.clone());
        let m = t.matmul(xv, wv).unwrap();
        t.sum(m)
    });

    let a = Tensor::matrix(3, 4, rand_vec(&mut r, 12)).unwrap();
    let bias = Tensor::vector(rand_vec(&mut r, 4));
    check_op("add-broadcast", &bias, |t, bv| {
        let av = t.leaf(a.clone());
        let s = t.add(av, bv).unwrap();
        let sq = t.mul(s, s).unwrap();
        t.sum(sq)
    });

    // Keep relu inputs away from the kink.
    let relu_in = Tensor::vector(
        (0..6)
            .map(|_| {
                let v: f64 = r.random_range(0.1..2.0);
                if r.random::<bool>() {
                    v
                } else {
                    -v
                }
            })
            .collect(),
    );
    check_op("relu", &relu_in, |t, xv| {
        let rl = t.relu(xv);
        let sq = t.mul(rl, rl).unwrap();
        t.sum(sq)
    });

    let m1 = Tensor::vector(rand_vec(&mut r, 5));
    let m2 = Tensor::vector(rand_vec(&mut r, 5));
    check_op("mul", &m1, |t, xv| {
        let other = t.leaf(m2.clone());
        let p = t.mul(xv, other).unwrap();
        t.sum(p)
    });

    let c1 = Tensor::matrix(2, 3, rand_vec(&mut r, 6)).unwrap();
    let c2 = Tensor::matrix(2, 2, rand_vec(&mut r, 4)).unwrap();
    check_op("concat", &c1, |t, xv| {
        let other = t.leaf(c2.clone());
        let cat = t.concat_cols(&[xv, other]).unwrap();
        let sq = t.mul(cat, cat).unwrap();
        t.sum(sq)
    });

    let g = Tensor::matrix(3, 3, rand_vec(&mut r, 9)).unwrap();
    check_op("gather_row", &g, |t, xv| {
        let row = t.gather_row(xv, 1).unwrap();
        let sq = t.mul(row, row).unwrap();
        t.sum(sq)
    });

    let sm = Tensor::matrix(2, 4, rand_vec(&mut r, 8)).unwrap();
    let w2 = Tensor::matrix(2, 4, rand_vec(&mut r, 8)).unwrap();
    check_op("softmax_tau", &sm, |t, xv| {
        let s = t.softmax_tau(xv, 0.4).unwrap();
        let wv = t.leaf(w2.clone());
        t.dot(s, wv).unwrap()
    });

    let pred = Tensor::vector(rand_vec(&mut r, 6));
    let target = Tensor::vector(rand_vec(&mut r, 6));
    check_op("mse", &pred, |t, pv| {
        let tv = t.leaf(target.clone());
        t.mse(pv, tv).unwrap()
    });

    let sum_in = Tensor::matrix(2, 3, rand_vec(&mut r, 6)).unwrap();
    check_op("sum", &sum_in, |t, xv| {
        let sq = t.mul(xv, xv).unwrap();
        t.sum(sq)
    });

    let scale_in = Tensor::vector(rand_vec(&mut r, 4));
    check_op("scale", &scale_in, |t, xv| {
        let s = t.scale(xv, -1.7);
        let sq = t.mul(s, s).unwrap();
        t.sum(sq)
    });
}

#[test]
fn straight_through_backward_is_identity_on_the_soft_path() {
    // FD on the soft path with hard held fixed.
    let mut r = rng(7);
    let soft_point = Tensor::vector(rand_vec(&mut r, 4));
    let weights = Tensor::vector(rand_vec(&mut r, 4));
    let hard = tensor::one_hot(4, 2);
    let build = |t: &mut Tape, sv: dge_core::tape::Var| {
        let hv = t.leaf(hard.clone());
        let st = t.straight_through(hv, sv).unwrap();
        let wv = t.leaf(weights.clone());
        t.dot(st, wv).unwrap()
    };
    let analytic = graph_grad(build, &soft_point);
    // The forward value ignores soft entirely, so FD must run on the
    // backward surrogate: ⟨w, soft⟩.
    let surrogate = |x: &Tensor| tensor::dot(weights.data(), x.data());
    let err = finite_diff_check(surrogate, &analytic, &soft_point, 1e-5);
    assert!(err < 1e-9, "straight-through identity error {err}");
}

#[test]
fn two_layer_mlp_backward_matches_finite_differences() {
    let mut r = rng(11);
    let mlp = Mlp::init(&[5, 8, 1], &mut r);
    let x = Tensor::matrix(3, 5, rand_vec(&mut r, 15)).unwrap();

    let loss_for = |params: &Mlp| -> f64 {
        let out = params.forward_plain(&x);
        out.data().iter().map(|v| v * v).sum::<f64>() / out.numel() as f64
    };

    let mut tape = Tape::new();
    let leaves = mlp.insert_leaves(&mut tape);
    let xv = tape.leaf(x.clone());
    let out = mlp.forward_tape(&mut tape, &leaves, xv).unwrap();
    let sq = tape.mul(out, out).unwrap();
    let total = tape.sum(sq);
    let loss = tape.scale(total, 1.0 / 3.0);
    tape.backward(loss).unwrap();

    for (pi, &leaf) in leaves.iter().enumerate() {
        let analytic = tape.grad(leaf);
        let base = mlp.params()[pi].clone();
        let f = |x: &Tensor| {
            let mut probe = mlp.clone();
            *probe.params_mut()[pi] = x.clone();
            loss_for(&probe)
        };
        let err = finite_diff_check(f, &analytic, &base, 1e-5);
        assert!(err < 1e-4, "mlp param {pi} error {err}");
    }
}

fn tiny_spec() -> PosgSpec {
    PosgSpec {
        n_agents: 2,
        action_arities: vec![3, 3],
        obs_lens: vec![4, 4],
        max_steps: 10,
        gamma: 0.99,
    }
}

fn random_batch(spec: &PosgSpec, b: usize, seed: u64) -> dge_core::maddpg::Batch {
    let mut r = rng(seed);
    let mut buffer = ReplayBuffer::new(64);
    for _ in 0..b.max(4) {
        buffer.push(Transition {
            obs: spec.obs_lens.iter().map(|&n| rand_vec(&mut r, n)).collect(),
            actions: spec
                .action_arities
                .iter()
                .map(|&a| r.random_range(0..a))
                .collect(),
            rewards: (0..spec.n_agents).map(|_| r.random_range(-1.0..1.0)).collect(),
            next_obs: spec.obs_lens.iter().map(|&n| rand_vec(&mut r, n)).collect(),
            done: r.random::<f64>() < 0.2,
        });
    }
    let indices: Vec<usize> = (0..b).map(|i| i % buffer.len()).collect();
    assemble_batch(&buffer, &indices, &spec.action_arities)
}

#[test]
fn critic_gradient_matches_finite_differences() {
    let spec = tiny_spec();
    let mut r = rng(21);
    for trial in 0..10 {
        let nets: Vec<AgentNets> =
            (0..2).map(|i| AgentNets::new(&spec, i, 8, 1e-3, 1e-3, &mut r)).collect();
        let batch = random_batch(&spec, 2, 100 + trial);
        let y = critic_targets(&nets, 0, &batch, 0.99, false, &mut r);

        let (mut tape, loss, leaves) = build_critic_graph(&nets[0].critic, &batch.critic_input, &y).unwrap();
        tape.backward(loss).unwrap();

        for (pi, &leaf) in leaves.iter().enumerate() {
            let analytic = tape.grad(leaf);
            let base = nets[0].critic.params()[pi].clone();
            let f = |x: &Tensor| {
                let mut probe = nets[0].critic.clone();
                *probe.params_mut()[pi] = x.clone();
                let q = probe.forward_plain(&batch.critic_input);
                q.data()
                    .iter()
                    .zip(y.data())
                    .map(|(q, y)| (q - y) * (q - y))
                    .sum::<f64>()
                    / q.numel() as f64
            };
            let err = finite_diff_check(f, &analytic, &base, 1e-5);
            assert!(err < 1e-4, "trial {trial} critic param {pi} error {err}");
        }
    }
}

/// Relaxed-objective actor loss at perturbed policy parameters, with plans
/// and other-agent actions pinned.
fn actor_loss_at(
    policy: &Mlp,
    critic: &Mlp,
    batch: &dge_core::maddpg::Batch,
    plans: &[RelaxationPlan],
    others: &[Tensor],
) -> f64 {
    let (tape, loss, _) = build_actor_graph(
        policy,
        critic,
        &batch.per_agent_obs[0],
        &batch.joint_obs,
        0,
        others,
        plans,
        false,
    )
    .unwrap();
    tape.value(loss).item()
}

#[test]
fn actor_gradient_matches_finite_differences_with_pinned_noise() {
    let spec = tiny_spec();
    let mut r = rng(31);
    let estimators = [
        EstimatorConfig::stgs1(),
        EstimatorConfig::grmck(0.7, 3).unwrap(),
        EstimatorConfig::gst(1.0, 1.0).unwrap(),
    ];
    for trial in 0..10 {
        let nets: Vec<AgentNets> =
            (0..2).map(|i| AgentNets::new(&spec, i, 8, 1e-3, 1e-3, &mut r)).collect();
        let batch = random_batch(&spec, 3, 200 + trial);
        let est = &estimators[trial as usize % estimators.len()];
        let others = other_agent_actions(&nets, 0, &batch, false, &mut r);
        let plans =
            actor_plans(&nets[0].policy, &batch.per_agent_obs[0], est, 0, &mut r).unwrap();

        let (mut tape, loss, leaves) = build_actor_graph(
            &nets[0].policy,
            &nets[0].critic,
            &batch.per_agent_obs[0],
            &batch.joint_obs,
            0,
            &others,
            &plans,
            false,
        )
        .unwrap();
        tape.backward(loss).unwrap();

        for (pi, &leaf) in leaves.iter().enumerate() {
            let analytic = tape.grad(leaf);
            let base = nets[0].policy.params()[pi].clone();
            let f = |x: &Tensor| {
                let mut probe = nets[0].policy.clone();
                *probe.params_mut()[pi] = x.clone();
                actor_loss_at(&probe, &nets[0].critic, &batch, &plans, &others)
            };
            let err = finite_diff_check(f, &analytic, &base, 1e-5);
            assert!(err < 1e-3, "trial {trial} policy param {pi} error {err}");
        }
    }
}

#[test]
fn straight_through_and_relaxed_gradients_agree_for_linear_critics() {
    // When Q is linear in the action, dQ/da is constant, so the ST path and
    // the relaxed path must produce identical policy gradients.
    let spec = tiny_spec();
    let mut r = rng(41);
    let nets: Vec<AgentNets> =
        (0..2).map(|i| AgentNets::new(&spec, i, 8, 1e-3, 1e-3, &mut r)).collect();
    // Build a critic computing ⟨w, x⟩ exactly: identity-free single layer.
    let joint: usize = 14;
    let wdata: Vec<f64> = (0..joint).map(|_| r.random_range(-1.0..1.0)).collect();
    let linear_critic = Mlp {
        layers: vec![dge_core::maddpg::Linear {
            w: Tensor::matrix(joint, 1, wdata).unwrap(),
            b: Tensor::vector(vec![0.3]),
        }],
    };
    let batch = random_batch(&spec, 4, 300);
    let others = other_agent_actions(&nets, 0, &batch, false, &mut r);
    let plans = actor_plans(&nets[0].policy, &batch.per_agent_obs[0], &EstimatorConfig::stgs1(), 0, &mut r)
        .unwrap();

    let grads_for = |use_st: bool| -> Vec<Tensor> {
        let (mut tape, loss, leaves) = build_actor_graph(
            &nets[0].policy,
            &linear_critic,
            &batch.per_agent_obs[0],
            &batch.joint_obs,
            0,
            &others,
            &plans,
            use_st,
        )
        .unwrap();
        tape.backward(loss).unwrap();
        leaves.iter().map(|&v| tape.grad(v)).collect()
    };
    for (st, relaxed) in grads_for(true).iter().zip(grads_for(false)) {
        for (a, b) in st.data().iter().zip(relaxed.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
