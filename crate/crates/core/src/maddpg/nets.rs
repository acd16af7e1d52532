//! MLP policies/critics and their Polyak-averaged target copies.

use rand::Rng;

use crate::error::{Error, Result};
use crate::evalstats::{GradGroup, ParamClass};
use crate::optim::AdamState;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

use super::PosgSpec;

/// One dense layer; weights are stored [in, out] so a batch forward is a
/// single matmul.
#[derive(Debug, Clone)]
pub struct Linear {
    pub w: Tensor,
    pub b: Tensor,
}

/// Fully-connected net with ReLU between layers and a linear head.
#[derive(Debug, Clone)]
pub struct Mlp {
    pub layers: Vec<Linear>,
}

impl Mlp {
    /// `dims` = [input, hidden..., output]; weights and biases are drawn
    /// uniformly in ±1/√fan_in.
    pub fn init(dims: &[usize], rng: &mut impl Rng) -> Mlp {
        Mlp::init_with_head_gain(dims, 1.0, rng)
    }

    /// Like [`Mlp::init`] but with the final layer scaled by `gain`. Policy
    /// heads use a small gain so the initial action distribution is close to
    /// uniform and exploration does not inherit arbitrary init biases.
    pub fn init_with_head_gain(dims: &[usize], gain: f64, rng: &mut impl Rng) -> Mlp {
        let n_layers = dims.len() - 1;
        let layers = dims
            .windows(2)
            .enumerate()
            .map(|(l, w)| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let scale = if l + 1 == n_layers { gain } else { 1.0 };
                let bound = scale / (fan_in as f64).sqrt();
                let wdata = (0..fan_in * fan_out)
                    .map(|_| rng.random_range(-bound..bound))
                    .collect();
                let bdata = (0..fan_out).map(|_| rng.random_range(-bound..bound)).collect();
                Linear {
                    w: Tensor::matrix(fan_in, fan_out, wdata).expect("init shape"),
                    b: Tensor::vector(bdata),
                }
            })
            .collect();
        Mlp { layers }
    }

    pub fn param_shapes(&self) -> Vec<Vec<usize>> {
        self.layers
            .iter()
            .flat_map(|l| [l.w.shape().to_vec(), l.b.shape().to_vec()])
            .collect()
    }

    pub fn params(&self) -> Vec<&Tensor> {
        self.layers.iter().flat_map(|l| [&l.w, &l.b]).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        self.layers
            .iter_mut()
            .flat_map(|l| [&mut l.w, &mut l.b])
            .collect()
    }

    /// Insert every parameter as a tape leaf, in [w0, b0, w1, b1, ...] order.
    pub fn insert_leaves(&self, tape: &mut Tape) -> Vec<Var> {
        self.params().into_iter().map(|p| tape.leaf(p.clone())).collect()
    }

    /// Recorded forward pass over a [batch, in] input node.
    pub fn forward_tape(&self, tape: &mut Tape, leaves: &[Var], x: Var) -> Result<Var> {
        if leaves.len() != 2 * self.layers.len() {
            return Err(Error::Shape(format!(
                "{} leaves for {} layers",
                leaves.len(),
                self.layers.len()
            )));
        }
        let mut h = x;
        for l in 0..self.layers.len() {
            h = tape.matmul(h, leaves[2 * l])?;
            h = tape.add(h, leaves[2 * l + 1])?;
            if l + 1 < self.layers.len() {
                h = tape.relu(h);
            }
        }
        Ok(h)
    }

    /// Plain forward pass without gradient recording; accepts rank-1 or
    /// rank-2 input.
    pub fn forward_plain(&self, x: &Tensor) -> Tensor {
        let lifted;
        let mut h = if x.rank() == 1 {
            lifted = Tensor::matrix(1, x.numel(), x.data().to_vec()).expect("lift");
            lifted
        } else {
            x.clone()
        };
        for (l, layer) in self.layers.iter().enumerate() {
            h = crate::tensor::matmul(&h, &layer.w).expect("layer shapes");
            h = crate::tensor::add(&h, &layer.b).expect("bias shape");
            if l + 1 < self.layers.len() {
                h = crate::tensor::relu(&h);
            }
        }
        if x.rank() == 1 {
            Tensor::vector(h.data().to_vec())
        } else {
            h
        }
    }

    /// Layout of the flattened gradient vector for variance grouping.
    pub fn grad_groups(&self) -> Vec<GradGroup> {
        let mut groups = Vec::with_capacity(2 * self.layers.len());
        let mut offset = 0;
        for (layer, l) in self.layers.iter().enumerate() {
            let wn = l.w.numel();
            groups.push(GradGroup {
                layer,
                class: ParamClass::Weight,
                range: offset..offset + wn,
            });
            offset += wn;
            let bn = l.b.numel();
            groups.push(GradGroup { layer, class: ParamClass::Bias, range: offset..offset + bn });
            offset += bn;
        }
        groups
    }

    /// FNV-1a over the parameter bit patterns; used by invariants that
    /// assert parameters were left bit-untouched.
    pub fn param_hash(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for p in self.params() {
            for &x in p.data() {
                for byte in x.to_bits().to_le_bytes() {
                    h ^= byte as u64;
                    h = h.wrapping_mul(0x0000_0100_0000_01b3);
                }
            }
        }
        h
    }
}

/// Flatten per-parameter gradient tensors into one vector matching
/// [`Mlp::grad_groups`].
pub fn flatten_grads(grads: &[Tensor]) -> Vec<f64> {
    grads.iter().flat_map(|g| g.data().iter().copied()).collect()
}

/// target ← rho·online + (1−rho)·target, elementwise over all parameters.
pub fn polyak_update(online: &Mlp, target: &mut Mlp, rho: f64) -> Result<()> {
    let online_params = online.params();
    let mut target_params = target.params_mut();
    if online_params.len() != target_params.len() {
        return Err(Error::Shape("polyak over mismatched nets".into()));
    }
    for (o, t) in online_params.iter().zip(target_params.iter_mut()) {
        if o.shape() != t.shape() {
            return Err(Error::Shape(format!(
                "polyak {:?} vs {:?}",
                o.shape(),
                t.shape()
            )));
        }
        for (tv, &ov) in t.data_mut().iter_mut().zip(o.data()) {
            *tv = rho * ov + (1.0 - rho) * *tv;
        }
    }
    Ok(())
}

/// Per-agent online policy/critic plus frozen target copies and optimizer
/// state. Targets change only through [`polyak_update`].
pub struct AgentNets {
    pub policy: Mlp,
    pub critic: Mlp,
    pub target_policy: Mlp,
    pub target_critic: Mlp,
    pub policy_opt: AdamState,
    pub critic_opt: AdamState,
}

impl AgentNets {
    pub fn new(
        spec: &PosgSpec,
        agent: usize,
        hidden: usize,
        lr_policy: f64,
        lr_critic: f64,
        rng: &mut impl Rng,
    ) -> Self {
        let obs = spec.obs_lens[agent];
        let arity = spec.action_arities[agent];
        let joint: usize = spec.obs_lens.iter().sum::<usize>()
            + spec.action_arities.iter().sum::<usize>();
        let policy = Mlp::init_with_head_gain(&[obs, hidden, hidden, arity], 0.01, rng);
        let critic = Mlp::init(&[joint, hidden, hidden, 1], rng);
        let target_policy = policy.clone();
        let target_critic = critic.clone();
        let policy_opt = AdamState::new(&policy.param_shapes(), lr_policy);
        let critic_opt = AdamState::new(&critic.param_shapes(), lr_critic);
        AgentNets { policy, critic, target_policy, target_critic, policy_opt, critic_opt }
    }
}
