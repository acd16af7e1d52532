//! The five discrete gradient estimators and their sampling primitives.
//!
//! Every estimator in this family produces a hard one-hot action on the
//! forward path and differentiates a tempered-softmax surrogate on the
//! backward path. They differ only in how the surrogate's logit perturbation
//! is chosen:
//!
//! * STGS-1 / STGS-T: the same Gumbel noise that produced the hard sample.
//! * TAGS: STGS with an exponentially annealed temperature.
//! * GRMC-K: the mean of K Gumbel perturbations re-sampled conditionally on
//!   the realized action.
//! * GST: two deterministic perturbations that move the realized action to
//!   the top logit and enforce a gap of kappa below it.
//!
//! Perturbations enter the graph as constants, so the measured gradient is
//! exactly the surrogate's Jacobian at the perturbed point applied to the
//! upstream signal.

use rand::Rng;

use crate::error::{Error, Result};
use crate::tape::{Tape, Var};
use crate::tensor::{self, Tensor};

const UNIFORM_CLAMP: f64 = 1e-12;

/// Unconstrained parameter vector of a categorical distribution
/// (policy-head output). Length N ≥ 2, all finite.
#[derive(Debug, Clone, PartialEq)]
pub struct Logits(Vec<f64>);

impl Logits {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::Config(format!(
                "logit vector needs at least 2 entries, got {}",
                values.len()
            )));
        }
        if !values.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidInput("logits must be finite".into()));
        }
        Ok(Logits(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

/// Relaxation temperature over training time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TemperatureSchedule {
    Constant { tau: f64 },
    /// tau(t) = tau_start · (tau_end/tau_start)^(min(t, horizon)/horizon),
    /// clamped at tau_end beyond the horizon.
    Exponential { tau_start: f64, tau_end: f64, horizon: u64 },
}

impl TemperatureSchedule {
    pub fn constant(tau: f64) -> Result<Self> {
        if !(tau > 0.0) {
            return Err(Error::InvalidTemperature(tau));
        }
        Ok(TemperatureSchedule::Constant { tau })
    }

    pub fn exponential(tau_start: f64, tau_end: f64, horizon: u64) -> Result<Self> {
        if !(tau_start > 0.0) {
            return Err(Error::InvalidTemperature(tau_start));
        }
        if !(tau_end > 0.0) {
            return Err(Error::InvalidTemperature(tau_end));
        }
        if horizon == 0 {
            return Err(Error::Config("annealing horizon must be positive".into()));
        }
        Ok(TemperatureSchedule::Exponential { tau_start, tau_end, horizon })
    }

    /// Temperature at training step `t`.
    pub fn tau_at(&self, t: u64) -> f64 {
        match *self {
            TemperatureSchedule::Constant { tau } => tau,
            TemperatureSchedule::Exponential { tau_start, tau_end, horizon } => {
                let frac = t.min(horizon) as f64 / horizon as f64;
                tau_start * (tau_end / tau_start).powf(frac)
            }
        }
    }
}

/// Which estimator family a configuration selects.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EstimatorKind {
    Stgs1,
    StgsT,
    Tags,
    Grmck,
    Gst,
}

impl EstimatorKind {
    pub fn id(&self) -> &'static str {
        match self {
            EstimatorKind::Stgs1 => "stgs1",
            EstimatorKind::StgsT => "stgst",
            EstimatorKind::Tags => "tags",
            EstimatorKind::Grmck => "grmck",
            EstimatorKind::Gst => "gst",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "STGS1" | "STGS-1" => Ok(EstimatorKind::Stgs1),
            "STGST" | "STGS-T" => Ok(EstimatorKind::StgsT),
            "TAGS" => Ok(EstimatorKind::Tags),
            "GRMCK" | "GRMC" => Ok(EstimatorKind::Grmck),
            "GST" => Ok(EstimatorKind::Gst),
            other => Err(Error::Config(format!(
                "unknown estimator kind '{other}' (expected STGS1, STGST, TAGS, GRMCK, or GST)"
            ))),
        }
    }
}

/// Fully resolved estimator configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorConfig {
    pub kind: EstimatorKind,
    pub schedule: TemperatureSchedule,
    /// Conditional-sample count; meaningful for GRMC-K only.
    pub k: usize,
    /// Gap margin; meaningful for GST only.
    pub kappa: f64,
}

impl EstimatorConfig {
    pub fn new(
        kind: EstimatorKind,
        schedule: TemperatureSchedule,
        k: usize,
        kappa: f64,
    ) -> Result<Self> {
        if kind == EstimatorKind::Stgs1 && schedule != (TemperatureSchedule::Constant { tau: 1.0 })
        {
            return Err(Error::Config(
                "STGS1 fixes tau = 1.0; use STGST for other temperatures".into(),
            ));
        }
        if kind == EstimatorKind::Tags
            && !matches!(schedule, TemperatureSchedule::Exponential { .. })
        {
            return Err(Error::Config("TAGS requires an exponential schedule".into()));
        }
        if k == 0 {
            return Err(Error::Config("GRMC sample count K must be >= 1".into()));
        }
        if !(kappa > 0.0) {
            return Err(Error::Config(format!("GST gap kappa must be > 0, got {kappa}")));
        }
        Ok(EstimatorConfig { kind, schedule, k, kappa })
    }

    pub fn stgs1() -> Self {
        EstimatorConfig {
            kind: EstimatorKind::Stgs1,
            schedule: TemperatureSchedule::Constant { tau: 1.0 },
            k: 1,
            kappa: 1.0,
        }
    }

    pub fn stgs_t(tau: f64) -> Result<Self> {
        Self::new(EstimatorKind::StgsT, TemperatureSchedule::constant(tau)?, 1, 1.0)
    }

    pub fn tags(tau_start: f64, tau_end: f64, horizon: u64) -> Result<Self> {
        Self::new(
            EstimatorKind::Tags,
            TemperatureSchedule::exponential(tau_start, tau_end, horizon)?,
            1,
            1.0,
        )
    }

    pub fn grmck(tau: f64, k: usize) -> Result<Self> {
        Self::new(EstimatorKind::Grmck, TemperatureSchedule::constant(tau)?, k, 1.0)
    }

    pub fn gst(tau: f64, kappa: f64) -> Result<Self> {
        Self::new(EstimatorKind::Gst, TemperatureSchedule::constant(tau)?, 1, kappa)
    }

    pub fn tau_at(&self, t: u64) -> f64 {
        self.schedule.tau_at(t)
    }
}

/// Map a uniform draw in (0,1) to a standard Gumbel variate.
pub fn gumbel_from_uniform(u: f64) -> f64 {
    let u = u.clamp(UNIFORM_CLAMP, 1.0 - UNIFORM_CLAMP);
    -(-u.ln()).ln()
}

/// n i.i.d. standard Gumbel draws; uniforms are clamped away from {0, 1}
/// before the double log, so every output is finite.
pub fn sample_gumbel(n: usize, rng: &mut impl Rng) -> Vec<f64> {
    (0..n).map(|_| gumbel_from_uniform(rng.random::<f64>())).collect()
}

fn sample_exponential(rng: &mut impl Rng) -> f64 {
    let u: f64 = rng.random::<f64>().clamp(UNIFORM_CLAMP, 1.0 - UNIFORM_CLAMP);
    -u.ln()
}

/// One categorical draw a ~ softmax(zeta) via the Gumbel-max trick.
/// Consumes exactly `zeta.len()` uniforms, for every estimator, so swapping
/// estimators does not perturb a shared action-selection stream.
pub fn sample_hard(zeta: &[f64], rng: &mut impl Rng) -> usize {
    let g = sample_gumbel(zeta.len(), rng);
    let perturbed: Vec<f64> = zeta.iter().zip(&g).map(|(z, n)| z + n).collect();
    tensor::argmax(&perturbed)
}

/// Temperature at step `t` for a schedule; exposed as a free function to
/// mirror how training code consumes it.
pub fn anneal_temperature(schedule: &TemperatureSchedule, t: u64) -> f64 {
    schedule.tau_at(t)
}

/// Gumbel-perturbed logits conditioned on the realized one-hot index, using
/// the exponential-race construction: the conditional vector always argmaxes
/// at the realized index, while its mixture over a ~ softmax(zeta)
/// reproduces the unconditional zeta + Gumbel distribution.
pub fn conditional_gumbel(zeta: &[f64], index: usize, rng: &mut impl Rng) -> Vec<f64> {
    let exps: Vec<f64> = (0..zeta.len()).map(|_| sample_exponential(rng)).collect();
    conditional_gumbel_from_exponentials(zeta, index, &exps)
}

/// Deterministic part of [`conditional_gumbel`]; split out so tests can pin
/// the exponential draws.
pub fn conditional_gumbel_from_exponentials(
    zeta: &[f64],
    index: usize,
    exps: &[f64],
) -> Vec<f64> {
    let max = zeta.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let log_z = max + zeta.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
    let e_i = exps[index];
    zeta.iter()
        .zip(exps)
        .enumerate()
        .map(|(j, (&z, &e))| {
            if j == index {
                -e_i.ln() + log_z
            } else {
                -(e * (-z).exp() + e_i * (-log_z).exp()).ln()
            }
        })
        .collect()
}

/// Deterministic GST perturbations.
///
/// `m1` lifts the realized action's logit up to the maximum logit;
/// `m2` pushes every other logit at least `kappa` below that maximum.
pub fn gst_perturbations(zeta: &[f64], hard: &[f64], kappa: f64) -> (Vec<f64>, Vec<f64>) {
    let max = zeta.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let selected: f64 = tensor::dot(zeta, hard);
    let m1: Vec<f64> = hard.iter().map(|&a| (max - selected) * a).collect();
    let m2: Vec<f64> = zeta
        .iter()
        .zip(hard)
        .map(|(&z, &a)| -((kappa + z - max).max(0.0)) * (1.0 - a))
        .collect();
    (m1, m2)
}

/// Everything needed to build one relaxation on a tape: the realized action
/// plus the constant logit offsets whose tempered softmaxes form the
/// backward surrogate (averaged when there is more than one).
#[derive(Debug, Clone)]
pub struct RelaxationPlan {
    pub selected: usize,
    pub hard: Vec<f64>,
    pub tau: f64,
    pub offsets: Vec<Vec<f64>>,
}

fn plan_stgs(zeta: &[f64], tau: f64, rng: &mut impl Rng) -> RelaxationPlan {
    let g = sample_gumbel(zeta.len(), rng);
    let perturbed: Vec<f64> = zeta.iter().zip(&g).map(|(z, n)| z + n).collect();
    let selected = tensor::argmax(&perturbed);
    let mut hard = vec![0.0; zeta.len()];
    hard[selected] = 1.0;
    RelaxationPlan { selected, hard, tau, offsets: vec![g] }
}

fn plan_grmc(zeta: &[f64], tau: f64, k: usize, rng: &mut impl Rng) -> RelaxationPlan {
    let selected = sample_hard(zeta, rng);
    let mut hard = vec![0.0; zeta.len()];
    hard[selected] = 1.0;
    let offsets = (0..k)
        .map(|_| {
            let v = conditional_gumbel(zeta, selected, rng);
            v.iter().zip(zeta).map(|(vi, z)| vi - z).collect()
        })
        .collect();
    RelaxationPlan { selected, hard, tau, offsets }
}

fn plan_gst(zeta: &[f64], tau: f64, kappa: f64, rng: &mut impl Rng) -> RelaxationPlan {
    let selected = sample_hard(zeta, rng);
    let mut hard = vec![0.0; zeta.len()];
    hard[selected] = 1.0;
    let (m1, m2) = gst_perturbations(zeta, &hard, kappa);
    let offset = m1.iter().zip(&m2).map(|(a, b)| a + b).collect();
    RelaxationPlan { selected, hard, tau, offsets: vec![offset] }
}

/// Draw the sampling plan for one logit vector at training step `t`.
pub fn sample_plan(
    cfg: &EstimatorConfig,
    zeta: &[f64],
    t: u64,
    rng: &mut impl Rng,
) -> Result<RelaxationPlan> {
    if zeta.len() < 2 {
        return Err(Error::Config("need at least 2 logits".into()));
    }
    let tau = cfg.tau_at(t);
    if !(tau > 0.0) {
        return Err(Error::InvalidTemperature(tau));
    }
    Ok(match cfg.kind {
        EstimatorKind::Stgs1 | EstimatorKind::StgsT | EstimatorKind::Tags => {
            plan_stgs(zeta, tau, rng)
        }
        EstimatorKind::Grmck => plan_grmc(zeta, tau, cfg.k, rng),
        EstimatorKind::Gst => plan_gst(zeta, tau, cfg.kappa, rng),
    })
}

/// Hard one-hot sample paired with its on-graph surrogate and the
/// straight-through composition of the two.
#[derive(Debug, Clone)]
pub struct RelaxedAction {
    pub selected_index: usize,
    pub hard: Tensor,
    /// Relaxed surrogate on the tape (positive entries summing to 1).
    pub surrogate: Var,
    /// Straight-through node: forward value equals `hard`, backward routes
    /// through `surrogate`.
    pub output: Var,
}

/// Materialize a plan against a rank-1 logits node.
pub fn apply_plan(tape: &mut Tape, zeta: Var, plan: &RelaxationPlan) -> Result<RelaxedAction> {
    let n = tape.value(zeta).numel();
    if plan.hard.len() != n {
        return Err(Error::Shape(format!(
            "plan over {} categories applied to {n} logits",
            plan.hard.len()
        )));
    }
    let mut branches = Vec::with_capacity(plan.offsets.len());
    for offset in &plan.offsets {
        let off = tape.leaf(Tensor::vector(offset.clone()));
        let shifted = tape.add(zeta, off)?;
        branches.push(tape.softmax_tau(shifted, plan.tau)?);
    }
    let surrogate = average(tape, &branches)?;
    let hard = Tensor::vector(plan.hard.clone());
    let hard_leaf = tape.leaf(hard.clone());
    let output = tape.straight_through(hard_leaf, surrogate)?;
    Ok(RelaxedAction { selected_index: plan.selected, hard, surrogate, output })
}

fn average(tape: &mut Tape, branches: &[Var]) -> Result<Var> {
    let mut acc = branches[0];
    for &b in &branches[1..] {
        acc = tape.add(acc, b)?;
    }
    Ok(if branches.len() > 1 {
        tape.scale(acc, 1.0 / branches.len() as f64)
    } else {
        acc
    })
}

/// Straight-through Gumbel-Softmax sample at temperature `tau`.
pub fn stgs_sample(
    tape: &mut Tape,
    zeta: Var,
    tau: f64,
    rng: &mut impl Rng,
) -> Result<RelaxedAction> {
    if !(tau > 0.0) {
        return Err(Error::InvalidTemperature(tau));
    }
    let plan = plan_stgs(tape.value(zeta).data(), tau, rng);
    apply_plan(tape, zeta, &plan)
}

/// Gumbel-Rao Monte Carlo sample: hard draw plus a K-sample conditional
/// surrogate average.
pub fn grmc_sample(
    tape: &mut Tape,
    zeta: Var,
    tau: f64,
    k: usize,
    rng: &mut impl Rng,
) -> Result<RelaxedAction> {
    if !(tau > 0.0) {
        return Err(Error::InvalidTemperature(tau));
    }
    if k == 0 {
        return Err(Error::Config("GRMC sample count K must be >= 1".into()));
    }
    let plan = plan_grmc(tape.value(zeta).data(), tau, k, rng);
    apply_plan(tape, zeta, &plan)
}

/// Gapped straight-through sample with gap margin `kappa`.
pub fn gst_sample(
    tape: &mut Tape,
    zeta: Var,
    tau: f64,
    kappa: f64,
    rng: &mut impl Rng,
) -> Result<RelaxedAction> {
    if !(tau > 0.0) {
        return Err(Error::InvalidTemperature(tau));
    }
    if !(kappa > 0.0) {
        return Err(Error::Config(format!("GST gap kappa must be > 0, got {kappa}")));
    }
    let plan = plan_gst(tape.value(zeta).data(), tau, kappa, rng);
    apply_plan(tape, zeta, &plan)
}

/// Row-batched plans for a [rows × n] logit matrix. All rows share the
/// schedule step, so they share tau, K, and branch count.
pub fn sample_plans_rows(
    cfg: &EstimatorConfig,
    zeta_rows: &Tensor,
    t: u64,
    rng: &mut impl Rng,
) -> Result<Vec<RelaxationPlan>> {
    (0..zeta_rows.rows())
        .map(|r| sample_plan(cfg, zeta_rows.row(r), t, rng))
        .collect()
}

/// Batched straight-through relaxation over a [rows × n] logits node.
pub struct RowsRelaxed {
    pub hard: Tensor,
    /// Row-wise relaxed surrogate (K-branch average for GRMC).
    pub surrogate: Var,
    pub output: Var,
}

pub fn apply_plans_rows(
    tape: &mut Tape,
    zeta: Var,
    plans: &[RelaxationPlan],
) -> Result<RowsRelaxed> {
    let (rows, n) = (tape.value(zeta).rows(), tape.value(zeta).cols());
    if plans.len() != rows {
        return Err(Error::Shape(format!("{} plans for {rows} rows", plans.len())));
    }
    let branches = plans[0].offsets.len();
    let tau = plans[0].tau;
    if plans.iter().any(|p| p.offsets.len() != branches || p.tau != tau) {
        return Err(Error::Config("row plans must share tau and branch count".into()));
    }
    let mut branch_vars = Vec::with_capacity(branches);
    for kth in 0..branches {
        let mut data = Vec::with_capacity(rows * n);
        for p in plans {
            data.extend_from_slice(&p.offsets[kth]);
        }
        let off = tape.leaf(Tensor::matrix(rows, n, data)?);
        let shifted = tape.add(zeta, off)?;
        branch_vars.push(tape.softmax_tau(shifted, tau)?);
    }
    let surrogate = average(tape, &branch_vars)?;
    let mut hard_data = Vec::with_capacity(rows * n);
    for p in plans {
        hard_data.extend_from_slice(&p.hard);
    }
    let hard = Tensor::matrix(rows, n, hard_data)?;
    let hard_leaf = tape.leaf(hard.clone());
    let output = tape.straight_through(hard_leaf, surrogate)?;
    Ok(RowsRelaxed { hard, surrogate, output })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn gumbel_closed_forms() {
        assert!((gumbel_from_uniform((-1.0f64).exp()) - 0.0).abs() < 1e-12);
        assert!((gumbel_from_uniform((-std::f64::consts::E).exp()) + 1.0).abs() < 1e-12);
    }

    #[test]
    fn gumbel_mean_is_euler_mascheroni() {
        let mut r = rng(11);
        let n = 1_000_000;
        let mean: f64 = sample_gumbel(n, &mut r).iter().sum::<f64>() / n as f64;
        assert!((mean - 0.577_215_664_9).abs() < 0.005, "mean {mean}");
    }

    #[test]
    fn gumbel_draws_are_finite_even_at_extreme_uniforms() {
        assert!(gumbel_from_uniform(0.0).is_finite());
        assert!(gumbel_from_uniform(1.0).is_finite());
    }

    #[test]
    fn anneal_boundaries_and_midpoint() {
        let s = TemperatureSchedule::exponential(2.0, 0.5, 100).unwrap();
        assert!((anneal_temperature(&s, 0) - 2.0).abs() < 1e-12);
        assert!((anneal_temperature(&s, 100) - 0.5).abs() < 1e-12);
        assert!((anneal_temperature(&s, 50) - 1.0).abs() < 1e-12);
        // Clamped past the horizon.
        assert!((anneal_temperature(&s, 100_000) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn anneal_is_positive_and_monotone() {
        let s = TemperatureSchedule::exponential(2.0, 0.3, 977).unwrap();
        let mut prev = f64::INFINITY;
        for t in 0..2000 {
            let tau = s.tau_at(t);
            assert!(tau > 0.0);
            assert!(tau <= prev + 1e-15);
            prev = tau;
        }
    }

    #[test]
    fn stgs_pinned_noise_matches_hand_values() {
        // Zero noise: hard = argmax(zeta), surrogate = softmax(zeta).
        let mut tape = Tape::new();
        let zeta = tape.leaf(Tensor::vector(vec![1.0, 2.0]));
        let plan = RelaxationPlan {
            selected: 1,
            hard: vec![0.0, 1.0],
            tau: 1.0,
            offsets: vec![vec![0.0, 0.0]],
        };
        let act = apply_plan(&mut tape, zeta, &plan).unwrap();
        assert_eq!(act.hard.data(), &[0.0, 1.0]);
        let s = tape.value(act.surrogate).data().to_vec();
        assert!((s[0] - 0.268_941_421_4).abs() < 1e-9);
        assert!((s[1] - 0.731_058_578_6).abs() < 1e-9);
        assert_eq!(tape.value(act.output).data(), &[0.0, 1.0]);
    }

    #[test]
    fn stgs_symmetric_logits_sample_half_half() {
        let mut r = rng(5);
        let mut tape = Tape::new();
        let n = 100_000;
        let mut count1 = 0usize;
        for _ in 0..n {
            tape.clear();
            let zeta = tape.leaf(Tensor::vector(vec![0.0, 0.0]));
            let act = stgs_sample(&mut tape, zeta, 1.0, &mut r).unwrap();
            count1 += act.selected_index;
        }
        let freq = count1 as f64 / n as f64;
        assert!((freq - 0.5).abs() < 0.01, "freq {freq}");
    }

    #[test]
    fn stgs_hard_distribution_is_tau_free() {
        let zeta = [0.4, -0.9, 0.2];
        let n = 100_000;
        let mut counts = [[0usize; 3]; 2];
        for (ci, tau) in [1.0, 0.1].iter().enumerate() {
            let mut r = rng(17 + ci as u64);
            let mut tape = Tape::new();
            for _ in 0..n {
                tape.clear();
                let z = tape.leaf(Tensor::vector(zeta.to_vec()));
                let act = stgs_sample(&mut tape, z, *tau, &mut r).unwrap();
                counts[ci][act.selected_index] += 1;
            }
        }
        let tv: f64 = (0..3)
            .map(|j| ((counts[0][j] as f64 - counts[1][j] as f64) / n as f64).abs())
            .sum::<f64>()
            / 2.0;
        assert!(tv < 0.01, "tv {tv}");
    }

    #[test]
    fn invalid_temperature_is_rejected() {
        let mut r = rng(0);
        let mut tape = Tape::new();
        let z = tape.leaf(Tensor::vector(vec![0.0, 0.0]));
        assert!(matches!(
            stgs_sample(&mut tape, z, 0.0, &mut r),
            Err(Error::InvalidTemperature(_))
        ));
        assert!(matches!(
            grmc_sample(&mut tape, z, 1.0, 0, &mut r),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            gst_sample(&mut tape, z, 1.0, 0.0, &mut r),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn conditional_gumbel_always_argmaxes_at_condition() {
        let mut r = rng(23);
        let zeta = [0.3, -1.2, 2.0, 0.0, -0.5];
        for trial in 0..10_000 {
            let i = trial % zeta.len();
            let v = conditional_gumbel(&zeta, i, &mut r);
            assert_eq!(tensor::argmax(&v), i, "draw {trial}");
        }
    }

    #[test]
    fn conditional_gumbel_pinned_exponentials() {
        // zeta = [0,0], i = 0: v_0 = -ln(E_0) + ln 2.
        let v = conditional_gumbel_from_exponentials(&[0.0, 0.0], 0, &[0.7, 1.3]);
        assert!((v[0] - (-(0.7f64).ln() + (2.0f64).ln())).abs() < 1e-12);
        // and v_1 = -ln(E_1/exp(0) + E_0/2).
        assert!((v[1] - (-(1.3f64 + 0.35).ln())).abs() < 1e-12);
    }

    #[test]
    fn gst_perturbations_hand_cases() {
        // Realized action already at the argmax: m1 = 0.
        let (m1, m2) = gst_perturbations(&[1.0, 3.0], &[0.0, 1.0], 1.0);
        assert_eq!(m1, vec![0.0, 0.0]);
        assert_eq!(m2, vec![0.0, 0.0]);

        // Realized action below the argmax: lift it, push the old max down.
        let (m1, m2) = gst_perturbations(&[1.0, 3.0], &[1.0, 0.0], 1.0);
        assert_eq!(m1, vec![2.0, 0.0]);
        assert_eq!(m2, vec![0.0, -1.0]);
        let perturbed: Vec<f64> = [1.0, 3.0]
            .iter()
            .zip(m1.iter().zip(&m2))
            .map(|(z, (a, b))| z + a + b)
            .collect();
        assert_eq!(perturbed, vec![3.0, 2.0]);
    }

    #[test]
    fn gst_sample_is_consistent_and_gapped() {
        let mut r = rng(31);
        let kappa = 1.0;
        let mut tape = Tape::new();
        for _ in 0..10_000 {
            let zeta: Vec<f64> = (0..6).map(|_| r.random_range(-3.0..3.0)).collect();
            let max = zeta.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            tape.clear();
            let z = tape.leaf(Tensor::vector(zeta.clone()));
            let act = gst_sample(&mut tape, z, 1.0, kappa, &mut r).unwrap();
            let surrogate = tape.value(act.surrogate).data().to_vec();
            assert_eq!(tensor::argmax(&surrogate), act.selected_index);
            // Reconstruct perturbed logits to check the gap.
            let (m1, m2) = gst_perturbations(&zeta, act.hard.data(), kappa);
            for j in 0..zeta.len() {
                let pj = zeta[j] + m1[j] + m2[j];
                if j == act.selected_index {
                    assert!((pj - max).abs() < 1e-12);
                } else {
                    assert!(pj <= max - kappa + 1e-12, "logit {j} insufficiently gapped");
                }
            }
        }
    }

    #[test]
    fn gst_symmetric_logits_sample_half_half() {
        let mut r = rng(41);
        let mut tape = Tape::new();
        let n = 100_000;
        let mut count1 = 0usize;
        for _ in 0..n {
            tape.clear();
            let z = tape.leaf(Tensor::vector(vec![0.0, 0.0]));
            let act = gst_sample(&mut tape, z, 1.0, 1.0, &mut r).unwrap();
            count1 += act.selected_index;
        }
        let freq = count1 as f64 / n as f64;
        assert!((freq - 0.5).abs() < 0.01, "freq {freq}");
    }

    #[test]
    fn surrogates_are_simplex_points() {
        let mut r = rng(53);
        let mut tape = Tape::new();
        for cfg in [
            EstimatorConfig::stgs1(),
            EstimatorConfig::stgs_t(0.5).unwrap(),
            EstimatorConfig::tags(2.0, 0.3, 100).unwrap(),
            EstimatorConfig::grmck(1.0, 7).unwrap(),
            EstimatorConfig::gst(1.0, 1.0).unwrap(),
        ] {
            tape.clear();
            let zeta = vec![0.5, -0.25, 1.5, 0.0];
            let z = tape.leaf(Tensor::vector(zeta.clone()));
            let plan = sample_plan(&cfg, &zeta, 13, &mut r).unwrap();
            let act = apply_plan(&mut tape, z, &plan).unwrap();
            let s = tape.value(act.surrogate).data().to_vec();
            assert!((s.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(s.iter().all(|&p| p > 0.0));
            assert_eq!(act.hard.data()[act.selected_index], 1.0);
            assert_eq!(tape.value(act.output).data(), act.hard.data());
        }
    }

    #[test]
    fn grmc_rows_match_single_row_structure() {
        let mut r = rng(61);
        let cfg = EstimatorConfig::grmck(0.7, 3).unwrap();
        let zeta = Tensor::matrix(2, 3, vec![0.1, 0.2, -0.3, 1.0, 0.0, -1.0]).unwrap();
        let plans = sample_plans_rows(&cfg, &zeta, 0, &mut r).unwrap();
        let mut tape = Tape::new();
        let z = tape.leaf(zeta);
        let rows = apply_plans_rows(&mut tape, z, &plans).unwrap();
        assert_eq!(tape.value(rows.output).shape(), &[2, 3]);
        for (row, plan) in (0..2).zip(&plans) {
            assert_eq!(tape.value(rows.output).row(row), plan.hard.as_slice());
        }
    }
}
