//! Wall-clock microbenchmark of the estimator classes across logit
//! dimensionalities.
//!
//! The timed region is one full relaxation as paid inside an actor update:
//! noise sampling, graph construction, the tempered-softmax surrogate,
//! straight-through composition, a linear objective, and the backward pass
//! to the logit gradient. Repetitions are timed in one aggregated window per
//! instance (and flagged as such), since a single relaxation sits near the
//! timer floor. Strictly single-threaded.

use std::io::Write;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::estimators::{apply_plan, sample_plan, EstimatorConfig};
use crate::evalstats::mean_ci95;
use crate::tape::Tape;
use crate::tensor::Tensor;

/// Aggregate timing for one (estimator, dimensionality) cell.
#[derive(Debug, Clone)]
pub struct BenchResult {
    /// Estimator class label: "stgs", "grmc", or "gst".
    pub estimator: String,
    pub k: Option<usize>,
    pub dim: usize,
    pub mean_us: f64,
    pub ci_us: f64,
    /// Mean-time ratio against the STGS row at the same dimensionality;
    /// 1.0 for STGS itself.
    pub slowdown_vs_stgs: f64,
    /// True when repetitions were aggregated into one timing window because
    /// a single relaxation is below the timer's useful resolution.
    pub aggregated: bool,
}

/// Class label for the benchmark tables: STGS-1/STGS-T/TAGS share "stgs".
pub fn class_label(cfg: &EstimatorConfig) -> &'static str {
    use crate::estimators::EstimatorKind::*;
    match cfg.kind {
        Stgs1 | StgsT | Tags => "stgs",
        Grmck => "grmc",
        Gst => "gst",
    }
}

fn one_relaxation(
    tape: &mut Tape,
    cfg: &EstimatorConfig,
    zeta: &[f64],
    objective: &[f64],
    rng: &mut ChaCha8Rng,
) -> Result<f64> {
    tape.clear();
    let z = tape.leaf(Tensor::vector(zeta.to_vec()));
    let plan = sample_plan(cfg, zeta, 0, rng)?;
    let act = apply_plan(tape, z, &plan)?;
    let w = tape.leaf(Tensor::vector(objective.to_vec()));
    let loss = tape.dot(w, act.output)?;
    tape.backward(loss)?;
    Ok(tape.grad(z).data()[0])
}

/// Time `n_reps` relaxations of `cfg` on each of `n_instances` random logit
/// vectors of length `dim`; report the per-relaxation mean with a 95% CI
/// over instances.
pub fn time_estimator(
    cfg: &EstimatorConfig,
    dim: usize,
    n_reps: usize,
    n_instances: usize,
    seed: u64,
) -> Result<BenchResult> {
    if dim < 2 {
        return Err(Error::Config(format!("benchmark dim must be >= 2, got {dim}")));
    }
    if n_reps < 100 {
        return Err(Error::Config(format!("benchmark needs >= 100 reps, got {n_reps}")));
    }
    if n_instances == 0 {
        return Err(Error::Config("benchmark needs at least one logit instance".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut tape = Tape::new();
    let mut per_instance_us = Vec::with_capacity(n_instances);
    let mut sink = 0.0;
    for _ in 0..n_instances {
        let zeta: Vec<f64> = (0..dim).map(|_| rng.random_range(-2.0..2.0)).collect();
        let objective: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        // Warm-up outside the timed window.
        for _ in 0..n_reps / 10 + 1 {
            sink += one_relaxation(&mut tape, cfg, &zeta, &objective, &mut rng)?;
        }
        let start = Instant::now();
        for _ in 0..n_reps {
            sink += one_relaxation(&mut tape, cfg, &zeta, &objective, &mut rng)?;
        }
        let elapsed = start.elapsed();
        per_instance_us.push(elapsed.as_secs_f64() * 1e6 / n_reps as f64);
    }
    std::hint::black_box(sink);
    let (mean_us, ci_us) = mean_ci95(&per_instance_us).expect("instances > 0");
    Ok(BenchResult {
        estimator: class_label(cfg).to_string(),
        k: match cfg.kind {
            crate::estimators::EstimatorKind::Grmck => Some(cfg.k),
            _ => None,
        },
        dim,
        mean_us,
        ci_us,
        slowdown_vs_stgs: f64::NAN,
        aggregated: mean_us < 1.0,
    })
}

/// Time an empty closure loop: the harness-overhead control measurement.
pub fn time_noop(n_reps: usize) -> f64 {
    let mut acc = 0u64;
    let start = Instant::now();
    for i in 0..n_reps {
        acc = acc.wrapping_add(std::hint::black_box(i as u64));
    }
    std::hint::black_box(acc);
    start.elapsed().as_secs_f64() * 1e6 / n_reps as f64
}

/// Full dims × configs cross product with per-dimension slowdown ratios
/// against the STGS row. The first config must be the STGS baseline.
pub fn bench_table(
    dims: &[usize],
    configs: &[EstimatorConfig],
    n_reps: usize,
    n_instances: usize,
    seed: u64,
) -> Result<Vec<BenchResult>> {
    if dims.is_empty() {
        return Err(Error::EmptyInput("benchmark dims".into()));
    }
    if configs.is_empty() || class_label(&configs[0]) != "stgs" {
        return Err(Error::Config("bench_table needs the STGS baseline first".into()));
    }
    let mut out = Vec::with_capacity(dims.len() * configs.len());
    for &dim in dims {
        let mut baseline_us = f64::NAN;
        for (ci, cfg) in configs.iter().enumerate() {
            let cell_seed = seed
                .wrapping_add((dim as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
                .wrapping_add(ci as u64);
            let mut r = time_estimator(cfg, dim, n_reps, n_instances, cell_seed)?;
            if ci == 0 {
                baseline_us = r.mean_us;
            }
            r.slowdown_vs_stgs = r.mean_us / baseline_us;
            out.push(r);
        }
    }
    Ok(out)
}

/// CSV emission: `estimator,K,dim,mean_us,ci_us,slowdown_vs_stgs` after any
/// `#`-prefixed metadata lines supplied by the caller.
pub fn write_bench_csv(w: &mut dyn Write, meta: &[String], rows: &[BenchResult]) -> Result<()> {
    for line in meta {
        writeln!(w, "# {line}")?;
    }
    writeln!(
        w,
        "# timed region: sampling + relaxation + backward vs a linear objective; \
         reps aggregated per timing window"
    )?;
    writeln!(w, "estimator,K,dim,mean_us,ci_us,slowdown_vs_stgs")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{:.4},{:.4},{:.4}",
            r.estimator,
            r.k.map(|k| k.to_string()).unwrap_or_default(),
            r.dim,
            r.mean_us,
            r.ci_us,
            r.slowdown_vs_stgs
        )?;
    }
    Ok(())
}
