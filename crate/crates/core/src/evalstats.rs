//! Return-metric summaries, Welch's t-test, and mini-batch gradient-variance
//! records.

use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};

/// Per-seed evaluation returns over a shared grid of training steps.
#[derive(Debug, Clone)]
pub struct ReturnCurve {
    /// Strictly increasing evaluation steps.
    pub steps: Vec<u64>,
    /// `per_seed[s][e]` = mean return of seed `s` at evaluation `e`.
    pub per_seed: Vec<Vec<f64>>,
}

/// Output of [`summarize_returns`].
#[derive(Debug, Clone, PartialEq)]
pub struct ReturnSummary {
    pub max_return: f64,
    pub max_ci: f64,
    pub avg_return: f64,
    pub avg_ci: f64,
    /// Step at which the seed-averaged return peaks.
    pub best_step: u64,
    /// Per-seed returns at that step (the sample the paper-style
    /// significance test runs on).
    pub per_seed_at_best: Vec<f64>,
}

/// Sample mean and 95% CI half-width (Student-t, n−1 dof). A single value
/// has zero width by convention.
pub fn mean_ci95(xs: &[f64]) -> Result<(f64, f64)> {
    if xs.is_empty() {
        return Err(Error::EmptyInput("confidence interval over no samples".into()));
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() == 1 {
        return Ok((mean, 0.0));
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    if var == 0.0 {
        return Ok((mean, 0.0));
    }
    let t = StudentsT::new(0.0, 1.0, n - 1.0)
        .expect("valid dof")
        .inverse_cdf(0.975);
    Ok((mean, t * (var / n).sqrt()))
}

/// Maximum return (seed-mean at the best evaluation step, CI across seeds at
/// that step) and average return (grand mean, CI across per-seed grand
/// means).
pub fn summarize_returns(curve: &ReturnCurve) -> Result<ReturnSummary> {
    if curve.per_seed.is_empty() || curve.steps.is_empty() {
        return Err(Error::EmptyInput("return curve has no data".into()));
    }
    let n_evals = curve.steps.len();
    if !curve.steps.windows(2).all(|w| w[0] < w[1]) {
        return Err(Error::InvalidInput("evaluation steps must strictly increase".into()));
    }
    for row in &curve.per_seed {
        if row.len() != n_evals {
            return Err(Error::Shape(format!(
                "seed row of {} evals, expected {n_evals}",
                row.len()
            )));
        }
        if row.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidInput("NaN in return curve".into()));
        }
    }
    let n_seeds = curve.per_seed.len();

    let mut best_eval = 0;
    let mut best_mean = f64::NEG_INFINITY;
    for e in 0..n_evals {
        let mean: f64 =
            curve.per_seed.iter().map(|row| row[e]).sum::<f64>() / n_seeds as f64;
        if mean > best_mean {
            best_mean = mean;
            best_eval = e;
        }
    }
    let per_seed_at_best: Vec<f64> = curve.per_seed.iter().map(|row| row[best_eval]).collect();
    let (max_return, max_ci) = mean_ci95(&per_seed_at_best)?;

    let grand_means: Vec<f64> = curve
        .per_seed
        .iter()
        .map(|row| row.iter().sum::<f64>() / n_evals as f64)
        .collect();
    let (avg_return, avg_ci) = mean_ci95(&grand_means)?;

    Ok(ReturnSummary {
        max_return,
        max_ci,
        avg_return,
        avg_ci,
        best_step: curve.steps[best_eval],
        per_seed_at_best,
    })
}

/// Welch's two-sample t-test: statistic, Welch–Satterthwaite degrees of
/// freedom, and the two-sided p-value. Degenerate zero-variance samples with
/// equal means give p = 1 by convention.
pub fn welch_t_test(sample_a: &[f64], sample_b: &[f64]) -> Result<(f64, f64, f64)> {
    if sample_a.len() < 2 || sample_b.len() < 2 {
        return Err(Error::InsufficientSamples(
            "welch_t_test needs at least 2 values per sample".into(),
        ));
    }
    let (na, nb) = (sample_a.len() as f64, sample_b.len() as f64);
    let ma = sample_a.iter().sum::<f64>() / na;
    let mb = sample_b.iter().sum::<f64>() / nb;
    let va = sample_a.iter().map(|x| (x - ma) * (x - ma)).sum::<f64>() / (na - 1.0);
    let vb = sample_b.iter().map(|x| (x - mb) * (x - mb)).sum::<f64>() / (nb - 1.0);
    let se2 = va / na + vb / nb;
    if se2 == 0.0 {
        let dof = (na + nb - 2.0).max(1.0);
        return if ma == mb {
            Ok((0.0, dof, 1.0))
        } else if ma < mb {
            Ok((f64::NEG_INFINITY, dof, 0.0))
        } else {
            Ok((f64::INFINITY, dof, 0.0))
        };
    }
    let t = (ma - mb) / se2.sqrt();
    let dof = se2 * se2
        / ((va / na) * (va / na) / (na - 1.0) + (vb / nb) * (vb / nb) / (nb - 1.0));
    let dist = StudentsT::new(0.0, 1.0, dof).expect("positive dof");
    let p = 2.0 * (1.0 - dist.cdf(t.abs()));
    Ok((t, dof, p))
}

/// Parameter class of a gradient group.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamClass {
    Weight,
    Bias,
}

impl ParamClass {
    pub fn label(&self) -> &'static str {
        match self {
            ParamClass::Weight => "weight",
            ParamClass::Bias => "bias",
        }
    }
}

/// Maps a contiguous slice of the flattened gradient vector to a
/// (layer, parameter-class) group.
#[derive(Debug, Clone)]
pub struct GradGroup {
    pub layer: usize,
    pub class: ParamClass,
    pub range: std::ops::Range<usize>,
}

/// Variance of one gradient group across a mini-batch.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupVariance {
    pub layer: usize,
    pub class: ParamClass,
    pub variance: f64,
}

/// Full gradient-variance record as written to the CSV stream.
#[derive(Debug, Clone, PartialEq)]
pub struct GradVarianceRecord {
    pub step: u64,
    pub agent: usize,
    pub layer: usize,
    pub class: ParamClass,
    pub variance: f64,
}

/// Per-parameter unbiased variance across the batch dimension, averaged
/// within each (layer, class) group.
pub fn grad_variance_batch(
    per_sample_grads: &[Vec<f64>],
    groups: &[GradGroup],
) -> Result<Vec<GroupVariance>> {
    if per_sample_grads.len() < 2 {
        return Err(Error::InsufficientSamples(
            "gradient variance needs a batch of at least 2".into(),
        ));
    }
    let dim = per_sample_grads[0].len();
    if per_sample_grads.iter().any(|g| g.len() != dim) {
        return Err(Error::Shape("ragged per-sample gradient matrix".into()));
    }
    let n = per_sample_grads.len() as f64;
    let mut mean = vec![0.0; dim];
    for g in per_sample_grads {
        for (m, &x) in mean.iter_mut().zip(g) {
            *m += x / n;
        }
    }
    let mut var = vec![0.0; dim];
    for g in per_sample_grads {
        for ((v, &x), m) in var.iter_mut().zip(g).zip(&mean) {
            *v += (x - m) * (x - m) / (n - 1.0);
        }
    }
    Ok(groups
        .iter()
        .map(|grp| {
            let slice = &var[grp.range.clone()];
            GroupVariance {
                layer: grp.layer,
                class: grp.class,
                variance: slice.iter().sum::<f64>() / slice.len() as f64,
            }
        })
        .collect())
}
