//! INI-style experiment configuration: flat `key = value` lines under
//! `[estimator] [train] [task] [output]` (plus `[bench]` and `[estats]` for
//! those subcommands), with line-numbered errors, hard failures on unknown
//! keys, and flag overrides applied on top of the file.

use std::collections::BTreeMap;
use std::path::PathBuf;

use dge_core::estimators::{EstimatorConfig, EstimatorKind, TemperatureSchedule};
use dge_core::maddpg::TrainConfig;

/// Configuration failure with the offending line when it came from the file.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub message: String,
}

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.line {
            Some(line) => write!(f, "line {line}: {}", self.message),
            None => write!(f, "{}", self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

fn err(line: Option<usize>, message: impl Into<String>) -> ConfigError {
    ConfigError { line, message: message.into() }
}

/// Section.key → (value, source line). Flag overrides carry no line.
#[derive(Debug, Default, Clone)]
pub struct RawConfig {
    entries: BTreeMap<String, (String, Option<usize>)>,
}

/// Keys accepted before any `[section]` header, mapped to their canonical
/// section.
const GLOBAL_ALIASES: &[(&str, &str)] = &[
    ("task", "task.name"),
    ("seeds", "train.seeds"),
    ("out", "output.dir"),
];

const SCHEMA: &[&str] = &[
    "task.name",
    "estimator.kind",
    "estimator.tau",
    "estimator.tau_start",
    "estimator.tau_end",
    "estimator.anneal_fraction",
    "estimator.k",
    "estimator.kappa",
    "train.total_steps",
    "train.batch_size",
    "train.gamma",
    "train.polyak",
    "train.update_period",
    "train.warmup_steps",
    "train.eval_period",
    "train.eval_episodes",
    "train.buffer_capacity",
    "train.lr_policy",
    "train.lr_critic",
    "train.hidden_width",
    "train.max_grad_norm",
    "train.seeds",
    "train.target_actions",
    "train.other_actions",
    "train.gradvar_period",
    "output.dir",
    "output.trace",
    "output.parallel_seeds",
    "output.write_summary",
    "bench.dims",
    "bench.reps",
    "bench.instances",
    "bench.tau",
    "bench.seed",
    "estats.zeta",
    "estats.objective",
    "estats.taus",
    "estats.k_list",
    "estats.n_samples",
    "estats.shards",
    "estats.seed",
    "estats.kappa",
];

impl RawConfig {
    fn insert(&mut self, key: String, value: String, line: Option<usize>) -> Result<(), ConfigError> {
        if !SCHEMA.contains(&key.as_str()) {
            return Err(err(line, format!("unknown key '{key}'")));
        }
        self.entries.insert(key, (value, line));
        Ok(())
    }

    fn get(&self, key: &str) -> Option<&(String, Option<usize>)> {
        self.entries.get(key)
    }
}

/// Parse INI text. Full-line comments start with `#` or `;`.
pub fn parse_ini(text: &str) -> Result<RawConfig, ConfigError> {
    let mut raw = RawConfig::default();
    let mut section: Option<String> = None;
    for (idx, line) in text.lines().enumerate() {
        let lineno = idx + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') || trimmed.starts_with(';') {
            continue;
        }
        if let Some(name) = trimmed.strip_prefix('[') {
            let name = name
                .strip_suffix(']')
                .ok_or_else(|| err(Some(lineno), "unterminated section header"))?
                .trim();
            if !["task", "estimator", "train", "output", "bench", "estats"].contains(&name) {
                return Err(err(Some(lineno), format!("unknown section '[{name}]'")));
            }
            section = Some(name.to_string());
            continue;
        }
        let (key, value) = trimmed
            .split_once('=')
            .ok_or_else(|| err(Some(lineno), format!("expected 'key = value', got '{trimmed}'")))?;
        let key = key.trim();
        let value = value.trim().to_string();
        let full_key = match &section {
            Some(s) => format!("{s}.{key}"),
            None => GLOBAL_ALIASES
                .iter()
                .find(|(alias, _)| *alias == key)
                .map(|(_, canon)| canon.to_string())
                .ok_or_else(|| {
                    err(
                        Some(lineno),
                        format!("key '{key}' used before any [section] header"),
                    )
                })?,
        };
        raw.insert(full_key, value, Some(lineno))?;
    }
    Ok(raw)
}

/// Apply `--set section.key=value` overrides (bare global aliases accepted).
pub fn apply_overrides(raw: &mut RawConfig, sets: &[String]) -> Result<(), ConfigError> {
    for s in sets {
        let (key, value) = s
            .split_once('=')
            .ok_or_else(|| err(None, format!("--set needs KEY=VALUE, got '{s}'")))?;
        let key = key.trim();
        let canon = GLOBAL_ALIASES
            .iter()
            .find(|(alias, _)| *alias == key)
            .map(|(_, c)| c.to_string())
            .unwrap_or_else(|| key.to_string());
        raw.insert(canon, value.trim().to_string(), None)?;
    }
    Ok(())
}

struct Resolver<'a> {
    raw: &'a RawConfig,
}

impl<'a> Resolver<'a> {
    fn str_or(&self, key: &str, default: &str) -> String {
        self.raw.get(key).map(|(v, _)| v.clone()).unwrap_or_else(|| default.to_string())
    }

    fn parse<T: std::str::FromStr>(&self, key: &str, default: T) -> Result<T, ConfigError> {
        match self.raw.get(key) {
            None => Ok(default),
            Some((v, line)) => v.parse().map_err(|_| {
                err(
                    *line,
                    format!(
                        "key '{key}': cannot parse '{v}' as {}",
                        std::any::type_name::<T>()
                    ),
                )
            }),
        }
    }

    fn parse_list<T: std::str::FromStr>(
        &self,
        key: &str,
        default: &[T],
    ) -> Result<Vec<T>, ConfigError>
    where
        T: Clone,
    {
        match self.raw.get(key) {
            None => Ok(default.to_vec()),
            Some((v, line)) => v
                .split(',')
                .map(|piece| {
                    piece.trim().parse().map_err(|_| {
                        err(*line, format!("key '{key}': bad list element '{}'", piece.trim()))
                    })
                })
                .collect(),
        }
    }

    fn bool_or(&self, key: &str, default: bool) -> Result<bool, ConfigError> {
        match self.raw.get(key) {
            None => Ok(default),
            Some((v, line)) => match v.to_ascii_lowercase().as_str() {
                "true" | "1" | "yes" => Ok(true),
                "false" | "0" | "no" => Ok(false),
                other => Err(err(*line, format!("key '{key}': expected bool, got '{other}'"))),
            },
        }
    }

    fn line_of(&self, key: &str) -> Option<usize> {
        self.raw.get(key).and_then(|(_, l)| *l)
    }
}

/// Benchmark subcommand settings.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchSettings {
    pub dims: Vec<usize>,
    pub reps: usize,
    pub instances: usize,
    pub tau: f64,
    pub seed: u64,
}

/// Estimator-statistics subcommand settings.
#[derive(Debug, Clone, PartialEq)]
pub struct EstatsSettings {
    pub zeta: Vec<f64>,
    pub objective: Vec<f64>,
    pub taus: Vec<f64>,
    pub k_list: Vec<usize>,
    pub n_samples: usize,
    pub shards: usize,
    pub seed: u64,
    pub kappa: f64,
}

/// Fully resolved experiment configuration plus its echo lines.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub task_name: Option<String>,
    pub estimator: EstimatorConfig,
    pub train: TrainConfig,
    pub seeds: Vec<u64>,
    pub out_dir: PathBuf,
    pub trace: bool,
    pub parallel_seeds: bool,
    pub write_summary: bool,
    pub bench: BenchSettings,
    pub estats: EstatsSettings,
    /// Sorted `section.key = value` lines covering every resolved key; a run
    /// is reproducible from this dump alone.
    pub echo: Vec<String>,
}

pub fn resolve(raw: &RawConfig) -> Result<ExperimentConfig, ConfigError> {
    let r = Resolver { raw };

    let task_name = raw.get("task.name").map(|(v, _)| v.clone());
    if let Some(name) = &task_name {
        dge_core::envs::lookup_task(name)
            .map_err(|e| err(r.line_of("task.name"), e.to_string()))?;
    }

    let total_steps: u64 = r.parse("train.total_steps", 50_000)?;

    let kind_str = r.str_or("estimator.kind", "STGS1");
    let kind = EstimatorKind::parse(&kind_str)
        .map_err(|e| err(r.line_of("estimator.kind"), e.to_string()))?;
    let tau: f64 = r.parse("estimator.tau", if kind == EstimatorKind::StgsT { 0.5 } else { 1.0 })?;
    let tau_start: f64 = r.parse("estimator.tau_start", 2.0)?;
    let tau_end: f64 = r.parse("estimator.tau_end", 0.3)?;
    let anneal_fraction: f64 = r.parse("estimator.anneal_fraction", 0.6)?;
    let k: usize = r.parse("estimator.k", 10)?;
    let kappa: f64 = r.parse("estimator.kappa", 1.0)?;

    if !(tau > 0.0) {
        return Err(err(
            r.line_of("estimator.tau"),
            format!("key 'estimator.tau': must be > 0, got {tau}"),
        ));
    }
    if kind == EstimatorKind::Stgs1 && tau != 1.0 {
        return Err(err(
            r.line_of("estimator.tau"),
            "key 'estimator.tau': STGS1 fixes tau = 1.0; use kind = STGST to tune it",
        ));
    }
    if !(anneal_fraction > 0.0 && anneal_fraction <= 1.0) {
        return Err(err(
            r.line_of("estimator.anneal_fraction"),
            format!("key 'estimator.anneal_fraction': must be in (0,1], got {anneal_fraction}"),
        ));
    }

    let schedule = match kind {
        EstimatorKind::Tags => {
            let horizon = ((total_steps as f64 * anneal_fraction).round() as u64).max(1);
            TemperatureSchedule::exponential(tau_start, tau_end, horizon)
        }
        _ => TemperatureSchedule::constant(tau),
    }
    .map_err(|e| err(None, e.to_string()))?;
    let estimator = EstimatorConfig::new(kind, schedule, k, kappa)
        .map_err(|e| err(None, e.to_string()))?;

    let seeds: Vec<u64> = r.parse_list("train.seeds", &[1, 2, 3])?;
    if seeds.is_empty() {
        return Err(err(r.line_of("train.seeds"), "key 'train.seeds': must be non-empty"));
    }
    {
        let mut sorted = seeds.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != seeds.len() {
            return Err(err(r.line_of("train.seeds"), "key 'train.seeds': seeds must be distinct"));
        }
    }

    let target_actions = r.str_or("train.target_actions", "greedy");
    let target_actions_sampled = match target_actions.as_str() {
        "greedy" => false,
        "sampled" => true,
        other => {
            return Err(err(
                r.line_of("train.target_actions"),
                format!("key 'train.target_actions': expected greedy|sampled, got '{other}'"),
            ))
        }
    };
    let other_actions = r.str_or("train.other_actions", "recompute");
    let replay_other_actions = match other_actions.as_str() {
        "recompute" => false,
        "replay" => true,
        other => {
            return Err(err(
                r.line_of("train.other_actions"),
                format!("key 'train.other_actions': expected recompute|replay, got '{other}'"),
            ))
        }
    };

    let train = TrainConfig {
        total_steps,
        batch_size: r.parse("train.batch_size", 256)?,
        gamma: r.parse("train.gamma", 0.99)?,
        polyak: r.parse("train.polyak", 0.01)?,
        update_period: r.parse("train.update_period", 100)?,
        warmup_steps: r.parse("train.warmup_steps", 1000)?,
        eval_period: r.parse("train.eval_period", 5000)?,
        eval_episodes: r.parse("train.eval_episodes", 20)?,
        buffer_capacity: r.parse("train.buffer_capacity", 100_000)?,
        lr_policy: r.parse("train.lr_policy", 3e-4)?,
        lr_critic: r.parse("train.lr_critic", 3e-4)?,
        hidden_width: r.parse("train.hidden_width", 64)?,
        max_grad_norm: r.parse("train.max_grad_norm", 10.0)?,
        estimator: estimator.clone(),
        target_actions_sampled,
        replay_other_actions,
        gradvar_period: r.parse("train.gradvar_period", 1)?,
        seed: seeds[0],
    };
    train.validate().map_err(|e| err(None, e.to_string()))?;

    let bench = BenchSettings {
        dims: r.parse_list("bench.dims", &[2, 10, 100, 1000])?,
        reps: r.parse("bench.reps", 10_000)?,
        instances: r.parse("bench.instances", 5)?,
        tau: r.parse("bench.tau", 1.0)?,
        seed: r.parse("bench.seed", 1)?,
    };
    let estats = EstatsSettings {
        zeta: r.parse_list("estats.zeta", &[0.5, 1.0, -0.3])?,
        objective: r.parse_list("estats.objective", &[1.0, 0.0, -1.0])?,
        taus: r.parse_list("estats.taus", &[1.0, 0.5, 0.1])?,
        k_list: r.parse_list("estats.k_list", &[1, 10, 50])?,
        n_samples: r.parse("estats.n_samples", 100_000)?,
        shards: r.parse("estats.shards", 4)?,
        seed: r.parse("estats.seed", 1)?,
        kappa: r.parse("estats.kappa", 1.0)?,
    };

    let mut cfg = ExperimentConfig {
        task_name,
        estimator,
        train,
        seeds,
        out_dir: PathBuf::from(r.str_or("output.dir", "out")),
        trace: r.bool_or("output.trace", false)?,
        parallel_seeds: r.bool_or("output.parallel_seeds", false)?,
        write_summary: r.bool_or("output.write_summary", true)?,
        bench,
        estats,
        echo: Vec::new(),
    };
    cfg.echo = echo_lines(&cfg, &kind_str, tau, tau_start, tau_end, anneal_fraction);
    Ok(cfg)
}

fn fmt_list<T: std::fmt::Display>(xs: &[T]) -> String {
    xs.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

fn echo_lines(
    cfg: &ExperimentConfig,
    kind: &str,
    tau: f64,
    tau_start: f64,
    tau_end: f64,
    anneal_fraction: f64,
) -> Vec<String> {
    let t = &cfg.train;
    let mut lines = vec![
        format!("bench.dims = {}", fmt_list(&cfg.bench.dims)),
        format!("bench.instances = {}", cfg.bench.instances),
        format!("bench.reps = {}", cfg.bench.reps),
        format!("bench.seed = {}", cfg.bench.seed),
        format!("bench.tau = {}", cfg.bench.tau),
        format!("estats.k_list = {}", fmt_list(&cfg.estats.k_list)),
        format!("estats.kappa = {}", cfg.estats.kappa),
        format!("estats.n_samples = {}", cfg.estats.n_samples),
        format!("estats.objective = {}", fmt_list(&cfg.estats.objective)),
        format!("estats.seed = {}", cfg.estats.seed),
        format!("estats.shards = {}", cfg.estats.shards),
        format!("estats.taus = {}", fmt_list(&cfg.estats.taus)),
        format!("estats.zeta = {}", fmt_list(&cfg.estats.zeta)),
        format!("estimator.anneal_fraction = {anneal_fraction}"),
        format!("estimator.k = {}", cfg.estimator.k),
        format!("estimator.kappa = {}", cfg.estimator.kappa),
        format!("estimator.kind = {}", kind.to_ascii_uppercase()),
        format!("estimator.tau = {tau}"),
        format!("estimator.tau_end = {tau_end}"),
        format!("estimator.tau_start = {tau_start}"),
        format!("output.dir = {}", cfg.out_dir.display()),
        format!("output.parallel_seeds = {}", cfg.parallel_seeds),
        format!("output.trace = {}", cfg.trace),
        format!("output.write_summary = {}", cfg.write_summary),
        format!("train.batch_size = {}", t.batch_size),
        format!("train.buffer_capacity = {}", t.buffer_capacity),
        format!("train.eval_episodes = {}", t.eval_episodes),
        format!("train.eval_period = {}", t.eval_period),
        format!("train.gamma = {}", t.gamma),
        format!("train.gradvar_period = {}", t.gradvar_period),
        format!("train.hidden_width = {}", t.hidden_width),
        format!("train.lr_critic = {}", t.lr_critic),
        format!("train.lr_policy = {}", t.lr_policy),
        format!("train.max_grad_norm = {}", t.max_grad_norm),
        format!(
            "train.other_actions = {}",
            if t.replay_other_actions { "replay" } else { "recompute" }
        ),
        format!("train.polyak = {}", t.polyak),
        format!("train.seeds = {}", fmt_list(&cfg.seeds)),
        format!(
            "train.target_actions = {}",
            if t.target_actions_sampled { "sampled" } else { "greedy" }
        ),
        format!("train.total_steps = {}", t.total_steps),
        format!("train.update_period = {}", t.update_period),
        format!("train.warmup_steps = {}", t.warmup_steps),
    ];
    if let Some(name) = &cfg.task_name {
        lines.push(format!("task.name = {name}"));
    }
    lines.sort();
    lines
}
