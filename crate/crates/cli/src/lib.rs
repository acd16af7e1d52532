//! Command implementations behind the `dge` binary: train, estats, bench,
//! gradvar, and report. Owns the output-directory layout
//! `<out>/<task>/<estimator>/<seed>/…` and the `.partial` write discipline.

pub mod config;

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use dge_core::bench::{bench_table, write_bench_csv};
use dge_core::envs::lookup_task;
use dge_core::estimators::EstimatorConfig;
use dge_core::evalstats::{summarize_returns, welch_t_test, ReturnCurve, ReturnSummary};
use dge_core::maddpg::{evaluate_traced, save_checkpoint, train};
use dge_core::oracle::{estimator_stats, rao_blackwell_report, write_stats_csv, ObjectiveTable, StatsRow};

use config::ExperimentConfig;

/// Failure category; determines the process exit code (2 config, 3 runtime).
#[derive(Debug)]
pub enum CliError {
    Config(String),
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Runtime(_) => 3,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::Runtime(_) => "runtime",
        }
    }

    pub fn message(&self) -> &str {
        match self {
            CliError::Config(m) | CliError::Runtime(m) => m,
        }
    }
}

impl From<dge_core::Error> for CliError {
    fn from(e: dge_core::Error) -> Self {
        match e {
            dge_core::Error::Config(_) => CliError::Config(e.to_string()),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Train,
    Estats,
    Bench,
    Gradvar,
    Report,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Train => "train",
            Command::Estats => "estats",
            Command::Bench => "bench",
            Command::Gradvar => "gradvar",
            Command::Report => "report",
        }
    }
}

/// `#`-prefixed metadata header: command, timestamp, and the fully resolved
/// config. Timestamps live only here, never in CSV bodies.
fn meta_lines(cmd: Command, cfg: &ExperimentConfig) -> Vec<String> {
    let ts = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    let mut lines = vec![
        format!("dge {} output", cmd.name()),
        format!("generated-at = {ts}"),
        "resolved config:".to_string(),
    ];
    lines.extend(cfg.echo.iter().cloned());
    lines
}

fn write_meta(w: &mut dyn Write, meta: &[String]) -> Result<(), CliError> {
    for line in meta {
        writeln!(w, "# {line}")?;
    }
    Ok(())
}

/// Write a file through a `.partial` sibling, renaming only on success so a
/// failed run leaves its partial output behind for inspection.
fn write_atomic(
    path: &Path,
    body: impl FnOnce(&mut dyn Write) -> Result<(), CliError>,
) -> Result<(), CliError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let partial = path.with_extension(format!(
        "{}.partial",
        path.extension().and_then(|e| e.to_str()).unwrap_or("out")
    ));
    let mut w = BufWriter::new(fs::File::create(&partial)?);
    body(&mut w)?;
    w.flush()?;
    drop(w);
    fs::rename(&partial, path)?;
    Ok(())
}

fn require_task(cfg: &ExperimentConfig) -> Result<String, CliError> {
    cfg.task_name
        .clone()
        .ok_or_else(|| CliError::Config("this command needs task.name (or a global 'task =' line)".into()))
}

fn run_dir(cfg: &ExperimentConfig, task: &str, seed: u64) -> PathBuf {
    cfg.out_dir.join(task).join(cfg.estimator.kind.id()).join(seed.to_string())
}

/// Run training for every seed (sequentially here; see [`run`] for the
/// process-per-seed path), writing metrics, checkpoints, and optional
/// gradient-variance and trace files.
fn train_seeds(cfg: &ExperimentConfig, task_name: &str, with_gradvar: bool) -> Result<(), CliError> {
    let task = lookup_task(task_name)?;
    let cmd = if with_gradvar { Command::Gradvar } else { Command::Train };
    for &seed in &cfg.seeds {
        let dir = run_dir(cfg, task_name, seed);
        let mut tc = cfg.train.clone();
        tc.seed = seed;
        if !with_gradvar {
            tc.gradvar_period = 0;
        }
        let meta = meta_lines(cmd, cfg);

        let mut gradvar_buf: Vec<u8> = Vec::new();
        let mut outcome = None;
        write_atomic(&dir.join("metrics.csv"), |w| {
            write_meta(w, &meta)?;
            let gv: Option<&mut dyn Write> =
                if with_gradvar { Some(&mut gradvar_buf) } else { None };
            outcome = Some(train(&task, task_name, &tc, w, gv)?);
            Ok(())
        })?;
        let outcome = outcome.expect("train ran");
        if outcome.skipped_updates > 0 {
            eprintln!(
                "note: seed {seed}: {} updates skipped on non-finite losses",
                outcome.skipped_updates
            );
        }

        if with_gradvar {
            write_atomic(&dir.join("gradvar.csv"), |w| {
                write_meta(w, &meta)?;
                w.write_all(&gradvar_buf)?;
                Ok(())
            })?;
        }

        save_checkpoint(&dir, &outcome.nets, &meta)?;

        if cfg.trace {
            write_atomic(&dir.join("trace.csv"), |w| {
                write_meta(w, &meta)?;
                writeln!(w, "step,agent,action,reward,done")?;
                evaluate_traced(
                    &outcome.nets,
                    &task,
                    cfg.train.eval_episodes,
                    seed ^ 0x7ace,
                    Some(w),
                )?;
                Ok(())
            })?;
        }
    }
    Ok(())
}

/// One parsed metrics file: (seed, eval steps, mean returns).
struct SeedCurve {
    seed: u64,
    steps: Vec<u64>,
    means: Vec<f64>,
}

fn read_metrics_csv(path: &Path) -> Result<SeedCurve, CliError> {
    let text = fs::read_to_string(path)?;
    let mut seed = None;
    let mut steps = Vec::new();
    let mut means = Vec::new();
    for line in text.lines() {
        if line.starts_with('#') || line.starts_with("step,") || line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 6 {
            return Err(CliError::Runtime(format!(
                "{}: malformed metrics row '{line}'",
                path.display()
            )));
        }
        let parse_err =
            |what: &str| CliError::Runtime(format!("{}: bad {what} in '{line}'", path.display()));
        steps.push(fields[0].parse().map_err(|_| parse_err("step"))?);
        seed = Some(fields[1].parse().map_err(|_| parse_err("seed"))?);
        means.push(fields[4].parse().map_err(|_| parse_err("return"))?);
    }
    let seed = seed.ok_or_else(|| {
        CliError::Runtime(format!("{}: no evaluation rows", path.display()))
    })?;
    Ok(SeedCurve { seed, steps, means })
}

/// Collect the per-seed curves under `<out>/<task>/<estimator>/` into one
/// ReturnCurve, seeds sorted.
fn collect_curve(est_dir: &Path) -> Result<Option<(ReturnCurve, Vec<u64>)>, CliError> {
    let mut curves = Vec::new();
    if !est_dir.is_dir() {
        return Ok(None);
    }
    let mut entries: Vec<PathBuf> = fs::read_dir(est_dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.join("metrics.csv").is_file())
        .collect();
    if entries.is_empty() {
        return Ok(None);
    }
    entries.sort();
    for dir in entries {
        curves.push(read_metrics_csv(&dir.join("metrics.csv"))?);
    }
    curves.sort_by_key(|c| c.seed);
    let steps = curves[0].steps.clone();
    for c in &curves {
        if c.steps != steps {
            return Err(CliError::Runtime(format!(
                "{}: seed {} evaluated on a different step grid",
                est_dir.display(),
                c.seed
            )));
        }
    }
    let seeds = curves.iter().map(|c| c.seed).collect();
    let per_seed = curves.into_iter().map(|c| c.means).collect();
    Ok(Some((ReturnCurve { steps, per_seed }, seeds)))
}

fn summary_row(
    w: &mut dyn Write,
    task: &str,
    estimator: &str,
    s: &ReturnSummary,
    mark: &str,
) -> Result<(), CliError> {
    writeln!(
        w,
        "{},{},{},{},{},{},{}",
        task, estimator, s.max_return, s.max_ci, s.avg_return, s.avg_ci, mark
    )?;
    Ok(())
}

const SUMMARY_HEADER: &str =
    "task,estimator,max_return,max_ci,avg_return,avg_ci,significant_vs_best";

/// Per-run summary written next to the seed directories after `train`.
fn write_run_summary(cfg: &ExperimentConfig, task_name: &str) -> Result<(), CliError> {
    let est_dir = cfg.out_dir.join(task_name).join(cfg.estimator.kind.id());
    let (curve, _) = collect_curve(&est_dir)?
        .ok_or_else(|| CliError::Runtime(format!("no metrics under {}", est_dir.display())))?;
    let summary = summarize_returns(&curve)?;
    let meta = meta_lines(Command::Train, cfg);
    write_atomic(&est_dir.join("summary.csv"), |w| {
        write_meta(w, &meta)?;
        writeln!(w, "{SUMMARY_HEADER}")?;
        summary_row(w, task_name, cfg.estimator.kind.id(), &summary, "")
    })
}

fn cmd_train(
    cfg: &ExperimentConfig,
    with_gradvar: bool,
    config_path: &Path,
    sets: &[String],
) -> Result<(), CliError> {
    let task_name = require_task(cfg)?;
    if cfg.parallel_seeds {
        spawn_per_seed_workers(cfg, config_path, sets, with_gradvar)?;
    } else {
        train_seeds(cfg, &task_name, with_gradvar)?;
    }
    if cfg.write_summary {
        write_run_summary(cfg, &task_name)?;
    }
    Ok(())
}

/// Opt-in seed parallelism: one independent worker process per seed, no
/// shared state; the summary pass merges their outputs afterwards.
fn spawn_per_seed_workers(
    cfg: &ExperimentConfig,
    config_path: &Path,
    sets: &[String],
    with_gradvar: bool,
) -> Result<(), CliError> {
    let exe = std::env::current_exe()?;
    let sub = if with_gradvar { "gradvar" } else { "train" };
    let mut children = Vec::new();
    for &seed in &cfg.seeds {
        let mut cmd = std::process::Command::new(&exe);
        cmd.arg(sub).arg("--config").arg(config_path);
        for s in sets {
            cmd.arg("--set").arg(s);
        }
        cmd.arg("--set").arg(format!("train.seeds={seed}"));
        cmd.arg("--set").arg("output.parallel_seeds=false");
        cmd.arg("--set").arg("output.write_summary=false");
        children.push((seed, cmd.spawn()?));
    }
    for (seed, mut child) in children {
        let status = child.wait()?;
        if !status.success() {
            return Err(CliError::Runtime(format!(
                "seed {seed} worker exited with {status}"
            )));
        }
    }
    Ok(())
}

fn cmd_estats(cfg: &ExperimentConfig) -> Result<(), CliError> {
    let zeta = &cfg.estats.zeta;
    let f = ObjectiveTable::new(cfg.estats.objective.clone())?;
    if cfg.estats.objective.len() != zeta.len() {
        return Err(CliError::Config(
            "estats.zeta and estats.objective must have equal length".into(),
        ));
    }
    let mut rows: Vec<StatsRow> = Vec::new();
    for (ti, &tau) in cfg.estats.taus.iter().enumerate() {
        let seed = cfg.estats.seed.wrapping_add(1000 * ti as u64);
        rows.extend(rao_blackwell_report(
            zeta,
            &f,
            tau,
            &cfg.estats.k_list,
            cfg.estats.n_samples,
            cfg.estats.shards,
            seed,
        )?);
        let gst = EstimatorConfig::gst(tau, cfg.estats.kappa)?;
        rows.push(StatsRow {
            estimator: "gst".into(),
            tau,
            k: None,
            kappa: Some(cfg.estats.kappa),
            stats: estimator_stats(
                &gst,
                zeta,
                &f,
                cfg.estats.n_samples,
                cfg.estats.shards,
                seed.wrapping_add(500),
            )?,
        });
    }
    let meta = meta_lines(Command::Estats, cfg);
    write_atomic(&cfg.out_dir.join("estats.csv"), |w| {
        write_meta(w, &meta)?;
        write_stats_csv(w, &rows)?;
        Ok(())
    })
}

fn cmd_bench(cfg: &ExperimentConfig) -> Result<(), CliError> {
    if cfg.parallel_seeds {
        return Err(CliError::Config(
            "the benchmark is strictly single-threaded; disable output.parallel_seeds".into(),
        ));
    }
    let tau = cfg.bench.tau;
    let configs = vec![
        EstimatorConfig::stgs_t(tau)?,
        EstimatorConfig::grmck(tau, 1)?,
        EstimatorConfig::grmck(tau, 10)?,
        EstimatorConfig::grmck(tau, 50)?,
        EstimatorConfig::gst(tau, 1.0)?,
    ];
    let rows = bench_table(
        &cfg.bench.dims,
        &configs,
        cfg.bench.reps,
        cfg.bench.instances,
        cfg.bench.seed,
    )?;
    let meta = meta_lines(Command::Bench, cfg);
    write_atomic(&cfg.out_dir.join("bench.csv"), |w| {
        write_bench_csv(w, &meta, &rows)?;
        Ok(())
    })
}

fn cmd_report(cfg: &ExperimentConfig) -> Result<(), CliError> {
    // Discover <out>/<task>/<estimator>/<seed>/metrics.csv by layout.
    let mut tasks: Vec<PathBuf> = fs::read_dir(&cfg.out_dir)
        .map_err(|e| CliError::Runtime(format!("{}: {e}", cfg.out_dir.display())))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    tasks.sort();

    struct Cell {
        task: String,
        estimator: String,
        summary: ReturnSummary,
    }
    let mut cells: Vec<Cell> = Vec::new();
    for task_dir in &tasks {
        let task = task_dir.file_name().unwrap().to_string_lossy().to_string();
        let mut est_dirs: Vec<PathBuf> = fs::read_dir(task_dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.is_dir())
            .collect();
        est_dirs.sort();
        for est_dir in est_dirs {
            if let Some((curve, _)) = collect_curve(&est_dir)? {
                cells.push(Cell {
                    task: task.clone(),
                    estimator: est_dir.file_name().unwrap().to_string_lossy().to_string(),
                    summary: summarize_returns(&curve)?,
                });
            }
        }
    }
    if cells.is_empty() {
        return Err(CliError::Runtime(format!(
            "no training runs found under {}",
            cfg.out_dir.display()
        )));
    }

    let meta = meta_lines(Command::Report, cfg);
    write_atomic(&cfg.out_dir.join("report.csv"), |w| {
        write_meta(w, &meta)?;
        writeln!(w, "{SUMMARY_HEADER}")?;
        let mut task_names: Vec<String> = cells.iter().map(|c| c.task.clone()).collect();
        task_names.sort();
        task_names.dedup();
        for task in task_names {
            let group: Vec<&Cell> = cells.iter().filter(|c| c.task == task).collect();
            let best = group
                .iter()
                .max_by(|a, b| {
                    a.summary
                        .max_return
                        .partial_cmp(&b.summary.max_return)
                        .expect("finite returns")
                })
                .expect("non-empty group");
            for cell in &group {
                let mark = if cell.estimator == best.estimator {
                    "best"
                } else {
                    // Equivalence mark: not significantly different from the
                    // best cell (Welch, 5% level) on per-seed best-step
                    // returns.
                    let significant = welch_t_test(
                        &cell.summary.per_seed_at_best,
                        &best.summary.per_seed_at_best,
                    )
                    .map(|(_, _, p)| p <= 0.05)
                    .unwrap_or(true);
                    if significant {
                        ""
                    } else {
                        "*"
                    }
                };
                summary_row(w, &task, &cell.estimator, &cell.summary, mark)?;
            }
        }
        Ok(())
    })
}

/// Dispatch one subcommand. `config_path` and `sets` are forwarded to
/// per-seed worker processes when parallel seeds are enabled.
pub fn run(
    cmd: Command,
    cfg: &ExperimentConfig,
    config_path: &Path,
    sets: &[String],
) -> Result<(), CliError> {
    match cmd {
        Command::Train => cmd_train(cfg, false, config_path, sets),
        Command::Gradvar => cmd_train(cfg, true, config_path, sets),
        Command::Estats => cmd_estats(cfg),
        Command::Bench => cmd_bench(cfg),
        Command::Report => cmd_report(cfg),
    }
}
