//! Run orchestration: executes the configured algorithm for T generations,
//! writes a self-describing run directory, tracks the best policy seen, and
//! supports checkpoint resume plus post-hoc export and comparison.
//!
//! A run directory contains: `config.toml` (snapshot), `log.csv`
//! (per-generation stats), `overhead.csv` (per-generation final positions,
//! walker environments), `archive.jsonl`, `best_policy.bin`,
//! `checkpoint.json` and `summary.json`. With `record = true`, walker runs
//! also dump per-step trajectories to `trajectories.csv`.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::env::{walker_rollout_traced, EnvConfig, WalkerTrajectory};
use crate::error::{Error, Result};
use crate::es::{eval_episode_seed, EsHyper};
use crate::exec::WorkerPool;
use crate::explore::{init_run_state, run_generation, Algorithm, RunContext, RunState};
use crate::noise::NoiseTable;
use crate::policy::{save_theta_raw, MlpRunner, MlpSpec};
use crate::rng::mix;
use crate::stats::{bootstrap_ci_median, median};
use crate::tensor::ParameterVector;

pub const LOG_FILE: &str = "log.csv";
pub const OVERHEAD_FILE: &str = "overhead.csv";
pub const ARCHIVE_FILE: &str = "archive.jsonl";
pub const BEST_POLICY_FILE: &str = "best_policy.bin";
pub const CHECKPOINT_FILE: &str = "checkpoint.json";
pub const SUMMARY_FILE: &str = "summary.json";
pub const CONFIG_SNAPSHOT_FILE: &str = "config.toml";
pub const TRAJECTORIES_FILE: &str = "trajectories.csv";

const LOG_HEADER: &str =
    "gen,agent_id,mean_fitness,max_fitness,best_so_far,novelty_of_theta,w,archive_size";
const OVERHEAD_HEADER: &str = "gen,agent_id,x,y";
const TRAJECTORIES_HEADER: &str = "gen,step,x,y,reward";

/// Final self-description of a completed run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub algorithm: Algorithm,
    pub env: String,
    pub run_seed: u64,
    pub best_mean_reward: f64,
    pub generations: u64,
    pub wall_seconds: f64,
}

#[derive(Debug, Clone)]
pub struct RunRecord {
    pub output_dir: PathBuf,
    pub summary: Summary,
}

/// Best policy seen so far, measured as the mean reward over the evaluation
/// episodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct BestSnapshot {
    mean_reward: f64,
    agent_id: usize,
    generation: u64,
    theta: ParameterVector,
}

#[derive(Debug, Serialize, Deserialize)]
struct Checkpoint {
    run_seed: u64,
    algorithm: Algorithm,
    env: String,
    next_generation: u64,
    state: RunState,
    best: BestSnapshot,
}

fn append_line(path: &Path, line: &str) -> Result<()> {
    let mut f = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| Error::io(path, e))?;
    writeln!(f, "{line}").map_err(|e| Error::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Drop rows with `gen >= from_generation` (seed rows use gen = -1 and are
/// always kept); used when resuming over a partially written log.
fn truncate_log(path: &Path, from_generation: u64) -> Result<()> {
    if !path.exists() {
        return Ok(());
    }
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut kept = String::new();
    for (i, line) in text.lines().enumerate() {
        if i == 0 {
            kept.push_str(line);
            kept.push('\n');
            continue;
        }
        let gen: i64 = line
            .split(',')
            .next()
            .and_then(|g| g.parse().ok())
            .unwrap_or(i64::MAX);
        if gen < from_generation as i64 {
            kept.push_str(line);
            kept.push('\n');
        }
    }
    std::fs::write(path, kept).map_err(|e| Error::io(path, e))
}

fn mean_eval(
    env: &EnvConfig,
    spec: Option<&MlpSpec>,
    theta: &ParameterVector,
    run_seed: u64,
    episodes: usize,
) -> Result<f64> {
    let mut total = 0.0;
    for e in 0..episodes {
        total += env
            .evaluate(spec, theta, eval_episode_seed(run_seed, e))?
            .total_reward;
    }
    Ok(total / episodes as f64)
}

/// Execute a run. If the output directory holds a checkpoint of the same
/// run, training resumes from it; a finished run is returned as-is.
pub fn run(config: &RunConfig) -> Result<RunRecord> {
    config.validate()?;
    let start = Instant::now();
    let dir = &config.output_dir;
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    std::fs::write(dir.join(CONFIG_SNAPSHOT_FILE), config.to_toml_string())
        .map_err(|e| Error::io(dir.join(CONFIG_SNAPSHOT_FILE), e))?;

    let spec = config.mlp_spec();
    let table = NoiseTable::new(config.table_seed(), config.noise_table.len);
    let pool = WorkerPool::new(config.effective_workers())?;
    let ctx = RunContext {
        algorithm: config.algorithm,
        run_seed: config.run_seed,
        env: &config.env,
        policy_spec: spec.as_ref(),
        table: &table,
        pool: &pool,
        hyper: EsHyper {
            n: config.hyper.n,
            sigma: config.hyper.sigma,
            mirrored: config.hyper.mirrored,
        },
        weight_decay: config.hyper.weight_decay,
        archive_probability: config.hyper.archive_probability,
        eval_episodes: config.hyper.eval_episodes,
    };
    let generations = config.hyper.generations;
    let log_path = dir.join(LOG_FILE);
    let overhead_path = dir.join(OVERHEAD_FILE);
    let trajectories_path = dir.join(TRAJECTORIES_FILE);
    let checkpoint_path = dir.join(CHECKPOINT_FILE);

    // fresh start or resume
    let (mut state, mut best, start_generation) = if checkpoint_path.exists() {
        let text = std::fs::read_to_string(&checkpoint_path)
            .map_err(|e| Error::io(&checkpoint_path, e))?;
        let cp: Checkpoint = serde_json::from_str(&text)?;
        if cp.run_seed != config.run_seed
            || cp.algorithm != config.algorithm
            || cp.env != config.env.kind_name()
        {
            return Err(Error::CheckpointMismatch(format!(
                "checkpoint is for {} seed {} on {}",
                cp.algorithm, cp.run_seed, cp.env
            )));
        }
        truncate_log(&log_path, cp.next_generation)?;
        truncate_log(&overhead_path, cp.next_generation)?;
        truncate_log(&trajectories_path, cp.next_generation)?;
        eprintln!(
            "resuming {} from generation {}",
            dir.display(),
            cp.next_generation
        );
        (cp.state, cp.best, cp.next_generation)
    } else {
        let state = init_run_state(
            &ctx,
            config.hyper.m,
            config.hyper.k,
            config.hyper.alpha,
            config.hyper.initial_w,
            config.hyper.t_w,
            config.hyper.delta_w,
        )?;
        // initial evaluation of every agent seeds the best-policy tracker
        let mut best: Option<BestSnapshot> = None;
        for agent in &state.pop.agents {
            let mean = mean_eval(
                &config.env,
                spec.as_ref(),
                &agent.theta,
                config.run_seed,
                config.hyper.eval_episodes,
            )?;
            if best.as_ref().is_none_or(|b| mean > b.mean_reward) {
                best = Some(BestSnapshot {
                    mean_reward: mean,
                    agent_id: agent.agent_id,
                    generation: 0,
                    theta: agent.theta.clone(),
                });
            }
        }
        let best = best.expect("population is non-empty");

        append_line(&log_path, LOG_HEADER)?;
        if config.env.has_final_positions() {
            append_line(&overhead_path, OVERHEAD_HEADER)?;
            // seed rows: initial behavior of each agent, gen = -1
            for agent in &state.pop.agents {
                if let crate::archive::BehaviorDescriptor::FinalPosition { position } =
                    &agent.current_bc
                {
                    append_line(
                        &overhead_path,
                        &format!("-1,{},{},{}", agent.agent_id, position[0], position[1]),
                    )?;
                }
            }
            if config.record {
                append_line(&trajectories_path, TRAJECTORIES_HEADER)?;
            }
        }
        (state, best, 0)
    };

    for generation in start_generation..generations {
        let report = run_generation(&ctx, &mut state, generation)?;

        let mut row = String::new();
        let novelty_field = report
            .novelty_of_selected
            .map_or(String::new(), |n| n.to_string());
        write!(
            row,
            "{},{},{},{},{},{},{},{}",
            generation,
            report.selected_agent,
            report.stats.mean_fitness,
            report.stats.max_fitness,
            best.mean_reward,
            novelty_field,
            report.w,
            report.archive_size
        )
        .expect("writing to String cannot fail");
        append_line(&log_path, &row)?;

        if let Some(position) = report.post_update.final_position {
            append_line(
                &overhead_path,
                &format!(
                    "{},{},{},{}",
                    generation, report.selected_agent, position[0], position[1]
                ),
            )?;
            if config.record {
                record_trajectory(
                    &trajectories_path,
                    &config.env,
                    spec.as_ref(),
                    &state,
                    report.selected_agent,
                    generation,
                    config.run_seed,
                )?;
            }
        }

        if (generation + 1) % config.hyper.eval_every == 0 {
            track_best(config, spec.as_ref(), &state, generation + 1, &mut best)?;
            let checkpoint = Checkpoint {
                run_seed: config.run_seed,
                algorithm: config.algorithm,
                env: config.env.kind_name().to_string(),
                next_generation: generation + 1,
                state: state.clone(),
                best: best.clone(),
            };
            let tmp = checkpoint_path.with_extension("json.tmp");
            write_json(&tmp, &checkpoint)?;
            std::fs::rename(&tmp, &checkpoint_path).map_err(|e| Error::io(&checkpoint_path, e))?;
        }
    }
    if generations > 0 && !generations.is_multiple_of(config.hyper.eval_every) {
        track_best(config, spec.as_ref(), &state, generations, &mut best)?;
    }

    if let Some(archive) = &state.archive {
        archive.save_jsonl(&dir.join(ARCHIVE_FILE))?;
    }
    let artifact_hash = spec
        .as_ref()
        .map(MlpSpec::spec_hash)
        .unwrap_or_else(|| mix(&[best.theta.dim() as u64]));
    save_theta_raw(&dir.join(BEST_POLICY_FILE), artifact_hash, &best.theta)?;

    let summary = Summary {
        algorithm: config.algorithm,
        env: config.env.kind_name().to_string(),
        run_seed: config.run_seed,
        best_mean_reward: best.mean_reward,
        generations,
        wall_seconds: start.elapsed().as_secs_f64(),
    };
    write_json(&dir.join(SUMMARY_FILE), &summary)?;

    Ok(RunRecord {
        output_dir: dir.clone(),
        summary,
    })
}

fn track_best(
    config: &RunConfig,
    spec: Option<&MlpSpec>,
    state: &RunState,
    generation: u64,
    best: &mut BestSnapshot,
) -> Result<()> {
    for agent in &state.pop.agents {
        let mean = mean_eval(
            &config.env,
            spec,
            &agent.theta,
            config.run_seed,
            config.hyper.eval_episodes,
        )?;
        if mean > best.mean_reward {
            *best = BestSnapshot {
                mean_reward: mean,
                agent_id: agent.agent_id,
                generation,
                theta: agent.theta.clone(),
            };
        }
    }
    Ok(())
}

fn record_trajectory(
    path: &Path,
    env: &EnvConfig,
    spec: Option<&MlpSpec>,
    state: &RunState,
    agent_id: usize,
    generation: u64,
    run_seed: u64,
) -> Result<()> {
    let EnvConfig::Walker(walker) = env else {
        return Ok(());
    };
    let spec = spec.ok_or(Error::MissingPolicySpec)?;
    let theta = &state.pop.agents[agent_id].theta;
    let mut runner = MlpRunner::new(spec, theta.as_slice())?;
    let mut trace = WalkerTrajectory::default();
    walker_rollout_traced(
        walker,
        &mut runner,
        eval_episode_seed(run_seed, 0),
        Some(&mut trace),
    )?;
    let mut energy = 0.0;
    let mut lines = String::new();
    for (step, (position, force)) in trace.positions.iter().zip(&trace.forces).enumerate() {
        energy += force[0] * force[0] + force[1] * force[1];
        let base = match walker.reward {
            crate::env::WalkerReward::Isotropic => {
                (position[0] * position[0] + position[1] * position[1]).sqrt()
            }
            crate::env::WalkerReward::DistanceX => position[0],
        };
        let running = base - walker.energy_cost * energy;
        writeln!(
            lines,
            "{},{},{},{},{}",
            generation, step, position[0], position[1], running
        )
        .expect("writing to String cannot fail");
    }
    let mut f = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| Error::io(path, e))?;
    f.write_all(lines.as_bytes())
        .map_err(|e| Error::io(path, e))
}

/// Per-generation final positions of a completed walker run, as CSV text
/// with columns `gen,agent_id,x,y` (seed rows use gen = -1).
pub fn export_overhead(run_dir: &Path) -> Result<String> {
    let config_text = std::fs::read_to_string(run_dir.join(CONFIG_SNAPSHOT_FILE))
        .map_err(|e| Error::io(run_dir.join(CONFIG_SNAPSHOT_FILE), e))?;
    let config = RunConfig::from_toml_str(&config_text)?;
    if !config.env.has_final_positions() {
        return Err(Error::NoFinalPositions);
    }
    let path = run_dir.join(OVERHEAD_FILE);
    std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))
}

/// One aggregate row of [`compare`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompareRow {
    pub algorithm: String,
    pub env: String,
    pub runs: usize,
    pub median_best_reward: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
}

/// Aggregate completed runs: per (algorithm, env) cell, the median over runs
/// of each run's best mean reward, with a seeded 1000-resample bootstrap 95%
/// CI of that median. Directories without a summary are reported as absent.
pub fn compare(
    run_dirs: &[PathBuf],
    bootstrap_seed: u64,
) -> Result<(Vec<CompareRow>, Vec<PathBuf>)> {
    let mut cells: std::collections::BTreeMap<(String, String), Vec<f64>> =
        std::collections::BTreeMap::new();
    let mut absent = Vec::new();
    for dir in run_dirs {
        let path = dir.join(SUMMARY_FILE);
        let Ok(text) = std::fs::read_to_string(&path) else {
            absent.push(dir.clone());
            continue;
        };
        let summary: Summary = serde_json::from_str(&text)?;
        cells
            .entry((summary.algorithm.name().to_string(), summary.env))
            .or_default()
            .push(summary.best_mean_reward);
    }
    let rows = cells
        .into_iter()
        .map(|((algorithm, env), values)| {
            let (ci_lo, ci_hi) = bootstrap_ci_median(&values, 1000, 0.95, bootstrap_seed);
            CompareRow {
                algorithm,
                env,
                runs: values.len(),
                median_best_reward: median(&values),
                ci_lo,
                ci_hi,
            }
        })
        .collect();
    Ok((rows, absent))
}
