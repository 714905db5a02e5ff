use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::{ExperimentConfig, Mode};
use super::eval::EvalReport;
use super::metrics::MetricsRecord;
use super::trainer::{Checkpoint, Trainer};
use crate::demonstrations::{self, DemonstrationSet};
use crate::environment::Environment;
use crate::error::{Error, Result};
use crate::rewards::RewardSchedule;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub mode: Mode,
    pub seed: u64,
    pub iterations: u64,
    pub env_steps: u64,
    pub scene_hash: String,
    pub chain_hash: String,
    pub demo_hash: Option<String>,
    pub demo_mean_length: Option<f64>,
    /// True when the cascade reached its own stop criterion before the budget ran out.
    pub stopped_by_criterion: bool,
    pub eval: Option<EvalReport>,
    pub wall_seconds: f64,
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn file_hash(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Keeps only the metrics lines written before `iteration`, so a resumed run
/// produces the same log as an uninterrupted one.
fn truncate_metrics(path: &Path, iteration: u64) -> Result<()> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut kept = String::new();
    for line in BufReader::new(file).lines() {
        let line = line.map_err(|e| Error::io(path, e))?;
        match serde_json::from_str::<MetricsRecord>(&line) {
            Ok(r) if r.iteration < iteration => {
                kept.push_str(&line);
                kept.push('\n');
            }
            _ => break,
        }
    }
    write_file(path, &kept)
}

/// Trains according to `config`, writing everything into `out`:
/// `config.toml` with copies of the scene, chain and reward files, `metrics.jsonl`,
/// `checkpoints/` and `report.json`. With `resume`, continues from
/// `checkpoints/latest.json` when it exists.
pub fn cmd_train(config: &ExperimentConfig, out: &Path, resume: bool) -> Result<RunReport> {
    config.validate()?;
    let started = Instant::now();
    let env = config.load_env()?;
    let rewards = config.load_rewards()?;
    let demos: Option<DemonstrationSet> = match &config.demos {
        Some(p) if config.mode != Mode::RlOnly => Some(demonstrations::load(p, &env)?),
        _ => None,
    };
    let demo_hash = match &config.demos {
        Some(p) if demos.is_some() => Some(file_hash(p)?),
        _ => None,
    };

    let ckpt_dir = out.join("checkpoints");
    fs::create_dir_all(&ckpt_dir).map_err(|e| Error::io(&ckpt_dir, e))?;
    write_file(&out.join("scene.toml"), &env.scene.to_toml_string())?;
    write_file(&out.join("chain.toml"), &env.chain.to_toml_string())?;
    write_file(&out.join("rewards.toml"), &rewards.to_toml_string())?;
    let mut saved = config.clone();
    saved.scene = Some(PathBuf::from("scene.toml"));
    saved.chain = Some(PathBuf::from("chain.toml"));
    saved.rewards = Some(PathBuf::from("rewards.toml"));
    saved.reward_weights = None;
    if let Some(d) = &saved.demos {
        saved.demos = Some(fs::canonicalize(d).map_err(|e| Error::io(d, e))?);
    }
    write_file(&out.join("config.toml"), &saved.to_toml_string())?;

    let latest = ckpt_dir.join("latest.json");
    let metrics_path = out.join("metrics.jsonl");
    let mut trainer = if resume && latest.exists() {
        let ck = Checkpoint::load(&latest)?;
        if metrics_path.exists() {
            truncate_metrics(&metrics_path, ck.iteration)?;
        }
        log::info!("resuming at iteration {} ({} env steps)", ck.iteration, ck.env_steps);
        Trainer::resume(config.clone(), env, demos.as_ref(), ck)?
    } else {
        File::create(&metrics_path).map_err(|e| Error::io(&metrics_path, e))?;
        Trainer::new(config.clone(), env, rewards, demos.as_ref())?
    };
    let file = OpenOptions::new()
        .append(true)
        .open(&metrics_path)
        .map_err(|e| Error::io(&metrics_path, e))?;
    let mut metrics = BufWriter::new(file);

    while let Some(rec) = trainer.iterate()? {
        let line = serde_json::to_string(&rec).map_err(|e| Error::Parse(e.to_string()))?;
        writeln!(metrics, "{line}").map_err(|e| Error::io(&metrics_path, e))?;
        metrics.flush().map_err(|e| Error::io(&metrics_path, e))?;
        log::info!(
            "iter {} steps {} task {:?} phase {:?} success {:.2} len {:.1} return {:.2}",
            rec.iteration,
            rec.env_steps,
            rec.task,
            rec.phase,
            rec.window_success_rate,
            rec.mean_episode_length,
            rec.mean_env_return
        );
        for e in &rec.events {
            log::info!("  {e}");
        }
        let it = trainer.state.iteration;
        let periodic = config.checkpoint_every > 0 && it % config.checkpoint_every == 0;
        if periodic || !rec.events.is_empty() {
            trainer.state.save(&ckpt_dir.join(format!("iter_{it:06}.json")))?;
            trainer.state.save(&latest)?;
        }
    }
    trainer.state.save(&latest)?;
    trainer.state.save(&ckpt_dir.join("final.json"))?;

    let eval = if trainer.state.iteration > 0 && config.eval_episodes > 0 {
        Some(trainer.evaluate(config.eval_episodes)?)
    } else {
        None
    };
    let report = RunReport {
        mode: config.mode,
        seed: config.seed,
        iterations: trainer.state.iteration,
        env_steps: trainer.state.env_steps,
        scene_hash: trainer.state.scene_hash.clone(),
        chain_hash: trainer.state.chain_hash.clone(),
        demo_hash,
        demo_mean_length: demos.as_ref().map(|d| d.mean_length()),
        stopped_by_criterion: trainer.state.env_steps < config.max_steps,
        eval,
        wall_seconds: started.elapsed().as_secs_f64(),
    };
    let text = serde_json::to_string_pretty(&report).map_err(|e| Error::Parse(e.to_string()))?;
    write_file(&out.join("report.json"), &text)?;
    Ok(report)
}

/// Evaluates a checkpoint in `env` after checking it was trained there.
pub fn cmd_eval(checkpoint: &Path, env: &Environment, episodes: usize, seed: u64) -> Result<EvalReport> {
    let ck = Checkpoint::load(checkpoint)?;
    ck.check_env(env)?;
    let mut sched = RewardSchedule::new(ck.schedule.config.clone());
    sched.enter_whole_motion();
    super::eval::evaluate(env, &ck.agent, episodes, seed, &sched)
}
