use std::collections::BTreeMap;
use std::io::BufRead;

use serde::{Deserialize, Serialize};

use crate::environment::TaskId;
use crate::rewards::Phase;

/// One line of the metrics log, written after every training iteration.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub iteration: u64,
    pub env_steps: u64,
    pub task: Option<TaskId>,
    pub phase: Option<Phase>,
    pub episodes: usize,
    /// Mean per-episode sum of the rewards the networks were trained on.
    pub mean_return: f64,
    /// Mean per-episode sum of task rewards (event weights only).
    pub mean_env_return: f64,
    pub mean_episode_length: f64,
    /// Fraction of this batch's episodes that completed the training task.
    pub success_rate: f64,
    /// Success rate over the schedule window.
    pub window_success_rate: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub approx_kl: f64,
    pub clip_fraction: f64,
    pub disc_loss: Option<f64>,
    pub disc_accuracy: Option<f64>,
    pub gail_mix: f64,
    pub scripted_priors: usize,
    pub events: Vec<String>,
    /// Mean per-episode sum of each reward event's magnitude, keyed by tag.
    #[serde(default)]
    pub event_means: BTreeMap<String, f64>,
    pub eval_success: Option<[f64; 3]>,
    pub eval_length: Option<f64>,
}

/// Averages over one bin of environment steps.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bin {
    pub start: u64,
    pub mean_return: f64,
    pub mean_episode_length: f64,
    pub records: usize,
}

/// Groups records by `floor(env_steps / width)` and averages each group.
pub fn bin_metrics(records: &[MetricsRecord], width: u64) -> Vec<Bin> {
    let width = width.max(1);
    let mut bins: Vec<Bin> = Vec::new();
    for r in records {
        let start = r.env_steps / width * width;
        match bins.iter_mut().find(|b| b.start == start) {
            Some(b) => {
                b.mean_return += r.mean_env_return;
                b.mean_episode_length += r.mean_episode_length;
                b.records += 1;
            }
            None => bins.push(Bin {
                start,
                mean_return: r.mean_env_return,
                mean_episode_length: r.mean_episode_length,
                records: 1,
            }),
        }
    }
    for b in &mut bins {
        b.mean_return /= b.records as f64;
        b.mean_episode_length /= b.records as f64;
    }
    bins.sort_by_key(|b| b.start);
    bins
}

/// Parsed log lines plus the 1-based line numbers that could not be parsed.
pub fn parse_metrics<R: BufRead>(reader: R) -> std::io::Result<(Vec<MetricsRecord>, Vec<usize>)> {
    let mut records = Vec::new();
    let mut bad = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str(&line) {
            Ok(r) => records.push(r),
            Err(_) => bad.push(i + 1),
        }
    }
    Ok((records, bad))
}
