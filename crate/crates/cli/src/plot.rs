//! Reward and episode-length curves from a metrics log, binned by environment steps.

use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use grasp_cascade::experiment::{bin_metrics, parse_metrics, Bin};
use plotters::prelude::*;
use serde::Serialize;

use crate::{CliResult, Failure};

pub const BIN_STEPS: u64 = 20_000;

#[derive(Debug, Serialize)]
pub struct PlotReport {
    pub records: usize,
    pub bins: Vec<Bin>,
    /// 1-based line numbers skipped as unparseable.
    pub skipped_lines: Vec<usize>,
    pub files: Vec<PathBuf>,
}

impl PlotReport {
    pub fn warnings(&self) -> usize {
        self.skipped_lines.len()
    }
}

pub fn plot_metrics(log: &Path, out_dir: &Path, bin_steps: u64) -> CliResult<PlotReport> {
    let f = File::open(log).map_err(|e| Failure::data(format!("{}: {e}", log.display())))?;
    let (records, skipped_lines) = parse_metrics(BufReader::new(f))?;
    for line in &skipped_lines {
        log::warn!("{}: skipping malformed line {line}", log.display());
    }
    let bins = bin_metrics(&records, bin_steps);
    std::fs::create_dir_all(out_dir)?;
    let reward = out_dir.join("reward.svg");
    let length = out_dir.join("episode_length.svg");
    let series = |f: fn(&Bin) -> f64| bins.iter().map(|b| (b.start as f64, f(b))).collect::<Vec<_>>();
    draw(&reward, "Average cumulative reward per episode", "reward", &series(|b| b.mean_return))?;
    draw(&length, "Steps per episode", "steps", &series(|b| b.mean_episode_length))?;
    Ok(PlotReport {
        records: records.len(),
        bins,
        skipped_lines,
        files: vec![reward, length],
    })
}

fn span(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    let pad = ((hi - lo) * 0.05).max(1e-6);
    (lo - pad, hi + pad)
}

fn draw(path: &Path, title: &str, y_label: &str, points: &[(f64, f64)]) -> CliResult<()> {
    let plot_err = |e: Box<dyn std::error::Error>| Failure::data(format!("{}: {e}", path.display()));
    let root = SVGBackend::new(path, (800, 480)).into_drawing_area();
    root.fill(&WHITE).map_err(|e| plot_err(Box::new(e)))?;
    let (x0, x1) = span(points.iter().map(|p| p.0));
    let (y0, y1) = span(points.iter().map(|p| p.1));
    let mut chart = ChartBuilder::on(&root)
        .caption(title, ("sans-serif", 20))
        .margin(10)
        .x_label_area_size(40)
        .y_label_area_size(60)
        .build_cartesian_2d(x0.min(0.0)..x1.max(BIN_STEPS as f64), y0..y1)
        .map_err(|e| plot_err(Box::new(e)))?;
    chart
        .configure_mesh()
        .x_desc("environment steps")
        .y_desc(y_label)
        .draw()
        .map_err(|e| plot_err(Box::new(e)))?;
    if !points.is_empty() {
        chart
            .draw_series(LineSeries::new(points.iter().copied(), &BLUE))
            .map_err(|e| plot_err(Box::new(e)))?;
    }
    root.present().map_err(|e| plot_err(Box::new(e)))?;
    Ok(())
}
