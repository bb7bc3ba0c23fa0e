//! Subcommand implementations. Each writes its artifacts plus a manifest into
//! the configured output directory.

use std::path::{Path, PathBuf};

use fpqkd_core::keyrate::{self, SweepRow};
use fpqkd_core::pipeline::{
    analytic_point, analyze_readouts, block_count, readouts_for_blocks, simulate_blocks, tally_analysis, Analysis,
    Geometry, Model, RunSummary,
};
use log::{info, warn};
use rayon::prelude::*;
use serde_json::json;

use crate::config::{RunConfig, TraceFormat};
use crate::error::{CliError, Result};
use crate::report::{self, file_digest, Manifest};
use crate::trace::{self, TraceRecord, TraceWriter};

/// Azimuth clamping above this fraction of records triggers a warning.
pub const CLAMP_WARN_FRACTION: f64 = 0.01;

/// Files written by a command.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub dir: PathBuf,
    pub files: Vec<PathBuf>,
    pub warnings: Vec<String>,
    pub summary: serde_json::Value,
}

struct Artifacts<'a> {
    cfg: &'a RunConfig,
    hash: String,
    dir: PathBuf,
    files: Vec<PathBuf>,
    warnings: Vec<String>,
}

impl<'a> Artifacts<'a> {
    fn new(cfg: &'a RunConfig) -> Result<Self> {
        let dir = cfg.run.out.clone();
        std::fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
        Ok(Artifacts {
            cfg,
            hash: cfg.hash(),
            dir,
            files: Vec::new(),
            warnings: Vec::new(),
        })
    }

    fn path(&mut self, name: &str) -> PathBuf {
        let p = self.dir.join(name);
        self.files.push(p.clone());
        p
    }

    fn warn(&mut self, msg: String) {
        warn!("{msg}");
        self.warnings.push(msg);
    }

    fn analysis(&mut self, a: &Analysis, loss_db: f64) -> Result<()> {
        let hash = self.hash.clone();
        report::write_constraints(&self.path("constraints.csv"), &hash, &[&a.z_set, &a.x_set])?;
        report::write_bounds(&self.path("bounds.csv"), &hash, &a.bounds)?;
        report::write_keyrate(&self.path("keyrate.csv"), &hash, loss_db, &a.key)?;
        for f in a.bounds.flags.iter().chain(&a.key.notes) {
            self.warn(f.clone());
        }
        Ok(())
    }

    fn finish(mut self, command: &str, summary: serde_json::Value) -> Result<Outcome> {
        let files = self.files.iter().map(|p| file_digest(p)).collect::<Result<Vec<_>>>()?;
        let manifest = Manifest {
            tool: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            config_hash: self.hash.clone(),
            config: self.cfg.canonical().dump(),
            seed: self.cfg.run.seed,
            samples: self.cfg.run.samples,
            summary: summary.clone(),
            warnings: self.warnings.clone(),
            files,
        };
        let path = report::write_manifest(&self.dir, &manifest)?;
        self.files.push(path);
        Ok(Outcome {
            dir: self.dir,
            files: self.files,
            warnings: self.warnings,
            summary,
        })
    }
}

/// Splits the run into `shards` contiguous block ranges, simulates them in
/// parallel and merges in shard order.
pub fn run_shards(model: &Model, seed: u64, samples: u64, shards: usize) -> Result<RunSummary> {
    let blocks = block_count(samples);
    let shards = (shards as u64).clamp(1, blocks.max(1));
    let per = blocks.div_ceil(shards);
    let parts: Vec<RunSummary> = (0..shards)
        .into_par_iter()
        .map(|s| simulate_blocks(model, seed, samples, (s * per).min(blocks)..((s + 1) * per).min(blocks)))
        .collect::<std::result::Result<_, _>>()?;
    let mut total = RunSummary::empty(&model.regions);
    for p in &parts {
        total.merge(p)?;
    }
    Ok(total)
}

fn run_summary(s: &RunSummary) -> serde_json::Value {
    json!({
        "n_raw": s.n_raw,
        "n_kept": s.n_kept,
        "keep_fraction": s.keep_fraction(),
        "n_clamped": s.n_clamped,
        "n_undefined": s.n_undefined,
    })
}

fn analysis_summary(a: &Analysis) -> serde_json::Value {
    json!({
        "y1_low": a.bounds.y1_low,
        "e1_high": a.bounds.e1_high,
        "q_z": a.key.inputs.q_z,
        "qber_z": a.key.qber_z,
        "rate": a.key.rate,
    })
}

fn export_trace(cfg: &RunConfig, model: &Model, art: &mut Artifacts) -> Result<()> {
    let (name, binary) = match cfg.run.trace {
        TraceFormat::None => return Ok(()),
        TraceFormat::Csv => ("trace.csv", false),
        TraceFormat::Binary => ("trace.bin", true),
    };
    let path = art.path(name);
    let mut w = if binary {
        TraceWriter::binary(&path)?
    } else {
        TraceWriter::csv(&path, &art.hash)?
    };
    for b in 0..block_count(cfg.run.samples) {
        for r in readouts_for_blocks(model, cfg.run.seed, cfg.run.samples, b..b + 1) {
            w.write(&TraceRecord::from_readout(&r), &path)?;
        }
    }
    w.finish(&path)
}

/// Full Monte Carlo run followed by the decoy and key-rate analysis of its
/// tallies. Tallies and the manifest are written even when the analysis fails.
pub fn cmd_simulate(cfg: &RunConfig) -> Result<Outcome> {
    let (model, geom) = cfg.build()?;
    let mut art = Artifacts::new(cfg)?;
    info!(
        "simulating {} samples at {} dB with seed {} over {} shards",
        cfg.run.samples, model.channel.loss_db, cfg.run.seed, cfg.run.shards
    );
    let run = run_shards(&model, cfg.run.seed, cfg.run.samples, cfg.run.shards)?;
    report::write_tallies(&art.path("tallies.csv"), &art.hash.clone(), &run.tallies)?;
    export_trace(cfg, &model, &mut art)?;

    let mut summary = run_summary(&run);
    summary["loss_db"] = json!(model.channel.loss_db);
    match tally_analysis(&geom, &run.tallies, model.k_sigma, model.f_e) {
        Ok(a) => {
            art.analysis(&a, model.channel.loss_db)?;
            summary["analysis"] = analysis_summary(&a);
            art.finish("simulate", summary)
        }
        Err(e) => {
            art.warn(format!("analysis failed: {e}"));
            art.finish("simulate", summary)?;
            Err(e.into())
        }
    }
}

/// Transmitter-side analysis of a recorded trace: reshaping and region
/// classification only.
pub fn cmd_analyze(trace_path: &Path, cfg: &RunConfig) -> Result<Outcome> {
    let model = cfg.model()?;
    let records = trace::read_trace(trace_path)?;
    let readouts = trace::readouts(&records, model.source.mu_max_per_pol)?;
    let mut art = Artifacts::new(cfg)?;
    let run = analyze_readouts(&model, cfg.run.seed, &readouts)?;
    if run.n_raw > 0 {
        let clamped = run.n_clamped as f64 / run.n_raw as f64;
        if clamped > CLAMP_WARN_FRACTION {
            art.warn(format!(
                "WARNING: {:.2}% of records needed azimuth clamping (readings inconsistent with a pure state)",
                100.0 * clamped
            ));
        }
    }
    if run.n_undefined > 0 {
        art.warn(format!("{} records sit at a pole; their azimuth is undefined", run.n_undefined));
    }
    report::write_tallies(&art.path("tallies.csv"), &art.hash.clone(), &run.tallies)?;
    let mut summary = run_summary(&run);
    summary["trace"] = json!(trace_path.display().to_string());
    art.finish("analyze", summary)
}

/// Expected-tally key rate over the configured loss grid.
pub fn cmd_sweep(cfg: &RunConfig) -> Result<(Outcome, Vec<SweepRow>)> {
    let (model, geom) = cfg.build()?;
    let grid = cfg.sweep.grid()?;
    let rows = sweep_rows(&model, &geom, &grid)?;
    let mut art = Artifacts::new(cfg)?;
    report::write_curve(&art.path("keyrate_curve.csv"), &art.hash.clone(), &rows)?;
    let summary = json!({ "points": rows.len() });
    Ok((art.finish("sweep", summary)?, rows))
}

pub fn sweep_rows(model: &Model, geom: &Geometry, grid: &[keyrate::LossPoint]) -> Result<Vec<SweepRow>> {
    Ok(keyrate::sweep(grid, |loss| {
        let a = analytic_point(geom, model, loss, None)?;
        Ok((a.key, a.bounds.y1_low, a.bounds.e1_high))
    })?)
}

/// Decoy and key-rate analysis of a tally report.
pub fn cmd_bounds(tallies_path: &Path, cfg: &RunConfig) -> Result<Outcome> {
    let (model, geom) = cfg.build()?;
    let tallies = report::read_tallies(tallies_path, &model.regions)?;
    let a = tally_analysis(&geom, &tallies, model.k_sigma, model.f_e)?;
    let mut art = Artifacts::new(cfg)?;
    art.analysis(&a, model.channel.loss_db)?;
    let mut summary = analysis_summary(&a);
    summary["tallies"] = json!(tallies_path.display().to_string());
    art.finish("bounds", summary)
}
