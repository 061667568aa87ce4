//! Configuration, grid execution, statistics and the mechanism probes over a
//! finished grid, plus figure emission.

pub mod config;
pub mod grid;
pub mod report;

use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;

use crate::analysis::{
    correctness_vector, init_trained_overlap, layer_activity, tsne, TsneParams, OVERLAP_Q,
};
use crate::error::{Error, Result};
use crate::nn::RngStream;
use crate::record::RunRecord;
use crate::stats::{compute_stats, StatsReport};
use crate::trainer::Checkpoint;

pub use config::ExperimentConfig;
pub use grid::{
    grid_cells, initial_network, load_trajectory, merge_outputs, parse_runs_csv, prepare_data,
    read_runs_csv, run_grid, run_stage, runs_csv, GridCell, PreparedData, RunOutcome, Stage,
};

fn write_file(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path.display().to_string(), e))
}

/// Finished records from `runs.csv` in `out`.
pub fn finished_records(out: &Path) -> Result<Vec<RunRecord>> {
    Ok(read_runs_csv(out)?
        .into_iter()
        .filter_map(|o| o.record().cloned())
        .collect())
}

/// Computes statistics over `runs.csv` and writes `stats.json`.
pub fn write_stats(out: &Path, threshold_pp: f64) -> Result<StatsReport> {
    let records = finished_records(out)?;
    if records.is_empty() {
        return Err(Error::Stats(format!(
            "{} has no finished runs",
            out.join("runs.csv").display()
        )));
    }
    let report = compute_stats(&records, threshold_pp)?;
    write_file(&out.join("stats.json"), &report.to_json()?)?;
    Ok(report)
}

/// Perplexity used for an embedding of `n` points: the default 30, lowered
/// to `(n - 1) / 3` for small sets.
pub fn embedding_perplexity(n: usize) -> f64 {
    TsneParams::default()
        .perplexity
        .min((n.saturating_sub(1)) as f64 / 3.0)
}

/// Writes `overlap.csv`, `embedding.csv` and `selectivity.csv` for every
/// finished run.
pub fn run_analysis(cfg: &ExperimentConfig) -> Result<()> {
    let out = &cfg.out_dir;
    let records = finished_records(out)?;
    if records.is_empty() {
        return Err(Error::invalid(format!(
            "{} has no finished runs",
            out.join("runs.csv").display()
        )));
    }
    let data = prepare_data(cfg)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads)
        .build()
        .map_err(|e| Error::invalid(format!("thread pool: {e}")))?;

    struct Probe {
        overlap: String,
        selectivity: String,
        correctness: Vec<f64>,
    }
    let probes: Vec<Probe> = pool.install(|| {
        records
            .par_iter()
            .map(|r| {
                let trained = Checkpoint::load(&out.join(&r.checkpoint_path))?.restore()?;
                let init = initial_network(&r.coords)?;
                let spec = r.coords.spec();
                let mut overlap = String::new();
                for l in init_trained_overlap(&init, &trained, OVERLAP_Q, &r.run_id)?.layers {
                    let _ = writeln!(
                        overlap,
                        "{},{},{:.6},{:.6}",
                        r.run_id, l.layer, l.overlap_pct, l.subset_pct
                    );
                }
                let (_, val) = data.splits(cfg, &spec, r.coords.data_seed)?;
                let mut selectivity = String::new();
                for layer in layer_activity(&trained, &val)? {
                    for (u, (h, s)) in layer.hoyer.iter().zip(&layer.selectivity).enumerate() {
                        let h = h.map(|h| format!("{h:.6}")).unwrap_or_default();
                        let _ = writeln!(
                            selectivity,
                            "{},{},{u},{h},{s:.6}",
                            r.run_id, layer.profile.layer
                        );
                    }
                }
                let test = data.test(cfg, &spec)?;
                let correctness = correctness_vector(&trained, &test)?.as_f64();
                Ok(Probe {
                    overlap,
                    selectivity,
                    correctness,
                })
            })
            .collect::<Result<Vec<Probe>>>()
    })?;

    let mut overlap = String::from("run_id,layer_name,overlap_pct,overlap_subset_pct\n");
    let mut selectivity = String::from("run_id,layer,unit,hoyer,ccmas\n");
    for p in &probes {
        overlap.push_str(&p.overlap);
        selectivity.push_str(&p.selectivity);
    }
    write_file(&out.join("overlap.csv"), &overlap)?;
    write_file(&out.join("selectivity.csv"), &selectivity)?;

    let mut embedding = String::from("run_id,x,y\n");
    let same_length = probes
        .windows(2)
        .all(|w| w[0].correctness.len() == w[1].correctness.len());
    let vectors: Vec<Vec<f64>> = probes.into_iter().map(|p| p.correctness).collect();
    let distinct = vectors.windows(2).any(|w| w[0] != w[1]);
    if vectors.len() >= 5 && same_length && distinct {
        let params = TsneParams {
            perplexity: embedding_perplexity(vectors.len()),
            ..TsneParams::default()
        };
        let result = tsne(&vectors, &params, &mut RngStream::keyed("tsne", 0, 0))?;
        for (r, y) in records.iter().zip(&result.embedding) {
            let _ = writeln!(embedding, "{},{:.6},{:.6}", r.run_id, y[0], y[1]);
        }
    } else {
        log::warn!("skipping embedding: needs at least 5 runs with distinct correctness vectors");
    }
    write_file(&out.join("embedding.csv"), &embedding)
}
