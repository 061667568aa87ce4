//! Layer-wise magnitude pruning without retraining, and effective density.
//!
//! Each of the 50 cycles masks a further 2% of every layer's original weight
//! count: after cycle `k` a layer with `N` weights has exactly
//! `floor(k·N/50)` masked entries, the smallest by magnitude.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::model_zoo::{count_prunable_weights, ModelSpec};
use crate::nn::{Network, Tensor};
use crate::trainer::evaluate;

pub const CYCLES: usize = 50;
/// Default accuracy-drop threshold, in percentage points.
pub const DEFAULT_THRESHOLD_PP: f64 = 5.0;

/// Masked entries of a layer with `n` weights after cycle `k`.
pub fn quota(k: usize, n: usize) -> usize {
    k * n / CYCLES
}

/// Global density after cycle `k` for layers of the given sizes.
pub fn density_after(k: usize, layer_sizes: &[usize]) -> f64 {
    let total: usize = layer_sizes.iter().sum();
    let masked: usize = layer_sizes.iter().map(|&n| quota(k, n)).sum();
    (total - masked) as f64 / total as f64
}

/// Advances every weight layer's mask to cycle `k`. Layers without a mask
/// are treated as fully unmasked. Biases and batch-norm are untouched.
pub fn prune_step(network: &mut Network, k: usize) -> Result<()> {
    if !(1..=CYCLES).contains(&k) {
        return Err(Error::invalid(format!(
            "pruning cycle {k} outside 1..={CYCLES}"
        )));
    }
    for layer in network.weight_layers_mut() {
        let n = layer.weight.len();
        let mut mask = layer
            .mask
            .take()
            .unwrap_or_else(|| Tensor::full(layer.weight.shape(), 1.0));
        let already = mask.data().iter().filter(|&&m| m == 0.0).count();
        let target = quota(k, n);
        if target > already {
            let weights = layer.weight.data();
            let mut candidates: Vec<usize> = (0..n).filter(|&i| mask.data()[i] != 0.0).collect();
            // (magnitude, index) order; the index breaks ties.
            candidates.sort_by(|&a, &b| {
                weights[a]
                    .abs()
                    .total_cmp(&weights[b].abs())
                    .then(a.cmp(&b))
            });
            for &i in &candidates[..target - already] {
                mask.data_mut()[i] = 0.0;
            }
        }
        layer.mask = Some(mask);
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CycleRecord {
    pub cycle: usize,
    pub density: f64,
    pub val_accuracy: f64,
    pub val_loss: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PruneTrajectory {
    pub run_id: String,
    pub baseline_accuracy: f64,
    pub baseline_loss: f64,
    /// Cycle 0 (unpruned) through cycle 50 (empty).
    pub cycles: Vec<CycleRecord>,
}

impl PruneTrajectory {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("run_id,cycle,density,val_accuracy,val_loss\n");
        self.append_csv_rows(&mut out);
        out
    }

    pub fn append_csv_rows(&self, out: &mut String) {
        for c in &self.cycles {
            let _ = writeln!(
                out,
                "{},{},{:.6},{:.6},{:.6}",
                self.run_id, c.cycle, c.density, c.val_accuracy, c.val_loss
            );
        }
    }

    /// Parses the rows written by [`PruneTrajectory::to_csv`] for one run.
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut cycles = Vec::new();
        let mut run_id = String::new();
        for (line_no, line) in text.lines().enumerate().skip(1) {
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            let bad = || Error::invalid(format!("trajectory csv line {}: '{line}'", line_no + 1));
            if fields.len() != 5 {
                return Err(bad());
            }
            run_id = fields[0].to_string();
            cycles.push(CycleRecord {
                cycle: fields[1].parse().map_err(|_| bad())?,
                density: fields[2].parse().map_err(|_| bad())?,
                val_accuracy: fields[3].parse().map_err(|_| bad())?,
                val_loss: fields[4].parse().map_err(|_| bad())?,
            });
        }
        let first = cycles
            .first()
            .ok_or_else(|| Error::invalid("empty trajectory csv"))?;
        Ok(Self {
            run_id,
            baseline_accuracy: first.val_accuracy,
            baseline_loss: first.val_loss,
            cycles,
        })
    }
}

/// Evaluates the trained network, then prunes it cycle by cycle, evaluating
/// after each cycle. No parameter is updated at any point.
pub fn pruning_trajectory(
    network: &Network,
    val: &Dataset,
    run_id: &str,
) -> Result<PruneTrajectory> {
    let mut net = network.clone();
    net.clear_masks();
    let sizes: Vec<usize> = net.weight_layers().iter().map(|w| w.weight.len()).collect();
    let (baseline_accuracy, baseline_loss) = evaluate(&net, val)?;
    let mut cycles = vec![CycleRecord {
        cycle: 0,
        density: 1.0,
        val_accuracy: baseline_accuracy,
        val_loss: baseline_loss,
    }];
    for k in 1..=CYCLES {
        prune_step(&mut net, k)?;
        let (acc, loss) = evaluate(&net, val)?;
        cycles.push(CycleRecord {
            cycle: k,
            density: density_after(k, &sizes),
            val_accuracy: acc,
            val_loss: loss,
        });
    }
    Ok(PruneTrajectory {
        run_id: run_id.to_string(),
        baseline_accuracy,
        baseline_loss,
        cycles,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EffectiveDensity {
    pub fraction: f64,
    /// Accuracy drop tolerated, in percentage points.
    pub threshold_pp: f64,
    /// First cycle that degraded beyond the threshold, if any.
    pub cycle: Option<usize>,
}

/// Density at the first cycle whose accuracy falls more than `threshold_pp`
/// percentage points below the baseline; 0 if no cycle does.
pub fn effective_density(
    trajectory: &PruneTrajectory,
    threshold_pp: f64,
) -> Result<EffectiveDensity> {
    if trajectory.cycles.is_empty() {
        return Err(Error::invalid("empty pruning trajectory"));
    }
    let base = trajectory.baseline_accuracy;
    let hit = trajectory
        .cycles
        .iter()
        .filter(|c| c.cycle >= 1)
        .find(|c| (base - c.val_accuracy) * 100.0 > threshold_pp + 1e-9);
    Ok(EffectiveDensity {
        fraction: hit.map_or(0.0, |c| c.density),
        threshold_pp,
        cycle: hit.map(|c| c.cycle),
    })
}

/// Weights left unpruned at the effective density: `round(fraction·|θ|)`.
pub fn absolute_unpruned(ed: &EffectiveDensity, spec: &ModelSpec) -> usize {
    (ed.fraction * count_prunable_weights(spec) as f64).round() as usize
}
