//! Init/trained magnitude overlap, correctness fingerprints and activation
//! sparsity and selectivity.

mod tsne;

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::nn::{Mode, Network, Tensor};
use crate::trainer::predictions;

pub use tsne::{conditional_probabilities, entropy, tsne, TsneParams, TsneResult};

/// Fraction of each layer marked by [`bottom_q_mask`] in the overlap probe.
pub const OVERLAP_Q: f64 = 0.4;
/// Guard added to the selectivity denominator.
pub const CCMAS_EPS: f64 = 1e-12;

/// Marks the `floor(q·N)` smallest-magnitude entries; ties go to the lowest
/// flat index.
pub fn bottom_q_mask(weights: &Tensor, q: f64) -> Result<Vec<bool>> {
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::invalid(format!("q must be in (0, 1), got {q}")));
    }
    let data = weights.data();
    let k = (q * data.len() as f64).floor() as usize;
    let mut order: Vec<usize> = (0..data.len()).collect();
    order.sort_by(|&a, &b| data[a].abs().total_cmp(&data[b].abs()).then(a.cmp(&b)));
    let mut mask = vec![false; data.len()];
    for &i in &order[..k] {
        mask[i] = true;
    }
    Ok(mask)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerOverlap {
    pub layer: String,
    pub weights: usize,
    /// Intersection size as a percentage of all layer weights (max `100·q`).
    pub overlap_pct: f64,
    /// Intersection size as a percentage of the marked subset (max 100).
    pub subset_pct: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OverlapReport {
    pub run_id: String,
    pub q: f64,
    pub layers: Vec<LayerOverlap>,
}

impl OverlapReport {
    /// Percentage expected from two independent masks, `100·q²`.
    pub fn chance_pct(&self) -> f64 {
        100.0 * self.q * self.q
    }

    pub fn layer(&self, name: &str) -> Option<&LayerOverlap> {
        self.layers.iter().find(|l| l.layer == name)
    }
}

/// Per weight layer, how many of the smallest-magnitude weights at
/// initialization are still among the smallest after training.
pub fn init_trained_overlap(
    init: &Network,
    trained: &Network,
    q: f64,
    run_id: &str,
) -> Result<OverlapReport> {
    let a = init.weight_layers();
    let b = trained.weight_layers();
    if a.len() != b.len() {
        return Err(Error::invalid(format!(
            "architectures differ: {} vs {} weight layers",
            a.len(),
            b.len()
        )));
    }
    let mut layers = Vec::with_capacity(a.len());
    for (x, y) in a.iter().zip(&b) {
        if x.name != y.name || x.weight.shape() != y.weight.shape() {
            return Err(Error::Shape {
                layer: x.name.clone(),
                expected: x.weight.shape().to_vec(),
                got: y.weight.shape().to_vec(),
            });
        }
        let ma = bottom_q_mask(&x.weight, q)?;
        let mb = bottom_q_mask(&y.weight, q)?;
        let both = ma.iter().zip(&mb).filter(|(p, q)| **p && **q).count();
        let n = ma.len();
        let marked = ma.iter().filter(|&&m| m).count();
        layers.push(LayerOverlap {
            layer: x.name.clone(),
            weights: n,
            overlap_pct: 100.0 * both as f64 / n as f64,
            subset_pct: if marked == 0 {
                0.0
            } else {
                100.0 * both as f64 / marked as f64
            },
        });
    }
    Ok(OverlapReport {
        run_id: run_id.to_string(),
        q,
        layers,
    })
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorrectnessVector(pub Vec<u8>);

impl CorrectnessVector {
    pub fn accuracy(&self) -> f64 {
        let hits = self.0.iter().filter(|&&c| c == 1).count();
        hits as f64 / self.0.len().max(1) as f64
    }

    pub fn as_f64(&self) -> Vec<f64> {
        self.0.iter().map(|&c| c as f64).collect()
    }
}

/// 1 where the eval-mode prediction matches the label, else 0.
pub fn correctness_vector(network: &Network, dataset: &Dataset) -> Result<CorrectnessVector> {
    let preds = predictions(network, dataset)?;
    Ok(CorrectnessVector(
        preds
            .iter()
            .enumerate()
            .map(|(i, &p)| u8::from(p == dataset.label(i)))
            .collect(),
    ))
}

/// `(√n − ‖v‖₁/‖v‖₂) / (√n − 1)`.
pub fn hoyer_sparsity(v: &[f64]) -> Result<f64> {
    let l1: f64 = v.iter().map(|x| x.abs()).sum();
    let l2: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    hoyer_from_norms(l1, l2, v.len())
}

fn hoyer_from_norms(l1: f64, l2: f64, n: usize) -> Result<f64> {
    if n < 2 {
        return Err(Error::invalid("Hoyer sparsity needs at least 2 entries"));
    }
    if l2 == 0.0 {
        return Err(Error::invalid("Hoyer sparsity of a zero vector"));
    }
    let root = (n as f64).sqrt();
    Ok(((root - l1 / l2) / (root - 1.0)).clamp(0.0, 1.0))
}

/// Mean activation of every unit of one layer, per class.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UnitActivationProfile {
    pub layer: String,
    /// `class_means[unit][class]`.
    pub class_means: Vec<Vec<f64>>,
}

/// `(μ_max − μ_rest) / (μ_max + μ_rest + ε)` per unit, where `μ_rest` is the
/// mean of the other classes' means.
pub fn class_selectivity(profile: &UnitActivationProfile) -> Result<Vec<f64>> {
    profile
        .class_means
        .iter()
        .map(|means| {
            if means.len() < 2 {
                return Err(Error::invalid("class selectivity needs at least 2 classes"));
            }
            if means.iter().any(|&m| m < 0.0 || !m.is_finite()) {
                return Err(Error::invalid("class means must be finite and nonnegative"));
            }
            let (imax, &max) = means
                .iter()
                .enumerate()
                .fold(
                    (0, &means[0]),
                    |best, (i, m)| if *m > *best.1 { (i, m) } else { best },
                );
            let rest = means
                .iter()
                .enumerate()
                .filter(|&(i, _)| i != imax)
                .map(|(_, m)| m)
                .sum::<f64>()
                / (means.len() - 1) as f64;
            Ok((max - rest) / (max + rest + CCMAS_EPS))
        })
        .collect()
}

/// Per-unit statistics of one hidden layer over a dataset.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerActivity {
    pub profile: UnitActivationProfile,
    /// Hoyer sparsity of each unit's activations across items; `None` for
    /// units that never fire.
    pub hoyer: Vec<Option<f64>>,
    pub selectivity: Vec<f64>,
}

/// Collects post-ReLU activations of every top-level hidden layer. For
/// convolutional layers a unit is a channel, averaged over positions.
pub fn layer_activity(network: &Network, dataset: &Dataset) -> Result<Vec<LayerActivity>> {
    let classes = network.classes;
    struct Acc {
        layer: String,
        sums: Vec<Vec<f64>>,
        l1: Vec<f64>,
        l2: Vec<f64>,
    }
    let mut accs: Vec<Acc> = Vec::new();
    let mut counts = vec![0usize; classes];
    for start in (0..dataset.len()).step_by(500) {
        let end = (start + 500).min(dataset.len());
        let (x, labels) = dataset.range(start, end);
        let (_, cache) = network.forward(&x, Mode::Eval)?;
        for &l in &labels {
            counts[l] += 1;
        }
        for (li, (name, act)) in network.hidden_activations(&cache).into_iter().enumerate() {
            let units = act.shape()[1];
            let per_unit: usize = act.shape()[2..].iter().product();
            if accs.len() <= li {
                accs.push(Acc {
                    layer: name,
                    sums: vec![vec![0.0; classes]; units],
                    l1: vec![0.0; units],
                    l2: vec![0.0; units],
                });
            }
            let acc = &mut accs[li];
            for (row, &label) in labels.iter().enumerate() {
                let item = act.row(row);
                for u in 0..units {
                    let a = item[u * per_unit..(u + 1) * per_unit]
                        .iter()
                        .map(|&v| v as f64)
                        .sum::<f64>()
                        / per_unit as f64;
                    acc.sums[u][label] += a;
                    acc.l1[u] += a.abs();
                    acc.l2[u] += a * a;
                }
            }
        }
    }
    accs.into_iter()
        .map(|acc| {
            let class_means = acc
                .sums
                .iter()
                .map(|s| {
                    s.iter()
                        .zip(&counts)
                        .map(|(&v, &c)| if c == 0 { 0.0 } else { v / c as f64 })
                        .collect()
                })
                .collect();
            let profile = UnitActivationProfile {
                layer: acc.layer,
                class_means,
            };
            let hoyer = acc
                .l1
                .iter()
                .zip(&acc.l2)
                .map(|(&l1, &l2)| hoyer_from_norms(l1, l2.sqrt(), dataset.len()).ok())
                .collect();
            let selectivity = class_selectivity(&profile)?;
            Ok(LayerActivity {
                profile,
                hoyer,
                selectivity,
            })
        })
        .collect()
}
