//! Training loops, stopping rules and validation-loss checkpoint selection.

pub mod checkpoint;
pub mod optim;

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, DatasetName};
use crate::error::{Error, Result};
use crate::model_zoo::{Family, ModelSpec};
use crate::nn::{argmax, cross_entropy_loss, Mode, Network, RngStream, StreamKey};

pub use checkpoint::{Checkpoint, CheckpointMetrics};
pub use optim::{optimizer_step, OptimizerKind, OptimizerState};

pub const DEFAULT_BATCH_SIZE: usize = 64;
pub const DEFAULT_LOSS_TARGET: f64 = 0.2;
/// Epoch cap for loss-target training; hitting it is an error.
pub const DEFAULT_MAX_EPOCHS: usize = 300;
const EVAL_BATCH: usize = 1000;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StoppingRule {
    /// Stop after the first epoch whose mean training loss is at most `target`.
    LossTarget { target: f64, max_epochs: usize },
    /// Train `epochs` epochs, then return the epoch with minimum validation loss.
    FixedEpochsThenValMin { epochs: usize },
}

impl StoppingRule {
    pub fn loss_target(target: f64) -> Self {
        StoppingRule::LossTarget {
            target,
            max_epochs: DEFAULT_MAX_EPOCHS,
        }
    }

    /// Index into `train_losses` of the epoch where training stops, if reached.
    pub fn stop_index(&self, train_losses: &[f64]) -> Option<usize> {
        match *self {
            StoppingRule::LossTarget { target, .. } => {
                train_losses.iter().position(|&l| l <= target)
            }
            StoppingRule::FixedEpochsThenValMin { epochs } => {
                (train_losses.len() >= epochs).then(|| epochs - 1)
            }
        }
    }
}

/// Index of the smallest validation loss; earliest wins ties.
pub fn val_min_index(val_losses: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &v) in val_losses.iter().enumerate() {
        match best {
            Some(b) if val_losses[b] <= v => {}
            _ => best = Some(i),
        }
    }
    best
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Recipe {
    pub optimizer: OptimizerKind,
    pub learning_rate: f64,
    pub rule: StoppingRule,
}

/// Learning rate and stopping rule of each supported training setup.
pub fn default_recipe(
    family: Family,
    optimizer: OptimizerKind,
    dataset: DatasetName,
) -> Result<Recipe> {
    use OptimizerKind::*;
    let (learning_rate, rule) = match (family, optimizer, dataset) {
        (Family::Mlp, Sgd, DatasetName::Mnist) => {
            (1e-3, StoppingRule::loss_target(DEFAULT_LOSS_TARGET))
        }
        (Family::Conv2, Adam, DatasetName::Cifar10) => {
            (2e-4, StoppingRule::FixedEpochsThenValMin { epochs: 100 })
        }
        (Family::Conv2, Adagrad, DatasetName::Cifar10) => {
            (1e-1, StoppingRule::FixedEpochsThenValMin { epochs: 25 })
        }
        (Family::ResNetLite, Sgd, DatasetName::Cifar10) => {
            (1e-2, StoppingRule::FixedEpochsThenValMin { epochs: 90 })
        }
        _ => {
            return Err(Error::UnsupportedRecipe(format!(
                "{family} with {optimizer} on {dataset}"
            )))
        }
    };
    Ok(Recipe {
        optimizer,
        learning_rate,
        rule,
    })
}

/// Dataset each family is trained on.
pub fn family_dataset(family: Family) -> DatasetName {
    match family {
        Family::Mlp => DatasetName::Mnist,
        Family::Conv2 | Family::ResNetLite => DatasetName::Cifar10,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_accuracy: f64,
    pub checkpoint: Option<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    /// 1-based epoch whose weights were returned.
    pub selected_epoch: usize,
}

impl TrainHistory {
    pub fn selected(&self) -> Option<&EpochRecord> {
        self.epochs.iter().find(|e| e.epoch == self.selected_epoch)
    }
}

/// Where per-epoch checkpoints go. In memory, only the candidate needed for
/// selection is kept.
#[derive(Clone, Debug, Default)]
pub enum CheckpointStore {
    #[default]
    InMemory,
    /// One `epoch-NNNN.json` per epoch; after selection only the selected and
    /// final epochs remain on disk.
    Directory { dir: PathBuf, spec: ModelSpec },
}

#[derive(Clone, Debug)]
pub struct TrainConfig {
    pub recipe: Recipe,
    pub batch_size: usize,
    /// Keys the per-epoch shuffle streams.
    pub data_seed: u64,
    pub store: CheckpointStore,
}

impl TrainConfig {
    pub fn new(recipe: Recipe, data_seed: u64) -> Self {
        Self {
            recipe,
            batch_size: DEFAULT_BATCH_SIZE,
            data_seed,
            store: CheckpointStore::InMemory,
        }
    }
}

/// Accuracy (lowest-index tie-break) and mean cross-entropy in eval mode.
pub fn evaluate(network: &Network, dataset: &Dataset) -> Result<(f64, f64)> {
    let mut correct = 0usize;
    let mut loss_sum = 0.0f64;
    for start in (0..dataset.len()).step_by(EVAL_BATCH) {
        let end = (start + EVAL_BATCH).min(dataset.len());
        let (x, labels) = dataset.range(start, end);
        let logits = network.predict(&x)?;
        let (loss, _) = cross_entropy_loss(&logits, &labels)?;
        loss_sum += loss * labels.len() as f64;
        for (i, &l) in labels.iter().enumerate() {
            if argmax(logits.row(i)) == l {
                correct += 1;
            }
        }
    }
    let n = dataset.len().max(1) as f64;
    Ok((correct as f64 / n, loss_sum / n))
}

/// Predicted class per item, eval mode.
pub fn predictions(network: &Network, dataset: &Dataset) -> Result<Vec<usize>> {
    let mut out = Vec::with_capacity(dataset.len());
    for start in (0..dataset.len()).step_by(EVAL_BATCH) {
        let end = (start + EVAL_BATCH).min(dataset.len());
        let (x, _) = dataset.range(start, end);
        let logits = network.predict(&x)?;
        out.extend((0..logits.rows()).map(|i| argmax(logits.row(i))));
    }
    Ok(out)
}

fn train_epoch(
    network: &mut Network,
    state: &mut OptimizerState,
    train: &Dataset,
    batch_size: usize,
    shuffle: &mut RngStream,
    epoch: usize,
) -> Result<f64> {
    let mut order: Vec<usize> = (0..train.len()).collect();
    shuffle.shuffle(&mut order);
    let mut loss_sum = 0.0f64;
    for chunk in order.chunks(batch_size) {
        let (x, labels) = train.batch(chunk);
        let (logits, cache) = network.forward(&x, Mode::Train)?;
        let (loss, dlogits) = cross_entropy_loss(&logits, &labels)?;
        if !loss.is_finite() {
            return Err(Error::Diverged { epoch, loss });
        }
        loss_sum += loss * chunk.len() as f64;
        let grads = network.backward(&cache, &dlogits)?;
        network.update_running_stats(&cache);
        optimizer_step(state, network, &grads)?;
    }
    Ok(loss_sum / train.len() as f64)
}

/// Trains `network` under `config`, returning the selected weights and the
/// full per-epoch history.
pub fn train(
    mut network: Network,
    train_set: &Dataset,
    val_set: &Dataset,
    config: &TrainConfig,
) -> Result<(Network, TrainHistory)> {
    if train_set.is_empty() || val_set.is_empty() {
        return Err(Error::invalid(
            "training and validation sets must be non-empty",
        ));
    }
    if config.batch_size == 0 {
        return Err(Error::invalid("batch size must be at least 1"));
    }
    let recipe = config.recipe;
    let mut state = OptimizerState::new(recipe.optimizer, recipe.learning_rate);
    let max_epochs = match recipe.rule {
        StoppingRule::LossTarget { max_epochs, .. } => max_epochs,
        StoppingRule::FixedEpochsThenValMin { epochs } => epochs,
    };
    if let CheckpointStore::Directory { dir, .. } = &config.store {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir.display().to_string(), e))?;
    }

    let mut history = TrainHistory::default();
    let mut best: Option<(f64, Network)> = None;
    let mut train_losses = Vec::new();
    for epoch in 1..=max_epochs {
        let mut shuffle = RngStream::new(
            StreamKey::new("epoch-shuffle", 0, config.data_seed).with_index(epoch as u64),
        );
        let train_loss = train_epoch(
            &mut network,
            &mut state,
            train_set,
            config.batch_size,
            &mut shuffle,
            epoch,
        )?;
        let (val_accuracy, val_loss) = evaluate(&network, val_set)?;
        if !val_loss.is_finite() {
            return Err(Error::Diverged {
                epoch,
                loss: val_loss,
            });
        }
        log::debug!("epoch {epoch}: train {train_loss:.4} val {val_loss:.4} acc {val_accuracy:.4}");
        let checkpoint = match &config.store {
            CheckpointStore::InMemory => None,
            CheckpointStore::Directory { dir, spec } => {
                let path = dir.join(format!("epoch-{epoch:04}.json"));
                Checkpoint::capture(
                    spec,
                    &network,
                    recipe.optimizer,
                    epoch,
                    CheckpointMetrics {
                        train_loss,
                        val_loss,
                        val_accuracy,
                    },
                )
                .save(&path)?;
                Some(path.display().to_string())
            }
        };
        history.epochs.push(EpochRecord {
            epoch,
            train_loss,
            val_loss,
            val_accuracy,
            checkpoint,
        });
        train_losses.push(train_loss);

        match recipe.rule {
            StoppingRule::LossTarget { .. } => {
                if recipe.rule.stop_index(&train_losses).is_some() {
                    history.selected_epoch = epoch;
                    prune_checkpoints(&mut history, &config.store)?;
                    return Ok((network, history));
                }
            }
            StoppingRule::FixedEpochsThenValMin { .. } => {
                if best.as_ref().is_none_or(|(b, _)| val_loss < *b) {
                    best = Some((val_loss, network.clone()));
                }
            }
        }
    }

    match recipe.rule {
        StoppingRule::LossTarget { .. } => Err(Error::NotConverged {
            epochs: max_epochs,
            loss: train_losses.last().copied().unwrap_or(f64::NAN),
        }),
        StoppingRule::FixedEpochsThenValMin { .. } => {
            let val_losses: Vec<f64> = history.epochs.iter().map(|e| e.val_loss).collect();
            let idx = val_min_index(&val_losses).expect("at least one epoch");
            history.selected_epoch = idx + 1;
            prune_checkpoints(&mut history, &config.store)?;
            let (_, selected) = best.expect("at least one epoch");
            Ok((selected, history))
        }
    }
}

/// Deletes every epoch checkpoint except the selected and the final one.
fn prune_checkpoints(history: &mut TrainHistory, store: &CheckpointStore) -> Result<()> {
    if let CheckpointStore::InMemory = store {
        return Ok(());
    }
    let last = history.epochs.last().map(|e| e.epoch).unwrap_or(0);
    for record in &mut history.epochs {
        if record.epoch == history.selected_epoch || record.epoch == last {
            continue;
        }
        if let Some(path) = record.checkpoint.take() {
            std::fs::remove_file(&path).map_err(|e| Error::io(path.clone(), e))?;
        }
    }
    Ok(())
}
