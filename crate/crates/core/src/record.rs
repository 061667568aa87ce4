//! One completed (or failed) grid cell.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::model_zoo::{Family, InitScheme, ModelSpec};
use crate::trainer::OptimizerKind;

/// Grid coordinates that identify a run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunCoordinates {
    pub family: Family,
    pub size: f64,
    pub optimizer: OptimizerKind,
    pub init: InitScheme,
    pub init_seed: u64,
    pub data_seed: u64,
}

impl RunCoordinates {
    /// Canonical text form hashed into the run id. `settings` carries the
    /// run-wide options that change results, such as batch size.
    pub fn canonical(&self, settings: &str) -> String {
        format!(
            "family={};size={};optimizer={};init={};init_seed={};data_seed={};{}",
            self.family,
            self.size,
            self.optimizer,
            self.init,
            self.init_seed,
            self.data_seed,
            settings
        )
    }

    /// First 16 hex characters of the SHA-256 of the canonical string.
    pub fn run_id(&self, settings: &str) -> String {
        let digest = Sha256::digest(self.canonical(settings).as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }

    pub fn spec(&self) -> ModelSpec {
        ModelSpec::new(self.family, self.size)
    }

    /// Same cell except for the width.
    pub fn matches_except_size(&self, other: &RunCoordinates) -> bool {
        self.family == other.family
            && self.optimizer == other.optimizer
            && self.init == other.init
            && self.init_seed == other.init_seed
            && self.data_seed == other.data_seed
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub run_id: String,
    pub coords: RunCoordinates,
    pub stop_epoch: usize,
    pub baseline_accuracy: f64,
    pub baseline_loss: f64,
    pub effective_density: f64,
    pub unpruned_count: usize,
    pub prunable_count: usize,
    pub checkpoint_path: String,
    pub trajectory_path: String,
}
