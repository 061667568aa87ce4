//! Train width-scaled networks, prune them by weight magnitude without
//! retraining, and measure how the fraction of unprunable weights changes
//! with width.

pub mod analysis;
pub mod data;
pub mod error;
pub mod model_zoo;
pub mod nn;
pub mod orchestrator;
pub mod pruner;
pub mod record;
pub mod stats;
pub mod trainer;

pub use error::{Error, Result};
