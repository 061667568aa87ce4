//! Runs the 50-cycle magnitude-pruning sweep on a trained network and reads
//! off the effective density at several accuracy-drop thresholds.
//!
//! ```text
//! cargo run --release --example prune_sweep
//! ```

use densitometer::data::{split_validation, synthetic_dataset_with_spread, SplitSpec};
use densitometer::model_zoo::{build_model, Family, InitScheme, ModelSpec};
use densitometer::nn::RngStream;
use densitometer::pruner::{absolute_unpruned, effective_density, pruning_trajectory};
use densitometer::trainer::{train, OptimizerKind, Recipe, StoppingRule, TrainConfig};

fn main() -> densitometer::Result<()> {
    let all = synthetic_dataset_with_spread(
        &mut RngStream::keyed("synthetic-data", 0, 0),
        1500,
        &[1, 28, 28],
        10,
        0.3,
    )?;
    let (train_set, val_set) = split_validation(
        &all,
        SplitSpec {
            data_seed: 0,
            validation_count: 500,
        },
    )?;
    let spec = ModelSpec::new(Family::Mlp, 0.5);
    let net = build_model(&spec, InitScheme::He, &mut RngStream::keyed("init", 1, 0))?;
    let recipe = Recipe {
        optimizer: OptimizerKind::Sgd,
        learning_rate: 0.05,
        rule: StoppingRule::FixedEpochsThenValMin { epochs: 15 },
    };
    let (trained, _) = train(net, &train_set, &val_set, &TrainConfig::new(recipe, 0))?;

    let trajectory = pruning_trajectory(&trained, &val_set, "example")?;
    for c in trajectory.cycles.iter().step_by(5) {
        println!(
            "cycle {:>2}  density {:.3}  accuracy {:.3}",
            c.cycle, c.density, c.val_accuracy
        );
    }
    for threshold in [1.0, 5.0, 10.0] {
        let ed = effective_density(&trajectory, threshold)?;
        println!(
            "threshold {threshold:>4} pp: effective density {:.3} ({} weights unpruned)",
            ed.fraction,
            absolute_unpruned(&ed, &spec)
        );
    }
    Ok(())
}
