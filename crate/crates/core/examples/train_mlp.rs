//! Trains a 0.1x MLP on a synthetic ten-class task until the training loss
//! reaches a target, then reports validation accuracy per epoch.
//!
//! ```text
//! cargo run --release --example train_mlp
//! ```

use densitometer::data::{split_validation, synthetic_dataset_with_spread, SplitSpec};
use densitometer::model_zoo::{build_model, Family, InitScheme, ModelSpec};
use densitometer::nn::RngStream;
use densitometer::trainer::{evaluate, train, OptimizerKind, Recipe, StoppingRule, TrainConfig};

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

    let spec = ModelSpec::new(Family::Mlp, 0.1);
    let net = build_model(
        &spec,
        InitScheme::Glorot,
        &mut RngStream::keyed("init", 0, 0),
    )?;
    println!("{} prunable weights", net.prunable_count());

    let recipe = Recipe {
        optimizer: OptimizerKind::Sgd,
        learning_rate: 0.05,
        rule: StoppingRule::LossTarget {
            target: 0.2,
            max_epochs: 100,
        },
    };
    let (trained, history) = train(net, &train_set, &val_set, &TrainConfig::new(recipe, 0))?;
    for e in &history.epochs {
        println!(
            "epoch {:>3}  train loss {:.4}  val acc {:.3}",
            e.epoch, e.train_loss, e.val_accuracy
        );
    }
    let (acc, loss) = evaluate(&trained, &val_set)?;
    println!("final: accuracy {acc:.3}, loss {loss:.4}");
    Ok(())
}
