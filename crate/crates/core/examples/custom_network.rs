//! Assembles a small convolutional network by hand and trains it with Adam.

use densitometer::data::{split_validation, synthetic_dataset_with_spread, SplitSpec};
use densitometer::nn::{BatchNorm, Layer, Network, RngStream, Tensor, Weighted};
use densitometer::trainer::{evaluate, train, OptimizerKind, Recipe, StoppingRule, TrainConfig};

fn weighted(name: &str, shape: &[usize], stream: &mut RngStream) -> densitometer::Result<Weighted> {
    let fan_in: usize = shape[1..].iter().product();
    let bound = (6.0 / fan_in as f32).sqrt();
    Ok(Weighted {
        name: name.into(),
        weight: stream.uniform(-bound, bound, shape)?,
        bias: Tensor::zeros(&shape[..1]),
        mask: None,
    })
}

fn main() -> densitometer::Result<()> {
    let mut s = RngStream::keyed("init", 0, 0);
    let net = Network::new(
        vec![3, 8, 8],
        10,
        vec![
            Layer::Conv2d(weighted("conv1", &[8, 3, 3, 3], &mut s)?),
            Layer::BatchNorm(BatchNorm::new("bn1", 8)),
            Layer::Relu,
            Layer::MaxPool2x2,
            Layer::Flatten,
            Layer::Dense(weighted("fc1", &[10, 8 * 4 * 4], &mut s)?),
        ],
    );
    println!("{} prunable weights", net.prunable_count());

    let all = synthetic_dataset_with_spread(
        &mut RngStream::keyed("synthetic-data", 0, 0),
        800,
        &[3, 8, 8],
        10,
        0.3,
    )?;
    let (train_set, val_set) = split_validation(
        &all,
        SplitSpec {
            data_seed: 0,
            validation_count: 200,
        },
    )?;
    let recipe = Recipe {
        optimizer: OptimizerKind::Adam,
        learning_rate: 1e-3,
        rule: StoppingRule::FixedEpochsThenValMin { epochs: 10 },
    };
    let (trained, history) = train(net, &train_set, &val_set, &TrainConfig::new(recipe, 0))?;
    let best = history.selected().expect("at least one epoch");
    println!(
        "selected epoch {} (val loss {:.4})",
        best.epoch, best.val_loss
    );
    let (acc, _) = evaluate(&trained, &val_set)?;
    println!("validation accuracy {acc:.3}");
    Ok(())
}
