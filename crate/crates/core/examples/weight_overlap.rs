//! Compares the smallest-magnitude weights before and after training, and
//! reports per-unit sparsity and class selectivity of the hidden layers.

use densitometer::analysis::{init_trained_overlap, layer_activity, OVERLAP_Q};
use densitometer::data::{split_validation, synthetic_dataset_with_spread, SplitSpec};
use densitometer::model_zoo::{build_model, Family, InitScheme, ModelSpec};
use densitometer::nn::RngStream;
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
    let spec = ModelSpec::new(Family::Mlp, 0.1);
    let init = build_model(
        &spec,
        InitScheme::Glorot,
        &mut RngStream::keyed("init", 0, 0),
    )?;
    let recipe = Recipe {
        optimizer: OptimizerKind::Sgd,
        learning_rate: 0.05,
        rule: StoppingRule::FixedEpochsThenValMin { epochs: 20 },
    };
    let (trained, _) = train(
        init.clone(),
        &train_set,
        &val_set,
        &TrainConfig::new(recipe, 0),
    )?;

    let report = init_trained_overlap(&init, &trained, OVERLAP_Q, "example")?;
    println!("chance overlap {:.1}%", report.chance_pct());
    for l in &report.layers {
        println!(
            "{:>4}: {:>6} weights, overlap {:.2}% ({:.1}% of the subset)",
            l.layer, l.weights, l.overlap_pct, l.subset_pct
        );
    }

    for activity in layer_activity(&trained, &val_set)? {
        let hoyer: Vec<f64> = activity.hoyer.iter().flatten().copied().collect();
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len().max(1) as f64;
        println!(
            "{}: {} units, mean Hoyer {:.3}, mean selectivity {:.3}, {} silent",
            activity.profile.layer,
            activity.selectivity.len(),
            mean(&hoyer),
            mean(&activity.selectivity),
            activity.hoyer.len() - hoyer.len()
        );
    }
    Ok(())
}
