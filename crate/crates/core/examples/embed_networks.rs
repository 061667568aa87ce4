//! Embeds networks by their per-example correctness on a held-out set with
//! exact t-SNE. Networks of the same size tend to land near each other.

use densitometer::analysis::{correctness_vector, tsne, TsneParams};
use densitometer::data::{split_validation, synthetic_dataset_with_spread, SplitSpec};
use densitometer::model_zoo::{build_model, Family, InitScheme, ModelSpec};
use densitometer::nn::RngStream;
use densitometer::trainer::{train, OptimizerKind, Recipe, StoppingRule, TrainConfig};

fn main() -> densitometer::Result<()> {
    let all = synthetic_dataset_with_spread(
        &mut RngStream::keyed("synthetic-data", 0, 0),
        900,
        &[1, 28, 28],
        10,
        0.3,
    )?;
    let (train_set, held_out) = split_validation(
        &all,
        SplitSpec {
            data_seed: 0,
            validation_count: 300,
        },
    )?;
    let recipe = Recipe {
        optimizer: OptimizerKind::Sgd,
        learning_rate: 0.05,
        rule: StoppingRule::FixedEpochsThenValMin { epochs: 12 },
    };

    let mut labels = Vec::new();
    let mut vectors = Vec::new();
    for size in [0.1, 1.0] {
        for seed in 0..4 {
            let net = build_model(
                &ModelSpec::new(Family::Mlp, size),
                InitScheme::Glorot,
                &mut RngStream::keyed("init", seed, 0),
            )?;
            let (trained, _) = train(net, &train_set, &held_out, &TrainConfig::new(recipe, 0))?;
            let cv = correctness_vector(&trained, &held_out)?;
            labels.push(format!("{size}x seed {seed} (acc {:.3})", cv.accuracy()));
            vectors.push(cv.as_f64());
        }
    }

    let params = TsneParams {
        perplexity: 2.0,
        ..TsneParams::default()
    };
    let result = tsne(&vectors, &params, &mut RngStream::keyed("tsne", 0, 0))?;
    println!("KL {:.4} -> {:.4}", result.kl_initial, result.kl_final);
    for (label, [x, y]) in labels.iter().zip(&result.embedding) {
        println!("{label:<24} {x:>9.3} {y:>9.3}");
    }
    Ok(())
}
