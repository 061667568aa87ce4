//! Runs a small seeded grid end to end: training, pruning, statistics,
//! analysis and figures, all written under a scratch directory.

use densitometer::data::DatasetName;
use densitometer::model_zoo::InitScheme;
use densitometer::orchestrator::report::emit_report_from_dir;
use densitometer::orchestrator::{run_analysis, run_grid, write_stats, ExperimentConfig};

fn main() -> densitometer::Result<()> {
    let out = std::env::temp_dir().join("densitometer-example-grid");
    let cfg = ExperimentConfig {
        dataset: Some(DatasetName::Synthetic),
        synthetic_train: 400,
        synthetic_val: 200,
        synthetic_spread: 0.3,
        sizes: vec![0.1, 0.5],
        inits: vec![InitScheme::Glorot, InitScheme::He],
        init_seeds: vec![0, 1, 2],
        data_seeds: vec![0],
        learning_rate: Some(0.1),
        epochs: Some(10),
        out_dir: out.clone(),
        threads: 2,
        ..ExperimentConfig::default()
    };
    let outcomes = run_grid(&cfg)?;
    for o in &outcomes {
        if let Some(r) = o.record() {
            println!(
                "{} {}x {:<6} seed {}: ED {:.2}",
                r.run_id, r.coords.size, r.coords.init, r.coords.init_seed, r.effective_density
            );
        }
    }
    let stats = write_stats(&out, cfg.threshold_pp)?;
    for g in &stats.groups {
        if let Some(a) = &g.anova {
            println!(
                "{} {} {}: ANOVA F = {:.2}, p = {:.3e}",
                g.family, g.optimizer, g.init, a.f, a.p
            );
        }
    }
    run_analysis(&cfg)?;
    for path in emit_report_from_dir(&out, cfg.threshold_pp)? {
        println!("wrote {}", path.display());
    }
    Ok(())
}
