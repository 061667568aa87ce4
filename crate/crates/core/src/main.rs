use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use densitometer::data::fetch::fetch_all;
use densitometer::data::DatasetName;
use densitometer::orchestrator::config::{parse_list, parse_seeds};
use densitometer::orchestrator::{self, report, ExperimentConfig, Stage};

#[derive(Parser)]
#[command(
    name = "densitometer",
    version,
    about = "Train, prune and measure width-scaled networks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Experiment config file (key = value with [sections]).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Init seeds, e.g. `0..2` or `0,3,4`.
    #[arg(long, global = true)]
    seeds: Option<String>,
    /// Width factors, e.g. `0.1,1`.
    #[arg(long, global = true)]
    sizes: Option<String>,
    /// Runs trained in parallel
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Accuracy-drop threshold in percentage points.
    #[arg(long, global = true)]
    threshold: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Download the datasets the config needs.
    FetchData,
    /// Train every grid cell and keep the selected checkpoint.
    Train,
    /// Prune trained checkpoints and record effective densities.
    Prune,
    /// Overlap, correctness embedding and selectivity probes.
    Analyze,
    /// ANOVA and null-hypothesis t-tests into stats.json.
    Stats,
    /// SVG figures with sibling CSVs.
    Report,
    /// Whole pipeline: train, prune, stats, analyze, report.
    Repro,
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig, String> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path).map_err(|e| e.to_string())?,
        None => ExperimentConfig::default(),
    };
    if let Some(out) = &cli.out {
        cfg.out_dir = out.clone();
    }
    if let Some(seeds) = &cli.seeds {
        cfg.init_seeds = parse_seeds(seeds)?;
    }
    if let Some(sizes) = &cli.sizes {
        cfg.sizes = parse_list(sizes)?;
    }
    if let Some(threads) = cli.threads {
        cfg.threads = threads;
    }
    if let Some(threshold) = cli.threshold {
        cfg.threshold_pp = threshold;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn fetch(cfg: &ExperimentConfig) -> densitometer::Result<()> {
    let mirror = cfg.mirror();
    let mut names: Vec<DatasetName> = cfg.families.iter().map(|&f| cfg.dataset_for(f)).collect();
    names.dedup();
    for (dir, entries) in names.into_iter().filter_map(|n| cfg.fetch_plan(n)) {
        for path in fetch_all(&entries, &dir, mirror.as_deref())? {
            println!("{}", path.display());
        }
    }
    Ok(())
}

fn run(command: &Command, cfg: &ExperimentConfig) -> densitometer::Result<()> {
    let out = &cfg.out_dir;
    match command {
        Command::FetchData => fetch(cfg),
        Command::Train => summarize(orchestrator::run_stage(cfg, Stage::Train)?),
        Command::Prune => summarize(orchestrator::run_stage(cfg, Stage::Prune)?),
        Command::Analyze => orchestrator::run_analysis(cfg),
        Command::Stats => orchestrator::write_stats(out, cfg.threshold_pp).map(|_| ()),
        Command::Report => report::emit_report_from_dir(out, cfg.threshold_pp).map(|_| ()),
        Command::Repro => {
            summarize(orchestrator::run_grid(cfg)?)?;
            orchestrator::write_stats(out, cfg.threshold_pp)?;
            orchestrator::run_analysis(cfg)?;
            report::emit_report_from_dir(out, cfg.threshold_pp).map(|_| ())
        }
    }
}

fn summarize(outcomes: Vec<orchestrator::RunOutcome>) -> densitometer::Result<()> {
    let done = outcomes.iter().filter(|o| o.record().is_some()).count();
    println!("{done} finished, {} failed", outcomes.len() - done);
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let cfg = match load_config(&cli) {
        Ok(cfg) => cfg,
        Err(message) => {
            eprintln!("error: {message}");
            return ExitCode::from(1);
        }
    };
    match run(&cli.command, &cfg) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
