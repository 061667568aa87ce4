//! Grid execution with per-run files and idempotent resume.
//!
//! Layout under the output directory:
//!
//! ```text
//! runs/<run_id>/checkpoint.json   selected weights
//! runs/<run_id>/train.json        per-epoch history
//! runs/<run_id>/trajectory.csv    pruning trajectory
//! runs/<run_id>/record.json       finished run
//! runs/<run_id>/error.json        failed run
//! runs.csv, trajectories.csv      merged in grid order
//! ```

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::fetch::fetch_all;
use crate::data::{
    load_cifar10, load_mnist, split_validation, synthetic_dataset_with_spread, Dataset,
    DatasetName, SplitSpec, VALIDATION_COUNT,
};
use crate::error::{Error, Result};
use crate::model_zoo::{build_model, count_prunable_weights, ModelSpec};
use crate::nn::{Network, RngStream};
use crate::orchestrator::config::ExperimentConfig;
use crate::pruner::{absolute_unpruned, effective_density, pruning_trajectory, PruneTrajectory};
use crate::record::{RunCoordinates, RunRecord};
use crate::trainer::{train, Checkpoint, CheckpointMetrics, EpochRecord, TrainConfig};

/// One point of the experiment grid.
#[derive(Clone, Debug, PartialEq)]
pub struct GridCell {
    pub coords: RunCoordinates,
    pub run_id: String,
}

/// Cells in execution order: family, optimizer, init, size, data seed, init seed.
pub fn grid_cells(cfg: &ExperimentConfig) -> Result<Vec<GridCell>> {
    let mut cells = Vec::new();
    for &family in &cfg.families {
        for &optimizer in &cfg.optimizers {
            let settings = cfg.settings_key(family, optimizer)?;
            for &init in &cfg.inits {
                for &size in &cfg.sizes {
                    for &data_seed in &cfg.data_seeds {
                        for &init_seed in &cfg.init_seeds {
                            let coords = RunCoordinates {
                                family,
                                size,
                                optimizer,
                                init,
                                init_seed,
                                data_seed,
                            };
                            let run_id = coords.run_id(&settings);
                            if !cells.iter().any(|c: &GridCell| c.run_id == run_id) {
                                cells.push(GridCell { coords, run_id });
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(cells)
}

/// Finished or failed run as persisted on disk.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum RunOutcome {
    Done(RunRecord),
    Failed {
        run_id: String,
        coords: RunCoordinates,
        message: String,
    },
}

impl RunOutcome {
    pub fn run_id(&self) -> &str {
        match self {
            RunOutcome::Done(r) => &r.run_id,
            RunOutcome::Failed { run_id, .. } => run_id,
        }
    }

    pub fn record(&self) -> Option<&RunRecord> {
        match self {
            RunOutcome::Done(r) => Some(r),
            RunOutcome::Failed { .. } => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub run_id: String,
    pub selected_epoch: usize,
    pub epochs: Vec<EpochRecord>,
}

/// Training and test splits of each dataset the grid touches.
pub struct PreparedData {
    entries: Vec<(DatasetName, Vec<usize>, Dataset, Dataset)>,
    validation_count: Vec<(DatasetName, usize)>,
}

impl PreparedData {
    fn find(&self, name: DatasetName, shape: &[usize]) -> Result<(&Dataset, &Dataset)> {
        self.entries
            .iter()
            .find(|(n, s, _, _)| *n == name && (name != DatasetName::Synthetic || s == shape))
            .map(|(_, _, train, test)| (train, test))
            .ok_or_else(|| Error::invalid(format!("dataset {name} was not prepared")))
    }

    /// Training split (validation removed) and validation split for a data seed.
    pub fn splits(
        &self,
        cfg: &ExperimentConfig,
        spec: &ModelSpec,
        data_seed: u64,
    ) -> Result<(Dataset, Dataset)> {
        let name = cfg.dataset_for(spec.family);
        let (full, _) = self.find(name, &spec.input_shape)?;
        let validation_count = self
            .validation_count
            .iter()
            .find(|(n, _)| *n == name)
            .map_or(VALIDATION_COUNT, |(_, c)| *c);
        split_validation(
            full,
            SplitSpec {
                data_seed,
                validation_count,
            },
        )
    }

    /// Held-out test split, shared by every data seed.
    pub fn test(&self, cfg: &ExperimentConfig, spec: &ModelSpec) -> Result<Dataset> {
        let name = cfg.dataset_for(spec.family);
        Ok(self.find(name, &spec.input_shape)?.1.clone())
    }
}

/// Loads (and, if allowed, downloads) every dataset needed by the grid.
pub fn prepare_data(cfg: &ExperimentConfig) -> Result<PreparedData> {
    let mut entries = Vec::new();
    let mut validation_count = Vec::new();
    for &family in &cfg.families {
        let name = cfg.dataset_for(family);
        let shape = family.default_input_shape();
        if entries.iter().any(
            |(n, s, _, _): &(DatasetName, Vec<usize>, Dataset, Dataset)| {
                *n == name && (name != DatasetName::Synthetic || *s == shape)
            },
        ) {
            continue;
        }
        let (train, test) = match name {
            DatasetName::Mnist => {
                let (dir, files) = cfg.fetch_plan(name).expect("mnist has a fetch plan");
                if cfg.fetch {
                    fetch_all(&files, &dir, cfg.mirror().as_deref())?;
                }
                load_mnist(&dir)?
            }
            DatasetName::Cifar10 => {
                let (dir, files) = cfg.fetch_plan(name).expect("cifar10 has a fetch plan");
                if cfg.fetch {
                    fetch_all(&files, &dir, cfg.mirror().as_deref())?;
                }
                load_cifar10(&dir)?
            }
            DatasetName::Synthetic => {
                let total = cfg.synthetic_train + 2 * cfg.synthetic_val;
                let all = synthetic_dataset_with_spread(
                    &mut RngStream::keyed("synthetic-data", 0, 0),
                    total,
                    &shape,
                    10,
                    cfg.synthetic_spread,
                )?;
                let train_part: Vec<usize> = (0..cfg.synthetic_train + cfg.synthetic_val).collect();
                let test_part: Vec<usize> =
                    (cfg.synthetic_train + cfg.synthetic_val..total).collect();
                validation_count.push((name, cfg.synthetic_val));
                (all.subset(&train_part), all.subset(&test_part))
            }
        };
        entries.push((name, shape, train, test));
    }
    Ok(PreparedData {
        entries,
        validation_count,
    })
}

pub fn run_dir(out: &Path, run_id: &str) -> PathBuf {
    out.join("runs").join(run_id)
}

fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent.display().to_string(), e))?;
    }
    let tmp = path.with_extension("partial");
    std::fs::write(&tmp, contents).map_err(|e| Error::io(tmp.display().to_string(), e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path.display().to_string(), e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text =
        std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    Ok(serde_json::from_str(&text)?)
}

/// Network at initialization, exactly as training started from it.
pub fn initial_network(coords: &RunCoordinates) -> Result<Network> {
    build_model(
        &coords.spec(),
        coords.init,
        &mut RngStream::keyed("init", coords.init_seed, 0),
    )
}

fn train_stage(cell: &GridCell, data: &PreparedData, cfg: &ExperimentConfig) -> Result<()> {
    let dir = run_dir(&cfg.out_dir, &cell.run_id);
    if dir.join("checkpoint.json").exists() {
        return Ok(());
    }
    let spec = cell.coords.spec();
    let (train_set, val_set) = data.splits(cfg, &spec, cell.coords.data_seed)?;
    let recipe = cfg.recipe(cell.coords.family, cell.coords.optimizer)?;
    let mut tc = TrainConfig::new(recipe, cell.coords.data_seed);
    tc.batch_size = cfg.batch_size;
    log::info!("train {} {}", cell.run_id, cell.coords.canonical(""));
    let (net, history) = train(initial_network(&cell.coords)?, &train_set, &val_set, &tc)?;
    let selected = history
        .selected()
        .cloned()
        .expect("training selects an epoch");
    write_json(
        &dir.join("train.json"),
        &TrainSummary {
            run_id: cell.run_id.clone(),
            selected_epoch: history.selected_epoch,
            epochs: history.epochs,
        },
    )?;
    Checkpoint::capture(
        &spec,
        &net,
        cell.coords.optimizer,
        selected.epoch,
        CheckpointMetrics {
            train_loss: selected.train_loss,
            val_loss: selected.val_loss,
            val_accuracy: selected.val_accuracy,
        },
    )
    .save(&dir.join("checkpoint.json"))
}

fn prune_stage(cell: &GridCell, data: &PreparedData, cfg: &ExperimentConfig) -> Result<RunRecord> {
    let dir = run_dir(&cfg.out_dir, &cell.run_id);
    let record_path = dir.join("record.json");
    if record_path.exists() {
        return read_json(&record_path);
    }
    let checkpoint_path = dir.join("checkpoint.json");
    if !checkpoint_path.exists() {
        return Err(Error::invalid(format!(
            "run {} has no checkpoint; train it first",
            cell.run_id
        )));
    }
    let checkpoint = Checkpoint::load(&checkpoint_path)?;
    let net = checkpoint.restore()?;
    let spec = cell.coords.spec();
    let (_, val_set) = data.splits(cfg, &spec, cell.coords.data_seed)?;
    log::info!("prune {}", cell.run_id);
    let trajectory = pruning_trajectory(&net, &val_set, &cell.run_id)?;
    write_atomic(&dir.join("trajectory.csv"), trajectory.to_csv().as_bytes())?;
    let ed = effective_density(&trajectory, cfg.threshold_pp)?;
    let record = RunRecord {
        run_id: cell.run_id.clone(),
        coords: cell.coords.clone(),
        stop_epoch: checkpoint.epoch,
        baseline_accuracy: trajectory.baseline_accuracy,
        baseline_loss: trajectory.baseline_loss,
        effective_density: ed.fraction,
        unpruned_count: absolute_unpruned(&ed, &spec),
        prunable_count: count_prunable_weights(&spec),
        checkpoint_path: format!("runs/{}/checkpoint.json", cell.run_id),
        trajectory_path: format!("runs/{}/trajectory.csv", cell.run_id),
    };
    write_json(&record_path, &record)?;
    Ok(record)
}

/// Which part of the per-run pipeline to execute.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stage {
    Train,
    Prune,
    Both,
}

fn load_outcome(out: &Path, cell: &GridCell) -> Option<RunOutcome> {
    let dir = run_dir(out, &cell.run_id);
    if let Ok(record) = read_json::<RunRecord>(&dir.join("record.json")) {
        return Some(RunOutcome::Done(record));
    }
    read_json::<RunOutcome>(&dir.join("error.json")).ok()
}

fn execute(
    cell: &GridCell,
    data: &PreparedData,
    cfg: &ExperimentConfig,
    stage: Stage,
) -> Result<Option<RunOutcome>> {
    if let Some(done) = load_outcome(&cfg.out_dir, cell) {
        return Ok(Some(done));
    }
    let result = match stage {
        Stage::Train => train_stage(cell, data, cfg).map(|()| None),
        Stage::Prune => prune_stage(cell, data, cfg).map(|r| Some(RunOutcome::Done(r))),
        Stage::Both => train_stage(cell, data, cfg)
            .and_then(|()| prune_stage(cell, data, cfg))
            .map(|r| Some(RunOutcome::Done(r))),
    };
    match result {
        Ok(outcome) => Ok(outcome),
        Err(e @ Error::Io { .. }) => Err(e),
        Err(e)
            if stage == Stage::Prune
                && !run_dir(&cfg.out_dir, &cell.run_id)
                    .join("checkpoint.json")
                    .exists() =>
        {
            Err(e)
        }
        Err(e) => {
            log::warn!("run {} failed: {e}", cell.run_id);
            let failed = RunOutcome::Failed {
                run_id: cell.run_id.clone(),
                coords: cell.coords.clone(),
                message: e.to_string(),
            };
            write_json(
                &run_dir(&cfg.out_dir, &cell.run_id).join("error.json"),
                &failed,
            )?;
            Ok(Some(failed))
        }
    }
}

/// Runs every grid cell that has no finished or failed record yet, then
/// merges all per-run files into `runs.csv` and `trajectories.csv`.
/// Returns the outcomes of all cells in grid order.
pub fn run_grid(cfg: &ExperimentConfig) -> Result<Vec<RunOutcome>> {
    run_stage(cfg, Stage::Both)
}

pub fn run_stage(cfg: &ExperimentConfig, stage: Stage) -> Result<Vec<RunOutcome>> {
    let cells = grid_cells(cfg)?;
    let data = prepare_data(cfg)?;
    std::fs::create_dir_all(&cfg.out_dir)
        .map_err(|e| Error::io(cfg.out_dir.display().to_string(), e))?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads)
        .build()
        .map_err(|e| Error::invalid(format!("thread pool: {e}")))?;
    pool.install(|| {
        cells
            .par_iter()
            .map(|cell| execute(cell, &data, cfg, stage).map(|_| ()))
            .collect::<Result<Vec<()>>>()
    })?;
    merge_outputs(cfg, &cells)
}

/// Reads every per-run file and writes the merged CSVs.
pub fn merge_outputs(cfg: &ExperimentConfig, cells: &[GridCell]) -> Result<Vec<RunOutcome>> {
    let outcomes: Vec<RunOutcome> = cells
        .iter()
        .filter_map(|c| load_outcome(&cfg.out_dir, c))
        .collect();
    write_atomic(
        &cfg.out_dir.join("runs.csv"),
        runs_csv(&outcomes).as_bytes(),
    )?;
    let mut traj = String::from("run_id,cycle,density,val_accuracy,val_loss\n");
    for outcome in &outcomes {
        if let Some(r) = outcome.record() {
            load_trajectory(&cfg.out_dir, r)?.append_csv_rows(&mut traj);
        }
    }
    write_atomic(&cfg.out_dir.join("trajectories.csv"), traj.as_bytes())?;
    Ok(outcomes)
}

pub fn load_trajectory(out: &Path, record: &RunRecord) -> Result<PruneTrajectory> {
    let path = out.join(&record.trajectory_path);
    let text =
        std::fs::read_to_string(&path).map_err(|e| Error::io(path.display().to_string(), e))?;
    PruneTrajectory::from_csv(&text)
}

pub fn load_train_summary(out: &Path, run_id: &str) -> Result<TrainSummary> {
    read_json(&run_dir(out, run_id).join("train.json"))
}

pub const RUNS_CSV_HEADER: &str = "run_id,status,family,size,optimizer,init,init_seed,data_seed,stop_epoch,baseline_accuracy,baseline_loss,effective_density,unpruned_count,prunable_count,checkpoint_path,trajectory_path,error";

pub fn runs_csv(outcomes: &[RunOutcome]) -> String {
    let mut out = String::from(RUNS_CSV_HEADER);
    out.push('\n');
    for o in outcomes {
        match o {
            RunOutcome::Done(r) => {
                let c = &r.coords;
                let _ = writeln!(
                    out,
                    "{},done,{},{},{},{},{},{},{},{},{},{},{},{},{},{},",
                    r.run_id,
                    c.family,
                    c.size,
                    c.optimizer,
                    c.init,
                    c.init_seed,
                    c.data_seed,
                    r.stop_epoch,
                    r.baseline_accuracy,
                    r.baseline_loss,
                    r.effective_density,
                    r.unpruned_count,
                    r.prunable_count,
                    r.checkpoint_path,
                    r.trajectory_path
                );
            }
            RunOutcome::Failed {
                run_id,
                coords: c,
                message,
            } => {
                let clean: String = message
                    .chars()
                    .map(|ch| {
                        if ch == ',' || ch == '\n' || ch == '\r' {
                            ';'
                        } else {
                            ch
                        }
                    })
                    .collect();
                let _ = writeln!(
                    out,
                    "{run_id},failed,{},{},{},{},{},{},,,,,,,,,{clean}",
                    c.family, c.size, c.optimizer, c.init, c.init_seed, c.data_seed
                );
            }
        }
    }
    out
}

/// Parses a `runs.csv` written by [`runs_csv`].
pub fn parse_runs_csv(text: &str, path: &Path) -> Result<Vec<RunOutcome>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header == RUNS_CSV_HEADER => {}
        _ => {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                offset: 0,
                message: "unexpected runs.csv header".into(),
            })
        }
    }
    let mut out = Vec::new();
    for (i, line) in lines {
        if line.is_empty() {
            continue;
        }
        let bad = |what: &str| Error::Config {
            path: path.to_path_buf(),
            line: i + 1,
            message: format!("bad {what} in '{line}'"),
        };
        let f: Vec<&str> = line.splitn(17, ',').collect();
        if f.len() != 17 {
            return Err(bad("field count"));
        }
        let coords = RunCoordinates {
            family: f[2].parse().map_err(|_| bad("family"))?,
            size: f[3].parse().map_err(|_| bad("size"))?,
            optimizer: f[4].parse().map_err(|_| bad("optimizer"))?,
            init: f[5].parse().map_err(|_| bad("init"))?,
            init_seed: f[6].parse().map_err(|_| bad("init_seed"))?,
            data_seed: f[7].parse().map_err(|_| bad("data_seed"))?,
        };
        out.push(match f[1] {
            "done" => RunOutcome::Done(RunRecord {
                run_id: f[0].to_string(),
                coords,
                stop_epoch: f[8].parse().map_err(|_| bad("stop_epoch"))?,
                baseline_accuracy: f[9].parse().map_err(|_| bad("baseline_accuracy"))?,
                baseline_loss: f[10].parse().map_err(|_| bad("baseline_loss"))?,
                effective_density: f[11].parse().map_err(|_| bad("effective_density"))?,
                unpruned_count: f[12].parse().map_err(|_| bad("unpruned_count"))?,
                prunable_count: f[13].parse().map_err(|_| bad("prunable_count"))?,
                checkpoint_path: f[14].to_string(),
                trajectory_path: f[15].to_string(),
            }),
            "failed" => RunOutcome::Failed {
                run_id: f[0].to_string(),
                coords,
                message: f[16].to_string(),
            },
            _ => return Err(bad("status")),
        });
    }
    Ok(out)
}

pub fn read_runs_csv(out: &Path) -> Result<Vec<RunOutcome>> {
    let path = out.join("runs.csv");
    let text =
        std::fs::read_to_string(&path).map_err(|e| Error::io(path.display().to_string(), e))?;
    parse_runs_csv(&text, &path)
}
