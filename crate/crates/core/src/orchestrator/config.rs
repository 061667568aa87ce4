//! Plain-text experiment configuration: `key = value` lines under
//! `[section]` headers, `#` comments.
//!
//! ```text
//! [data]
//! dir = data
//! sha256.test_batch.bin = 0f00...
//!
//! [grid]
//! families = mlp
//! sizes = 0.1, 0.5, 1, 2
//! init_seeds = 0..2
//! data_seeds = 0, 1
//!
//! [output]
//! dir = runs/desk
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::data::fetch::{
    cifar10_entries, mnist_entries, FetchEntry, DATA_DIR_ENV, DEFAULT_CIFAR10_URL,
    DEFAULT_MNIST_BASE, MIRROR_ENV,
};
use crate::data::{DatasetName, SYNTHETIC_SPREAD};
use crate::error::{Error, Result};
use crate::model_zoo::{Family, InitScheme, ModelSpec};
use crate::pruner::DEFAULT_THRESHOLD_PP;
use crate::trainer::{
    default_recipe, family_dataset, OptimizerKind, Recipe, StoppingRule, DEFAULT_BATCH_SIZE,
};

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub data_dir: PathBuf,
    /// Overrides each family's usual dataset, e.g. `synthetic` for smoke runs.
    pub dataset: Option<DatasetName>,
    /// Download missing datasets before running.
    pub fetch: bool,
    pub mirror: Option<String>,
    /// Expected SHA-256 per downloaded file name; overrides built-in values.
    pub checksums: BTreeMap<String, String>,
    pub synthetic_train: usize,
    pub synthetic_val: usize,
    /// Spread of the synthetic class centers; smaller is harder.
    pub synthetic_spread: f64,

    pub families: Vec<Family>,
    pub sizes: Vec<f64>,
    pub optimizers: Vec<OptimizerKind>,
    pub inits: Vec<InitScheme>,
    pub init_seeds: Vec<u64>,
    pub data_seeds: Vec<u64>,

    pub batch_size: usize,
    pub threshold_pp: f64,
    pub learning_rate: Option<f64>,
    pub loss_target: Option<f64>,
    pub max_epochs: Option<usize>,
    /// Switches to fixed-epoch training with validation-loss selection.
    pub epochs: Option<usize>,

    pub out_dir: PathBuf,
    pub threads: usize,
}

impl Default for ExperimentConfig {
    /// The desk-scale MNIST grid.
    fn default() -> Self {
        Self {
            data_dir: std::env::var_os(DATA_DIR_ENV)
                .map(PathBuf::from)
                .unwrap_or_else(|| PathBuf::from("data")),
            dataset: None,
            fetch: false,
            mirror: None,
            checksums: BTreeMap::new(),
            synthetic_train: 2000,
            synthetic_val: 500,
            synthetic_spread: SYNTHETIC_SPREAD,
            families: vec![Family::Mlp],
            sizes: vec![0.1, 0.5, 1.0, 2.0],
            optimizers: vec![OptimizerKind::Sgd],
            inits: vec![InitScheme::Glorot],
            init_seeds: vec![0, 1, 2],
            data_seeds: vec![0, 1],
            batch_size: DEFAULT_BATCH_SIZE,
            threshold_pp: DEFAULT_THRESHOLD_PP,
            learning_rate: None,
            loss_target: None,
            max_epochs: None,
            epochs: None,
            out_dir: PathBuf::from("runs/desk"),
            threads: 1,
        }
    }
}

/// Comma-separated list; integer items may be inclusive ranges `a..b`.
pub fn parse_list<T: FromStr>(value: &str) -> std::result::Result<Vec<T>, String>
where
    T::Err: std::fmt::Display,
{
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<T>().map_err(|e| format!("'{s}': {e}")))
        .collect()
}

pub fn parse_seeds(value: &str) -> std::result::Result<Vec<u64>, String> {
    let mut out = Vec::new();
    for part in value.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        if let Some((a, b)) = part.split_once("..") {
            let a: u64 = a
                .trim()
                .parse()
                .map_err(|_| format!("bad seed range '{part}'"))?;
            let b: u64 = b
                .trim()
                .parse()
                .map_err(|_| format!("bad seed range '{part}'"))?;
            if a > b {
                return Err(format!("empty seed range '{part}'"));
            }
            out.extend(a..=b);
        } else {
            out.push(part.parse().map_err(|_| format!("bad seed '{part}'"))?);
        }
    }
    if out.is_empty() {
        return Err("seed list is empty".into());
    }
    Ok(out)
}

fn parse_bool(value: &str) -> std::result::Result<bool, String> {
    match value.to_ascii_lowercase().as_str() {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        other => Err(format!("expected true or false, got '{other}'")),
    }
}

fn parse_one<T: FromStr>(value: &str) -> std::result::Result<T, String>
where
    T::Err: std::fmt::Display,
{
    value.parse::<T>().map_err(|e| format!("'{value}': {e}"))
}

impl ExperimentConfig {
    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut cfg = Self::default();
        let base = path.parent().unwrap_or(Path::new(""));
        let mut section = String::new();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let err = |message: String| Error::Config {
                path: path.to_path_buf(),
                line: line_no,
                message,
            };
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[') {
                section = name
                    .strip_suffix(']')
                    .ok_or_else(|| err(format!("unterminated section header '{line}'")))?
                    .trim()
                    .to_string();
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| err(format!("expected key = value, got '{line}'")))?;
            let (key, value) = (key.trim(), value.trim());
            cfg.apply(&section, key, value, base).map_err(err)?;
        }
        cfg.validate().map_err(|message| Error::Config {
            path: path.to_path_buf(),
            line: 0,
            message,
        })?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        Self::parse(&text, path)
    }

    fn apply(
        &mut self,
        section: &str,
        key: &str,
        value: &str,
        base: &Path,
    ) -> std::result::Result<(), String> {
        let resolve = |v: &str| {
            let p = PathBuf::from(v);
            if p.is_absolute() {
                p
            } else {
                base.join(p)
            }
        };
        let optional = |v: &str| (!v.is_empty()).then(|| v.to_string());
        match (section, key) {
            ("data", "dir") => {
                if std::env::var_os(DATA_DIR_ENV).is_none() {
                    self.data_dir = resolve(value);
                }
            }
            ("data", "dataset") => self.dataset = Some(parse_one(value)?),
            ("data", "fetch") => self.fetch = parse_bool(value)?,
            ("data", "mirror") => self.mirror = optional(value),
            ("data", k) if k.starts_with("sha256.") => {
                let hex = value.to_ascii_lowercase();
                if hex.len() != 64 || !hex.bytes().all(|b| b.is_ascii_hexdigit()) {
                    return Err(format!("'{value}' is not a SHA-256 hex digest"));
                }
                self.checksums.insert(k["sha256.".len()..].to_string(), hex);
            }
            ("data", "synthetic_train") => self.synthetic_train = parse_one(value)?,
            ("data", "synthetic_val") => self.synthetic_val = parse_one(value)?,
            ("data", "synthetic_spread") => self.synthetic_spread = parse_one(value)?,
            ("grid", "families") => self.families = parse_list(value)?,
            ("grid", "sizes") => self.sizes = parse_list(value)?,
            ("grid", "optimizers") => self.optimizers = parse_list(value)?,
            ("grid", "inits") => self.inits = parse_list(value)?,
            ("grid", "init_seeds") => self.init_seeds = parse_seeds(value)?,
            ("grid", "data_seeds") => self.data_seeds = parse_seeds(value)?,
            ("train", "batch_size") => self.batch_size = parse_one(value)?,
            ("train", "threshold") => self.threshold_pp = parse_one(value)?,
            ("train", "learning_rate") => self.learning_rate = Some(parse_one(value)?),
            ("train", "loss_target") => self.loss_target = Some(parse_one(value)?),
            ("train", "max_epochs") => self.max_epochs = Some(parse_one(value)?),
            ("train", "epochs") => self.epochs = Some(parse_one(value)?),
            ("output", "dir") => self.out_dir = resolve(value),
            ("run", "threads") => self.threads = parse_one(value)?,
            _ if section.is_empty() => return Err(format!("key '{key}' outside any section")),
            _ => return Err(format!("unknown key '{key}' in section [{section}]")),
        }
        Ok(())
    }

    /// Mirror from the config, else from the environment.
    pub fn mirror(&self) -> Option<String> {
        self.mirror
            .clone()
            .or_else(|| std::env::var(MIRROR_ENV).ok())
    }

    /// Target directory and download list of a dataset, with configured
    /// checksums applied. `None` for the synthetic set.
    pub fn fetch_plan(&self, name: DatasetName) -> Option<(PathBuf, Vec<FetchEntry>)> {
        let (dir, mut entries) = match name {
            DatasetName::Mnist => (
                self.data_dir.join("mnist"),
                mnist_entries(DEFAULT_MNIST_BASE),
            ),
            DatasetName::Cifar10 => (
                self.data_dir.join("cifar10"),
                cifar10_entries(DEFAULT_CIFAR10_URL),
            ),
            DatasetName::Synthetic => return None,
        };
        for e in &mut entries {
            if let Some(hex) = self.checksums.get(&e.file) {
                e.sha256 = Some(hex.clone());
            }
        }
        Some((dir, entries))
    }

    /// Checks every grid cell against the supported recipes.
    pub fn validate(&self) -> std::result::Result<(), String> {
        if self.families.is_empty()
            || self.sizes.is_empty()
            || self.optimizers.is_empty()
            || self.inits.is_empty()
        {
            return Err("grid has an empty axis".into());
        }
        if self.init_seeds.is_empty() || self.data_seeds.is_empty() {
            return Err("seed lists must be nonempty".into());
        }
        if self.batch_size == 0 {
            return Err("batch_size must be at least 1".into());
        }
        if !(self.threshold_pp >= 0.0) {
            return Err(format!("threshold must be >= 0, got {}", self.threshold_pp));
        }
        if self.threads == 0 {
            return Err("threads must be at least 1".into());
        }
        for &family in &self.families {
            for &size in &self.sizes {
                ModelSpec::new(family, size)
                    .validate()
                    .map_err(|e| e.to_string())?;
            }
            for &optimizer in &self.optimizers {
                self.recipe(family, optimizer).map_err(|e| e.to_string())?;
            }
        }
        Ok(())
    }

    pub fn dataset_for(&self, family: Family) -> DatasetName {
        self.dataset.unwrap_or_else(|| family_dataset(family))
    }

    /// The family's default recipe with any overrides from `[train]`.
    pub fn recipe(&self, family: Family, optimizer: OptimizerKind) -> Result<Recipe> {
        let mut recipe = default_recipe(family, optimizer, family_dataset(family))?;
        if let Some(lr) = self.learning_rate {
            recipe.learning_rate = lr;
        }
        if let Some(epochs) = self.epochs {
            recipe.rule = StoppingRule::FixedEpochsThenValMin { epochs };
        } else if let StoppingRule::LossTarget { target, max_epochs } = recipe.rule {
            recipe.rule = StoppingRule::LossTarget {
                target: self.loss_target.unwrap_or(target),
                max_epochs: self.max_epochs.unwrap_or(max_epochs),
            };
        } else if let Some(epochs) = self.max_epochs {
            recipe.rule = StoppingRule::FixedEpochsThenValMin { epochs };
        }
        Ok(recipe)
    }

    /// Run-wide settings folded into every run id.
    pub fn settings_key(&self, family: Family, optimizer: OptimizerKind) -> Result<String> {
        let recipe = self.recipe(family, optimizer)?;
        let rule = match recipe.rule {
            StoppingRule::LossTarget { target, max_epochs } => {
                format!("loss<={target}@{max_epochs}")
            }
            StoppingRule::FixedEpochsThenValMin { epochs } => format!("epochs={epochs}"),
        };
        let mut key = format!(
            "dataset={};batch={};threshold={};lr={};rule={}",
            self.dataset_for(family),
            self.batch_size,
            self.threshold_pp,
            recipe.learning_rate,
            rule
        );
        if self.dataset_for(family) == DatasetName::Synthetic {
            key.push_str(&format!(
                ";synthetic={}/{};spread={}",
                self.synthetic_train, self.synthetic_val, self.synthetic_spread
            ));
        }
        Ok(key)
    }
}
