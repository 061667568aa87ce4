//! MNIST / CIFAR-10 loaders, the seeded validation split and synthetic
//! fixtures.

pub mod fetch;
pub mod idx;

use std::fmt;
use std::io::Read;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use flate2::read::GzDecoder;

use crate::error::{Error, Result};
use crate::nn::{RngStream, Tensor};

pub use idx::{encode_idx, parse_idx, IdxArray};

pub const VALIDATION_COUNT: usize = 5_000;
pub const CIFAR_RECORD: usize = 3073;
pub const CIFAR_BATCH_RECORDS: usize = 10_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DatasetName {
    Mnist,
    Cifar10,
    Synthetic,
}

impl std::str::FromStr for DatasetName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mnist" => Ok(DatasetName::Mnist),
            "cifar10" | "cifar-10" => Ok(DatasetName::Cifar10),
            "synthetic" => Ok(DatasetName::Synthetic),
            other => Err(Error::invalid(format!("unknown dataset '{other}'"))),
        }
    }
}

impl fmt::Display for DatasetName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DatasetName::Mnist => "mnist",
            DatasetName::Cifar10 => "cifar10",
            DatasetName::Synthetic => "synthetic",
        })
    }
}

/// Labelled images. Pixel storage is shared; a dataset is a view selecting
/// rows of that storage, so splitting never copies pixels.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub name: DatasetName,
    images: Arc<Tensor>,
    labels: Arc<Vec<u8>>,
    indices: Arc<Vec<usize>>,
}

impl Dataset {
    pub fn new(name: DatasetName, images: Tensor, labels: Vec<u8>) -> Result<Self> {
        if images.rows() != labels.len() {
            return Err(Error::invalid(format!(
                "{} images but {} labels",
                images.rows(),
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= 10) {
            return Err(Error::invalid(format!("label {bad} outside [0, 10)")));
        }
        let indices = (0..labels.len()).collect();
        Ok(Self {
            name,
            images: Arc::new(images),
            labels: Arc::new(labels),
            indices: Arc::new(indices),
        })
    }

    /// View of the items at `positions` of this view.
    pub fn subset(&self, positions: &[usize]) -> Self {
        self.view(positions.iter().map(|&p| self.indices[p]).collect())
    }

    fn view(&self, indices: Vec<usize>) -> Self {
        Self {
            name: self.name,
            images: Arc::clone(&self.images),
            labels: Arc::clone(&self.labels),
            indices: Arc::new(indices),
        }
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// Per-item shape, e.g. `[1, 28, 28]`.
    pub fn item_shape(&self) -> &[usize] {
        &self.images.shape()[1..]
    }

    /// Positions of this view within the backing storage.
    pub fn source_indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[self.indices[i]] as usize
    }

    pub fn labels(&self) -> Vec<usize> {
        self.indices
            .iter()
            .map(|&i| self.labels[i] as usize)
            .collect()
    }

    /// Images and labels at view positions `positions`.
    pub fn batch(&self, positions: &[usize]) -> (Tensor, Vec<usize>) {
        let rows: Vec<usize> = positions.iter().map(|&p| self.indices[p]).collect();
        let labels = rows.iter().map(|&r| self.labels[r] as usize).collect();
        (self.images.gather_rows(&rows), labels)
    }

    /// Contiguous slice `[start, end)` of the view.
    pub fn range(&self, start: usize, end: usize) -> (Tensor, Vec<usize>) {
        let positions: Vec<usize> = (start..end).collect();
        self.batch(&positions)
    }

    /// The first `n` items, for quick runs.
    pub fn take(&self, n: usize) -> Self {
        self.view(self.indices[..n.min(self.len())].to_vec())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SplitSpec {
    pub data_seed: u64,
    pub validation_count: usize,
}

impl SplitSpec {
    pub fn new(data_seed: u64) -> Self {
        Self {
            data_seed,
            validation_count: VALIDATION_COUNT,
        }
    }
}

/// Partitions `train` into (train', validation) with a Fisher–Yates shuffle of
/// indices keyed by the data seed. Both parts keep ascending source order.
pub fn split_validation(train: &Dataset, spec: SplitSpec) -> Result<(Dataset, Dataset)> {
    if train.len() <= spec.validation_count {
        return Err(Error::invalid(format!(
            "cannot take {} validation items from {}",
            spec.validation_count,
            train.len()
        )));
    }
    let mut order: Vec<usize> = train.indices.to_vec();
    RngStream::keyed("split", 0, spec.data_seed).shuffle(&mut order);
    let mut val = order[..spec.validation_count].to_vec();
    let mut rest = order[spec.validation_count..].to_vec();
    val.sort_unstable();
    rest.sort_unstable();
    Ok((train.view(rest), train.view(val)))
}

/// Default spread of the synthetic class centers.
pub const SYNTHETIC_SPREAD: f64 = 0.6;

/// One Gaussian blob per class, clipped to `[0, 1]`. Labels cycle through
/// the classes so every class is present when `n >= classes`.
pub fn synthetic_dataset(
    stream: &mut RngStream,
    n: usize,
    shape: &[usize],
    classes: usize,
) -> Result<Dataset> {
    synthetic_dataset_with_spread(stream, n, shape, classes, SYNTHETIC_SPREAD)
}

/// As [`synthetic_dataset`], with class centers drawn per feature from
/// `0.5 ± spread/2`. Small spreads make the classes overlap.
pub fn synthetic_dataset_with_spread(
    stream: &mut RngStream,
    n: usize,
    shape: &[usize],
    classes: usize,
    spread: f64,
) -> Result<Dataset> {
    if !(0.0..=1.0).contains(&spread) {
        return Err(Error::invalid(format!(
            "synthetic spread must lie in [0, 1], got {spread}"
        )));
    }
    if classes == 0 || classes > 10 || n < classes {
        return Err(Error::invalid(format!(
            "synthetic dataset needs 1..=10 classes and n >= classes, got n={n}, classes={classes}"
        )));
    }
    let dim: usize = shape.iter().product();
    let centers: Vec<Vec<f64>> = (0..classes)
        .map(|_| {
            (0..dim)
                .map(|_| 0.5 + spread * (stream.next_f64() - 0.5))
                .collect()
        })
        .collect();
    let mut data = Vec::with_capacity(n * dim);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let c = i % classes;
        labels.push(c as u8);
        for &mu in &centers[c] {
            data.push((mu + 0.1 * stream.next_normal()).clamp(0.0, 1.0) as f32);
        }
    }
    let mut full_shape = vec![n];
    full_shape.extend_from_slice(shape);
    Dataset::new(
        DatasetName::Synthetic,
        Tensor::new(full_shape, data)?,
        labels,
    )
}

/// Reads `dir/name`, falling back to `dir/name.gz`.
fn read_maybe_gz(dir: &Path, name: &str) -> Result<(PathBuf, Vec<u8>)> {
    let raw = dir.join(name);
    if raw.exists() {
        let bytes = std::fs::read(&raw).map_err(|e| Error::io(raw.display().to_string(), e))?;
        return Ok((raw, bytes));
    }
    let gz = dir.join(format!("{name}.gz"));
    let file = std::fs::File::open(&gz)
        .map_err(|e| Error::io(format!("{} (or {})", raw.display(), gz.display()), e))?;
    let mut bytes = Vec::new();
    GzDecoder::new(file)
        .read_to_end(&mut bytes)
        .map_err(|e| Error::io(gz.display().to_string(), e))?;
    Ok((gz, bytes))
}

fn mnist_part(dir: &Path, prefix: &str, expected: usize) -> Result<Dataset> {
    let (img_path, img_bytes) = read_maybe_gz(dir, &format!("{prefix}-images-idx3-ubyte"))?;
    let images = parse_idx(&img_bytes, &img_path)?;
    if images.magic() != idx::IMAGES_MAGIC {
        return Err(Error::Parse {
            path: img_path,
            offset: 0,
            message: format!(
                "expected magic 0x{:08x}, got 0x{:08x}",
                idx::IMAGES_MAGIC,
                images.magic()
            ),
        });
    }
    let (lbl_path, lbl_bytes) = read_maybe_gz(dir, &format!("{prefix}-labels-idx1-ubyte"))?;
    let labels = parse_idx(&lbl_bytes, &lbl_path)?;
    if labels.magic() != idx::LABELS_MAGIC {
        return Err(Error::Parse {
            path: lbl_path,
            offset: 0,
            message: format!(
                "expected magic 0x{:08x}, got 0x{:08x}",
                idx::LABELS_MAGIC,
                labels.magic()
            ),
        });
    }
    if images.count() != expected || labels.count() != expected {
        return Err(Error::Parse {
            path: img_path,
            offset: 4,
            message: format!(
                "expected {expected} items, images header says {}, labels header says {}",
                images.count(),
                labels.count()
            ),
        });
    }
    let (rows, cols) = (images.dims[1] as usize, images.dims[2] as usize);
    let pixels = images.body.iter().map(|&b| b as f32 / 255.0).collect();
    let tensor = Tensor::new(vec![expected, 1, rows, cols], pixels)?;
    Dataset::new(DatasetName::Mnist, tensor, labels.body)
}

/// Loads the four standard MNIST IDX files (raw or gzipped) from `dir`.
pub fn load_mnist(dir: &Path) -> Result<(Dataset, Dataset)> {
    Ok((
        mnist_part(dir, "train", 60_000)?,
        mnist_part(dir, "t10k", 10_000)?,
    ))
}

/// Decodes one CIFAR-10 binary batch file into (label bytes, scaled pixels).
pub fn parse_cifar_batch(bytes: &[u8], path: &Path) -> Result<(Vec<u8>, Vec<f32>)> {
    let expected = (CIFAR_BATCH_RECORDS * CIFAR_RECORD) as u64;
    if bytes.len() as u64 != expected {
        return Err(Error::Truncated {
            path: path.to_path_buf(),
            expected,
            actual: bytes.len() as u64,
        });
    }
    let mut labels = Vec::with_capacity(CIFAR_BATCH_RECORDS);
    let mut pixels = Vec::with_capacity(CIFAR_BATCH_RECORDS * (CIFAR_RECORD - 1));
    for (i, record) in bytes.chunks_exact(CIFAR_RECORD).enumerate() {
        if record[0] >= 10 {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                offset: (i * CIFAR_RECORD) as u64,
                message: format!("label byte {} outside [0, 10)", record[0]),
            });
        }
        labels.push(record[0]);
        pixels.extend(record[1..].iter().map(|&b| b as f32 / 255.0));
    }
    Ok((labels, pixels))
}

fn cifar_files(dir: &Path, names: &[String]) -> Result<Dataset> {
    let base = if dir.join("cifar-10-batches-bin").is_dir() {
        dir.join("cifar-10-batches-bin")
    } else {
        dir.to_path_buf()
    };
    let mut labels = Vec::new();
    let mut pixels = Vec::new();
    for name in names {
        let path = base.join(name);
        let bytes = std::fs::read(&path).map_err(|e| Error::io(path.display().to_string(), e))?;
        let (l, p) = parse_cifar_batch(&bytes, &path)?;
        labels.extend(l);
        pixels.extend(p);
    }
    let n = labels.len();
    Dataset::new(
        DatasetName::Cifar10,
        Tensor::new(vec![n, 3, 32, 32], pixels)?,
        labels,
    )
}

/// Loads `data_batch_1..5.bin` and `test_batch.bin` from `dir` (or its
/// `cifar-10-batches-bin` subdirectory).
pub fn load_cifar10(dir: &Path) -> Result<(Dataset, Dataset)> {
    let train: Vec<String> = (1..=5).map(|i| format!("data_batch_{i}.bin")).collect();
    Ok((
        cifar_files(dir, &train)?,
        cifar_files(dir, &["test_batch.bin".to_string()])?,
    ))
}
