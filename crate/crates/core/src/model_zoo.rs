//! The three architecture families at arbitrary width, with Glorot/He
//! initialization and the prunable-weight count `|θ|`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{BatchNorm, Layer, Network, RngStream, Tensor, Weighted};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Family {
    #[serde(rename = "mlp")]
    Mlp,
    #[serde(rename = "conv2")]
    Conv2,
    #[serde(rename = "resnet-lite")]
    ResNetLite,
}

impl Family {
    pub fn as_str(self) -> &'static str {
        match self {
            Family::Mlp => "mlp",
            Family::Conv2 => "conv2",
            Family::ResNetLite => "resnet-lite",
        }
    }

    /// Input shape of the dataset each family is trained on.
    pub fn default_input_shape(self) -> Vec<usize> {
        match self {
            Family::Mlp => vec![1, 28, 28],
            Family::Conv2 | Family::ResNetLite => vec![3, 32, 32],
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mlp" => Ok(Family::Mlp),
            "conv2" | "conv-2" => Ok(Family::Conv2),
            "resnet-lite" | "resnetlite" | "resnet" => Ok(Family::ResNetLite),
            other => Err(Error::invalid(format!("unknown model family '{other}'"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum InitScheme {
    #[serde(rename = "glorot")]
    Glorot,
    #[serde(rename = "he")]
    He,
}

impl InitScheme {
    pub fn as_str(self) -> &'static str {
        match self {
            InitScheme::Glorot => "glorot",
            InitScheme::He => "he",
        }
    }
}

impl fmt::Display for InitScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for InitScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "glorot" | "xavier" => Ok(InitScheme::Glorot),
            "he" | "kaiming" => Ok(InitScheme::He),
            other => Err(Error::invalid(format!("unknown init scheme '{other}'"))),
        }
    }
}

/// Half-width of the uniform initialization interval.
pub fn init_bound(scheme: InitScheme, n_in: usize, n_out: usize) -> f64 {
    match scheme {
        InitScheme::Glorot => (6.0 / (n_in + n_out) as f64).sqrt(),
        InitScheme::He => (6.0 / n_in as f64).sqrt(),
    }
}

/// Default width scaled by `size`, rounded half-up and floored at 1.
pub fn scaled_width(default_width: usize, size: f64) -> usize {
    ((default_width as f64 * size + 0.5).floor() as usize).max(1)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub family: Family,
    pub size: f64,
    pub input_shape: Vec<usize>,
    pub class_count: usize,
}

impl ModelSpec {
    /// Spec with the family's default dataset shape and 10 classes.
    pub fn new(family: Family, size: f64) -> Self {
        Self {
            family,
            size,
            input_shape: family.default_input_shape(),
            class_count: 10,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.size.is_finite() && self.size > 0.0) {
            return Err(Error::invalid(format!(
                "size must be positive, got {}",
                self.size
            )));
        }
        if self.class_count == 0 || self.input_shape.iter().any(|&d| d == 0) {
            return Err(Error::invalid(
                "input shape and class count must be positive",
            ));
        }
        if matches!(self.family, Family::Conv2 | Family::ResNetLite) && self.input_shape.len() != 3
        {
            return Err(Error::invalid(format!(
                "{} needs a (channels, height, width) input, got {:?}",
                self.family, self.input_shape
            )));
        }
        if self.family == Family::Conv2 && (self.input_shape[1] < 2 || self.input_shape[2] < 2) {
            return Err(Error::invalid("conv2 input must be at least 2x2"));
        }
        Ok(())
    }

    pub fn width(&self, default_width: usize) -> usize {
        scaled_width(default_width, self.size)
    }

    /// Weight-tensor shapes of the prunable layers, in forward order.
    pub fn weight_shapes(&self) -> Vec<(String, Vec<usize>)> {
        let classes = self.class_count;
        match self.family {
            Family::Mlp => {
                let input: usize = self.input_shape.iter().product();
                let (h1, h2) = (self.width(300), self.width(100));
                vec![
                    ("fc1".into(), vec![h1, input]),
                    ("fc2".into(), vec![h2, h1]),
                    ("proj".into(), vec![classes, h2]),
                ]
            }
            Family::Conv2 => {
                let (c, h, w) = (
                    self.input_shape[0],
                    self.input_shape[1],
                    self.input_shape[2],
                );
                let (f, d) = (self.width(64), self.width(256));
                let flat = f * (h / 2) * (w / 2);
                vec![
                    ("conv1".into(), vec![f, c, 3, 3]),
                    ("conv2".into(), vec![f, f, 3, 3]),
                    ("fc1".into(), vec![d, flat]),
                    ("fc2".into(), vec![d, d]),
                    ("proj".into(), vec![classes, d]),
                ]
            }
            Family::ResNetLite => {
                let c = self.input_shape[0];
                let f = self.width(16);
                let mut shapes = vec![("conv1".to_string(), vec![f, c, 3, 3])];
                for b in 1..=3 {
                    shapes.push((format!("block{b}.conv1"), vec![f, f, 3, 3]));
                    shapes.push((format!("block{b}.conv2"), vec![f, f, 3, 3]));
                }
                shapes.push(("proj".into(), vec![classes, f]));
                shapes
            }
        }
    }
}

/// `|θ|`: weight elements of all dense and convolutional layers. Biases and
/// batch-norm parameters are excluded.
pub fn count_prunable_weights(spec: &ModelSpec) -> usize {
    spec.weight_shapes()
        .iter()
        .map(|(_, s)| s.iter().product::<usize>())
        .sum()
}

fn init_weighted(
    name: &str,
    shape: Vec<usize>,
    scheme: InitScheme,
    stream: &mut RngStream,
) -> Result<Weighted<f32>> {
    let out = shape[0];
    let receptive: usize = shape[2..].iter().product();
    let (n_in, n_out) = (shape[1] * receptive, out * receptive);
    let bound = init_bound(scheme, n_in, n_out) as f32;
    let weight = stream.uniform(-bound, bound, &shape)?;
    Ok(Weighted {
        name: name.to_string(),
        weight,
        bias: Tensor::zeros(&[out]),
        mask: None,
    })
}

/// Realizes `spec` with weights drawn from `stream` in forward layer order.
pub fn build_model(spec: &ModelSpec, init: InitScheme, stream: &mut RngStream) -> Result<Network> {
    spec.validate()?;
    let mut weights = spec
        .weight_shapes()
        .into_iter()
        .map(|(name, shape)| init_weighted(&name, shape, init, stream))
        .collect::<Result<Vec<_>>>()?
        .into_iter();
    let mut next = || weights.next().expect("weight_shapes covers every layer");

    let layers = match spec.family {
        Family::Mlp => vec![
            Layer::Dense(next()),
            Layer::Relu,
            Layer::Dense(next()),
            Layer::Relu,
            Layer::Dense(next()),
        ],
        Family::Conv2 => vec![
            Layer::Conv2d(next()),
            Layer::Relu,
            Layer::Conv2d(next()),
            Layer::Relu,
            Layer::MaxPool2x2,
            Layer::Flatten,
            Layer::Dense(next()),
            Layer::Relu,
            Layer::Dense(next()),
            Layer::Relu,
            Layer::Dense(next()),
        ],
        Family::ResNetLite => {
            let f = spec.width(16);
            let mut layers = vec![
                Layer::Conv2d(next()),
                Layer::BatchNorm(BatchNorm::new("bn1", f)),
                Layer::Relu,
            ];
            for b in 1..=3 {
                let conv1 = next();
                let conv2 = next();
                layers.push(Layer::Residual(vec![
                    Layer::Conv2d(conv1),
                    Layer::BatchNorm(BatchNorm::new(format!("block{b}.bn1"), f)),
                    Layer::Relu,
                    Layer::Conv2d(conv2),
                    Layer::BatchNorm(BatchNorm::new(format!("block{b}.bn2"), f)),
                ]));
                layers.push(Layer::Relu);
            }
            layers.push(Layer::GlobalAvgPool);
            layers.push(Layer::Dense(next()));
            layers
        }
    };
    Ok(Network::new(
        spec.input_shape.clone(),
        spec.class_count,
        layers,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scaled_width_rounds_half_up() {
        assert_eq!(scaled_width(300, 0.1), 30);
        assert_eq!(scaled_width(64, 1.0), 64);
        assert_eq!(scaled_width(64, 0.1), 6);
        assert_eq!(scaled_width(16, 0.1), 2);
        assert_eq!(scaled_width(5, 0.1), 1);
        assert_eq!(scaled_width(1, 0.01), 1);
    }

    #[test]
    fn init_bounds() {
        assert!((init_bound(InitScheme::Glorot, 784, 300) - 0.07439795).abs() < 1e-8);
        assert_eq!(init_bound(InitScheme::He, 27, 576), (6.0f64 / 27.0).sqrt());
        assert!((init_bound(InitScheme::He, 784, 1) - 0.087482).abs() < 1e-6);
        assert!((init_bound(InitScheme::He, 784, 999) - 0.087482).abs() < 1e-6);
        assert_eq!(init_bound(InitScheme::Glorot, 3, 3), 1.0);
    }

    #[test]
    fn mlp_dims() {
        let dims = |size| {
            ModelSpec::new(Family::Mlp, size)
                .weight_shapes()
                .into_iter()
                .map(|(_, s)| (s[1], s[0]))
                .collect::<Vec<_>>()
        };
        assert_eq!(dims(1.0), vec![(784, 300), (300, 100), (100, 10)]);
        assert_eq!(dims(0.1), vec![(784, 30), (30, 10), (10, 10)]);
    }

    #[test]
    fn conv2_flatten_length() {
        let shapes = ModelSpec::new(Family::Conv2, 1.0).weight_shapes();
        assert_eq!(shapes[2].1, vec![256, 16 * 16 * 64]);
        // 1728 + 36,864 + 4,194,304 + 65,536 + 2,560
        assert_eq!(
            count_prunable_weights(&ModelSpec::new(Family::Conv2, 1.0)),
            4_300_992
        );
    }

    #[test]
    fn invalid_sizes_rejected() {
        let mut spec = ModelSpec::new(Family::Mlp, 0.0);
        assert!(spec.validate().is_err());
        spec.size = f64::NAN;
        assert!(spec.validate().is_err());
    }

    #[test]
    fn family_names_round_trip() {
        for f in [Family::Mlp, Family::Conv2, Family::ResNetLite] {
            assert_eq!(f.as_str().parse::<Family>().unwrap(), f);
        }
        assert!("vgg".parse::<Family>().is_err());
    }
}
