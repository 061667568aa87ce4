//! Single-document JSON checkpoints. Tensors are base64 of little-endian `f32`.

use std::path::Path;

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model_zoo::{build_model, InitScheme, ModelSpec};
use crate::nn::{Layer, Network, RngStream, Tensor};
use crate::trainer::OptimizerKind;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerEntry {
    pub name: String,
    pub kind: String,
    pub shapes: Vec<Vec<usize>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StoredTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: String,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMetrics {
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_accuracy: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub model: ModelSpec,
    pub layers: Vec<LayerEntry>,
    /// Trainable tensors followed by batch-norm running statistics.
    pub parameters: Vec<StoredTensor>,
    pub optimizer: OptimizerKind,
    pub epoch: usize,
    pub metrics: CheckpointMetrics,
}

fn encode(t: &Tensor) -> String {
    let mut bytes = Vec::with_capacity(t.len() * 4);
    for v in t.data() {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    STANDARD.encode(bytes)
}

fn decode(s: &StoredTensor) -> Result<Tensor> {
    let bytes = STANDARD
        .decode(&s.data)
        .map_err(|e| Error::invalid(format!("{}: base64: {e}", s.name)))?;
    if bytes.len() % 4 != 0 {
        return Err(Error::invalid(format!(
            "{}: payload not a multiple of 4 bytes",
            s.name
        )));
    }
    let data = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    Tensor::new(s.shape.clone(), data)
}

fn layer_entries(layers: &[Layer], out: &mut Vec<LayerEntry>) {
    for layer in layers {
        let (name, shapes) = match layer {
            Layer::Dense(w) | Layer::Conv2d(w) => (
                w.name.clone(),
                vec![w.weight.shape().to_vec(), w.bias.shape().to_vec()],
            ),
            Layer::BatchNorm(bn) => (bn.name.clone(), vec![bn.gamma.shape().to_vec()]),
            Layer::Residual(body) => {
                out.push(LayerEntry {
                    name: String::new(),
                    kind: layer.kind().into(),
                    shapes: vec![],
                });
                layer_entries(body, out);
                continue;
            }
            _ => (String::new(), vec![]),
        };
        out.push(LayerEntry {
            name,
            kind: layer.kind().into(),
            shapes,
        });
    }
}

fn buffers<'a>(layers: &'a [Layer], out: &mut Vec<(String, &'a Tensor)>) {
    for layer in layers {
        match layer {
            Layer::BatchNorm(bn) => {
                out.push((format!("{}.running_mean", bn.name), &bn.running_mean));
                out.push((format!("{}.running_var", bn.name), &bn.running_var));
            }
            Layer::Residual(body) => buffers(body, out),
            _ => {}
        }
    }
}

fn buffers_mut<'a>(layers: &'a mut [Layer], out: &mut Vec<(String, &'a mut Tensor)>) {
    for layer in layers {
        match layer {
            Layer::BatchNorm(bn) => {
                out.push((format!("{}.running_mean", bn.name), &mut bn.running_mean));
                out.push((format!("{}.running_var", bn.name), &mut bn.running_var));
            }
            Layer::Residual(body) => buffers_mut(body, out),
            _ => {}
        }
    }
}

impl Checkpoint {
    pub fn capture(
        spec: &ModelSpec,
        network: &Network,
        optimizer: OptimizerKind,
        epoch: usize,
        metrics: CheckpointMetrics,
    ) -> Self {
        let mut layers = Vec::new();
        layer_entries(&network.layers, &mut layers);
        let mut tensors: Vec<(String, &Tensor)> = network.parameters();
        buffers(&network.layers, &mut tensors);
        let parameters = tensors
            .into_iter()
            .map(|(name, t)| StoredTensor {
                name,
                shape: t.shape().to_vec(),
                data: encode(t),
            })
            .collect();
        Self {
            format_version: FORMAT_VERSION,
            model: spec.clone(),
            layers,
            parameters,
            optimizer,
            epoch,
            metrics,
        }
    }

    /// Rebuilds the network from the stored spec and overwrites every tensor.
    pub fn restore(&self) -> Result<Network> {
        if self.format_version != FORMAT_VERSION {
            return Err(Error::invalid(format!(
                "unsupported checkpoint format {}",
                self.format_version
            )));
        }
        let mut net = build_model(
            &self.model,
            InitScheme::Glorot,
            &mut RngStream::keyed("checkpoint-restore", 0, 0),
        )?;
        let mut targets = net.parameters_mut();
        let mut bufs = Vec::new();
        // Split borrow: parameters first, then buffers.
        let param_count = targets.len();
        if self.parameters.len() < param_count {
            return Err(Error::invalid(
                "checkpoint has fewer tensors than the model",
            ));
        }
        for ((name, t), stored) in targets.iter_mut().zip(&self.parameters[..param_count]) {
            if *name != stored.name || t.shape() != stored.shape.as_slice() {
                return Err(Error::invalid(format!(
                    "checkpoint tensor {} {:?} does not match model tensor {} {:?}",
                    stored.name,
                    stored.shape,
                    name,
                    t.shape()
                )));
            }
            **t = decode(stored)?;
        }
        drop(targets);
        buffers_mut(&mut net.layers, &mut bufs);
        let rest = &self.parameters[param_count..];
        if rest.len() != bufs.len() {
            return Err(Error::invalid(
                "checkpoint buffer count does not match model",
            ));
        }
        for ((name, t), stored) in bufs.iter_mut().zip(rest) {
            if *name != stored.name || t.shape() != stored.shape.as_slice() {
                return Err(Error::invalid(format!(
                    "buffer {} does not match {}",
                    stored.name, name
                )));
            }
            **t = decode(stored)?;
        }
        Ok(net)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_vec(self)?;
        let tmp = path.with_extension("json.partial");
        std::fs::write(&tmp, json).map_err(|e| Error::io(tmp.display().to_string(), e))?;
        std::fs::rename(&tmp, path).map_err(|e| Error::io(path.display().to_string(), e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        Ok(serde_json::from_slice(&bytes)?)
    }
}
