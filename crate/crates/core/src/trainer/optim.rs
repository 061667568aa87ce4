use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Gradients, Network, Scalar, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum OptimizerKind {
    #[serde(rename = "sgd")]
    Sgd,
    #[serde(rename = "adam")]
    Adam,
    #[serde(rename = "adagrad")]
    Adagrad,
}

impl OptimizerKind {
    pub fn as_str(self) -> &'static str {
        match self {
            OptimizerKind::Sgd => "sgd",
            OptimizerKind::Adam => "adam",
            OptimizerKind::Adagrad => "adagrad",
        }
    }
}

impl fmt::Display for OptimizerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for OptimizerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sgd" => Ok(OptimizerKind::Sgd),
            "adam" => Ok(OptimizerKind::Adam),
            "adagrad" => Ok(OptimizerKind::Adagrad),
            other => Err(Error::invalid(format!("unknown optimizer '{other}'"))),
        }
    }
}

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;
pub const ADAGRAD_EPS: f64 = 1e-10;

/// Optimizer hyper-parameters and per-parameter accumulators. No weight decay.
#[derive(Clone, Debug)]
pub struct OptimizerState<T = f32> {
    pub kind: OptimizerKind,
    pub learning_rate: f64,
    pub step: u64,
    /// Adam first moments.
    pub first_moment: Vec<Tensor<T>>,
    /// Adam second moments, or Adagrad squared-gradient sums.
    pub second_moment: Vec<Tensor<T>>,
}

impl<T: Scalar> OptimizerState<T> {
    pub fn new(kind: OptimizerKind, learning_rate: f64) -> Self {
        Self {
            kind,
            learning_rate,
            step: 0,
            first_moment: Vec::new(),
            second_moment: Vec::new(),
        }
    }

    fn ensure_accumulators(&mut self, shapes: &[Vec<usize>]) {
        if self.second_moment.is_empty() && self.kind != OptimizerKind::Sgd {
            self.second_moment = shapes.iter().map(|s| Tensor::zeros(s)).collect();
            if self.kind == OptimizerKind::Adam {
                self.first_moment = shapes.iter().map(|s| Tensor::zeros(s)).collect();
            }
        }
    }

    pub fn accumulators_finite_nonnegative(&self) -> bool {
        self.first_moment.iter().all(|t| t.all_finite())
            && self
                .second_moment
                .iter()
                .all(|t| t.all_finite() && t.data().iter().all(|&v| v >= T::ZERO))
    }
}

/// Applies one update to `network` in place.
pub fn optimizer_step<T: Scalar>(
    state: &mut OptimizerState<T>,
    network: &mut Network<T>,
    grads: &Gradients<T>,
) -> Result<()> {
    let mut params = network.parameters_mut();
    if params.len() != grads.tensors.len() {
        return Err(Error::invalid(format!(
            "{} gradients for {} parameters",
            grads.tensors.len(),
            params.len()
        )));
    }
    for ((name, p), g) in params.iter().zip(&grads.tensors) {
        if p.shape() != g.shape() {
            return Err(Error::Shape {
                layer: name.clone(),
                expected: p.shape().to_vec(),
                got: g.shape().to_vec(),
            });
        }
        if !g.all_finite() {
            return Err(Error::NonFiniteGradient {
                layer: name.clone(),
            });
        }
    }
    let shapes: Vec<Vec<usize>> = params.iter().map(|(_, p)| p.shape().to_vec()).collect();
    state.ensure_accumulators(&shapes);
    state.step += 1;
    let lr = state.learning_rate;
    match state.kind {
        OptimizerKind::Sgd => {
            for ((_, p), g) in params.iter_mut().zip(&grads.tensors) {
                for (w, &gv) in p.data_mut().iter_mut().zip(g.data()) {
                    *w = T::from_f64(w.to_f64() - lr * gv.to_f64());
                }
            }
        }
        OptimizerKind::Adam => {
            let t = state.step as i32;
            let c1 = 1.0 - ADAM_BETA1.powi(t);
            let c2 = 1.0 - ADAM_BETA2.powi(t);
            for (i, (_, p)) in params.iter_mut().enumerate() {
                let g = grads.tensors[i].data();
                let m = state.first_moment[i].data_mut();
                let v = state.second_moment[i].data_mut();
                for (j, w) in p.data_mut().iter_mut().enumerate() {
                    let gv = g[j].to_f64();
                    let mj = ADAM_BETA1 * m[j].to_f64() + (1.0 - ADAM_BETA1) * gv;
                    let vj = ADAM_BETA2 * v[j].to_f64() + (1.0 - ADAM_BETA2) * gv * gv;
                    m[j] = T::from_f64(mj);
                    v[j] = T::from_f64(vj);
                    let update = (mj / c1) / ((vj / c2).sqrt() + ADAM_EPS);
                    *w = T::from_f64(w.to_f64() - lr * update);
                }
            }
        }
        OptimizerKind::Adagrad => {
            for (i, (_, p)) in params.iter_mut().enumerate() {
                let g = grads.tensors[i].data();
                let acc = state.second_moment[i].data_mut();
                for (j, w) in p.data_mut().iter_mut().enumerate() {
                    let gv = g[j].to_f64();
                    let sum = acc[j].to_f64() + gv * gv;
                    acc[j] = T::from_f64(sum);
                    *w = T::from_f64(w.to_f64() - lr * gv / (sum.sqrt() + ADAGRAD_EPS));
                }
            }
        }
    }
    Ok(())
}
