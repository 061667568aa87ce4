use crate::error::{Error, Result};
use crate::nn::layers::{
    backward_layers, forward_layers, update_running_stats, Layer, LayerCache, Mode, Weighted,
};
use crate::nn::tensor::{Scalar, Tensor};

/// A feed-forward stack of layers ending in class logits.
#[derive(Clone, Debug, PartialEq)]
pub struct Network<T = f32> {
    pub input_shape: Vec<usize>,
    pub classes: usize,
    pub layers: Vec<Layer<T>>,
}

/// Activation record produced by [`Network::forward`].
#[derive(Clone, Debug)]
pub struct ForwardCache<T = f32> {
    pub mode: Mode,
    pub(crate) layers: Vec<LayerCache<T>>,
}

/// Parameter gradients, in the order of [`Network::parameters`].
#[derive(Clone, Debug)]
pub struct Gradients<T = f32> {
    pub tensors: Vec<Tensor<T>>,
}

fn collect_params<'a, T: Scalar>(layers: &'a [Layer<T>], out: &mut Vec<(String, &'a Tensor<T>)>) {
    for layer in layers {
        match layer {
            Layer::Dense(w) | Layer::Conv2d(w) => {
                out.push((format!("{}.weight", w.name), &w.weight));
                out.push((format!("{}.bias", w.name), &w.bias));
            }
            Layer::BatchNorm(bn) => {
                out.push((format!("{}.gamma", bn.name), &bn.gamma));
                out.push((format!("{}.beta", bn.name), &bn.beta));
            }
            Layer::Residual(body) => collect_params(body, out),
            _ => {}
        }
    }
}

fn collect_params_mut<'a, T: Scalar>(
    layers: &'a mut [Layer<T>],
    out: &mut Vec<(String, &'a mut Tensor<T>)>,
) {
    for layer in layers {
        match layer {
            Layer::Dense(w) | Layer::Conv2d(w) => {
                out.push((format!("{}.weight", w.name), &mut w.weight));
                out.push((format!("{}.bias", w.name), &mut w.bias));
            }
            Layer::BatchNorm(bn) => {
                out.push((format!("{}.gamma", bn.name), &mut bn.gamma));
                out.push((format!("{}.beta", bn.name), &mut bn.beta));
            }
            Layer::Residual(body) => collect_params_mut(body, out),
            _ => {}
        }
    }
}

fn collect_weighted<'a, T: Scalar>(layers: &'a [Layer<T>], out: &mut Vec<&'a Weighted<T>>) {
    for layer in layers {
        match layer {
            Layer::Dense(w) | Layer::Conv2d(w) => out.push(w),
            Layer::Residual(body) => collect_weighted(body, out),
            _ => {}
        }
    }
}

fn collect_weighted_mut<'a, T: Scalar>(
    layers: &'a mut [Layer<T>],
    out: &mut Vec<&'a mut Weighted<T>>,
) {
    for layer in layers {
        match layer {
            Layer::Dense(w) | Layer::Conv2d(w) => out.push(w),
            Layer::Residual(body) => collect_weighted_mut(body, out),
            _ => {}
        }
    }
}

impl<T: Scalar> Network<T> {
    pub fn new(input_shape: Vec<usize>, classes: usize, layers: Vec<Layer<T>>) -> Self {
        Self {
            input_shape,
            classes,
            layers,
        }
    }

    /// Runs the network on a batch shaped `(N, input_shape...)`.
    pub fn forward(&self, batch: &Tensor<T>, mode: Mode) -> Result<(Tensor<T>, ForwardCache<T>)> {
        if batch.shape().len() != self.input_shape.len() + 1
            || batch.shape()[1..] != self.input_shape[..]
        {
            let mut expected = vec![batch.shape()[0]];
            expected.extend_from_slice(&self.input_shape);
            return Err(Error::Shape {
                layer: "input".into(),
                expected,
                got: batch.shape().to_vec(),
            });
        }
        let (logits, layers) = forward_layers(&self.layers, batch.clone(), mode)?;
        if logits.shape() != [batch.rows(), self.classes] {
            return Err(Error::Shape {
                layer: "output".into(),
                expected: vec![batch.rows(), self.classes],
                got: logits.shape().to_vec(),
            });
        }
        Ok((logits, ForwardCache { mode, layers }))
    }

    /// Outputs of the top-level ReLU layers, each named after the weight
    /// layer that feeds it.
    pub fn hidden_activations<'a>(
        &self,
        cache: &'a ForwardCache<T>,
    ) -> Vec<(String, &'a Tensor<T>)> {
        let mut out = Vec::new();
        let mut last = String::new();
        for (layer, entry) in self.layers.iter().zip(&cache.layers) {
            match (layer, entry) {
                (Layer::Dense(w) | Layer::Conv2d(w), _) => last = w.name.clone(),
                (Layer::BatchNorm(bn), _) => last = bn.name.clone(),
                (Layer::Relu, LayerCache::Relu { output }) => out.push((last.clone(), output)),
                _ => {}
            }
        }
        out
    }

    /// Eval-mode logits without keeping the activation record.
    pub fn predict(&self, batch: &Tensor<T>) -> Result<Tensor<T>> {
        Ok(self.forward(batch, Mode::Eval)?.0)
    }

    pub fn backward(&self, cache: &ForwardCache<T>, dlogits: &Tensor<T>) -> Result<Gradients<T>> {
        if cache.mode != Mode::Train {
            return Err(Error::CacheMismatch(
                "backward needs a train-mode cache".into(),
            ));
        }
        let (_, tensors) = backward_layers(&self.layers, &cache.layers, dlogits.clone())?;
        let params = self.parameters();
        if tensors.len() != params.len() {
            return Err(Error::CacheMismatch(format!(
                "{} gradients for {} parameters",
                tensors.len(),
                params.len()
            )));
        }
        Ok(Gradients { tensors })
    }

    pub fn update_running_stats(&mut self, cache: &ForwardCache<T>) {
        update_running_stats(&mut self.layers, &cache.layers);
    }

    /// Trainable tensors with dotted names, e.g. `fc1.weight`.
    pub fn parameters(&self) -> Vec<(String, &Tensor<T>)> {
        let mut out = Vec::new();
        collect_params(&self.layers, &mut out);
        out
    }

    pub fn parameters_mut(&mut self) -> Vec<(String, &mut Tensor<T>)> {
        let mut out = Vec::new();
        collect_params_mut(&mut self.layers, &mut out);
        out
    }

    /// Dense and convolutional layers in forward order: the prunable set.
    pub fn weight_layers(&self) -> Vec<&Weighted<T>> {
        let mut out = Vec::new();
        collect_weighted(&self.layers, &mut out);
        out
    }

    pub fn weight_layers_mut(&mut self) -> Vec<&mut Weighted<T>> {
        let mut out = Vec::new();
        collect_weighted_mut(&mut self.layers, &mut out);
        out
    }

    pub fn prunable_count(&self) -> usize {
        self.weight_layers().iter().map(|w| w.weight.len()).sum()
    }

    pub fn unmasked_count(&self) -> usize {
        self.weight_layers()
            .iter()
            .map(|w| w.unmasked_count())
            .sum()
    }

    pub fn clear_masks(&mut self) {
        for w in self.weight_layers_mut() {
            w.mask = None;
        }
    }

    pub fn cast<U: Scalar>(&self) -> Network<U> {
        fn cast_layers<T: Scalar, U: Scalar>(layers: &[Layer<T>]) -> Vec<Layer<U>> {
            layers
                .iter()
                .map(|l| match l {
                    Layer::Dense(w) => Layer::Dense(cast_weighted(w)),
                    Layer::Conv2d(w) => Layer::Conv2d(cast_weighted(w)),
                    Layer::MaxPool2x2 => Layer::MaxPool2x2,
                    Layer::GlobalAvgPool => Layer::GlobalAvgPool,
                    Layer::BatchNorm(bn) => Layer::BatchNorm(crate::nn::layers::BatchNorm {
                        name: bn.name.clone(),
                        gamma: bn.gamma.cast(),
                        beta: bn.beta.cast(),
                        running_mean: bn.running_mean.cast(),
                        running_var: bn.running_var.cast(),
                    }),
                    Layer::Relu => Layer::Relu,
                    Layer::Flatten => Layer::Flatten,
                    Layer::Residual(body) => Layer::Residual(cast_layers(body)),
                })
                .collect()
        }
        fn cast_weighted<T: Scalar, U: Scalar>(w: &Weighted<T>) -> Weighted<U> {
            Weighted {
                name: w.name.clone(),
                weight: w.weight.cast(),
                bias: w.bias.cast(),
                mask: w.mask.as_ref().map(|m| m.cast()),
            }
        }
        Network {
            input_shape: self.input_shape.clone(),
            classes: self.classes,
            layers: cast_layers(&self.layers),
        }
    }
}

/// Free-function form of [`Network::forward`].
pub fn forward<T: Scalar>(
    network: &Network<T>,
    batch: &Tensor<T>,
    mode: Mode,
) -> Result<(Tensor<T>, ForwardCache<T>)> {
    network.forward(batch, mode)
}

/// Free-function form of [`Network::backward`].
pub fn backward<T: Scalar>(
    network: &Network<T>,
    cache: &ForwardCache<T>,
    dlogits: &Tensor<T>,
) -> Result<Gradients<T>> {
    network.backward(cache, dlogits)
}

/// Mean cross-entropy over the batch and its exact gradient w.r.t. the logits.
pub fn cross_entropy_loss<T: Scalar>(
    logits: &Tensor<T>,
    labels: &[usize],
) -> Result<(f64, Tensor<T>)> {
    if logits.shape().len() != 2 || logits.rows() != labels.len() {
        return Err(Error::Shape {
            layer: "cross_entropy".into(),
            expected: vec![labels.len(), logits.shape().get(1).copied().unwrap_or(0)],
            got: logits.shape().to_vec(),
        });
    }
    let (n, c) = (logits.rows(), logits.shape()[1]);
    if let Some((index, &label)) = labels.iter().enumerate().find(|(_, &l)| l >= c) {
        return Err(Error::LabelOutOfRange {
            index,
            label,
            classes: c,
        });
    }
    let mut total = 0.0f64;
    let mut grad = Vec::with_capacity(n * c);
    let mut probs = vec![0.0f64; c];
    for (i, &label) in labels.iter().enumerate() {
        let row = logits.row(i);
        let max = row
            .iter()
            .map(|v| v.to_f64())
            .fold(f64::NEG_INFINITY, f64::max);
        let mut z = 0.0;
        for (p, &v) in probs.iter_mut().zip(row) {
            *p = (v.to_f64() - max).exp();
            z += *p;
        }
        total += z.ln() + max - row[label].to_f64();
        for (j, p) in probs.iter().enumerate() {
            let target = if j == label { 1.0 } else { 0.0 };
            grad.push(T::from_f64((p / z - target) / n as f64));
        }
    }
    Ok((total / n as f64, Tensor::from_parts(vec![n, c], grad)))
}
