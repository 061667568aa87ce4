use crate::error::{Error, Result};
use crate::nn::kernels::{gemm_nn_acc, gemm_tn_acc, narrow, transpose};
use crate::nn::tensor::{Scalar, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Weights, bias and optional pruning mask of a dense or convolutional layer.
///
/// Dense weights are `(out, in)`; convolution weights are `(out, in, 3, 3)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Weighted<T = f32> {
    pub name: String,
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
    pub mask: Option<Tensor<T>>,
}

impl<T: Scalar> Weighted<T> {
    pub fn out_features(&self) -> usize {
        self.weight.shape()[0]
    }

    /// Fan-in per output unit: `in` for dense, `in·k·k` for convolution.
    pub fn fan_in(&self) -> usize {
        self.weight.row_len()
    }

    /// Weights with masked positions replaced by exact zeros.
    pub fn effective_weight(&self) -> Vec<T> {
        match &self.mask {
            None => self.weight.data().to_vec(),
            Some(mask) => self
                .weight
                .data()
                .iter()
                .zip(mask.data())
                .map(|(&w, &m)| if m == T::ZERO { T::ZERO } else { w })
                .collect(),
        }
    }

    pub fn set_mask(&mut self, mask: Tensor<T>) -> Result<()> {
        if mask.shape() != self.weight.shape() {
            return Err(Error::Shape {
                layer: format!("{}.mask", self.name),
                expected: self.weight.shape().to_vec(),
                got: mask.shape().to_vec(),
            });
        }
        if mask.data().iter().any(|&m| m != T::ZERO && m != T::ONE) {
            return Err(Error::invalid(format!(
                "{}: mask entries must be 0 or 1",
                self.name
            )));
        }
        self.mask = Some(mask);
        Ok(())
    }

    /// Number of weights not masked out.
    pub fn unmasked_count(&self) -> usize {
        match &self.mask {
            None => self.weight.len(),
            Some(m) => m.data().iter().filter(|&&v| v != T::ZERO).count(),
        }
    }

    fn zero_masked_grad(&self, grad: &mut [T]) {
        if let Some(mask) = &self.mask {
            for (g, &m) in grad.iter_mut().zip(mask.data()) {
                if m == T::ZERO {
                    *g = T::ZERO;
                }
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BatchNorm<T = f32> {
    pub name: String,
    pub gamma: Tensor<T>,
    pub beta: Tensor<T>,
    pub running_mean: Tensor<T>,
    pub running_var: Tensor<T>,
}

impl<T: Scalar> BatchNorm<T> {
    pub const MOMENTUM: f64 = 0.1;
    pub const EPS: f64 = 1e-5;

    pub fn new(name: impl Into<String>, channels: usize) -> Self {
        Self {
            name: name.into(),
            gamma: Tensor::full(&[channels], T::ONE),
            beta: Tensor::zeros(&[channels]),
            running_mean: Tensor::zeros(&[channels]),
            running_var: Tensor::full(&[channels], T::ONE),
        }
    }

    pub fn channels(&self) -> usize {
        self.gamma.len()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Layer<T = f32> {
    Dense(Weighted<T>),
    Conv2d(Weighted<T>),
    MaxPool2x2,
    GlobalAvgPool,
    BatchNorm(BatchNorm<T>),
    Relu,
    Flatten,
    /// `body(x) + x`.
    Residual(Vec<Layer<T>>),
}

impl<T: Scalar> Layer<T> {
    pub fn kind(&self) -> &'static str {
        match self {
            Layer::Dense(_) => "dense",
            Layer::Conv2d(_) => "conv2d",
            Layer::MaxPool2x2 => "maxpool2x2",
            Layer::GlobalAvgPool => "avgpool-global",
            Layer::BatchNorm(_) => "batchnorm",
            Layer::Relu => "relu",
            Layer::Flatten => "flatten",
            Layer::Residual(_) => "residual-add",
        }
    }

    fn label(&self) -> String {
        match self {
            Layer::Dense(w) | Layer::Conv2d(w) => w.name.clone(),
            Layer::BatchNorm(b) => b.name.clone(),
            other => other.kind().to_string(),
        }
    }
}

/// Per-layer record kept by a forward pass for the backward pass.
#[derive(Clone, Debug)]
pub enum LayerCache<T = f32> {
    Dense {
        input: Tensor<T>,
    },
    Conv2d {
        input: Tensor<T>,
    },
    MaxPool {
        input_shape: Vec<usize>,
        argmax: Vec<usize>,
    },
    GlobalAvgPool {
        input_shape: Vec<usize>,
    },
    BatchNorm {
        xhat: Vec<f64>,
        inv_std: Vec<f64>,
        batch_mean: Vec<f64>,
        batch_var_unbiased: Vec<f64>,
        shape: Vec<usize>,
    },
    BatchNormEval,
    Relu {
        output: Tensor<T>,
    },
    Flatten {
        input_shape: Vec<usize>,
    },
    Residual(Vec<LayerCache<T>>),
}

fn shape_err(layer: &str, expected: Vec<usize>, got: &[usize]) -> Error {
    Error::Shape {
        layer: layer.to_string(),
        expected,
        got: got.to_vec(),
    }
}

pub(crate) fn forward_layers<T: Scalar>(
    layers: &[Layer<T>],
    mut x: Tensor<T>,
    mode: Mode,
) -> Result<(Tensor<T>, Vec<LayerCache<T>>)> {
    let mut caches = Vec::with_capacity(layers.len());
    for layer in layers {
        let (y, cache) = forward_layer(layer, x, mode)?;
        caches.push(cache);
        x = y;
    }
    Ok((x, caches))
}

fn forward_layer<T: Scalar>(
    layer: &Layer<T>,
    x: Tensor<T>,
    mode: Mode,
) -> Result<(Tensor<T>, LayerCache<T>)> {
    match layer {
        Layer::Dense(w) => {
            let y = dense_forward(w, &x)?;
            Ok((y, LayerCache::Dense { input: x }))
        }
        Layer::Conv2d(w) => {
            let y = conv_forward(w, &x)?;
            Ok((y, LayerCache::Conv2d { input: x }))
        }
        Layer::MaxPool2x2 => {
            let (y, argmax) = maxpool_forward(&x)?;
            Ok((
                y,
                LayerCache::MaxPool {
                    input_shape: x.shape().to_vec(),
                    argmax,
                },
            ))
        }
        Layer::GlobalAvgPool => {
            let y = avgpool_forward(&x)?;
            Ok((
                y,
                LayerCache::GlobalAvgPool {
                    input_shape: x.shape().to_vec(),
                },
            ))
        }
        Layer::BatchNorm(bn) => batchnorm_forward(bn, &x, mode),
        Layer::Relu => {
            let y = x.map(|v| if v > T::ZERO { v } else { T::ZERO });
            Ok((y.clone(), LayerCache::Relu { output: y }))
        }
        Layer::Flatten => {
            let input_shape = x.shape().to_vec();
            let n = x.rows();
            let len = x.row_len();
            let y = x.reshape(vec![n, len])?;
            Ok((y, LayerCache::Flatten { input_shape }))
        }
        Layer::Residual(body) => {
            let (inner, caches) = forward_layers(body, x.clone(), mode)?;
            if inner.shape() != x.shape() {
                return Err(shape_err("residual-add", x.shape().to_vec(), inner.shape()));
            }
            let data = inner
                .data()
                .iter()
                .zip(x.data())
                .map(|(&a, &b)| T::from_f64(a.to_f64() + b.to_f64()))
                .collect();
            Ok((
                Tensor::from_parts(x.shape().to_vec(), data),
                LayerCache::Residual(caches),
            ))
        }
    }
}

fn dense_forward<T: Scalar>(w: &Weighted<T>, x: &Tensor<T>) -> Result<Tensor<T>> {
    let (out, inp) = (w.weight.shape()[0], w.weight.shape()[1]);
    if x.shape().len() < 2 || x.row_len() != inp {
        return Err(shape_err(&w.name, vec![x.shape()[0], inp], x.shape()));
    }
    let n = x.rows();
    let wt = transpose(&w.effective_weight(), out, inp);
    let mut acc = Vec::with_capacity(n * out);
    for _ in 0..n {
        acc.extend(w.bias.data().iter().map(|b| b.to_f64()));
    }
    gemm_nn_acc(x.data(), &wt, n, inp, out, &mut acc);
    Ok(Tensor::from_parts(vec![n, out], narrow(&acc)))
}

/// Builds the `(C·9) × (H·W)` patch matrix of one `C×H×W` sample, zero padded.
fn im2col<T: Scalar>(sample: &[T], c: usize, h: usize, w: usize, cols: &mut [T]) {
    let hw = h * w;
    for ci in 0..c {
        let plane = &sample[ci * hw..(ci + 1) * hw];
        for ky in 0..3 {
            for kx in 0..3 {
                let row = &mut cols[((ci * 3 + ky) * 3 + kx) * hw..][..hw];
                for y in 0..h {
                    let sy = y as isize + ky as isize - 1;
                    for x in 0..w {
                        let sx = x as isize + kx as isize - 1;
                        row[y * w + x] = if sy >= 0 && sy < h as isize && sx >= 0 && sx < w as isize
                        {
                            plane[sy as usize * w + sx as usize]
                        } else {
                            T::ZERO
                        };
                    }
                }
            }
        }
    }
}

fn col2im_acc(cols: &[f64], c: usize, h: usize, w: usize, out: &mut [f64]) {
    let hw = h * w;
    for ci in 0..c {
        for ky in 0..3 {
            for kx in 0..3 {
                let row = &cols[((ci * 3 + ky) * 3 + kx) * hw..][..hw];
                for y in 0..h {
                    let sy = y as isize + ky as isize - 1;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    for x in 0..w {
                        let sx = x as isize + kx as isize - 1;
                        if sx < 0 || sx >= w as isize {
                            continue;
                        }
                        out[ci * hw + sy as usize * w + sx as usize] += row[y * w + x];
                    }
                }
            }
        }
    }
}

fn conv_dims<T: Scalar>(
    w: &Weighted<T>,
    x: &Tensor<T>,
) -> Result<(usize, usize, usize, usize, usize)> {
    let ws = w.weight.shape();
    let (o, c) = (ws[0], ws[1]);
    let xs = x.shape();
    if xs.len() != 4 || xs[1] != c {
        return Err(shape_err(&w.name, vec![xs[0], c, 0, 0], xs));
    }
    Ok((xs[0], c, xs[2], xs[3], o))
}

fn conv_forward<T: Scalar>(w: &Weighted<T>, x: &Tensor<T>) -> Result<Tensor<T>> {
    let (n, c, h, wd, o) = conv_dims(w, x)?;
    let hw = h * wd;
    let k = c * 9;
    let weight = w.effective_weight();
    let mut cols = vec![T::ZERO; k * hw];
    let mut out = Vec::with_capacity(n * o * hw);
    let mut acc = vec![0.0f64; o * hw];
    for s in 0..n {
        im2col(x.row(s), c, h, wd, &mut cols);
        for (oi, chunk) in acc.chunks_mut(hw).enumerate() {
            chunk.fill(w.bias.data()[oi].to_f64());
        }
        gemm_nn_acc(&weight, &cols, o, k, hw, &mut acc);
        out.extend(acc.iter().map(|&v| T::from_f64(v)));
    }
    Ok(Tensor::from_parts(vec![n, o, h, wd], out))
}

fn maxpool_forward<T: Scalar>(x: &Tensor<T>) -> Result<(Tensor<T>, Vec<usize>)> {
    let xs = x.shape();
    if xs.len() != 4 || xs[2] < 2 || xs[3] < 2 {
        return Err(shape_err("maxpool2x2", vec![xs[0], 0, 2, 2], xs));
    }
    let (n, c, h, w) = (xs[0], xs[1], xs[2], xs[3]);
    let (oh, ow) = (h / 2, w / 2);
    let mut out = Vec::with_capacity(n * c * oh * ow);
    let mut argmax = Vec::with_capacity(n * c * oh * ow);
    let data = x.data();
    for plane in 0..n * c {
        let base = plane * h * w;
        for y in 0..oh {
            for xx in 0..ow {
                let mut best = base + 2 * y * w + 2 * xx;
                for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                    let idx = base + (2 * y + dy) * w + 2 * xx + dx;
                    if data[idx] > data[best] {
                        best = idx;
                    }
                }
                out.push(data[best]);
                argmax.push(best);
            }
        }
    }
    Ok((Tensor::from_parts(vec![n, c, oh, ow], out), argmax))
}

fn avgpool_forward<T: Scalar>(x: &Tensor<T>) -> Result<Tensor<T>> {
    let xs = x.shape();
    if xs.len() != 4 {
        return Err(shape_err("avgpool-global", vec![xs[0], 0, 0, 0], xs));
    }
    let (n, c, hw) = (xs[0], xs[1], xs[2] * xs[3]);
    let out = x
        .data()
        .chunks(hw)
        .map(|plane| T::from_f64(plane.iter().map(|v| v.to_f64()).sum::<f64>() / hw as f64))
        .collect();
    Ok(Tensor::from_parts(vec![n, c], out))
}

fn bn_dims<T: Scalar>(bn: &BatchNorm<T>, x: &Tensor<T>) -> Result<(usize, usize, usize)> {
    let xs = x.shape();
    if xs.len() < 2 || xs[1] != bn.channels() {
        return Err(shape_err(&bn.name, vec![xs[0], bn.channels()], xs));
    }
    Ok((xs[0], xs[1], xs[2..].iter().product()))
}

fn batchnorm_forward<T: Scalar>(
    bn: &BatchNorm<T>,
    x: &Tensor<T>,
    mode: Mode,
) -> Result<(Tensor<T>, LayerCache<T>)> {
    let (n, c, s) = bn_dims(bn, x)?;
    let data = x.data();
    let mut out = vec![T::ZERO; data.len()];
    let at = |i: usize, ci: usize, j: usize| (i * c + ci) * s + j;
    match mode {
        Mode::Eval => {
            for ci in 0..c {
                let inv = 1.0 / (bn.running_var.data()[ci].to_f64() + BatchNorm::<T>::EPS).sqrt();
                let mean = bn.running_mean.data()[ci].to_f64();
                let (g, b) = (bn.gamma.data()[ci].to_f64(), bn.beta.data()[ci].to_f64());
                for i in 0..n {
                    for j in 0..s {
                        let idx = at(i, ci, j);
                        out[idx] = T::from_f64(g * (data[idx].to_f64() - mean) * inv + b);
                    }
                }
            }
            Ok((
                Tensor::from_parts(x.shape().to_vec(), out),
                LayerCache::BatchNormEval,
            ))
        }
        Mode::Train => {
            let m = (n * s) as f64;
            let mut xhat = vec![0.0f64; data.len()];
            let mut inv_std = Vec::with_capacity(c);
            let mut batch_mean = Vec::with_capacity(c);
            let mut batch_var_unbiased = Vec::with_capacity(c);
            for ci in 0..c {
                let mut sum = 0.0;
                for i in 0..n {
                    for j in 0..s {
                        sum += data[at(i, ci, j)].to_f64();
                    }
                }
                let mean = sum / m;
                let mut sq = 0.0;
                for i in 0..n {
                    for j in 0..s {
                        let d = data[at(i, ci, j)].to_f64() - mean;
                        sq += d * d;
                    }
                }
                let var = sq / m;
                let inv = 1.0 / (var + BatchNorm::<T>::EPS).sqrt();
                let (g, b) = (bn.gamma.data()[ci].to_f64(), bn.beta.data()[ci].to_f64());
                for i in 0..n {
                    for j in 0..s {
                        let idx = at(i, ci, j);
                        let xh = (data[idx].to_f64() - mean) * inv;
                        xhat[idx] = xh;
                        out[idx] = T::from_f64(g * xh + b);
                    }
                }
                inv_std.push(inv);
                batch_mean.push(mean);
                batch_var_unbiased.push(if m > 1.0 { sq / (m - 1.0) } else { var });
            }
            Ok((
                Tensor::from_parts(x.shape().to_vec(), out),
                LayerCache::BatchNorm {
                    xhat,
                    inv_std,
                    batch_mean,
                    batch_var_unbiased,
                    shape: x.shape().to_vec(),
                },
            ))
        }
    }
}

/// Backward pass over a layer sequence. Returns the input gradient and the
/// parameter gradients in forward parameter order.
pub(crate) fn backward_layers<T: Scalar>(
    layers: &[Layer<T>],
    caches: &[LayerCache<T>],
    mut dy: Tensor<T>,
) -> Result<(Tensor<T>, Vec<Tensor<T>>)> {
    if layers.len() != caches.len() {
        return Err(Error::CacheMismatch(format!(
            "{} layers but {} cache entries",
            layers.len(),
            caches.len()
        )));
    }
    let mut per_layer: Vec<Vec<Tensor<T>>> = vec![Vec::new(); layers.len()];
    for (idx, (layer, cache)) in layers.iter().zip(caches).enumerate().rev() {
        let (dx, grads) = backward_layer(layer, cache, dy)?;
        per_layer[idx] = grads;
        dy = dx;
    }
    Ok((dy, per_layer.into_iter().flatten().collect()))
}

fn backward_layer<T: Scalar>(
    layer: &Layer<T>,
    cache: &LayerCache<T>,
    dy: Tensor<T>,
) -> Result<(Tensor<T>, Vec<Tensor<T>>)> {
    let mismatch = || {
        Error::CacheMismatch(format!(
            "cache entry does not belong to layer {}",
            layer.label()
        ))
    };
    match (layer, cache) {
        (Layer::Dense(w), LayerCache::Dense { input }) => dense_backward(w, input, &dy),
        (Layer::Conv2d(w), LayerCache::Conv2d { input }) => conv_backward(w, input, &dy),
        (
            Layer::MaxPool2x2,
            LayerCache::MaxPool {
                input_shape,
                argmax,
            },
        ) => {
            if argmax.len() != dy.len() {
                return Err(mismatch());
            }
            let mut dx = vec![T::ZERO; input_shape.iter().product()];
            for (&src, &g) in argmax.iter().zip(dy.data()) {
                dx[src] = g;
            }
            Ok((Tensor::from_parts(input_shape.clone(), dx), vec![]))
        }
        (Layer::GlobalAvgPool, LayerCache::GlobalAvgPool { input_shape }) => {
            let hw = input_shape[2] * input_shape[3];
            if dy.len() * hw != input_shape.iter().product::<usize>() {
                return Err(mismatch());
            }
            let scale = 1.0 / hw as f64;
            let mut dx = Vec::with_capacity(dy.len() * hw);
            for &g in dy.data() {
                let v = T::from_f64(g.to_f64() * scale);
                dx.extend(std::iter::repeat_n(v, hw));
            }
            Ok((Tensor::from_parts(input_shape.clone(), dx), vec![]))
        }
        (
            Layer::BatchNorm(bn),
            LayerCache::BatchNorm {
                xhat,
                inv_std,
                shape,
                ..
            },
        ) => batchnorm_backward(bn, xhat, inv_std, shape, &dy),
        (Layer::BatchNorm(bn), LayerCache::BatchNormEval) => Err(Error::CacheMismatch(format!(
            "{}: backward needs a train-mode forward cache",
            bn.name
        ))),
        (Layer::Relu, LayerCache::Relu { output }) => {
            if output.shape() != dy.shape() {
                return Err(mismatch());
            }
            let dx = dy
                .data()
                .iter()
                .zip(output.data())
                .map(|(&g, &o)| if o > T::ZERO { g } else { T::ZERO })
                .collect();
            Ok((Tensor::from_parts(dy.shape().to_vec(), dx), vec![]))
        }
        (Layer::Flatten, LayerCache::Flatten { input_shape }) => {
            Ok((dy.reshape(input_shape.clone())?, vec![]))
        }
        (Layer::Residual(body), LayerCache::Residual(caches)) => {
            let (dbody, grads) = backward_layers(body, caches, dy.clone())?;
            if dbody.shape() != dy.shape() {
                return Err(mismatch());
            }
            let dx = dbody
                .data()
                .iter()
                .zip(dy.data())
                .map(|(&a, &b)| T::from_f64(a.to_f64() + b.to_f64()))
                .collect();
            Ok((Tensor::from_parts(dy.shape().to_vec(), dx), grads))
        }
        _ => Err(mismatch()),
    }
}

fn dense_backward<T: Scalar>(
    w: &Weighted<T>,
    input: &Tensor<T>,
    dy: &Tensor<T>,
) -> Result<(Tensor<T>, Vec<Tensor<T>>)> {
    let (out, inp) = (w.weight.shape()[0], w.weight.shape()[1]);
    let n = input.rows();
    if dy.shape() != [n, out] {
        return Err(shape_err(&w.name, vec![n, out], dy.shape()));
    }
    let weight = w.effective_weight();

    let mut dx = vec![0.0f64; n * inp];
    gemm_nn_acc(dy.data(), &weight, n, out, inp, &mut dx);

    let mut dw = vec![0.0f64; out * inp];
    gemm_tn_acc(dy.data(), input.data(), n, out, inp, &mut dw);
    let mut dw: Vec<T> = narrow(&dw);
    w.zero_masked_grad(&mut dw);

    let mut db = vec![0.0f64; out];
    for row in dy.data().chunks(out) {
        for (acc, &g) in db.iter_mut().zip(row) {
            *acc += g.to_f64();
        }
    }
    Ok((
        Tensor::from_parts(input.shape().to_vec(), narrow(&dx)),
        vec![
            Tensor::from_parts(w.weight.shape().to_vec(), dw),
            Tensor::from_parts(vec![out], narrow(&db)),
        ],
    ))
}

fn conv_backward<T: Scalar>(
    w: &Weighted<T>,
    input: &Tensor<T>,
    dy: &Tensor<T>,
) -> Result<(Tensor<T>, Vec<Tensor<T>>)> {
    let (n, c, h, wd, o) = conv_dims(w, input)?;
    if dy.shape() != [n, o, h, wd] {
        return Err(shape_err(&w.name, vec![n, o, h, wd], dy.shape()));
    }
    let hw = h * wd;
    let k = c * 9;
    let weight = w.effective_weight();
    let mut cols = vec![T::ZERO; k * hw];
    let mut dw = vec![0.0f64; o * k];
    let mut db = vec![0.0f64; o];
    let mut dcols = vec![0.0f64; k * hw];
    let mut dx_sample = vec![0.0f64; c * hw];
    let mut dx = Vec::with_capacity(input.len());
    for s in 0..n {
        let dys = dy.row(s);
        im2col(input.row(s), c, h, wd, &mut cols);
        let cols_t = transpose(&cols, k, hw);
        gemm_nn_acc(dys, &cols_t, o, hw, k, &mut dw);
        for (oi, plane) in dys.chunks(hw).enumerate() {
            for &g in plane {
                db[oi] += g.to_f64();
            }
        }
        dcols.fill(0.0);
        gemm_tn_acc(&weight, dys, o, k, hw, &mut dcols);
        dx_sample.fill(0.0);
        col2im_acc(&dcols, c, h, wd, &mut dx_sample);
        dx.extend(dx_sample.iter().map(|&v| T::from_f64(v)));
    }
    let mut dw: Vec<T> = narrow(&dw);
    w.zero_masked_grad(&mut dw);
    Ok((
        Tensor::from_parts(input.shape().to_vec(), dx),
        vec![
            Tensor::from_parts(w.weight.shape().to_vec(), dw),
            Tensor::from_parts(vec![o], narrow(&db)),
        ],
    ))
}

fn batchnorm_backward<T: Scalar>(
    bn: &BatchNorm<T>,
    xhat: &[f64],
    inv_std: &[f64],
    shape: &[usize],
    dy: &Tensor<T>,
) -> Result<(Tensor<T>, Vec<Tensor<T>>)> {
    if dy.shape() != shape {
        return Err(shape_err(&bn.name, shape.to_vec(), dy.shape()));
    }
    let (n, c) = (shape[0], shape[1]);
    let s: usize = shape[2..].iter().product();
    let m = (n * s) as f64;
    let g = dy.data();
    let at = |i: usize, ci: usize, j: usize| (i * c + ci) * s + j;
    let mut dx = vec![T::ZERO; g.len()];
    let mut dgamma = Vec::with_capacity(c);
    let mut dbeta = Vec::with_capacity(c);
    for ci in 0..c {
        let gamma = bn.gamma.data()[ci].to_f64();
        let (mut sum_g, mut sum_gx) = (0.0, 0.0);
        for i in 0..n {
            for j in 0..s {
                let idx = at(i, ci, j);
                let gv = g[idx].to_f64();
                sum_g += gv;
                sum_gx += gv * xhat[idx];
            }
        }
        let scale = gamma * inv_std[ci] / m;
        for i in 0..n {
            for j in 0..s {
                let idx = at(i, ci, j);
                let v = scale * (m * g[idx].to_f64() - sum_g - xhat[idx] * sum_gx);
                dx[idx] = T::from_f64(v);
            }
        }
        dgamma.push(T::from_f64(sum_gx));
        dbeta.push(T::from_f64(sum_g));
    }
    Ok((
        Tensor::from_parts(shape.to_vec(), dx),
        vec![
            Tensor::from_parts(vec![c], dgamma),
            Tensor::from_parts(vec![c], dbeta),
        ],
    ))
}

/// Folds the batch statistics of a train-mode cache into running estimates.
pub(crate) fn update_running_stats<T: Scalar>(layers: &mut [Layer<T>], caches: &[LayerCache<T>]) {
    for (layer, cache) in layers.iter_mut().zip(caches) {
        match (layer, cache) {
            (
                Layer::BatchNorm(bn),
                LayerCache::BatchNorm {
                    batch_mean,
                    batch_var_unbiased,
                    ..
                },
            ) => {
                let mom = BatchNorm::<T>::MOMENTUM;
                for (r, &b) in bn.running_mean.data_mut().iter_mut().zip(batch_mean) {
                    *r = T::from_f64((1.0 - mom) * r.to_f64() + mom * b);
                }
                for (r, &b) in bn.running_var.data_mut().iter_mut().zip(batch_var_unbiased) {
                    *r = T::from_f64((1.0 - mom) * r.to_f64() + mom * b);
                }
            }
            (Layer::Residual(body), LayerCache::Residual(inner)) => {
                update_running_stats(body, inner)
            }
            _ => {}
        }
    }
}
