//! Layers with cached forward state for reverse-mode backpropagation.
//!
//! `forward` caches what `backward` needs; `infer` is the read-only
//! eval-mode path used for inference on frozen models.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::conv::{conv2d_backward, conv2d_forward, deconv2d_backward, deconv2d_forward};
use super::{NnError, Parameter, Scalar, Tensor};

/// Batchnorm variance stabilizer.
pub const BN_EPSILON: f64 = 1e-5;
/// Weight of the current batch in the running-statistics moving average.
pub const BN_MOMENTUM: f64 = 0.1;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    Conv {
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
    },
    Deconv {
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
    },
    BatchNorm {
        channels: usize,
    },
    Relu,
    Sigmoid,
    MaxPool {
        size: usize,
    },
    Flatten,
    Linear {
        in_features: usize,
        out_features: usize,
    },
}

/// He-normal weights (`std = sqrt(2 / fan_in)`).
fn he_normal<T: Scalar, R: Rng>(shape: &[usize], fan_in: usize, rng: &mut R) -> Tensor<T> {
    let dist = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).expect("positive std");
    let n = shape.iter().product();
    let data = (0..n).map(|_| T::lit(dist.sample(rng))).collect();
    Tensor::from_vec(shape, data).expect("shape matches")
}

fn missing_cache(layer: &str) -> NnError {
    NnError::State(format!("{layer}: backward called without a cached forward pass"))
}

#[derive(Clone, Debug)]
pub struct Conv2d<T> {
    pub weight: Parameter<T>,
    pub bias: Parameter<T>,
    pub stride: usize,
    pub padding: usize,
    input: Option<Tensor<T>>,
}

impl<T: Scalar> Conv2d<T> {
    #[allow(clippy::too_many_arguments)]
    pub fn new<R: Rng>(
        name: &str,
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        rng: &mut R,
    ) -> Self {
        let fan_in = in_channels * kernel * kernel;
        Self {
            weight: Parameter::new(
                format!("{name}.weight"),
                he_normal(&[out_channels, in_channels, kernel, kernel], fan_in, rng),
                true,
            ),
            bias: Parameter::new(format!("{name}.bias"), Tensor::zeros(&[out_channels]), false),
            stride,
            padding,
            input: None,
        }
    }

    pub fn forward(&mut self, x: &Tensor<T>) -> Result<Tensor<T>, NnError> {
        let y = self.infer(x)?;
        self.input = Some(x.clone());
        Ok(y)
    }

    pub fn infer(&self, x: &Tensor<T>) -> Result<Tensor<T>, NnError> {
        conv2d_forward(x, &self.weight.value, &self.bias.value, self.stride, self.padding)
    }

    pub fn backward(&mut self, grad: &Tensor<T>) -> Result<Tensor<T>, NnError> {
        let x = self.input.take().ok_or_else(|| missing_cache(&self.weight.name))?;
        let (dx, dw, db) = conv2d_backward(&x, &self.weight.value, grad, self.stride, self.padding)?;
        accumulate(&mut self.weight, &dw);
        accumulate(&mut self.bias, &db);
        Ok(dx)
    }
}

#[derive(Clone, Debug)]
pub struct ConvTranspose2d<T> {
    pub weight: Parameter<T>,
    pub bias: Parameter<T>,
    pub stride: usize,
    pub padding: usize,
    input: Option<Tensor<T>>,
}

impl<T: Scalar> ConvTranspose2d<T> {
    #[allow(clippy::too_many_arguments)]
    pub fn new<R: Rng>(
        name: &str,
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        rng: &mut R,
    ) -> Self {
        let fan_in = in_channels * kernel * kernel;
        Self {
            weight: Parameter::new(
                format!("{name}.weight"),
                he_normal(&[in_channels, out_channels, kernel, kernel], fan_in, rng),
                true,
            ),
            bias: Parameter::new(format!("{name}.bias"), Tensor::zeros(&[out_channels]), false),
            stride,
            padding,
            input: None,
        }
    }

    pub fn forward(&mut self, x: &Tensor<T>) -> Result<Tensor<T>, NnError> {
        let y = self.infer(x)?;
        self.input = Some(x.clone());
        Ok(y)
    }

    pub fn infer(&self, x: &Tensor<T>) -> Result<Tensor<T>, NnError> {
        deconv2d_forward(x, &self.weight.value, &self.bias.value, self.stride, self.padding)
    }

    pub fn backward(&mut self, grad: &Tensor<T>) -> Result<Tensor<T>, NnError> {
        let x = self.input.take().ok_or_else(|| missing_cache(&self.weight.name))?;
        let (dx, dw, db) =
            deconv2d_backward(&x, &self.weight.value, grad, self.stride, self.padding)?;
        accumulate(&mut self.weight, &dw);
        accumulate(&mut self.bias, &db);
        Ok(dx)
    }
}

fn accumulate<T: Scalar>(param: &mut Parameter<T>, delta: &Tensor<T>) {
    for (g, &d) in param.grad.data_mut().iter_mut().zip(delta.data()) {
        *g = *g + d;
    }
    param.touch_grad();
}

#[derive(Clone, Debug)]
struct BatchNormCache<T> {
    normalized: Tensor<T>,
    inv_std: Vec<T>,
    mode: Mode,
}

/// Per-channel normalization over `(batch, height, width)`.
#[derive(Clone, Debug)]
pub struct BatchNorm2d<T> {
    pub gamma: Parameter<T>,
    pub beta: Parameter<T>,
    pub running_mean: Tensor<T>,
    pub running_var: Tensor<T>,
    pub epsilon: T,
    pub momentum: T,
    cache: Option<BatchNormCache<T>>,
}

impl<T: Scalar> BatchNorm2d<T> {
    pub fn new(name: &str, channels: usize) -> Self {
        Self {
            gamma: Parameter::new(format!("{name}.gamma"), Tensor::full(&[channels], T::one()), false),
            beta: Parameter::new(format!("{name}.beta"), Tensor::zeros(&[channels]), false),
            running_mean: Tensor::zeros(&[channels]),
            running_var: Tensor::full(&[channels], T::one()),
            epsilon: T::lit(BN_EPSILON),
            momentum: T::lit(BN_MOMENTUM),
            cache: None,
        }
    }

    pub fn channels(&self) -> usize {
        self.gamma.value.len()
    }

    fn check(&self, x: &Tensor<T>) -> Result<(usize, usize, usize), NnError> {
        let (n, c, h, w) = x.dims4()?;
        if c != self.channels() {
            return Err(NnError::Shape(format!(
                "batchnorm over {} channels got {c}",
                self.channels()
            )));
        }
        Ok((n, c, h * w))
    }

    pub fn forward(&mut self, x: &Tensor<T>, mode: Mode) -> Result<Tensor<T>, NnError> {
        let (n, c, plane) = self.check(x)?;
        if mode == Mode::Eval {
            let (y, normalized, inv_std) = self.apply_running(x)?;
            self.cache = Some(BatchNormCache {
                normalized,
                inv_std,
                mode,
            });
            return Ok(y);
        }
        if n < 2 {
            return Err(NnError::BatchTooSmall(n));
        }
        let count = T::from_usize(n * plane).unwrap();
        let mut y = Tensor::zeros(x.shape());
        let mut normalized = Tensor::zeros(x.shape());
        let mut inv_std = Vec::with_capacity(c);
        for ch in 0..c {
            let values = || (0..n).flat_map(move |b| (0..plane).map(move |i| (b * c + ch) * plane + i));
            let mean = values().map(|i| x.data()[i]).sum::<T>() / count;
            let var = values().map(|i| (x.data()[i] - mean).powi(2)).sum::<T>() / count;
            let istd = T::one() / (var + self.epsilon).sqrt();
            let (g, bt) = (self.gamma.value.data()[ch], self.beta.value.data()[ch]);
            for i in values() {
                let xh = (x.data()[i] - mean) * istd;
                normalized.data_mut()[i] = xh;
                y.data_mut()[i] = g * xh + bt;
            }
            inv_std.push(istd);
            let m = self.momentum;
            let unbiased = var * count / (count - T::one());
            let rm = &mut self.running_mean.data_mut()[ch];
            *rm = (T::one() - m) * *rm + m * mean;
            let rv = &mut self.running_var.data_mut()[ch];
            *rv = (T::one() - m) * *rv + m * unbiased;
        }
        self.cache = Some(BatchNormCache {
            normalized,
            inv_std,
            mode,
        });
        Ok(y)
    }

    fn apply_running(&self, x: &Tensor<T>) -> Result<(Tensor<T>, Tensor<T>, Vec<T>), NnError> {
        let (n, c, plane) = self.check(x)?;
        let inv_std: Vec<T> = self
            .running_var
            .data()
            .iter()
            .map(|&v| T::one() / (v + self.epsilon).sqrt())
            .collect();
        let mut y = Tensor::zeros(x.shape());
        let mut normalized = Tensor::zeros(x.shape());
        for b in 0..n {
            for ch in 0..c {
                let (g, bt) = (self.gamma.value.data()[ch], self.beta.value.data()[ch]);
                let mean = self.running_mean.data()[ch];
                let base = (b * c + ch) * plane;
                for i in base..base + plane {
                    let xh = (x.data()[i] - mean) * inv_std[ch];
                    normalized.data_mut()[i] = xh;
                    y.data_mut()[i] = g * xh + bt;
                }
            }
        }
        Ok((y, normalized, inv_std))
    }

    pub fn infer(&self, x: &Tensor<T>) -> Result<Tensor<T>, NnError> {
        Ok(self.apply_running(x)?.0)
    }

    pub fn backward(&mut self, grad: &Tensor<T>) -> Result<Tensor<T>, NnError> {
        let cache = self.cache.take().ok_or_else(|| missing_cache(&self.gamma.name))?;
        let (n, c, plane) = self.check(grad)?;
        let count = T::from_usize(n * plane).unwrap();
        let mut dx = Tensor::zeros(grad.shape());
        for ch in 0..c {
            let idx = || (0..n).flat_map(move |b| (0..plane).map(move |i| (b * c + ch) * plane + i));
            let d_beta: T = idx().map(|i| grad.data()[i]).sum();
            let d_gamma: T = idx()
                .map(|i| grad.data()[i] * cache.normalized.data()[i])
                .sum();
            let g = self.gamma.value.data()[ch];
            let istd = cache.inv_std[ch];
            match cache.mode {
                Mode::Train => {
                    let scale = g * istd / count;
                    for i in idx() {
                        dx.data_mut()[i] = scale
                            * (count * grad.data()[i] - d_beta - cache.normalized.data()[i] * d_gamma);
                    }
                }
                Mode::Eval => {
                    for i in idx() {
                        dx.data_mut()[i] = grad.data()[i] * g * istd;
                    }
                }
            }
            let gg = &mut self.gamma.grad.data_mut()[ch];
            *gg = *gg + d_gamma;
            let bg = &mut self.beta.grad.data_mut()[ch];
            *bg = *bg + d_beta;
        }
        self.gamma.touch_grad();
        self.beta.touch_grad();
        Ok(dx)
    }
}

/// `max(0, x)`; derivative at exactly 0 is 0.
#[derive(Clone, Debug, Default)]
pub struct Relu<T> {
    input: Option<Tensor<T>>,
}

impl<T: Scalar> Relu<T> {
    pub fn forward(&mut self, x: &Tensor<T>) -> Tensor<T> {
        self.input = Some(x.clone());
        self.infer(x)
    }

    pub fn infer(&self, x: &Tensor<T>) -> Tensor<T> {
        x.map(|v| if v > T::zero() { v } else { T::zero() })
    }

    pub fn backward(&mut self, grad: &Tensor<T>) -> Result<Tensor<T>, NnError> {
        let x = self.input.take().ok_or_else(|| missing_cache("relu"))?;
        let mut dx = grad.clone();
        for (d, &v) in dx.data_mut().iter_mut().zip(x.data()) {
            if v <= T::zero() {
                *d = T::zero();
            }
        }
        Ok(dx)
    }
}

/// `1 / (1 + e^{−x})`.
#[derive(Clone, Debug, Default)]
pub struct Sigmoid<T> {
    output: Option<Tensor<T>>,
}

pub fn sigmoid<T: Scalar>(v: T) -> T {
    if v >= T::zero() {
        T::one() / (T::one() + (-v).exp())
    } else {
        let e = v.exp();
        e / (T::one() + e)
    }
}

impl<T: Scalar> Sigmoid<T> {
    pub fn forward(&mut self, x: &Tensor<T>) -> Tensor<T> {
        let y = self.infer(x);
        self.output = Some(y.clone());
        y
    }

    pub fn infer(&self, x: &Tensor<T>) -> Tensor<T> {
        x.map(sigmoid)
    }

    pub fn backward(&mut self, grad: &Tensor<T>) -> Result<Tensor<T>, NnError> {
        let y = self.output.take().ok_or_else(|| missing_cache("sigmoid"))?;
        let mut dx = grad.clone();
        for (d, &s) in dx.data_mut().iter_mut().zip(y.data()) {
            *d = *d * s * (T::one() - s);
        }
        Ok(dx)
    }
}

/// Non-overlapping `size × size` max pooling.
#[derive(Clone, Debug)]
pub struct MaxPool2d {
    pub size: usize,
    cache: Option<(Vec<usize>, Vec<usize>)>,
}

impl MaxPool2d {
    pub fn new(size: usize) -> Self {
        Self { size, cache: None }
    }

    fn pool<T: Scalar>(&self, x: &Tensor<T>) -> Result<(Tensor<T>, Vec<usize>), NnError> {
        let (n, c, h, w) = x.dims4()?;
        let s = self.size;
        if h < s || w < s {
            return Err(NnError::Shape(format!("cannot pool {h}x{w} by {s}")));
        }
        let (oh, ow) = (h / s, w / s);
        let mut out = Tensor::zeros(&[n, c, oh, ow]);
        let mut argmax = Vec::with_capacity(n * c * oh * ow);
        for plane in 0..n * c {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut best = plane * h * w + oy * s * w + ox * s;
                    for dy in 0..s {
                        for dx in 0..s {
                            let i = plane * h * w + (oy * s + dy) * w + ox * s + dx;
                            if x.data()[i] > x.data()[best] {
                                best = i;
                            }
                        }
                    }
                    out.data_mut()[(plane * oh + oy) * ow + ox] = x.data()[best];
                    argmax.push(best);
                }
            }
        }
        Ok((out, argmax))
    }

    pub fn forward<T: Scalar>(&mut self, x: &Tensor<T>) -> Result<Tensor<T>, NnError> {
        let (y, argmax) = self.pool(x)?;
        self.cache = Some((argmax, x.shape().to_vec()));
        Ok(y)
    }

    pub fn infer<T: Scalar>(&self, x: &Tensor<T>) -> Result<Tensor<T>, NnError> {
        Ok(self.pool(x)?.0)
    }

    pub fn backward<T: Scalar>(&mut self, grad: &Tensor<T>) -> Result<Tensor<T>, NnError> {
        let (argmax, shape) = self.cache.take().ok_or_else(|| missing_cache("maxpool"))?;
        let mut dx = Tensor::zeros(&shape);
        for (&i, &g) in argmax.iter().zip(grad.data()) {
            dx.data_mut()[i] = dx.data()[i] + g;
        }
        Ok(dx)
    }
}

/// `(N, C, H, W)` to `(N, C·H·W)`.
#[derive(Clone, Debug, Default)]
pub struct Flatten {
    shape: Option<Vec<usize>>,
}

impl Flatten {
    pub fn infer<T: Scalar>(&self, x: &Tensor<T>) -> Result<Tensor<T>, NnError> {
        let n = x.shape()[0];
        x.clone().reshape(&[n, x.len() / n])
    }

    pub fn forward<T: Scalar>(&mut self, x: &Tensor<T>) -> Result<Tensor<T>, NnError> {
        self.shape = Some(x.shape().to_vec());
        self.infer(x)
    }

    pub fn backward<T: Scalar>(&mut self, grad: &Tensor<T>) -> Result<Tensor<T>, NnError> {
        let shape = self.shape.take().ok_or_else(|| missing_cache("flatten"))?;
        grad.clone().reshape(&shape)
    }
}

/// Fully connected layer, `y = x·Wᵀ + b` with `W: (out, in)`.
#[derive(Clone, Debug)]
pub struct Linear<T> {
    pub weight: Parameter<T>,
    pub bias: Parameter<T>,
    input: Option<Tensor<T>>,
}

impl<T: Scalar> Linear<T> {
    pub fn new<R: Rng>(name: &str, in_features: usize, out_features: usize, rng: &mut R) -> Self {
        Self {
            weight: Parameter::new(
                format!("{name}.weight"),
                he_normal(&[out_features, in_features], in_features, rng),
                true,
            ),
            bias: Parameter::new(format!("{name}.bias"), Tensor::zeros(&[out_features]), false),
            input: None,
        }
    }

    fn dims(&self) -> (usize, usize) {
        (self.weight.shape()[0], self.weight.shape()[1])
    }

    pub fn infer(&self, x: &Tensor<T>) -> Result<Tensor<T>, NnError> {
        let (out_f, in_f) = self.dims();
        if x.shape().len() != 2 || x.shape()[1] != in_f {
            return Err(NnError::Shape(format!(
                "linear layer expects (N, {in_f}), got {:?}",
                x.shape()
            )));
        }
        let n = x.shape()[0];
        let mut y = Tensor::zeros(&[n, out_f]);
        for row in y.data_mut().chunks_mut(out_f) {
            row.copy_from_slice(self.bias.value.data());
        }
        T::gemm(false, true, n, in_f, out_f, T::one(), x.data(), self.weight.value.data(), T::one(), y.data_mut());
        Ok(y)
    }

    pub fn forward(&mut self, x: &Tensor<T>) -> Result<Tensor<T>, NnError> {
        let y = self.infer(x)?;
        self.input = Some(x.clone());
        Ok(y)
    }

    pub fn backward(&mut self, grad: &Tensor<T>) -> Result<Tensor<T>, NnError> {
        let x = self.input.take().ok_or_else(|| missing_cache(&self.weight.name))?;
        let (out_f, in_f) = self.dims();
        let n = x.shape()[0];
        T::gemm(true, false, out_f, n, in_f, T::one(), grad.data(), x.data(), T::one(), self.weight.grad.data_mut());
        for row in grad.data().chunks(out_f) {
            for (b, &g) in self.bias.grad.data_mut().iter_mut().zip(row) {
                *b = *b + g;
            }
        }
        self.weight.touch_grad();
        self.bias.touch_grad();
        let mut dx = Tensor::zeros(&[n, in_f]);
        T::gemm(false, false, n, out_f, in_f, T::one(), grad.data(), self.weight.value.data(), T::zero(), dx.data_mut());
        Ok(dx)
    }
}

#[derive(Clone, Debug)]
pub enum Layer<T> {
    Conv(Conv2d<T>),
    Deconv(ConvTranspose2d<T>),
    BatchNorm(BatchNorm2d<T>),
    Relu(Relu<T>),
    Sigmoid(Sigmoid<T>),
    MaxPool(MaxPool2d),
    Flatten(Flatten),
    Linear(Linear<T>),
}

impl<T: Scalar> Layer<T> {
    /// Builds a freshly initialized layer from its spec.
    pub fn from_spec<R: Rng>(name: &str, spec: &LayerSpec, rng: &mut R) -> Self {
        match *spec {
            LayerSpec::Conv {
                in_channels,
                out_channels,
                kernel,
                stride,
                padding,
            } => Layer::Conv(Conv2d::new(name, in_channels, out_channels, kernel, stride, padding, rng)),
            LayerSpec::Deconv {
                in_channels,
                out_channels,
                kernel,
                stride,
                padding,
            } => Layer::Deconv(ConvTranspose2d::new(
                name,
                in_channels,
                out_channels,
                kernel,
                stride,
                padding,
                rng,
            )),
            LayerSpec::BatchNorm { channels } => Layer::BatchNorm(BatchNorm2d::new(name, channels)),
            LayerSpec::Relu => Layer::Relu(Relu::default()),
            LayerSpec::Sigmoid => Layer::Sigmoid(Sigmoid::default()),
            LayerSpec::MaxPool { size } => Layer::MaxPool(MaxPool2d::new(size)),
            LayerSpec::Flatten => Layer::Flatten(Flatten::default()),
            LayerSpec::Linear {
                in_features,
                out_features,
            } => Layer::Linear(Linear::new(name, in_features, out_features, rng)),
        }
    }

    pub fn spec(&self) -> LayerSpec {
        match self {
            Layer::Conv(l) => {
                let s = l.weight.shape();
                LayerSpec::Conv {
                    in_channels: s[1],
                    out_channels: s[0],
                    kernel: s[2],
                    stride: l.stride,
                    padding: l.padding,
                }
            }
            Layer::Deconv(l) => {
                let s = l.weight.shape();
                LayerSpec::Deconv {
                    in_channels: s[0],
                    out_channels: s[1],
                    kernel: s[2],
                    stride: l.stride,
                    padding: l.padding,
                }
            }
            Layer::BatchNorm(l) => LayerSpec::BatchNorm {
                channels: l.channels(),
            },
            Layer::Relu(_) => LayerSpec::Relu,
            Layer::Sigmoid(_) => LayerSpec::Sigmoid,
            Layer::MaxPool(l) => LayerSpec::MaxPool { size: l.size },
            Layer::Flatten(_) => LayerSpec::Flatten,
            Layer::Linear(l) => LayerSpec::Linear {
                in_features: l.weight.shape()[1],
                out_features: l.weight.shape()[0],
            },
        }
    }

    pub fn forward(&mut self, x: &Tensor<T>, mode: Mode) -> Result<Tensor<T>, NnError> {
        match self {
            Layer::Conv(l) => l.forward(x),
            Layer::Deconv(l) => l.forward(x),
            Layer::BatchNorm(l) => l.forward(x, mode),
            Layer::Relu(l) => Ok(l.forward(x)),
            Layer::Sigmoid(l) => Ok(l.forward(x)),
            Layer::MaxPool(l) => l.forward(x),
            Layer::Flatten(l) => l.forward(x),
            Layer::Linear(l) => l.forward(x),
        }
    }

    pub fn infer(&self, x: &Tensor<T>) -> Result<Tensor<T>, NnError> {
        match self {
            Layer::Conv(l) => l.infer(x),
            Layer::Deconv(l) => l.infer(x),
            Layer::BatchNorm(l) => l.infer(x),
            Layer::Relu(l) => Ok(l.infer(x)),
            Layer::Sigmoid(l) => Ok(l.infer(x)),
            Layer::MaxPool(l) => l.infer(x),
            Layer::Flatten(l) => l.infer(x),
            Layer::Linear(l) => l.infer(x),
        }
    }

    pub fn backward(&mut self, grad: &Tensor<T>) -> Result<Tensor<T>, NnError> {
        match self {
            Layer::Conv(l) => l.backward(grad),
            Layer::Deconv(l) => l.backward(grad),
            Layer::BatchNorm(l) => l.backward(grad),
            Layer::Relu(l) => l.backward(grad),
            Layer::Sigmoid(l) => l.backward(grad),
            Layer::MaxPool(l) => l.backward(grad),
            Layer::Flatten(l) => l.backward(grad),
            Layer::Linear(l) => l.backward(grad),
        }
    }

    pub fn params(&self) -> Vec<&Parameter<T>> {
        match self {
            Layer::Conv(l) => vec![&l.weight, &l.bias],
            Layer::Deconv(l) => vec![&l.weight, &l.bias],
            Layer::BatchNorm(l) => vec![&l.gamma, &l.beta],
            Layer::Linear(l) => vec![&l.weight, &l.bias],
            _ => Vec::new(),
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut Parameter<T>> {
        match self {
            Layer::Conv(l) => vec![&mut l.weight, &mut l.bias],
            Layer::Deconv(l) => vec![&mut l.weight, &mut l.bias],
            Layer::BatchNorm(l) => vec![&mut l.gamma, &mut l.beta],
            Layer::Linear(l) => vec![&mut l.weight, &mut l.bias],
            _ => Vec::new(),
        }
    }

    /// Non-trainable state (batchnorm running mean and variance).
    pub fn buffers(&self) -> Vec<&Tensor<T>> {
        match self {
            Layer::BatchNorm(l) => vec![&l.running_mean, &l.running_var],
            _ => Vec::new(),
        }
    }

    pub fn buffers_mut(&mut self) -> Vec<&mut Tensor<T>> {
        match self {
            Layer::BatchNorm(l) => vec![&mut l.running_mean, &mut l.running_var],
            _ => Vec::new(),
        }
    }
}

/// Layers applied in order.
#[derive(Clone, Debug, Default)]
pub struct Sequential<T> {
    pub layers: Vec<Layer<T>>,
}

impl<T: Scalar> Sequential<T> {
    pub fn new(layers: Vec<Layer<T>>) -> Self {
        Self { layers }
    }

    /// Initializes layers from specs; parameters are named `{prefix}.{index}.{kind}`.
    pub fn from_specs<R: Rng>(prefix: &str, specs: &[LayerSpec], rng: &mut R) -> Self {
        let layers = specs
            .iter()
            .enumerate()
            .map(|(i, spec)| {
                let kind = match spec {
                    LayerSpec::Conv { .. } => "conv",
                    LayerSpec::Deconv { .. } => "deconv",
                    LayerSpec::BatchNorm { .. } => "bn",
                    LayerSpec::Linear { .. } => "fc",
                    _ => "act",
                };
                Layer::from_spec(&format!("{prefix}.{i}.{kind}"), spec, rng)
            })
            .collect();
        Self { layers }
    }

    pub fn specs(&self) -> Vec<LayerSpec> {
        self.layers.iter().map(Layer::spec).collect()
    }

    pub fn forward(&mut self, x: &Tensor<T>, mode: Mode) -> Result<Tensor<T>, NnError> {
        let mut layers = self.layers.iter_mut();
        let Some(first) = layers.next() else {
            return Ok(x.clone());
        };
        let mut out = first.forward(x, mode)?;
        for layer in layers {
            out = layer.forward(&out, mode)?;
        }
        Ok(out)
    }

    pub fn infer(&self, x: &Tensor<T>) -> Result<Tensor<T>, NnError> {
        let mut out = x.clone();
        for layer in &self.layers {
            out = layer.infer(&out)?;
        }
        Ok(out)
    }

    pub fn backward(&mut self, grad: &Tensor<T>) -> Result<Tensor<T>, NnError> {
        let mut g = grad.clone();
        for layer in self.layers.iter_mut().rev() {
            g = layer.backward(&g)?;
        }
        Ok(g)
    }

    pub fn params(&self) -> Vec<&Parameter<T>> {
        self.layers.iter().flat_map(Layer::params).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Parameter<T>> {
        self.layers.iter_mut().flat_map(Layer::params_mut).collect()
    }

    pub fn buffers(&self) -> Vec<&Tensor<T>> {
        self.layers.iter().flat_map(Layer::buffers).collect()
    }

    pub fn buffers_mut(&mut self) -> Vec<&mut Tensor<T>> {
        self.layers.iter_mut().flat_map(Layer::buffers_mut).collect()
    }

    pub fn zero_grad(&mut self) {
        self.params_mut().into_iter().for_each(Parameter::zero_grad);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::gradcheck::{numeric_grad, random_tensor, relative_error};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn bn_with(gamma: &[f64], beta: &[f64]) -> BatchNorm2d<f64> {
        let mut bn = BatchNorm2d::new("bn", gamma.len());
        bn.gamma.value = Tensor::from_vec(&[gamma.len()], gamma.to_vec()).unwrap();
        bn.beta.value = Tensor::from_vec(&[beta.len()], beta.to_vec()).unwrap();
        bn
    }

    #[test]
    fn batchnorm_constant_input_is_zero() {
        let mut bn = bn_with(&[1.0], &[0.0]);
        let y = bn.forward(&Tensor::full(&[4, 1, 3, 3], 7.0), Mode::Train).unwrap();
        assert!(y.data().iter().all(|v| v.abs() < 1e-3));
    }

    #[test]
    fn batchnorm_constant_input_shifted_by_beta() {
        let mut bn = bn_with(&[1.0], &[5.0]);
        let y = bn.forward(&Tensor::full(&[2, 1, 2, 2], -3.0), Mode::Train).unwrap();
        assert!(y.data().iter().all(|v| (v - 5.0).abs() < 1e-3));
    }

    #[test]
    fn batchnorm_rejects_single_sample_in_train_mode() {
        let mut bn = BatchNorm2d::<f32>::new("bn", 2);
        assert!(matches!(
            bn.forward(&Tensor::zeros(&[1, 2, 4, 4]), Mode::Train),
            Err(NnError::BatchTooSmall(1))
        ));
        assert!(bn.forward(&Tensor::zeros(&[1, 2, 4, 4]), Mode::Eval).is_ok());
    }

    #[test]
    fn batchnorm_running_stats_update() {
        let mut bn = BatchNorm2d::<f64>::new("bn", 1);
        let x = Tensor::from_vec(&[2, 1, 1, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        bn.forward(&x, Mode::Train).unwrap();
        // mean 2.5, unbiased var 5/3
        assert!((bn.running_mean.data()[0] - 0.25).abs() < 1e-12);
        assert!((bn.running_var.data()[0] - (0.9 + 0.1 * 5.0 / 3.0)).abs() < 1e-12);
    }

    #[test]
    fn batchnorm_eval_uses_running_stats() {
        let mut bn = bn_with(&[2.0], &[1.0]);
        bn.running_mean.data_mut()[0] = 3.0;
        bn.running_var.data_mut()[0] = 4.0 - BN_EPSILON;
        let y = bn.infer(&Tensor::full(&[1, 1, 1, 1], 5.0)).unwrap();
        assert!((y.data()[0] - 3.0).abs() < 1e-12);
    }

    fn check_bn_gradients(mode: Mode) {
        let x = random_tensor::<f64>(&[3, 2, 3, 3], 40);
        let probe = random_tensor::<f64>(&[3, 2, 3, 3], 41);
        let mut bn = bn_with(&[1.3, -0.7], &[0.2, 0.4]);
        bn.running_mean = random_tensor(&[2], 42);
        bn.running_var = Tensor::from_vec(&[2], vec![0.8, 1.7]).unwrap();
        let base = bn.clone();
        let loss = |bn: &BatchNorm2d<f64>, x: &Tensor<f64>| {
            let mut bn = bn.clone();
            bn.forward(x, mode).unwrap().dot(&probe)
        };
        bn.forward(&x, mode).unwrap();
        let dx = bn.backward(&probe).unwrap();
        let ndx = numeric_grad(&x, |t| loss(&base, t));
        assert!(relative_error(dx.data(), ndx.data()) < 1e-4);
        let ng = numeric_grad(&base.gamma.value, |t| {
            let mut b = base.clone();
            b.gamma.value = t.clone();
            loss(&b, &x)
        });
        assert!(relative_error(bn.gamma.grad.data(), ng.data()) < 1e-4);
        let nb = numeric_grad(&base.beta.value, |t| {
            let mut b = base.clone();
            b.beta.value = t.clone();
            loss(&b, &x)
        });
        assert!(relative_error(bn.beta.grad.data(), nb.data()) < 1e-4);
    }

    #[test]
    fn batchnorm_train_gradients() {
        check_bn_gradients(Mode::Train);
    }

    #[test]
    fn batchnorm_eval_gradients() {
        check_bn_gradients(Mode::Eval);
    }

    #[test]
    fn relu_values_and_kink() {
        let mut r = Relu::<f64>::default();
        let x = Tensor::from_vec(&[3], vec![-1.0, 2.0, 0.0]).unwrap();
        assert_eq!(r.forward(&x).data(), &[0.0, 2.0, 0.0]);
        let g = r.backward(&Tensor::full(&[3], 1.0)).unwrap();
        assert_eq!(g.data(), &[0.0, 1.0, 0.0]);
    }

    #[test]
    fn relu_gradient_off_kink() {
        // keep every element at least 0.1 away from zero
        let x = random_tensor::<f64>(&[40], 50).map(|v| if v.abs() < 0.1 { v + 0.2 } else { v });
        let probe = random_tensor::<f64>(&[40], 51);
        let mut r = Relu::default();
        r.forward(&x);
        let dx = r.backward(&probe).unwrap();
        let n = numeric_grad(&x, |t| Relu::default().infer(t).dot(&probe));
        assert!(relative_error(dx.data(), n.data()) < 1e-4);
    }

    #[test]
    fn sigmoid_values_and_gradient() {
        assert_eq!(sigmoid(0.0f64), 0.5);
        assert!(sigmoid(-800.0f64) >= 0.0 && sigmoid(800.0f64) <= 1.0);
        let x = random_tensor::<f64>(&[30], 52).map(|v| v * 4.0);
        let probe = random_tensor::<f64>(&[30], 53);
        let mut s = Sigmoid::default();
        s.forward(&x);
        let dx = s.backward(&probe).unwrap();
        let n = numeric_grad(&x, |t| Sigmoid::default().infer(t).dot(&probe));
        assert!(relative_error(dx.data(), n.data()) < 1e-4);
    }

    #[test]
    fn maxpool_and_linear_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(60);
        let mut net: Sequential<f64> = Sequential::from_specs(
            "t",
            &[
                LayerSpec::MaxPool { size: 2 },
                LayerSpec::Flatten,
                LayerSpec::Linear {
                    in_features: 8,
                    out_features: 3,
                },
            ],
            &mut rng,
        );
        let x = random_tensor::<f64>(&[2, 2, 4, 4], 61);
        let probe = random_tensor::<f64>(&[2, 3], 62);
        let y = net.forward(&x, Mode::Train).unwrap();
        assert_eq!(y.shape(), &[2, 3]);
        let dx = net.backward(&probe).unwrap();
        let frozen = net.clone();
        let n = numeric_grad(&x, |t| frozen.infer(t).unwrap().dot(&probe));
        assert!(relative_error(dx.data(), n.data()) < 1e-4);
        let Layer::Linear(fc) = &net.layers[2] else { unreachable!() };
        let nw = numeric_grad(&fc.weight.value, |w| {
            let mut f = frozen.clone();
            if let Layer::Linear(l) = &mut f.layers[2] {
                l.weight.value = w.clone();
            }
            f.infer(&x).unwrap().dot(&probe)
        });
        assert!(relative_error(fc.weight.grad.data(), nw.data()) < 1e-4);
    }

    #[test]
    fn backward_without_forward_is_error() {
        let mut r = Relu::<f32>::default();
        assert!(matches!(r.backward(&Tensor::zeros(&[1])), Err(NnError::State(_))));
    }

    #[test]
    fn he_init_statistics() {
        let mut rng = ChaCha8Rng::seed_from_u64(70);
        let conv = Conv2d::<f64>::new("c", 16, 32, 4, 2, 1, &mut rng);
        let w = conv.weight.value.data();
        let var = w.iter().map(|v| v * v).sum::<f64>() / w.len() as f64;
        assert!((var - 2.0 / 256.0).abs() < 0.1 * 2.0 / 256.0, "{var}");
        assert!(conv.bias.value.data().iter().all(|&b| b == 0.0));
        assert!(conv.weight.decay && !conv.bias.decay);
    }
}
