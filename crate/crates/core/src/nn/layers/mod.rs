//! The fixed layer set and its forward / backward rules.
//!
//! Sequence tensors are `[batch, channels, length]`; feature tensors are
//! `[batch, features]`. Every layer caches what its backward pass needs
//! during [`Layer::forward`]; [`Layer::infer`] runs in eval mode without
//! touching caches or running statistics.

mod conv;
mod dense;
mod merge;
mod norm;
mod pointwise;
mod pool;

use rand::Rng;
use serde::{Deserialize, Serialize};

pub use conv::Conv1d;
pub use dense::Dense;
pub use merge::{Add, Concat};
pub use norm::BatchNorm1d;
pub use pointwise::{Relu, Softmax};
pub use pool::{GlobalAvgPool1d, MaxPool1d};

use super::tensor::{Real, Tensor};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    Train,
    Eval,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LayerKind {
    Dense,
    Conv1d,
    BatchNorm1d,
    Relu,
    MaxPool1d,
    GlobalAvgPool1d,
    Softmax,
    Concat,
    Add,
}

/// Layer kind plus hyperparameters; enough to rebuild the layer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    /// Flattens all non-batch dimensions (channel-major) before the product.
    Dense { in_features: usize, out_features: usize },
    /// Stride 1, "same" padding: `(k - 1) / 2` zeros on the left, the rest on the right.
    Conv1d { in_channels: usize, out_channels: usize, kernel: usize, bias: bool },
    BatchNorm1d { channels: usize, eps: f64, momentum: f64 },
    Relu,
    /// Stride 1, "same" padding with -inf.
    MaxPool1d { kernel: usize },
    GlobalAvgPool1d,
    Softmax,
    /// Concatenates along the channel axis.
    Concat,
    Add,
}

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

impl LayerSpec {
    pub fn batch_norm(channels: usize) -> Self {
        LayerSpec::BatchNorm1d { channels, eps: BN_EPS, momentum: BN_MOMENTUM }
    }

    pub fn kind(&self) -> LayerKind {
        match self {
            LayerSpec::Dense { .. } => LayerKind::Dense,
            LayerSpec::Conv1d { .. } => LayerKind::Conv1d,
            LayerSpec::BatchNorm1d { .. } => LayerKind::BatchNorm1d,
            LayerSpec::Relu => LayerKind::Relu,
            LayerSpec::MaxPool1d { .. } => LayerKind::MaxPool1d,
            LayerSpec::GlobalAvgPool1d => LayerKind::GlobalAvgPool1d,
            LayerSpec::Softmax => LayerKind::Softmax,
            LayerSpec::Concat => LayerKind::Concat,
            LayerSpec::Add => LayerKind::Add,
        }
    }

    /// Per-sample output shape (no batch axis) for the given per-sample input shapes.
    pub fn output_shape(&self, inputs: &[&[usize]]) -> Result<Vec<usize>> {
        let mismatch = |msg: String| Err(Error::ShapeMismatch(format!("{:?}: {msg}", self.kind())));
        let arity_ok = match self {
            LayerSpec::Concat => !inputs.is_empty(),
            LayerSpec::Add => inputs.len() == 2,
            _ => inputs.len() == 1,
        };
        if !arity_ok {
            return mismatch(format!("wrong number of inputs ({})", inputs.len()));
        }
        let x = inputs[0];
        match *self {
            LayerSpec::Dense { in_features, out_features } => {
                let n: usize = x.iter().product();
                if n != in_features {
                    return mismatch(format!("expects {in_features} features, got {x:?}"));
                }
                Ok(vec![out_features])
            }
            LayerSpec::Conv1d { in_channels, out_channels, .. } => match x {
                [c, l] if *c == in_channels => Ok(vec![out_channels, *l]),
                _ => mismatch(format!("expects [{in_channels}, L], got {x:?}")),
            },
            LayerSpec::BatchNorm1d { channels, .. } => match x {
                [c] | [c, _] if *c == channels => Ok(x.to_vec()),
                _ => mismatch(format!("expects {channels} channels, got {x:?}")),
            },
            LayerSpec::Relu => Ok(x.to_vec()),
            LayerSpec::MaxPool1d { .. } => match x {
                [_, _] => Ok(x.to_vec()),
                _ => mismatch(format!("expects [C, L], got {x:?}")),
            },
            LayerSpec::GlobalAvgPool1d => match x {
                [c, _] => Ok(vec![*c]),
                _ => mismatch(format!("expects [C, L], got {x:?}")),
            },
            LayerSpec::Softmax => match x {
                [_] => Ok(x.to_vec()),
                _ => mismatch(format!("expects [C], got {x:?}")),
            },
            LayerSpec::Concat => {
                let rest = &x[1..];
                if inputs.iter().any(|s| s.is_empty() || &s[1..] != rest) {
                    return mismatch(format!("incompatible inputs {inputs:?}"));
                }
                let mut out = x.to_vec();
                out[0] = inputs.iter().map(|s| s[0]).sum();
                Ok(out)
            }
            LayerSpec::Add => {
                if inputs[0] != inputs[1] {
                    return mismatch(format!("{:?} vs {:?}", inputs[0], inputs[1]));
                }
                Ok(x.to_vec())
            }
        }
    }

    pub fn param_count(&self) -> usize {
        match *self {
            LayerSpec::Dense { in_features, out_features } => in_features * out_features + out_features,
            LayerSpec::Conv1d { in_channels, out_channels, kernel, bias } => {
                in_channels * out_channels * kernel + if bias { out_channels } else { 0 }
            }
            LayerSpec::BatchNorm1d { channels, .. } => 2 * channels,
            _ => 0,
        }
    }
}

/// Gradients produced by one backward call.
#[derive(Clone, Debug)]
pub struct LayerGrads<T> {
    /// One gradient per forward input.
    pub inputs: Vec<Tensor<T>>,
    /// One gradient per parameter, in [`Layer::params`] order.
    pub params: Vec<Tensor<T>>,
}

#[derive(Clone, Debug)]
pub enum Layer<T: Real> {
    Dense(Dense<T>),
    Conv1d(Conv1d<T>),
    BatchNorm1d(BatchNorm1d<T>),
    Relu(Relu<T>),
    MaxPool1d(MaxPool1d),
    GlobalAvgPool1d(GlobalAvgPool1d),
    Softmax(Softmax<T>),
    Concat(Concat),
    Add(Add),
}

/// He-style uniform bound for fan-in initialization.
fn he_bound(fan_in: usize) -> f64 {
    (6.0 / fan_in.max(1) as f64).sqrt()
}

pub(crate) fn he_uniform<T: Real, R: Rng + ?Sized>(shape: &[usize], fan_in: usize, rng: &mut R) -> Tensor<T> {
    let bound = he_bound(fan_in);
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| T::from_f64_lossy(rng.gen_range(-bound..=bound))).collect();
    Tensor::from_vec(shape.to_vec(), data).expect("sized from shape")
}

fn one_input<'a, T>(inputs: &[&'a Tensor<T>], kind: LayerKind) -> Result<&'a Tensor<T>> {
    match inputs {
        [x] => Ok(x),
        _ => Err(Error::ShapeMismatch(format!("{kind:?} takes one input, got {}", inputs.len()))),
    }
}

impl<T: Real> Layer<T> {
    /// Builds a freshly initialized layer.
    pub fn new<R: Rng + ?Sized>(spec: &LayerSpec, rng: &mut R) -> Self {
        match *spec {
            LayerSpec::Dense { in_features, out_features } => Layer::Dense(Dense::new(in_features, out_features, rng)),
            LayerSpec::Conv1d { in_channels, out_channels, kernel, bias } => {
                Layer::Conv1d(Conv1d::new(in_channels, out_channels, kernel, bias, rng))
            }
            LayerSpec::BatchNorm1d { channels, eps, momentum } => Layer::BatchNorm1d(BatchNorm1d::new(channels, eps, momentum)),
            LayerSpec::Relu => Layer::Relu(Relu::default()),
            LayerSpec::MaxPool1d { kernel } => Layer::MaxPool1d(MaxPool1d::new(kernel)),
            LayerSpec::GlobalAvgPool1d => Layer::GlobalAvgPool1d(GlobalAvgPool1d::default()),
            LayerSpec::Softmax => Layer::Softmax(Softmax::default()),
            LayerSpec::Concat => Layer::Concat(Concat::default()),
            LayerSpec::Add => Layer::Add(Add::default()),
        }
    }

    pub fn spec(&self) -> LayerSpec {
        match self {
            Layer::Dense(l) => LayerSpec::Dense { in_features: l.in_features(), out_features: l.out_features() },
            Layer::Conv1d(l) => LayerSpec::Conv1d {
                in_channels: l.in_channels(),
                out_channels: l.out_channels(),
                kernel: l.kernel(),
                bias: l.bias.is_some(),
            },
            Layer::BatchNorm1d(l) => LayerSpec::BatchNorm1d { channels: l.channels(), eps: l.eps, momentum: l.momentum },
            Layer::Relu(_) => LayerSpec::Relu,
            Layer::MaxPool1d(l) => LayerSpec::MaxPool1d { kernel: l.kernel },
            Layer::GlobalAvgPool1d(_) => LayerSpec::GlobalAvgPool1d,
            Layer::Softmax(_) => LayerSpec::Softmax,
            Layer::Concat(_) => LayerSpec::Concat,
            Layer::Add(_) => LayerSpec::Add,
        }
    }

    pub fn kind(&self) -> LayerKind {
        self.spec().kind()
    }

    /// Forward pass that caches for backward; batch-norm uses batch statistics
    /// and updates its running statistics in `Train` mode.
    pub fn forward(&mut self, inputs: &[&Tensor<T>], mode: Mode) -> Result<Tensor<T>> {
        let kind = self.kind();
        let out = match self {
            Layer::Dense(l) => l.forward(one_input(inputs, kind)?),
            Layer::Conv1d(l) => l.forward(one_input(inputs, kind)?),
            Layer::BatchNorm1d(l) => l.forward(one_input(inputs, kind)?, mode),
            Layer::Relu(l) => l.forward(one_input(inputs, kind)?),
            Layer::MaxPool1d(l) => l.forward(one_input(inputs, kind)?),
            Layer::GlobalAvgPool1d(l) => l.forward(one_input(inputs, kind)?),
            Layer::Softmax(l) => l.forward(one_input(inputs, kind)?),
            Layer::Concat(l) => l.forward(inputs),
            Layer::Add(l) => l.forward(inputs),
        }?;
        out.ensure_finite(&format!("{kind:?}"))
    }

    /// Eval-mode forward pass; no caches are written.
    pub fn infer(&self, inputs: &[&Tensor<T>]) -> Result<Tensor<T>> {
        let kind = self.kind();
        let out = match self {
            Layer::Dense(l) => l.compute(one_input(inputs, kind)?),
            Layer::Conv1d(l) => l.compute(one_input(inputs, kind)?).map(|(y, _)| y),
            Layer::BatchNorm1d(l) => l.infer(one_input(inputs, kind)?),
            Layer::Relu(_) => Ok(Relu::<T>::compute(one_input(inputs, kind)?)),
            Layer::MaxPool1d(l) => l.compute(one_input(inputs, kind)?).map(|(y, _)| y),
            Layer::GlobalAvgPool1d(_) => GlobalAvgPool1d::compute(one_input(inputs, kind)?),
            Layer::Softmax(_) => Softmax::compute(one_input(inputs, kind)?),
            Layer::Concat(_) => Concat::compute(inputs).map(|(y, _)| y),
            Layer::Add(_) => Add::compute(inputs),
        }?;
        out.ensure_finite(&format!("{kind:?}"))
    }

    /// Transpose-Jacobian product of the last cached forward pass.
    pub fn backward(&mut self, upstream: &Tensor<T>) -> Result<LayerGrads<T>> {
        match self {
            Layer::Dense(l) => l.backward(upstream),
            Layer::Conv1d(l) => l.backward(upstream),
            Layer::BatchNorm1d(l) => l.backward(upstream),
            Layer::Relu(l) => l.backward(upstream),
            Layer::MaxPool1d(l) => l.backward(upstream),
            Layer::GlobalAvgPool1d(l) => l.backward(upstream),
            Layer::Softmax(l) => l.backward(upstream),
            Layer::Concat(l) => l.backward(upstream),
            Layer::Add(l) => l.backward(upstream),
        }
    }

    /// Learned parameters, in a fixed per-kind order.
    pub fn params(&self) -> Vec<&Tensor<T>> {
        match self {
            Layer::Dense(l) => vec![&l.weight, &l.bias],
            Layer::Conv1d(l) => std::iter::once(&l.weight).chain(l.bias.as_ref()).collect(),
            Layer::BatchNorm1d(l) => vec![&l.gamma, &l.beta],
            _ => Vec::new(),
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor<T>> {
        match self {
            Layer::Dense(l) => vec![&mut l.weight, &mut l.bias],
            Layer::Conv1d(l) => std::iter::once(&mut l.weight).chain(l.bias.as_mut()).collect(),
            Layer::BatchNorm1d(l) => vec![&mut l.gamma, &mut l.beta],
            _ => Vec::new(),
        }
    }

    pub fn param_names(&self) -> &'static [&'static str] {
        match self {
            Layer::Dense(_) => &["weight", "bias"],
            Layer::Conv1d(l) if l.bias.is_some() => &["weight", "bias"],
            Layer::Conv1d(_) => &["weight"],
            Layer::BatchNorm1d(_) => &["gamma", "beta"],
            _ => &[],
        }
    }

    /// Non-learned persistent state (batch-norm running statistics).
    pub fn state(&self) -> Vec<&Tensor<T>> {
        match self {
            Layer::BatchNorm1d(l) => vec![&l.running_mean, &l.running_var],
            _ => Vec::new(),
        }
    }

    pub fn state_mut(&mut self) -> Vec<&mut Tensor<T>> {
        match self {
            Layer::BatchNorm1d(l) => vec![&mut l.running_mean, &mut l.running_var],
            _ => Vec::new(),
        }
    }

    pub fn state_names(&self) -> &'static [&'static str] {
        match self {
            Layer::BatchNorm1d(_) => &["running_mean", "running_var"],
            _ => &[],
        }
    }

    /// Drops cached activations.
    pub fn clear_cache(&mut self) {
        match self {
            Layer::Dense(l) => l.cache = None,
            Layer::Conv1d(l) => l.cache = None,
            Layer::BatchNorm1d(l) => l.cache = None,
            Layer::Relu(l) => l.cache = None,
            Layer::MaxPool1d(l) => l.cache = None,
            Layer::GlobalAvgPool1d(l) => l.cache = None,
            Layer::Softmax(l) => l.cache = None,
            Layer::Concat(l) => l.cache = None,
            Layer::Add(l) => l.cache = None,
        }
    }
}

pub(crate) fn no_cache(kind: LayerKind) -> Error {
    Error::NoCachedForward(format!("{kind:?}"))
}

pub(crate) fn seq_dims<T: Real>(x: &Tensor<T>, kind: LayerKind) -> Result<(usize, usize, usize)> {
    match *x.shape() {
        [b, c, l] => Ok((b, c, l)),
        ref s => Err(Error::ShapeMismatch(format!("{kind:?} expects [batch, channels, length], got {s:?}"))),
    }
}
