use super::{no_cache, LayerGrads, LayerKind};
use crate::error::{Error, Result};
use crate::nn::tensor::{Real, Tensor};

/// Channel-axis concatenation of `[batch, c_i, ...]` inputs.
#[derive(Clone, Debug, Default)]
pub struct Concat {
    /// Channel count of each input and the shared `(batch, inner)` extents.
    pub(crate) cache: Option<(Vec<usize>, usize, usize, Vec<usize>)>,
}

impl Concat {
    pub(crate) fn compute<T: Real>(inputs: &[&Tensor<T>]) -> Result<(Tensor<T>, Vec<usize>)> {
        let first = inputs.first().ok_or_else(|| Error::ShapeMismatch("concat needs inputs".into()))?;
        let shape = first.shape();
        if shape.len() < 2 {
            return Err(Error::ShapeMismatch(format!("concat expects rank >= 2, got {shape:?}")));
        }
        let batch = shape[0];
        let tail = &shape[2..];
        let inner: usize = tail.iter().product();
        for x in inputs {
            if x.shape().len() != shape.len() || x.shape()[0] != batch || &x.shape()[2..] != tail {
                return Err(Error::ShapeMismatch(format!("concat {:?} with {shape:?}", x.shape())));
            }
        }
        let channels: Vec<usize> = inputs.iter().map(|x| x.shape()[1]).collect();
        let total: usize = channels.iter().sum();
        let mut out = Vec::with_capacity(batch * total * inner);
        for b in 0..batch {
            for (x, &c) in inputs.iter().zip(&channels) {
                out.extend_from_slice(&x.data()[b * c * inner..(b + 1) * c * inner]);
            }
        }
        let mut out_shape = shape.to_vec();
        out_shape[1] = total;
        Ok((Tensor::from_vec(out_shape, out)?, channels))
    }

    pub(crate) fn forward<T: Real>(&mut self, inputs: &[&Tensor<T>]) -> Result<Tensor<T>> {
        let (y, channels) = Self::compute(inputs)?;
        let shape = inputs[0].shape();
        let inner = shape[2..].iter().product();
        self.cache = Some((channels, shape[0], inner, shape[2..].to_vec()));
        Ok(y)
    }

    pub(crate) fn backward<T: Real>(&mut self, up: &Tensor<T>) -> Result<LayerGrads<T>> {
        let (channels, batch, inner, tail) = self.cache.as_ref().ok_or_else(|| no_cache(LayerKind::Concat))?;
        let total: usize = channels.iter().sum();
        if up.len() != batch * total * inner {
            return Err(Error::ShapeMismatch(format!("concat upstream {:?}", up.shape())));
        }
        let mut grads: Vec<Vec<T>> = channels.iter().map(|c| Vec::with_capacity(batch * c * inner)).collect();
        for b in 0..*batch {
            let mut offset = b * total * inner;
            for (g, &c) in grads.iter_mut().zip(channels) {
                g.extend_from_slice(&up.data()[offset..offset + c * inner]);
                offset += c * inner;
            }
        }
        let inputs = grads
            .into_iter()
            .zip(channels)
            .map(|(g, &c)| {
                let mut shape = vec![*batch, c];
                shape.extend_from_slice(tail);
                Tensor::from_vec(shape, g)
            })
            .collect::<Result<_>>()?;
        Ok(LayerGrads { inputs, params: vec![] })
    }
}

/// Elementwise sum of two equally shaped inputs.
#[derive(Clone, Debug, Default)]
pub struct Add {
    pub(crate) cache: Option<Vec<usize>>,
}

impl Add {
    pub(crate) fn compute<T: Real>(inputs: &[&Tensor<T>]) -> Result<Tensor<T>> {
        let [a, b] = inputs else {
            return Err(Error::ShapeMismatch(format!("add takes two inputs, got {}", inputs.len())));
        };
        let mut out = (*a).clone();
        out.add_assign(b)?;
        Ok(out)
    }

    pub(crate) fn forward<T: Real>(&mut self, inputs: &[&Tensor<T>]) -> Result<Tensor<T>> {
        let y = Self::compute(inputs)?;
        self.cache = Some(y.shape().to_vec());
        Ok(y)
    }

    pub(crate) fn backward<T: Real>(&mut self, up: &Tensor<T>) -> Result<LayerGrads<T>> {
        let shape = self.cache.as_ref().ok_or_else(|| no_cache(LayerKind::Add))?;
        if up.shape() != shape.as_slice() {
            return Err(Error::ShapeMismatch(format!("add upstream {:?} vs {shape:?}", up.shape())));
        }
        Ok(LayerGrads { inputs: vec![up.clone(), up.clone()], params: vec![] })
    }
}
