use super::{no_cache, LayerGrads, LayerKind};
use crate::error::{Error, Result};
use crate::nn::tensor::{Real, Tensor};

#[derive(Clone, Debug, Default)]
pub struct Relu<T: Real> {
    pub(crate) cache: Option<Tensor<T>>,
}

impl<T: Real> Relu<T> {
    pub(crate) fn compute(x: &Tensor<T>) -> Tensor<T> {
        x.map(|v| if v > T::zero() { v } else { T::zero() })
    }

    pub(crate) fn forward(&mut self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let y = Self::compute(x);
        self.cache = Some(x.clone());
        Ok(y)
    }

    pub(crate) fn backward(&mut self, up: &Tensor<T>) -> Result<LayerGrads<T>> {
        let x = self.cache.as_ref().ok_or_else(|| no_cache(LayerKind::Relu))?;
        if x.shape() != up.shape() {
            return Err(Error::ShapeMismatch(format!("relu upstream {:?} vs {:?}", up.shape(), x.shape())));
        }
        let dx = x.data().iter().zip(up.data()).map(|(&v, &g)| if v > T::zero() { g } else { T::zero() }).collect();
        Ok(LayerGrads { inputs: vec![Tensor::from_vec(x.shape().to_vec(), dx)?], params: vec![] })
    }
}

/// Row-wise softmax over `[batch, classes]`.
#[derive(Clone, Debug, Default)]
pub struct Softmax<T: Real> {
    pub(crate) cache: Option<Tensor<T>>,
}

impl<T: Real> Softmax<T> {
    pub(crate) fn compute(x: &Tensor<T>) -> Result<Tensor<T>> {
        let &[_, c] = x.shape() else {
            return Err(Error::ShapeMismatch(format!("softmax expects [batch, classes], got {:?}", x.shape())));
        };
        let mut out = x.data().to_vec();
        for row in out.chunks_exact_mut(c) {
            let max = row.iter().copied().fold(T::neg_infinity(), T::max);
            let mut sum = T::zero();
            for v in row.iter_mut() {
                *v = (*v - max).exp();
                sum = sum + *v;
            }
            row.iter_mut().for_each(|v| *v = *v / sum);
        }
        Tensor::from_vec(x.shape().to_vec(), out)
    }

    pub(crate) fn forward(&mut self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let y = Self::compute(x)?;
        self.cache = Some(y.clone());
        Ok(y)
    }

    /// `dx = p * (g - sum(g * p))` per row.
    pub(crate) fn backward(&mut self, up: &Tensor<T>) -> Result<LayerGrads<T>> {
        let p = self.cache.as_ref().ok_or_else(|| no_cache(LayerKind::Softmax))?;
        if p.shape() != up.shape() {
            return Err(Error::ShapeMismatch(format!("softmax upstream {:?} vs {:?}", up.shape(), p.shape())));
        }
        let c = p.shape()[1];
        let mut dx = vec![T::zero(); p.len()];
        for ((prow, grow), drow) in p.data().chunks_exact(c).zip(up.data().chunks_exact(c)).zip(dx.chunks_exact_mut(c)) {
            let dot: T = prow.iter().zip(grow).map(|(&a, &b)| a * b).sum();
            for ((d, &pv), &gv) in drow.iter_mut().zip(prow).zip(grow) {
                *d = pv * (gv - dot);
            }
        }
        Ok(LayerGrads { inputs: vec![Tensor::from_vec(p.shape().to_vec(), dx)?], params: vec![] })
    }
}
