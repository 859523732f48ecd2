use rand::Rng;

use super::{he_uniform, no_cache, LayerGrads, LayerKind};
use crate::error::{Error, Result};
use crate::nn::tensor::{gemm, Mat, Real, Tensor};

/// `y = x W^T + b` over the flattened non-batch dimensions of `x`.
#[derive(Clone, Debug)]
pub struct Dense<T: Real> {
    /// `[out_features, in_features]`
    pub weight: Tensor<T>,
    /// `[out_features]`
    pub bias: Tensor<T>,
    pub(crate) cache: Option<Tensor<T>>,
}

impl<T: Real> Dense<T> {
    pub fn new<R: Rng + ?Sized>(in_features: usize, out_features: usize, rng: &mut R) -> Self {
        Self {
            weight: he_uniform(&[out_features, in_features], in_features, rng),
            bias: Tensor::zeros(&[out_features]),
            cache: None,
        }
    }

    pub fn from_params(weight: Tensor<T>, bias: Tensor<T>) -> Result<Self> {
        match (weight.shape(), bias.shape()) {
            ([o, _], [ob]) if o == ob => Ok(Self { weight, bias, cache: None }),
            (w, b) => Err(Error::ShapeMismatch(format!("dense weight {w:?} / bias {b:?}"))),
        }
    }

    pub fn in_features(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn out_features(&self) -> usize {
        self.weight.shape()[0]
    }

    fn batch(&self, x: &Tensor<T>) -> Result<usize> {
        let b = *x.shape().first().unwrap_or(&0);
        if x.shape().len() < 2 || b * self.in_features() != x.len() {
            return Err(Error::ShapeMismatch(format!("dense expects [batch, {}], got {:?}", self.in_features(), x.shape())));
        }
        Ok(b)
    }

    pub(crate) fn compute(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let b = self.batch(x)?;
        let (i, o) = (self.in_features(), self.out_features());
        let mut out = vec![T::zero(); b * o];
        gemm(Mat::row_major(x.data(), b, i), Mat::transposed(self.weight.data(), o, i), T::zero(), &mut out);
        for row in out.chunks_exact_mut(o) {
            row.iter_mut().zip(self.bias.data()).for_each(|(y, &bb)| *y = *y + bb);
        }
        Tensor::from_vec(vec![b, o], out)
    }

    pub(crate) fn forward(&mut self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let y = self.compute(x)?;
        self.cache = Some(x.clone());
        Ok(y)
    }

    pub(crate) fn backward(&mut self, up: &Tensor<T>) -> Result<LayerGrads<T>> {
        let x = self.cache.as_ref().ok_or_else(|| no_cache(LayerKind::Dense))?;
        let b = self.batch(x)?;
        let (i, o) = (self.in_features(), self.out_features());
        if up.shape() != [b, o] {
            return Err(Error::ShapeMismatch(format!("dense upstream {:?}, expected [{b}, {o}]", up.shape())));
        }
        let mut dx = vec![T::zero(); b * i];
        gemm(Mat::row_major(up.data(), b, o), Mat::row_major(self.weight.data(), o, i), T::zero(), &mut dx);
        let mut dw = vec![T::zero(); o * i];
        gemm(Mat::transposed(up.data(), b, o), Mat::row_major(x.data(), b, i), T::zero(), &mut dw);
        let mut db = vec![T::zero(); o];
        for row in up.data().chunks_exact(o) {
            db.iter_mut().zip(row).for_each(|(acc, &g)| *acc = *acc + g);
        }
        Ok(LayerGrads {
            inputs: vec![Tensor::from_vec(x.shape().to_vec(), dx)?],
            params: vec![Tensor::from_vec(vec![o, i], dw)?, Tensor::from_vec(vec![o], db)?],
        })
    }
}
