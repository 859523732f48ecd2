use super::{no_cache, seq_dims, LayerGrads, LayerKind};
use crate::error::{Error, Result};
use crate::nn::tensor::{Real, Tensor};

/// Max pooling, stride 1, "same" padding (padded positions never win).
#[derive(Clone, Debug)]
pub struct MaxPool1d {
    pub kernel: usize,
    pub(crate) cache: Option<PoolCache>,
}

#[derive(Clone, Debug)]
pub(crate) struct PoolCache {
    argmax: Vec<usize>,
    shape: Vec<usize>,
}

impl MaxPool1d {
    pub fn new(kernel: usize) -> Self {
        Self { kernel: kernel.max(1), cache: None }
    }

    pub(crate) fn compute<T: Real>(&self, x: &Tensor<T>) -> Result<(Tensor<T>, PoolCache)> {
        let (b, c, len) = seq_dims(x, LayerKind::MaxPool1d)?;
        let pl = (self.kernel - 1) / 2;
        let xs = x.data();
        let mut out = vec![T::zero(); xs.len()];
        let mut argmax = vec![0usize; xs.len()];
        for row in 0..b * c {
            let base = row * len;
            for t in 0..len {
                let lo = t.saturating_sub(pl);
                let hi = (t + self.kernel - pl).min(len);
                let mut best = base + lo;
                for i in base + lo + 1..base + hi {
                    if xs[i] > xs[best] {
                        best = i;
                    }
                }
                out[base + t] = xs[best];
                argmax[base + t] = best;
            }
        }
        Ok((Tensor::from_vec(x.shape().to_vec(), out)?, PoolCache { argmax, shape: x.shape().to_vec() }))
    }

    pub(crate) fn forward<T: Real>(&mut self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let (y, cache) = self.compute(x)?;
        self.cache = Some(cache);
        Ok(y)
    }

    pub(crate) fn backward<T: Real>(&mut self, up: &Tensor<T>) -> Result<LayerGrads<T>> {
        let cache = self.cache.as_ref().ok_or_else(|| no_cache(LayerKind::MaxPool1d))?;
        if up.shape() != cache.shape.as_slice() {
            return Err(Error::ShapeMismatch(format!("max pool upstream {:?} vs {:?}", up.shape(), cache.shape)));
        }
        let mut dx = vec![T::zero(); up.len()];
        for (&src, &g) in cache.argmax.iter().zip(up.data()) {
            dx[src] = dx[src] + g;
        }
        Ok(LayerGrads { inputs: vec![Tensor::from_vec(cache.shape.clone(), dx)?], params: vec![] })
    }
}

/// Mean over the length axis: `[batch, channels, length] -> [batch, channels]`.
#[derive(Clone, Debug, Default)]
pub struct GlobalAvgPool1d {
    pub(crate) cache: Option<Vec<usize>>,
}

impl GlobalAvgPool1d {
    pub(crate) fn compute<T: Real>(x: &Tensor<T>) -> Result<Tensor<T>> {
        let (b, c, len) = seq_dims(x, LayerKind::GlobalAvgPool1d)?;
        let n = T::from_usize(len).expect("length");
        let out = x.data().chunks_exact(len).map(|row| row.iter().copied().sum::<T>() / n).collect();
        Tensor::from_vec(vec![b, c], out)
    }

    pub(crate) fn forward<T: Real>(&mut self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let y = Self::compute(x)?;
        self.cache = Some(x.shape().to_vec());
        Ok(y)
    }

    pub(crate) fn backward<T: Real>(&mut self, up: &Tensor<T>) -> Result<LayerGrads<T>> {
        let shape = self.cache.as_ref().ok_or_else(|| no_cache(LayerKind::GlobalAvgPool1d))?;
        let (b, c, len) = (shape[0], shape[1], shape[2]);
        if up.shape() != [b, c] {
            return Err(Error::ShapeMismatch(format!("pool upstream {:?}, expected [{b}, {c}]", up.shape())));
        }
        let n = T::from_usize(len).expect("length");
        let dx = up.data().iter().flat_map(|&g| std::iter::repeat_n(g / n, len)).collect();
        Ok(LayerGrads { inputs: vec![Tensor::from_vec(shape.clone(), dx)?], params: vec![] })
    }
}
