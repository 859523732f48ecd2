use rand::Rng;

use super::{he_uniform, no_cache, seq_dims, LayerGrads, LayerKind};
use crate::error::{Error, Result};
use crate::nn::tensor::{gemm, Mat, Real, Tensor};

/// 1D convolution, stride 1, "same" padding, computed as im2col + GEMM.
#[derive(Clone, Debug)]
pub struct Conv1d<T: Real> {
    /// `[out_channels, in_channels, kernel]`
    pub weight: Tensor<T>,
    /// `[out_channels]`
    pub bias: Option<Tensor<T>>,
    pub(crate) cache: Option<ConvCache<T>>,
}

#[derive(Clone, Debug)]
pub(crate) struct ConvCache<T> {
    // the input, not the im2col buffer, which is `kernel` times larger
    x: Vec<T>,
    batch: usize,
    len: usize,
}

impl<T: Real> Conv1d<T> {
    pub fn new<R: Rng + ?Sized>(in_channels: usize, out_channels: usize, kernel: usize, bias: bool, rng: &mut R) -> Self {
        Self {
            weight: he_uniform(&[out_channels, in_channels, kernel], in_channels * kernel, rng),
            bias: bias.then(|| Tensor::zeros(&[out_channels])),
            cache: None,
        }
    }

    pub fn from_params(weight: Tensor<T>, bias: Option<Tensor<T>>) -> Result<Self> {
        if weight.shape().len() != 3 || bias.as_ref().is_some_and(|b| b.shape() != [weight.shape()[0]]) {
            return Err(Error::ShapeMismatch(format!("conv weight {:?}", weight.shape())));
        }
        Ok(Self { weight, bias, cache: None })
    }

    pub fn out_channels(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn in_channels(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn kernel(&self) -> usize {
        self.weight.shape()[2]
    }

    /// Zeros padded on the left; the right gets `kernel - 1 - pad_left`.
    pub fn pad_left(&self) -> usize {
        (self.kernel() - 1) / 2
    }

    /// `col[(ci * K + k), b * L + t] = x[b, ci, t + k - pad_left]` (zero outside).
    fn im2col(&self, x: &[T], batch: usize, len: usize) -> Vec<T> {
        let (cin, k, pl) = (self.in_channels(), self.kernel(), self.pad_left());
        let bl = batch * len;
        let mut col = vec![T::zero(); cin * k * bl];
        for ci in 0..cin {
            for kk in 0..k {
                let row = &mut col[(ci * k + kk) * bl..(ci * k + kk + 1) * bl];
                // valid t: 0 <= t + kk - pl < len
                let t0 = pl.saturating_sub(kk);
                let t1 = (len + pl).saturating_sub(kk).min(len);
                if t0 >= t1 {
                    continue;
                }
                for b in 0..batch {
                    let src = &x[(b * cin + ci) * len..(b * cin + ci + 1) * len];
                    let s0 = t0 + kk - pl;
                    row[b * len + t0..b * len + t1].copy_from_slice(&src[s0..s0 + (t1 - t0)]);
                }
            }
        }
        col
    }

    fn col2im(&self, dcol: &[T], batch: usize, len: usize) -> Vec<T> {
        let (cin, k, pl) = (self.in_channels(), self.kernel(), self.pad_left());
        let bl = batch * len;
        let mut dx = vec![T::zero(); batch * cin * len];
        for ci in 0..cin {
            for kk in 0..k {
                let row = &dcol[(ci * k + kk) * bl..(ci * k + kk + 1) * bl];
                let t0 = pl.saturating_sub(kk);
                let t1 = (len + pl).saturating_sub(kk).min(len);
                if t0 >= t1 {
                    continue;
                }
                for b in 0..batch {
                    let dst = &mut dx[(b * cin + ci) * len..(b * cin + ci + 1) * len];
                    let s0 = t0 + kk - pl;
                    for (d, &g) in dst[s0..s0 + (t1 - t0)].iter_mut().zip(&row[b * len + t0..b * len + t1]) {
                        *d = *d + g;
                    }
                }
            }
        }
        dx
    }

    pub(crate) fn compute(&self, x: &Tensor<T>) -> Result<(Tensor<T>, ConvCache<T>)> {
        let (batch, cin, len) = seq_dims(x, LayerKind::Conv1d)?;
        if cin != self.in_channels() {
            return Err(Error::ShapeMismatch(format!("conv expects {} channels, got {cin}", self.in_channels())));
        }
        let (cout, ck, bl) = (self.out_channels(), cin * self.kernel(), batch * len);
        let col = self.im2col(x.data(), batch, len);
        let mut prod = vec![T::zero(); cout * bl];
        gemm(Mat::row_major(self.weight.data(), cout, ck), Mat::row_major(&col, ck, bl), T::zero(), &mut prod);

        let mut out = vec![T::zero(); batch * cout * len];
        for co in 0..cout {
            let bias = self.bias.as_ref().map_or(T::zero(), |b| b.data()[co]);
            for b in 0..batch {
                let src = &prod[co * bl + b * len..co * bl + (b + 1) * len];
                let dst = &mut out[(b * cout + co) * len..(b * cout + co + 1) * len];
                dst.iter_mut().zip(src).for_each(|(d, &s)| *d = s + bias);
            }
        }
        Ok((Tensor::from_vec(vec![batch, cout, len], out)?, ConvCache { x: x.data().to_vec(), batch, len }))
    }

    pub(crate) fn forward(&mut self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let (y, cache) = self.compute(x)?;
        self.cache = Some(cache);
        Ok(y)
    }

    pub(crate) fn backward(&mut self, up: &Tensor<T>) -> Result<LayerGrads<T>> {
        let cache = self.cache.as_ref().ok_or_else(|| no_cache(LayerKind::Conv1d))?;
        let (batch, len) = (cache.batch, cache.len);
        let (cout, cin, k) = (self.out_channels(), self.in_channels(), self.kernel());
        if up.shape() != [batch, cout, len] {
            return Err(Error::ShapeMismatch(format!("conv upstream {:?}, expected [{batch}, {cout}, {len}]", up.shape())));
        }
        let (ck, bl) = (cin * k, batch * len);

        // upstream as [cout, batch * len]
        let mut g = vec![T::zero(); cout * bl];
        for b in 0..batch {
            for co in 0..cout {
                g[co * bl + b * len..co * bl + (b + 1) * len].copy_from_slice(&up.data()[(b * cout + co) * len..(b * cout + co + 1) * len]);
            }
        }

        let col = self.im2col(&cache.x, batch, len);
        let mut dw = vec![T::zero(); cout * ck];
        gemm(Mat::row_major(&g, cout, bl), Mat::transposed(&col, ck, bl), T::zero(), &mut dw);
        let mut dcol = vec![T::zero(); ck * bl];
        gemm(Mat::transposed(self.weight.data(), cout, ck), Mat::row_major(&g, cout, bl), T::zero(), &mut dcol);
        let dx = self.col2im(&dcol, batch, len);

        let mut params = vec![Tensor::from_vec(vec![cout, cin, k], dw)?];
        if self.bias.is_some() {
            let db = g.chunks_exact(bl).map(|row| row.iter().copied().sum()).collect();
            params.push(Tensor::from_vec(vec![cout], db)?);
        }
        Ok(LayerGrads { inputs: vec![Tensor::from_vec(vec![batch, cin, len], dx)?], params })
    }
}
