use super::{no_cache, LayerGrads, LayerKind, Mode};
use crate::error::{Error, Result};
use crate::nn::tensor::{Real, Tensor};

/// Per-channel batch normalization over `[batch, channels]` or
/// `[batch, channels, length]` inputs.
///
/// Train mode normalizes with the biased batch variance and folds the
/// unbiased variance into the running estimate:
/// `running = (1 - momentum) * running + momentum * batch`.
#[derive(Clone, Debug)]
pub struct BatchNorm1d<T: Real> {
    pub gamma: Tensor<T>,
    pub beta: Tensor<T>,
    pub running_mean: Tensor<T>,
    pub running_var: Tensor<T>,
    pub eps: f64,
    pub momentum: f64,
    pub(crate) cache: Option<BnCache<T>>,
}

#[derive(Clone, Debug)]
pub(crate) struct BnCache<T> {
    xhat: Vec<T>,
    inv_std: Vec<T>,
    shape: Vec<usize>,
    mode: Mode,
}

struct Layout {
    batch: usize,
    channels: usize,
    len: usize,
}

impl Layout {
    fn count(&self) -> usize {
        self.batch * self.len
    }

    /// Calls `f(index)` for every element of channel `c`.
    fn for_channel(&self, c: usize, mut f: impl FnMut(usize)) {
        for b in 0..self.batch {
            let base = (b * self.channels + c) * self.len;
            (base..base + self.len).for_each(&mut f);
        }
    }
}

impl<T: Real> BatchNorm1d<T> {
    pub fn new(channels: usize, eps: f64, momentum: f64) -> Self {
        Self {
            gamma: Tensor::full(&[channels], T::one()),
            beta: Tensor::zeros(&[channels]),
            running_mean: Tensor::zeros(&[channels]),
            running_var: Tensor::full(&[channels], T::one()),
            eps,
            momentum,
            cache: None,
        }
    }

    pub fn channels(&self) -> usize {
        self.gamma.len()
    }

    fn layout(&self, x: &Tensor<T>) -> Result<Layout> {
        let layout = match *x.shape() {
            [batch, channels] => Layout { batch, channels, len: 1 },
            [batch, channels, len] => Layout { batch, channels, len },
            ref s => return Err(Error::ShapeMismatch(format!("batch norm expects rank 2 or 3, got {s:?}"))),
        };
        if layout.channels != self.channels() {
            return Err(Error::ShapeMismatch(format!("batch norm has {} channels, input {:?}", self.channels(), x.shape())));
        }
        Ok(layout)
    }

    /// Normalizes with the given per-channel statistics; returns (y, xhat).
    fn apply(&self, x: &Tensor<T>, l: &Layout, mean: &[T], inv_std: &[T]) -> (Vec<T>, Vec<T>) {
        let mut y = vec![T::zero(); x.len()];
        let mut xhat = vec![T::zero(); x.len()];
        let xs = x.data();
        for c in 0..l.channels {
            let (g, bt) = (self.gamma.data()[c], self.beta.data()[c]);
            l.for_channel(c, |i| {
                let h = (xs[i] - mean[c]) * inv_std[c];
                xhat[i] = h;
                y[i] = g * h + bt;
            });
        }
        (y, xhat)
    }

    fn batch_stats(x: &Tensor<T>, l: &Layout) -> (Vec<T>, Vec<T>) {
        let n = T::from_usize(l.count()).expect("count");
        let xs = x.data();
        let mut mean = vec![T::zero(); l.channels];
        let mut var = vec![T::zero(); l.channels];
        for c in 0..l.channels {
            let mut s = T::zero();
            l.for_channel(c, |i| s = s + xs[i]);
            let m = s / n;
            let mut ss = T::zero();
            l.for_channel(c, |i| ss = ss + (xs[i] - m) * (xs[i] - m));
            mean[c] = m;
            var[c] = ss / n;
        }
        (mean, var)
    }

    fn inv_std(&self, var: &[T]) -> Vec<T> {
        let eps = T::from_f64_lossy(self.eps);
        var.iter().map(|&v| T::one() / (v + eps).sqrt()).collect()
    }

    pub(crate) fn infer(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let l = self.layout(x)?;
        let inv = self.inv_std(self.running_var.data());
        let (y, _) = self.apply(x, &l, self.running_mean.data(), &inv);
        Tensor::from_vec(x.shape().to_vec(), y)
    }

    pub(crate) fn forward(&mut self, x: &Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
        let l = self.layout(x)?;
        let (mean, inv_std) = match mode {
            Mode::Eval => (self.running_mean.data().to_vec(), self.inv_std(self.running_var.data())),
            Mode::Train => {
                let (mean, var) = Self::batch_stats(x, &l);
                let n = l.count();
                let mom = T::from_f64_lossy(self.momentum);
                let unbias = if n > 1 { T::from_f64_lossy(n as f64 / (n - 1) as f64) } else { T::one() };
                for c in 0..l.channels {
                    let rm = &mut self.running_mean.data_mut()[c];
                    *rm = (T::one() - mom) * *rm + mom * mean[c];
                    let rv = &mut self.running_var.data_mut()[c];
                    *rv = (T::one() - mom) * *rv + mom * var[c] * unbias;
                }
                let inv = self.inv_std(&var);
                (mean, inv)
            }
        };
        let (y, xhat) = self.apply(x, &l, &mean, &inv_std);
        self.cache = Some(BnCache { xhat, inv_std, shape: x.shape().to_vec(), mode });
        Tensor::from_vec(x.shape().to_vec(), y)
    }

    pub(crate) fn backward(&mut self, up: &Tensor<T>) -> Result<LayerGrads<T>> {
        let cache = self.cache.as_ref().ok_or_else(|| no_cache(LayerKind::BatchNorm1d))?;
        if up.shape() != cache.shape.as_slice() {
            return Err(Error::ShapeMismatch(format!("batch norm upstream {:?}, expected {:?}", up.shape(), cache.shape)));
        }
        let l = self.layout(up)?;
        let n = T::from_usize(l.count()).expect("count");
        let g = up.data();
        let mut dx = vec![T::zero(); up.len()];
        let mut dgamma = vec![T::zero(); l.channels];
        let mut dbeta = vec![T::zero(); l.channels];
        for c in 0..l.channels {
            let (mut sg, mut sgx) = (T::zero(), T::zero());
            l.for_channel(c, |i| {
                sg = sg + g[i];
                sgx = sgx + g[i] * cache.xhat[i];
            });
            dgamma[c] = sgx;
            dbeta[c] = sg;
            let scale = self.gamma.data()[c] * cache.inv_std[c];
            match cache.mode {
                Mode::Train => {
                    let k = scale / n;
                    l.for_channel(c, |i| dx[i] = k * (n * g[i] - sg - cache.xhat[i] * sgx));
                }
                Mode::Eval => l.for_channel(c, |i| dx[i] = scale * g[i]),
            }
        }
        Ok(LayerGrads {
            inputs: vec![Tensor::from_vec(cache.shape.clone(), dx)?],
            params: vec![Tensor::from_vec(vec![l.channels], dgamma)?, Tensor::from_vec(vec![l.channels], dbeta)?],
        })
    }
}
