//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;
use vrfam_core::nn::{Layer, LayerSpec, Mode, Tensor};

pub const FD_STEP: f64 = 1e-5;
/// Denominator floor for element-wise relative error.
pub const REL_FLOOR: f64 = 1e-6;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / (a.abs() + n.abs()).max(REL_FLOOR)
}

pub fn max_rel_err(a: &[f64], n: &[f64]) -> f64 {
    assert_eq!(a.len(), n.len());
    a.iter().zip(n).map(|(&x, &y)| rel_err(x, y)).fold(0.0, f64::max)
}

/// Central-difference gradient of `f` at `x`.
pub fn numeric_grad(x: &mut [f64], mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    (0..x.len())
        .map(|i| {
            let orig = x[i];
            x[i] = orig + FD_STEP;
            let up = f(x);
            x[i] = orig - FD_STEP;
            let down = f(x);
            x[i] = orig;
            (up - down) / (2.0 * FD_STEP)
        })
        .collect()
}

fn dot(a: &Tensor<f64>, r: &[f64]) -> f64 {
    a.data().iter().zip(r).map(|(x, y)| x * y).sum()
}

/// How to draw layer inputs.
#[derive(Clone, Copy)]
pub enum Inputs {
    Uniform,
    /// Values bounded away from zero (for ReLU's kink).
    AwayFromZero,
    /// A random permutation of well separated values (for max pooling ties).
    Distinct,
}

fn draw(n: usize, how: Inputs, rng: &mut ChaCha8Rng) -> Vec<f64> {
    match how {
        Inputs::Uniform => (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        Inputs::AwayFromZero => (0..n)
            .map(|_| {
                let m = rng.gen_range(0.05..1.0);
                if rng.gen_bool(0.5) { m } else { -m }
            })
            .collect(),
        Inputs::Distinct => {
            let mut v: Vec<f64> = (0..n).map(|i| i as f64 * 0.01).collect();
            for i in (1..n).rev() {
                v.swap(i, rng.gen_range(0..=i));
            }
            v
        }
    }
}

/// Largest relative error between the analytic input / parameter gradients of
/// `sum(r * layer(x))` and central differences, for one random instance.
pub fn layer_grad_error(spec: &LayerSpec, shapes: &[Vec<usize>], how: Inputs, mode: Mode, seed: u64) -> f64 {
    let mut rng = rng(seed);
    let mut layer: Layer<f64> = Layer::new(spec, &mut rng);
    // perturb initial parameters away from their structured defaults
    for p in layer.params_mut() {
        for v in p.data_mut() {
            *v += rng.gen_range(-0.5..0.5);
        }
    }
    let mut xs: Vec<Tensor<f64>> = shapes
        .iter()
        .map(|s| Tensor::from_vec(s.clone(), draw(s.iter().product(), how, &mut rng)).unwrap())
        .collect();
    let out = layer.forward(&xs.iter().collect::<Vec<_>>(), mode).unwrap();
    let r: Vec<f64> = (0..out.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let upstream = Tensor::from_vec(out.shape().to_vec(), r.clone()).unwrap();
    let grads = layer.backward(&upstream).unwrap();

    let mut worst: f64 = 0.0;
    for k in 0..xs.len() {
        let shape = xs[k].shape().to_vec();
        let mut data = xs[k].data().to_vec();
        let num = numeric_grad(&mut data, |d| {
            let mut probe = xs.clone();
            probe[k] = Tensor::from_vec(shape.clone(), d.to_vec()).unwrap();
            let y = layer.clone().forward(&probe.iter().collect::<Vec<_>>(), mode).unwrap();
            dot(&y, &r)
        });
        worst = worst.max(max_rel_err(grads.inputs[k].data(), &num));
    }
    let inputs: Vec<&Tensor<f64>> = xs.iter().collect();
    for p in 0..grads.params.len() {
        let shape = layer.params()[p].shape().to_vec();
        let mut data = layer.params()[p].data().to_vec();
        let num = numeric_grad(&mut data, |d| {
            let mut probe = layer.clone();
            *probe.params_mut()[p] = Tensor::from_vec(shape.clone(), d.to_vec()).unwrap();
            dot(&probe.forward(&inputs, mode).unwrap(), &r)
        });
        worst = worst.max(max_rel_err(grads.params[p].data(), &num));
    }
    xs.clear();
    worst
}

/// Smoothed cross-entropy written as plain loops.
pub fn scalar_loss(probs: &[Vec<f64>], labels: &[usize], eps: f64) -> f64 {
    let mut total = 0.0;
    for (row, &y) in probs.iter().zip(labels) {
        let c = row.len();
        let mut s = 0.0;
        for i in 0..c {
            let q = if i == y { 1.0 - eps } else { eps / (c as f64 - 1.0) };
            s += q * row[i].max(1e-12).ln();
        }
        total -= s;
    }
    total / probs.len() as f64
}

pub fn softmax_rows(logits: &[f64], c: usize) -> Vec<Vec<f64>> {
    logits
        .chunks(c)
        .map(|row| {
            let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let e: Vec<f64> = row.iter().map(|v| (v - m).exp()).collect();
            let s: f64 = e.iter().sum();
            e.iter().map(|v| v / s).collect()
        })
        .collect()
}

/// Mann-Whitney AUC over all positive/negative pairs, ties counted 0.5.
pub fn pairwise_auc(scores: &[f64], labels: &[usize]) -> f64 {
    let mut wins = 0.0;
    let mut pairs = 0.0;
    for (i, &si) in scores.iter().enumerate() {
        if labels[i] != 1 {
            continue;
        }
        for (j, &sj) in scores.iter().enumerate() {
            if labels[j] != 0 {
                continue;
            }
            pairs += 1.0;
            if si > sj {
                wins += 1.0;
            } else if si == sj {
                wins += 0.5;
            }
        }
    }
    wins / pairs
}

/// Small widths so full pipelines run in seconds.
pub fn tiny_models() -> vrfam_core::models::ModelSettings {
    use vrfam_core::models::{FcnConfig, InceptionConfig, ModelSettings};
    ModelSettings {
        fcn: FcnConfig { filters: [8, 16, 8], kernels: [8, 5, 3] },
        inception: InceptionConfig { depth: 3, filters: 4, bottleneck: 4, kernels: [10, 5, 3] },
    }
}

/// Synthetic cohort with `per_class` participants per class, both modalities.
pub fn synth(per_class: usize, pins: &[vrfam_core::trajectory::Pin], seed: u64) -> vrfam_core::trajectory::Dataset {
    use vrfam_core::trajectory::Modality;
    vrfam_core::synth::synth_dataset(per_class, pins, &Modality::ALL, seed, &vrfam_core::synth::SynthConfig::default()).unwrap()
}
