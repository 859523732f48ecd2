//! Fixtures shared by the benchmarks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vrfam_core::nn::Tensor;
use vrfam_core::synth::{synth_dataset, SynthConfig};
use vrfam_core::trajectory::{Dataset, Modality, Pin};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Uniform `[-1, 1)` tensor.
pub fn random_tensor(shape: &[usize], seed: u64) -> Tensor<f64> {
    let mut r = rng(seed);
    let n = shape.iter().product();
    Tensor::from_vec(shape.to_vec(), (0..n).map(|_| r.gen_range(-1.0..1.0)).collect()).expect("shape matches data")
}

pub fn random_tensor_f32(shape: &[usize], seed: u64) -> Tensor<f32> {
    let mut r = rng(seed);
    let n = shape.iter().product();
    Tensor::from_vec(shape.to_vec(), (0..n).map(|_| r.gen_range(-1.0f32..1.0)).collect()).expect("shape matches data")
}

/// Alternating binary labels.
pub fn labels(n: usize) -> Vec<usize> {
    (0..n).map(|i| i % 2).collect()
}

/// Synthetic cohort, one PIN, both modalities.
pub fn dataset(per_class: usize) -> Dataset {
    synth_dataset(per_class, &[Pin::ALL[0]], &Modality::ALL, 7, &SynthConfig::default()).expect("synthetic dataset")
}
