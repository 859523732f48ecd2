use criterion::{criterion_group, criterion_main, Criterion};
use vrfam_bench::dataset;
use vrfam_core::experiments::{cell_data, ScenarioConfig};
use vrfam_core::synth::{synth_trial, MotionProfile, SynthConfig};
use vrfam_core::trajectory::{Familiarity, Pin};
use vrfam_core::windowing::extract_windows;

fn synth(c: &mut Criterion) {
    let layout = SynthConfig::default().layout();
    let profile = MotionProfile::novice();
    c.bench_function("synth/trial", |b| b.iter(|| synth_trial(Pin::ALL[3], &profile, &layout, 11)));
    c.bench_function("synth/dataset_3x1pin", |b| b.iter(|| dataset(3)));
}

fn windows(c: &mut Criterion) {
    let ds = dataset(3);
    let trial = &ds.trials[0];
    c.bench_function("windowing/extract_L60_stride1", |b| b.iter(|| extract_windows(trial, Familiarity::Novice, 60, 1).unwrap()));
    let cfg = ScenarioConfig { stride: 1, ..ScenarioConfig::default() };
    let mut g = c.benchmark_group("windowing");
    g.sample_size(10);
    g.bench_function("scenario_hand_L60", |b| b.iter(|| cell_data(&ds, &cfg).unwrap()));
    g.finish();
}

criterion_group!(benches, synth, windows);
criterion_main!(benches);
