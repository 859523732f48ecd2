//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs as a plain binary (`harness = false`) so the lines always print, in
//! order; any FAIL makes the process exit non-zero.

mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::{Duration, Instant};

use common::{layer_grad_error, max_rel_err, numeric_grad, pairwise_auc, scalar_loss, softmax_rows, synth, tiny_models, Inputs};
use rand::Rng;
use vrfam_core::experiments::grid::{grid_keys, write_results_csv};
use vrfam_core::experiments::report::write_report;
use vrfam_core::experiments::*;
use vrfam_core::models::{build_fcn, build_mlp, build_model, FcnConfig, ModelKind, ModelSettings};
use vrfam_core::nn::{label_smoothed_ce, label_smoothed_ce_with_grad, Graph, LayerSpec, LossConfig, Mode, Precision, Tensor};
use vrfam_core::trajectory::{Dataset, Familiarity, FrameSample, Modality, Pin, Trial, IDENTITY_QUAT};
use vrfam_core::windowing::{build_scenario, extract_windows, split_participants, window_count, Scenario, GRID_WINDOW_LENGTHS};

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn full_dataset() -> Dataset {
    synth(13, &Pin::ALL, 7)
}

// 1. analytic vs central-difference gradients, every layer kind
fn gradients() -> Outcome {
    let t = Instant::now();
    const TOL: f64 = 1e-4;
    let cases: Vec<(&str, LayerSpec, Vec<Vec<usize>>, Inputs, Mode)> = vec![
        ("Dense", LayerSpec::Dense { in_features: 7, out_features: 4 }, vec![vec![5, 7]], Inputs::Uniform, Mode::Train),
        ("Conv1D", LayerSpec::Conv1d { in_channels: 3, out_channels: 4, kernel: 5, bias: true }, vec![vec![2, 3, 11]], Inputs::Uniform, Mode::Train),
        ("BatchNorm1D", LayerSpec::batch_norm(3), vec![vec![8, 3, 5]], Inputs::Uniform, Mode::Train),
        ("ReLU", LayerSpec::Relu, vec![vec![3, 2, 7]], Inputs::AwayFromZero, Mode::Train),
        ("MaxPool1D", LayerSpec::MaxPool1d { kernel: 3 }, vec![vec![2, 3, 9]], Inputs::Distinct, Mode::Train),
        ("GlobalAvgPool1D", LayerSpec::GlobalAvgPool1d, vec![vec![3, 4, 7]], Inputs::Uniform, Mode::Train),
    ];
    let mut worst = BTreeMap::new();
    for (name, spec, shapes, how, mode) in &cases {
        for seed in 0..10 {
            let e = layer_grad_error(spec, shapes, *how, *mode, seed);
            let w = worst.entry(*name).or_insert(0.0f64);
            *w = w.max(e);
        }
    }
    for seed in 0..10u64 {
        let mut rng = common::rng(1000 + seed);
        let b = rng.gen_range(1..9);
        let eps = [0.0, 0.05, 0.1, 0.3][seed as usize % 4];
        let cfg = LossConfig::new(eps, 2).unwrap();
        let mut logits: Vec<f64> = (0..b * 2).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let labels: Vec<usize> = (0..b).map(|_| rng.gen_range(0..2)).collect();
        let probs = Tensor::from_vec(vec![b, 2], softmax_rows(&logits, 2).concat()).unwrap();
        let (_, analytic) = label_smoothed_ce_with_grad(&probs, &labels, &cfg).unwrap();
        let num = numeric_grad(&mut logits, |z| scalar_loss(&softmax_rows(z, 2), &labels, eps));
        let w = worst.entry("Softmax+CE").or_insert(0.0f64);
        *w = w.max(max_rel_err(analytic.data(), &num));
    }
    let elapsed = t.elapsed();
    let max = worst.values().cloned().fold(0.0, f64::max);
    let detail = worst.iter().map(|(k, v)| format!("{k} {v:.1e}")).collect::<Vec<_>>().join(", ");
    ensure(max < TOL, || format!("max rel err {max:.2e} >= {TOL:e} ({detail})"))?;
    ensure(elapsed < Duration::from_secs(120), || format!("took {elapsed:?}"))?;
    Ok(format!("7 kinds x 10 seeds, max rel err {max:.2e} < 1e-4 in {:.1}s ({detail})", elapsed.as_secs_f64()))
}

// 2. label-smoothed CE against a scalar-loop oracle
fn loss_oracle() -> Outcome {
    let mut rng = common::rng(2);
    let mut worst: f64 = 0.0;
    for case in 0..100 {
        let b = rng.gen_range(1..=32);
        let eps = [0.0, 0.05, 0.1, 0.3][case % 4];
        let logits: Vec<f64> = (0..b * 2).map(|_| rng.gen_range(-6.0..6.0)).collect();
        let labels: Vec<usize> = (0..b).map(|_| rng.gen_range(0..2)).collect();
        let rows = softmax_rows(&logits, 2);
        let probs = Tensor::from_vec(vec![b, 2], rows.concat()).unwrap();
        let got = label_smoothed_ce(&probs, &labels, &LossConfig::new(eps, 2).unwrap()).map_err(|e| e.to_string())?;
        worst = worst.max((got - scalar_loss(&rows, &labels, eps)).abs());
    }
    ensure(worst < 1e-10, || format!("max abs diff {worst:e}"))?;
    let hand = label_smoothed_ce(&Tensor::from_vec(vec![1, 2], vec![0.2, 0.8]).unwrap(), &[1], &LossConfig::default()).unwrap();
    let oracle = -(0.1 * 0.2f64.ln() + 0.9 * 0.8f64.ln());
    ensure((hand - oracle).abs() < 1e-10, || format!("hand case {hand} vs oracle {oracle}"))?;
    Ok(format!("100 cases, max abs diff {worst:.1e} < 1e-10; hand case p=(0.2,0.8), y=1, eps=0.1 gives {hand:.6} = oracle"))
}

fn loss_hand_value_note() -> String {
    let uniform = -(0.05 * 0.2f64.ln() + 0.95 * 0.8f64.ln());
    format!(
        "listed hand value 0.292464 is not reproduced: smoothing targets (1-eps, eps/(C-1)) = (0.9, 0.1) give 0.361773; \
         the listed value is within 6e-6 of the (0.95, 0.05) mixture, {uniform:.6}"
    )
}

fn random_trial(frames: usize, rng: &mut impl Rng) -> Trial {
    Trial {
        participant_id: "P001".into(),
        session: 1,
        modality: Modality::HandTracking,
        pin: Pin::ALL[0],
        trial_index: 0,
        frames: (0..frames)
            .map(|i| FrameSample { t: i as f64 / 72.0, pos: [rng.gen(), rng.gen(), rng.gen()], orient: IDENTITY_QUAT })
            .collect(),
    }
}

// 3. window counts and byte-exact slices
fn windowing() -> Outcome {
    let mut rng = common::rng(3);
    let mut total = 0usize;
    for _ in 0..1000 {
        let (t, l, s) = (rng.gen_range(0..400usize), rng.gen_range(2..150usize), rng.gen_range(1..60usize));
        let expected = if t >= l { (t - l) / s + 1 } else { 0 };
        ensure(window_count(t, l, s) == expected, || format!("window_count({t}, {l}, {s}) != {expected}"))?;
        if t == 0 {
            continue;
        }
        let trial = random_trial(t, &mut rng);
        let ex = extract_windows(&trial, Familiarity::Novice, l, s).map_err(|e| e.to_string())?;
        ensure(ex.windows.len() == expected, || format!("T={t} L={l} stride={s}: {} windows, expected {expected}", ex.windows.len()))?;
        for (i, w) in ex.windows.iter().enumerate() {
            let start = i * s;
            ensure(w.origin.start_frame == start, || format!("window {i} starts at {}", w.origin.start_frame))?;
            for c in 0..3 {
                let src: Vec<u64> = trial.frames[start..start + l].iter().map(|f| f.pos[c].to_bits()).collect();
                let got: Vec<u64> = w.channel(c).iter().map(|v| v.to_bits()).collect();
                ensure(src == got, || format!("T={t} L={l} stride={s}: window {i} channel {c} differs from its source"))?;
            }
        }
        total += expected;
    }
    Ok(format!("1000 random (T, L, stride) triples, {total} windows byte-equal to their source slices"))
}

// 4. participant-disjoint splits with 10+10 / 3+3 counts
fn split_hygiene(ds: &Dataset) -> Outcome {
    let cfg = ScenarioConfig { seed: 7, ..ScenarioConfig::default() };
    let split = split_participants(&ds.participants, 0.8, cfg.split_seed()).map_err(|e| e.to_string())?;
    let labels = ds.labels();
    let count = |ids: &BTreeSet<String>, f: Familiarity| ids.iter().filter(|id| labels[id.as_str()] == f).count();
    let counts = [
        count(&split.train_ids, Familiarity::Novice),
        count(&split.train_ids, Familiarity::Experienced),
        count(&split.test_ids, Familiarity::Novice),
        count(&split.test_ids, Familiarity::Experienced),
    ];
    ensure(counts == [10, 10, 3, 3], || format!("split counts {counts:?}"))?;
    let mut cells = 0;
    for scenario in Scenario::ALL {
        for pin in Pin::ALL {
            let data = build_scenario(ds, scenario, pin, 60, &split, cfg.scenario_options()).map_err(|e| e.to_string())?;
            let ids = |w: &[vrfam_core::windowing::LabeledWindow]| w.iter().map(|w| w.origin.trial.participant_id.clone()).collect::<BTreeSet<_>>();
            let (tr, te) = (ids(&data.train), ids(&data.test));
            ensure(tr.is_disjoint(&te), || format!("{scenario} {pin}: shared participants {:?}", tr.intersection(&te).collect::<Vec<_>>()))?;
            cells += 1;
        }
    }
    Ok(format!("split 10+10 / 3+3; train and test participants disjoint in {cells} scenario x PIN cells"))
}

fn sweep_config() -> ScenarioConfig {
    ScenarioConfig { stride: 1000, epochs: 1, batch_size: 32, models: tiny_models(), seed: 7, ..ScenarioConfig::default() }
}

fn csv_text(rows: &[GridRow]) -> String {
    let mut buf = Vec::new();
    write_results_csv(rows, &mut buf).unwrap();
    String::from_utf8(buf).unwrap()
}

// 5. 384 cells; permuted schedule gives an identical results CSV
fn grid_determinism(ds: &Dataset, rows: &mut Vec<GridRow>) -> Outcome {
    let axes = GridAxes::full();
    let keys = grid_keys(&axes, 7, 1);
    ensure(keys.len() == 384 && axes.cell_count() == 384, || format!("{} cells", keys.len()))?;
    let t = Instant::now();
    let first = run_grid(ds, &axes, &sweep_config(), &GridOptions { workers: 1, repeats: 1, schedule_seed: None }).map_err(|e| e.to_string())?;
    let second = run_grid(ds, &axes, &sweep_config(), &GridOptions { workers: 2, repeats: 1, schedule_seed: Some(12345) }).map_err(|e| e.to_string())?;
    ensure(first.len() == 384, || format!("{} result rows", first.len()))?;
    let failed = first.iter().filter(|r| r.result.is_none()).count();
    ensure(failed == 0, || format!("{failed} cells failed"))?;
    ensure(csv_text(&first) == csv_text(&second), || "results CSV differs under a permuted schedule".into())?;
    *rows = first;
    Ok(format!("384 cells; permuted schedule on 2 workers gives a byte-identical CSV ({:.1}s for both sweeps)", t.elapsed().as_secs_f64()))
}

/// Budget for the separability runs. The convolutional models train on every
/// 40th window to fit a single-core budget; all models are scored on every
/// 5th test window.
fn separability_config(model: ModelKind, label_shuffle: bool) -> ScenarioConfig {
    let (stride, epochs) = match model {
        ModelKind::Mlp => (5, 50),
        ModelKind::Fcn | ModelKind::Inception => (40, 10),
    };
    ScenarioConfig {
        scenario: Scenario::HandTracking,
        pin: Pin::ALL[0],
        model,
        window_len: 60,
        stride,
        test_stride: Some(5),
        epochs,
        seed: 7,
        precision: Precision::F32,
        label_shuffle,
        ..ScenarioConfig::default()
    }
}

// 6. synthetic end-to-end separability and the shuffled-label control
fn separability(ds: &Dataset) -> Outcome {
    let t = Instant::now();
    let mut lines = Vec::new();
    let mut failures = Vec::new();
    for model in ModelKind::ALL {
        for shuffle in [false, true] {
            let cfg = separability_config(model, shuffle);
            let r = run_cell(ds, &cfg).map_err(|e| format!("{model}: {e}"))?;
            let (acc, auc) = (r.window_accuracy, r.auc);
            let ok = if shuffle {
                (0.43..=0.57).contains(&acc) && (0.43..=0.57).contains(&auc)
            } else {
                acc >= 0.90 && auc >= 0.95
            };
            let tag = format!("{}{} acc {acc:.4} auc {auc:.4}", model.display_name(), if shuffle { " shuffled" } else { "" });
            if !ok {
                failures.push(tag.clone());
            }
            lines.push(tag);
        }
    }
    let elapsed = t.elapsed();
    if elapsed > Duration::from_secs(15 * 60) {
        failures.push(format!("runtime {elapsed:?}"));
    }
    let summary = format!("{} ({:.0}s)", lines.join("; "), elapsed.as_secs_f64());
    if failures.is_empty() {
        Ok(summary)
    } else {
        Err(format!("{}: {summary}", failures.join(", ")))
    }
}

// 7. threshold-sweep AUC against the pairwise statistic
fn auc_oracle() -> Outcome {
    let mut rng = common::rng(7);
    let mut worst: f64 = 0.0;
    for i in 0..200 {
        let n = rng.gen_range(2..=200);
        let mut labels: Vec<usize> = (0..n).map(|_| rng.gen_range(0..2)).collect();
        labels[0] = 0;
        labels[1] = 1;
        // every other instance is coarsely quantized to force ties
        let scores: Vec<f64> = (0..n)
            .map(|_| {
                let s: f64 = rng.gen();
                if i % 2 == 0 { s } else { (s * 8.0).floor() / 8.0 }
            })
            .collect();
        let (_, auc) = roc_auc(&scores, &labels).map_err(|e| e.to_string())?;
        worst = worst.max((auc - pairwise_auc(&scores, &labels)).abs());
    }
    ensure(worst <= 1e-12, || format!("max abs diff {worst:e}"))?;
    let fixed = [
        (vec![0.9, 0.8, 0.3, 0.1], vec![1, 1, 0, 0], 1.0),
        (vec![0.5; 6], vec![1, 0, 1, 0, 1, 0], 0.5),
        (vec![0.9, 0.4, 0.6, 0.2], vec![1, 0, 1, 0], 1.0),
        (vec![0.9, 0.6, 0.4, 0.2], vec![1, 0, 1, 0], 0.75),
    ];
    for (s, l, want) in &fixed {
        let (_, auc) = roc_auc(s, l).map_err(|e| e.to_string())?;
        ensure(auc == *want && pairwise_auc(s, l) == *want, || format!("{s:?}/{l:?}: auc {auc}, expected {want}"))?;
    }
    Ok(format!("200 random instances, max abs diff {worst:.1e} <= 1e-12; fixed cases 1.0, 0.5, 1.0, 0.75"))
}

// 8. layer shapes and bit-exact checkpoint round trips
fn architecture(ds: &Dataset) -> Outcome {
    for &l in &GRID_WINDOW_LENGTHS {
        let h = 3 * l / 2;
        let dense: Vec<(usize, usize)> = build_mlp(l)
            .map_err(|e| e.to_string())?
            .nodes
            .iter()
            .filter_map(|n| match n.layer {
                LayerSpec::Dense { in_features, out_features } => Some((in_features, out_features)),
                _ => None,
            })
            .collect();
        ensure(dense == [(3 * l, h), (h, h), (h, 2)], || format!("MLP L={l}: dense layers {dense:?}"))?;

        let fcn = build_fcn(l, &FcnConfig::default()).map_err(|e| e.to_string())?;
        let shapes = fcn.shapes().map_err(|e| e.to_string())?;
        let convs: Vec<(usize, usize, usize, Vec<usize>)> = fcn
            .nodes
            .iter()
            .enumerate()
            .filter_map(|(i, n)| match n.layer {
                LayerSpec::Conv1d { in_channels, out_channels, kernel, .. } => Some((in_channels, out_channels, kernel, shapes[i + 1].clone())),
                _ => None,
            })
            .collect();
        let expected = vec![(3, 128, 8, vec![128, l]), (128, 256, 5, vec![256, l]), (256, 128, 3, vec![128, l])];
        ensure(convs == expected, || format!("FCN L={l}: convolutions {convs:?}"))?;
    }

    // full-size graphs: inference outputs survive serialization bit for bit
    let mut rng = common::rng(8);
    for model in ModelKind::ALL {
        let spec = build_model(model, 60, &ModelSettings::default()).map_err(|e| e.to_string())?;
        let mut g: Graph<f64> = spec.build(&mut rng).map_err(|e| e.to_string())?;
        let x = Tensor::from_vec(vec![8, 3, 60], (0..8 * 180).map(|_| rng.gen_range(-2.0..2.0)).collect()).unwrap();
        // one update so batch-norm running statistics move off their defaults
        let mut opt = g.new_optimizer(Default::default());
        g.train_step(&x, &[0, 1, 0, 1, 1, 0, 0, 1], &LossConfig::default(), &mut opt).map_err(|e| e.to_string())?;
        let bytes = vrfam_core::nn::checkpoint::to_bytes(&g, &serde_json::Value::Null).map_err(|e| e.to_string())?;
        let (back, _): (Graph<f64>, _) = vrfam_core::nn::checkpoint::from_bytes(&bytes).map_err(|e| e.to_string())?;
        let (a, b) = (g.infer(&x).unwrap(), back.infer(&x).unwrap());
        let same = a.data().iter().zip(b.data()).all(|(p, q)| p.to_bits() == q.to_bits());
        ensure(same, || format!("{model}: outputs differ after checkpoint round trip"))?;
    }

    // trained cells: the full evaluation result is reproduced from the checkpoint
    for model in ModelKind::ALL {
        let cfg = ScenarioConfig { model, stride: 30, epochs: 2, models: tiny_models(), seed: 8, ..ScenarioConfig::default() };
        let cell = train_cell(ds, &cfg).map_err(|e| e.to_string())?;
        let bytes = cell.model.to_bytes(&cell.checkpoint_meta(&cfg)).map_err(|e| e.to_string())?;
        let (_, again) = evaluate_checkpoint(ds, &bytes, None).map_err(|e| e.to_string())?;
        ensure(again == cell.result, || format!("{model}: evaluation from checkpoint differs"))?;
    }
    Ok("MLP widths 3L > 3L/2 > 3L/2 > 2 and FCN {128, 256, 128} / {8, 5, 3} for all 8 lengths; checkpoint round trips bit-exact".into())
}

// 9. report layout and best-of-row markers
fn report_fidelity(rows: &[GridRow], dir: &Path) -> Outcome {
    ensure(rows.len() == 384, || "no sweep results (criterion 5 failed)".into())?;
    write_report(rows, dir, &ReportOptions::default()).map_err(|e| e.to_string())?;

    // independent recomputation from the results CSV
    let mut acc: BTreeMap<(String, String, String), Vec<(usize, f64)>> = BTreeMap::new();
    for line in csv_text(rows).lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        acc.entry((f[0].into(), f[1].into(), f[2].into())).or_default().push((f[3].parse().unwrap(), f[5].parse().unwrap()));
    }
    let mut matrices = 0;
    for scenario in Scenario::ALL {
        let text = std::fs::read_to_string(dir.join(format!("accuracy_{scenario}.csv"))).map_err(|e| e.to_string())?;
        let mut lines = text.lines();
        let header: Vec<&str> = lines.next().unwrap_or_default().split(',').collect();
        let windows: Vec<String> = GRID_WINDOW_LENGTHS.iter().map(|w| w.to_string()).collect();
        ensure(header.len() == 10 && header[1..9] == windows[..], || format!("{scenario}: header {header:?}"))?;
        let body: Vec<&str> = lines.collect();
        ensure(body.len() == 12, || format!("{scenario}: {} rows", body.len()))?;
        let markdown = std::fs::read_to_string(dir.join(format!("accuracy_{scenario}.md"))).map_err(|e| e.to_string())?;
        let md_rows: Vec<&str> = markdown.lines().filter(|l| l.starts_with("| ") && !l.starts_with("| WS")).collect();
        ensure(md_rows.len() == 12, || format!("{scenario}: {} markdown rows", md_rows.len()))?;
        for (line, md) in body.iter().zip(&md_rows) {
            let f: Vec<&str> = line.split(',').collect();
            let (label, pin) = f[0].rsplit_once(' ').unwrap();
            let model: ModelKind = label.parse().map_err(|e: vrfam_core::Error| e.to_string())?;
            let mut cells = acc[&(scenario.to_string(), pin.to_string(), model.to_string())].clone();
            cells.sort_by_key(|c| c.0);
            let mut best = 0;
            for (i, c) in cells.iter().enumerate() {
                if c.1 > cells[best].1 {
                    best = i;
                }
            }
            ensure(f[9] == cells[best].0.to_string(), || format!("{scenario} {}: marker {} but row max at {}", f[0], f[9], cells[best].0))?;
            let bold: Vec<usize> = md.split('|').skip(2).enumerate().filter(|(_, c)| c.contains("**")).map(|(i, _)| i).collect();
            ensure(bold == [best], || format!("{scenario} {}: bold columns {bold:?}, expected [{best}]", f[0]))?;
            for (i, c) in cells.iter().enumerate() {
                let shown: f64 = f[1 + i].parse().unwrap();
                ensure((shown - c.1).abs() <= 5e-5, || format!("{scenario} {}: column {i} shows {shown}, results say {}", f[0], c.1))?;
            }
        }
        matrices += 1;
    }
    Ok(format!("{matrices} matrices of 12 rows x 8 columns; all 48 best-of-row markers match recomputed row maxima"))
}

fn run(id: usize, name: &str, failures: &mut Vec<usize>, f: impl FnOnce() -> Outcome) {
    let t = Instant::now();
    let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
        Err(p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_else(|| "panic".into()))
    });
    let secs = t.elapsed().as_secs_f64();
    match outcome {
        Ok(detail) => println!("criterion {id} PASS [{name}] {detail} [{secs:.1}s]"),
        Err(detail) => {
            println!("criterion {id} FAIL [{name}] {detail} [{secs:.1}s]");
            failures.push(id);
        }
    }
}

fn main() {
    // `cargo test -- --list` and filters from other targets land here too
    let args: Vec<String> = std::env::args().collect();
    if args.iter().any(|a| a == "--list") {
        println!("acceptance: test");
        return;
    }
    // failures are reported through the criterion line instead
    std::panic::set_hook(Box::new(|_| {}));
    let t = Instant::now();
    let mut failures = Vec::new();
    let ds = full_dataset();
    let tmp = tempfile::tempdir().expect("temp dir");
    let mut rows = Vec::new();

    run(1, "gradient correctness", &mut failures, gradients);
    run(2, "loss oracle", &mut failures, loss_oracle);
    println!("criterion 2 NOTE [loss oracle] {}", loss_hand_value_note());
    run(3, "windowing exactness", &mut failures, windowing);
    run(4, "split hygiene", &mut failures, || split_hygiene(&ds));
    run(5, "grid cardinality and determinism", &mut failures, || grid_determinism(&ds, &mut rows));
    run(6, "synthetic separability", &mut failures, || separability(&ds));
    run(7, "AUC oracle", &mut failures, auc_oracle);
    run(8, "architecture conformance", &mut failures, || architecture(&ds));
    run(9, "report fidelity", &mut failures, || report_fidelity(&rows, tmp.path()));

    println!("acceptance: {} of 9 criteria passed in {:.0}s", 9 - failures.len(), t.elapsed().as_secs_f64());
    if !failures.is_empty() {
        println!("acceptance: FAILED criteria {failures:?}");
        std::process::exit(1);
    }
}
