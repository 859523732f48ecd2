mod common;

use common::{synth, tiny_models};
use vrfam_core::experiments::grid::write_results_csv;
use vrfam_core::experiments::*;
use vrfam_core::models::ModelKind;
use vrfam_core::trajectory::{Pin, TrialKey};
use vrfam_core::windowing::Scenario;

fn base() -> ScenarioConfig {
    ScenarioConfig { stride: 20, epochs: 2, batch_size: 16, models: tiny_models(), seed: 3, ..ScenarioConfig::default() }
}

#[test]
fn identical_config_gives_identical_result() {
    let ds = synth(3, &[Pin::ALL[0]], 1);
    for model in ModelKind::ALL {
        let cfg = ScenarioConfig { model, ..base() };
        assert_eq!(run_cell(&ds, &cfg).unwrap(), run_cell(&ds, &cfg).unwrap(), "{model}");
    }
}

#[test]
fn permuted_schedule_gives_identical_csv() {
    let ds = synth(3, &[Pin::ALL[0], Pin::ALL[3]], 2);
    let axes = GridAxes {
        scenarios: vec![Scenario::HandTracking, Scenario::CrossDevice],
        pins: vec![Pin::ALL[0], Pin::ALL[3]],
        models: vec![ModelKind::Mlp, ModelKind::Fcn],
        windows: vec![50, 60],
    };
    let csv = |schedule_seed, workers| {
        let rows = run_grid(&ds, &axes, &base(), &GridOptions { workers, repeats: 1, schedule_seed }).unwrap();
        assert_eq!(rows.len(), 16);
        let mut buf = Vec::new();
        write_results_csv(&rows, &mut buf).unwrap();
        String::from_utf8(buf).unwrap()
    };
    let reference = csv(None, 1);
    assert_eq!(csv(Some(99), 1), reference);
    assert_eq!(csv(Some(5), 2), reference);
}

#[test]
fn failing_cells_are_recorded_without_aborting() {
    let ds = synth(3, &[Pin::ALL[0]], 2);
    let axes = GridAxes { scenarios: vec![Scenario::Controller], pins: vec![Pin::ALL[0], Pin::ALL[1]], models: vec![ModelKind::Mlp], windows: vec![50] };
    let rows = run_grid(&ds, &axes, &base(), &GridOptions { workers: 1, repeats: 1, schedule_seed: None }).unwrap();
    assert!(rows[0].result.is_some());
    assert!(rows[1].result.is_none() && rows[1].error.as_deref().unwrap().contains("empty scenario"));
}

fn checksum(windows: &[vrfam_core::windowing::LabeledWindow]) -> u64 {
    let mut bytes = Vec::new();
    for w in windows {
        bytes.extend(w.data.iter().flat_map(|v| v.to_le_bytes()));
        bytes.push(w.label.index() as u8);
    }
    vrfam_core::seed::fnv1a64(&bytes)
}

/// Ablating or altering test-side trials must leave every training-side
/// quantity unchanged, down to the trained weights.
#[test]
fn test_data_never_reaches_training() {
    let ds = synth(4, &[Pin::ALL[1]], 5);
    for model in [ModelKind::Mlp, ModelKind::Inception] {
        let cfg = ScenarioConfig { model, scenario: Scenario::MixedDevice, pin: Pin::ALL[1], ..base() };
        let full = train_cell(&ds, &cfg).unwrap();
        let (_, full_data) = cell_data(&ds, &cfg).unwrap();
        let is_test = |id: &str| full.split.test_ids.contains(id);

        // keep one trial per test participant and scramble its motion
        let mut ablated = ds.clone();
        let mut kept = std::collections::BTreeSet::new();
        let test_keys: Vec<TrialKey> = ds.trials.iter().filter(|t| is_test(&t.participant_id)).map(|t| t.key()).collect();
        for k in &test_keys {
            if !kept.insert(k.participant_id.clone()) {
                ablated.remove_trial(k).unwrap();
            }
        }
        for t in ablated.trials.iter_mut().filter(|t| is_test(&t.participant_id)) {
            for f in &mut t.frames {
                f.pos = [f.pos[1] * 3.0, f.pos[0] - 1.0, f.pos[2] + 0.25];
            }
        }
        let (split, data) = cell_data(&ablated, &cfg).unwrap();
        assert_eq!(split, full.split);
        assert_eq!(data.stats, full.stats);
        assert_eq!(checksum(&data.train), checksum(&full_data.train));
        assert!(data.test.len() < full_data.test.len());

        let other = train_cell(&ablated, &cfg).unwrap();
        assert_eq!(other.result.loss_curve, full.result.loss_curve);
        let meta = serde_json::Value::Null;
        assert_eq!(other.model.to_bytes(&meta).unwrap(), full.model.to_bytes(&meta).unwrap(), "{model}");
    }
}

#[test]
fn loss_is_finite_and_decreases_on_separable_data() {
    let ds = synth(4, &[Pin::ALL[0]], 9);
    for model in ModelKind::ALL {
        let cfg = ScenarioConfig { model, epochs: 6, stride: 10, ..base() };
        let r = run_cell(&ds, &cfg).unwrap();
        assert_eq!(r.loss_curve.len(), 6);
        assert!(r.loss_curve.iter().all(|l| l.is_finite()), "{model}");
        assert!(r.loss_curve.last().unwrap() <= &r.loss_curve[0], "{model}: {:?}", r.loss_curve);
    }
}

#[test]
fn accuracy_is_confusion_trace_over_total() {
    let ds = synth(3, &[Pin::ALL[0]], 4);
    let r = run_cell(&ds, &base()).unwrap();
    let c = r.confusion.counts;
    assert_eq!(c.iter().flatten().sum::<u64>() as usize, r.test_windows);
    assert_eq!(r.window_accuracy, (c[0][0] + c[1][1]) as f64 / r.test_windows as f64);
}

#[test]
fn inference_batch_size_does_not_change_scores() {
    let ds = synth(3, &[Pin::ALL[0]], 6);
    for model in ModelKind::ALL {
        let cfg = ScenarioConfig { model, ..base() };
        let cell = train_cell(&ds, &cfg).unwrap();
        let (_, data) = cell_data(&ds, &cfg).unwrap();
        let one = cell.model.scores(&data.test, 1).unwrap();
        assert_eq!(cell.model.scores(&data.test, 7).unwrap(), one, "{model}");
        assert_eq!(cell.model.scores(&data.test, 1000).unwrap(), one, "{model}");
    }
}

#[test]
fn checkpoint_evaluation_reproduces_training_result() {
    let ds = synth(3, &[Pin::ALL[2]], 8);
    for model in ModelKind::ALL {
        let cfg = ScenarioConfig { model, pin: Pin::ALL[2], scenario: Scenario::CrossDevice, ..base() };
        let cell = train_cell(&ds, &cfg).unwrap();
        let bytes = cell.model.to_bytes(&cell.checkpoint_meta(&cfg)).unwrap();
        let (meta, result) = evaluate_checkpoint(&ds, &bytes, None).unwrap();
        assert_eq!(meta.config, cfg);
        assert_eq!(result, cell.result, "{model}");
    }
}

#[test]
fn label_shuffle_is_balanced_and_seeded() {
    let ds = synth(3, &[Pin::ALL[0]], 4);
    let cfg = ScenarioConfig { label_shuffle: true, ..base() };
    let (_, a) = cell_data(&ds, &cfg).unwrap();
    let (_, b) = cell_data(&ds, &cfg).unwrap();
    for (x, y) in [(&a.train, &b.train), (&a.test, &b.test)] {
        let ones = x.iter().filter(|w| w.label.index() == 1).count();
        assert_eq!(ones, x.len() - x.len() / 2);
        assert!(x.iter().zip(y.iter()).all(|(p, q)| p.label == q.label));
    }
}
