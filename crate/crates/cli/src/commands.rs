use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use log::info;
use vrfam_core::config::KeyValues;
use vrfam_core::experiments::grid::{load_results_json, save_results, write_roc_csv};
use vrfam_core::experiments::{evaluate_checkpoint, run_grid, train_cell, write_report, EvalResult, GridAxes, GridOptions, ReportOptions, ScenarioConfig};
use vrfam_core::seed::fnv1a64;
use vrfam_core::synth::{synth_dataset, SynthConfig};
use vrfam_core::trajectory::{parse_dataset, write_dataset, Dataset, DatasetFiles, LabelRule, Modality, Pin};
use vrfam_core::windowing::GRID_WINDOW_LENGTHS;

use crate::args::{Common, EvalArgs, Hyper, ReportArgs, SweepArgs, SynthArgs, TrainArgs};
use crate::manifest::{create_run_dir, RunManifest};
use crate::UsageError;

pub const CHECKPOINT_FILE: &str = "model.ckpt";
pub const METRICS_FILE: &str = "metrics.json";
pub const ROC_FILE: &str = "roc.csv";
pub const LOSS_FILE: &str = "loss.csv";

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

/// Built-in default, then `$VRFAM_SEED`.
fn default_seed() -> Result<u64> {
    match std::env::var("VRFAM_SEED") {
        Ok(v) => v.trim().parse().map_err(|_| usage(format!("VRFAM_SEED: not an unsigned integer: {v:?}"))),
        Err(_) => Ok(0),
    }
}

fn load_config(common: &Common) -> Result<KeyValues> {
    match &common.config {
        Some(p) => KeyValues::load(p).map_err(|e| usage(format!("{}: {e}", p.display()))),
        None => Ok(KeyValues::default()),
    }
}

fn init_threads(common: &Common) {
    if let Some(n) = common.workers {
        // only fails if a pool already exists, which is harmless
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n as usize).build_global();
    }
}

fn dataset_inputs(path: &Path) -> Vec<PathBuf> {
    let f = DatasetFiles::locate(path);
    [f.frames, f.participants, f.sidecar].into_iter().filter(|p| p.exists()).collect()
}

fn load_dataset(path: &Path) -> Result<Dataset> {
    parse_dataset(path).with_context(|| format!("loading dataset {}", path.display()))
}

fn or_default<T: Clone>(given: &[T], default: &[T]) -> Vec<T> {
    if given.is_empty() { default } else { given }.to_vec()
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    fs::write(path, serde_json::to_vec_pretty(value)?).with_context(|| format!("writing {}", path.display()))
}

fn write_loss_csv(path: &Path, curve: &[f64]) -> Result<()> {
    let mut s = String::from("epoch,loss\n");
    for (i, v) in curve.iter().enumerate() {
        s.push_str(&format!("{},{v}\n", i + 1));
    }
    Ok(fs::write(path, s)?)
}

pub fn synth(a: SynthArgs) -> Result<()> {
    let kv = load_config(&a.common)?;
    let mut cfg = SynthConfig::default();
    cfg.apply_kv(&kv).map_err(|e| usage(e.to_string()))?;
    let mut seed = default_seed()?;
    kv.apply("seed", &mut seed).map_err(|e| usage(e.to_string()))?;
    let mut per_class: u64 = 13;
    kv.apply("per_class", &mut per_class).map_err(|e| usage(e.to_string()))?;
    let seed = a.common.seed.unwrap_or(seed);
    let per_class = a.per_class.unwrap_or(per_class);
    if per_class == 0 {
        return Err(usage("per_class must be >= 1"));
    }
    let pins = if a.pins.is_empty() { Pin::ALL.to_vec() } else { a.pins.clone() };

    let mut resolved = cfg.to_kv();
    resolved.insert("seed", seed);
    resolved.insert("per_class", per_class);
    resolved.insert("pins", pins.iter().map(Pin::to_string).collect::<Vec<_>>().join(","));
    let hash = format!("{:016x}", fnv1a64(resolved.to_text().as_bytes()));
    let dir = create_run_dir(&a.common.out, a.common.run_name.as_deref(), &hash)?;
    let mut manifest = RunManifest::begin(&dir, "synth", &resolved, &hash, &[])?;

    manifest.phase("generate");
    let dataset = synth_dataset(per_class as usize, &pins, &Modality::ALL, seed, &cfg)?;
    manifest.phase("write");
    let files = write_dataset(&dataset, &dir, LabelRule::default())?;
    info!("{} participants, {} trials -> {}", dataset.participants.len(), dataset.trials.len(), dir.display());
    manifest.finish("ok", &[files.frames, files.participants, files.sidecar])?;
    println!("{}", dir.display());
    Ok(())
}

/// Defaults < `$VRFAM_SEED` < config file < flags.
fn resolve_base(common: &Common, hyper: &Hyper) -> Result<ScenarioConfig> {
    let mut cfg = ScenarioConfig { seed: default_seed()?, ..ScenarioConfig::default() };
    cfg.apply_kv(&load_config(common)?).map_err(|e| usage(e.to_string()))?;
    let h = hyper.clone();
    if let Some(v) = common.seed {
        cfg.seed = v;
    }
    if let Some(v) = h.epochs {
        cfg.epochs = v;
    }
    if let Some(v) = h.batch_size {
        cfg.batch_size = v;
    }
    if let Some(v) = h.eval_batch_size {
        cfg.eval_batch_size = v;
    }
    if let Some(v) = h.stride {
        cfg.stride = v;
    }
    if h.test_stride.is_some() {
        cfg.test_stride = h.test_stride;
    }
    if let Some(v) = h.split_fraction {
        cfg.split_fraction = v;
    }
    if let Some(v) = h.epsilon {
        cfg.loss.epsilon = v;
    }
    if let Some(v) = h.lr {
        cfg.adam.learning_rate = v;
    }
    if let Some(v) = h.precision {
        cfg.precision = v;
    }
    if let Some(v) = h.cross_device_test {
        cfg.cross_device_test = v;
    }
    if h.label_shuffle {
        cfg.label_shuffle = true;
    }
    Ok(cfg)
}

#[derive(serde::Serialize)]
struct Metrics<'a> {
    config: &'a ScenarioConfig,
    #[serde(flatten)]
    result: &'a EvalResult,
}

fn write_cell_outputs(dir: &Path, cfg: &ScenarioConfig, result: &EvalResult) -> Result<Vec<PathBuf>> {
    let metrics = dir.join(METRICS_FILE);
    write_json(&metrics, &Metrics { config: cfg, result })?;
    let roc = dir.join(ROC_FILE);
    write_roc_csv(result, fs::File::create(&roc)?)?;
    let loss = dir.join(LOSS_FILE);
    write_loss_csv(&loss, &result.loss_curve)?;
    Ok(vec![metrics, roc, loss])
}

pub fn train(a: TrainArgs) -> Result<()> {
    let mut cfg = resolve_base(&a.common, &a.hyper)?;
    if let Some(v) = a.scenario {
        cfg.scenario = v;
    }
    if let Some(v) = a.pin {
        cfg.pin = v;
    }
    if let Some(v) = a.model {
        cfg.model = v;
    }
    if let Some(v) = a.window {
        cfg.window_len = v;
    }
    cfg.validate().map_err(|e| usage(e.to_string()))?;
    init_threads(&a.common);

    let hash = cfg.config_hash();
    let dir = create_run_dir(&a.common.out, a.common.run_name.as_deref(), &hash)?;
    let mut manifest = RunManifest::begin(&dir, "train", &cfg.to_kv(), &hash, &dataset_inputs(&a.data))?;
    if !GRID_WINDOW_LENGTHS.contains(&cfg.window_len) {
        manifest.warn(format!("window length {} is not on the 50..120 step 10 grid", cfg.window_len));
        manifest.write()?;
    }
    let outcome = (|| -> Result<Vec<PathBuf>> {
        manifest.phase("load");
        let dataset = load_dataset(&a.data)?;
        manifest.phase("train");
        let cell = train_cell(&dataset, &cfg)?;
        manifest.phase("write");
        let ckpt = dir.join(CHECKPOINT_FILE);
        fs::write(&ckpt, cell.model.to_bytes(&cell.checkpoint_meta(&cfg))?)?;
        let r = &cell.result;
        info!("window accuracy {:.4}, trial accuracy {:.4}, AUC {:.4} ({} test windows)", r.window_accuracy, r.trial_accuracy, r.auc, r.test_windows);
        let mut files = vec![ckpt];
        files.extend(write_cell_outputs(&dir, &cfg, r)?);
        Ok(files)
    })();
    finish(manifest, outcome)?;
    println!("{}", dir.display());
    Ok(())
}

fn finish(manifest: RunManifest, outcome: Result<Vec<PathBuf>>) -> Result<()> {
    match outcome {
        Ok(files) => manifest.finish("ok", &files),
        Err(e) => {
            manifest.finish("failed", &[])?;
            Err(e)
        }
    }
}

pub fn eval(a: EvalArgs) -> Result<()> {
    init_threads(&a.common);
    let bytes = fs::read(&a.checkpoint).with_context(|| format!("reading {}", a.checkpoint.display()))?;
    let dataset = load_dataset(&a.data)?;
    let (meta, result) = evaluate_checkpoint(&dataset, &bytes, a.eval_batch_size)?;
    let hash = meta.config.config_hash();
    let dir = create_run_dir(&a.common.out, a.common.run_name.as_deref(), &hash)?;
    let mut inputs = dataset_inputs(&a.data);
    inputs.push(a.checkpoint.clone());
    let manifest = RunManifest::begin(&dir, "eval", &meta.config.to_kv(), &hash, &inputs)?;
    info!("window accuracy {:.4}, trial accuracy {:.4}, AUC {:.4}", result.window_accuracy, result.trial_accuracy, result.auc);
    let files = write_cell_outputs(&dir, &meta.config, &result);
    finish(manifest, files)?;
    println!("{}", dir.display());
    Ok(())
}

pub fn sweep(a: SweepArgs) -> Result<()> {
    let base = resolve_base(&a.common, &a.hyper)?;
    base.validate().map_err(|e| usage(e.to_string()))?;
    let full = GridAxes::full();
    let axes = GridAxes {
        scenarios: or_default(&a.scenarios, &full.scenarios),
        pins: or_default(&a.pins, &full.pins),
        models: or_default(&a.models, &full.models),
        windows: or_default(&a.windows, &full.windows),
    };
    if let Some(w) = axes.windows.iter().find(|w| !GRID_WINDOW_LENGTHS.contains(w)) {
        return Err(usage(format!("sweep window {w} is not one of {GRID_WINDOW_LENGTHS:?}")));
    }
    let workers = a.common.workers.map_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()), |n| n as usize);

    let mut kv = base.to_kv();
    let list = |v: Vec<String>| v.join(",");
    kv.insert("sweep.scenarios", list(axes.scenarios.iter().map(|s| s.to_string()).collect()));
    kv.insert("sweep.pins", list(axes.pins.iter().map(|s| s.to_string()).collect()));
    kv.insert("sweep.models", list(axes.models.iter().map(|s| s.to_string()).collect()));
    kv.insert("sweep.windows", list(axes.windows.iter().map(|s| s.to_string()).collect()));
    kv.insert("sweep.repeats", a.repeats);
    let hash = format!("{:016x}", fnv1a64(kv.to_text().as_bytes()));
    let dir = create_run_dir(&a.common.out, a.common.run_name.as_deref(), &hash)?;
    let mut manifest = RunManifest::begin(&dir, "sweep", &kv, &hash, &dataset_inputs(&a.data))?;

    let outcome = (|| -> Result<Vec<PathBuf>> {
        manifest.phase("load");
        let dataset = load_dataset(&a.data)?;
        manifest.phase("grid");
        info!("{} cells x {} seeds on {workers} workers", axes.cell_count(), a.repeats);
        let opts = GridOptions { workers, repeats: a.repeats as usize, schedule_seed: a.schedule_seed };
        let rows = run_grid(&dataset, &axes, &base, &opts)?;
        manifest.phase("write");
        let (csv, json) = (dir.join("results.csv"), dir.join("results.json"));
        save_results(&rows, &csv, &json)?;
        let report = write_report(&rows, &dir.join("report"), &ReportOptions { svg: a.svg })?;
        let failed = rows.iter().filter(|r| r.result.is_none()).count();
        if failed > 0 {
            manifest.warn(format!("{failed} of {} cells failed", rows.len()));
        }
        if failed == rows.len() {
            bail!("every cell failed; see {}", csv.display());
        }
        let mut files = vec![csv, json, report.summary];
        files.extend(report.matrices_csv);
        Ok(files)
    })();
    finish(manifest, outcome)?;
    println!("{}", dir.display());
    Ok(())
}

pub fn report(a: ReportArgs) -> Result<()> {
    let path = if a.results.is_dir() { a.results.join("results.json") } else { a.results.clone() };
    let rows = load_results_json(&path).with_context(|| format!("loading {}", path.display()))?;
    let mut kv = KeyValues::default();
    kv.insert("results", path.display());
    kv.insert("svg", a.svg);
    let hash = format!("{:016x}", fnv1a64(&fs::read(&path)?));
    let dir = create_run_dir(&a.common.out, a.common.run_name.as_deref(), &hash)?;
    let manifest = RunManifest::begin(&dir, "report", &kv, &hash, &[path])?;
    let files = write_report(&rows, &dir, &ReportOptions { svg: a.svg }).map(|f| {
        let mut v = vec![f.summary];
        v.extend(f.matrices_csv);
        v.extend(f.matrices_md);
        v
    });
    finish(manifest, files.map_err(Into::into))?;
    println!("{}", dir.display());
    Ok(())
}
