use std::io::Write;
use std::path::Path;

use log::{info, warn};
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::cell::{run_cell, EvalResult};
use super::config::ScenarioConfig;
use crate::error::{Error, Result};
use crate::models::ModelKind;
use crate::seed::rng_from_seed;
use crate::trajectory::{Dataset, Pin};
use crate::windowing::{Scenario, GRID_WINDOW_LENGTHS};

pub const RESULTS_CSV_HEADER: [&str; 8] = ["scenario", "pin", "classifier", "window_len", "seed", "window_accuracy", "trial_accuracy", "auc"];

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridAxes {
    pub scenarios: Vec<Scenario>,
    pub pins: Vec<Pin>,
    pub models: Vec<ModelKind>,
    pub windows: Vec<usize>,
}

impl GridAxes {
    /// 4 scenarios x 4 PINs x 3 classifiers x 8 window lengths.
    pub fn full() -> Self {
        Self {
            scenarios: Scenario::ALL.to_vec(),
            pins: Pin::ALL.to_vec(),
            models: ModelKind::ALL.to_vec(),
            windows: GRID_WINDOW_LENGTHS.to_vec(),
        }
    }

    pub fn cell_count(&self) -> usize {
        self.scenarios.len() * self.pins.len() * self.models.len() * self.windows.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.cell_count() == 0 {
            return Err(Error::InvalidParameter("every grid axis needs at least one value".into()));
        }
        Ok(())
    }
}

/// Identity of one result row.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CellKey {
    pub scenario: Scenario,
    pub pin: Pin,
    pub model: ModelKind,
    pub window_len: usize,
    pub seed: u64,
}

impl CellKey {
    pub fn config(&self, base: &ScenarioConfig) -> ScenarioConfig {
        ScenarioConfig {
            scenario: self.scenario,
            pin: self.pin,
            model: self.model,
            window_len: self.window_len,
            seed: self.seed,
            ..base.clone()
        }
    }

    /// File-name stem, e.g. `hand_3197_inception_90`.
    pub fn stem(&self) -> String {
        format!("{}_{}_{}_{}", self.scenario, self.pin, self.model, self.window_len)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridRow {
    pub key: CellKey,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub result: Option<EvalResult>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Clone, Debug, Default)]
pub struct GridOptions {
    pub workers: usize,
    /// Number of seeds per cell: `base.seed + r` for `r` in `0..repeats`.
    pub repeats: usize,
    /// Shuffles the execution order (results must not change).
    pub schedule_seed: Option<u64>,
}

/// All cell keys of the grid, in result order.
pub fn grid_keys(axes: &GridAxes, base_seed: u64, repeats: usize) -> Vec<CellKey> {
    let mut keys = Vec::with_capacity(axes.cell_count() * repeats.max(1));
    for &scenario in &axes.scenarios {
        for &pin in &axes.pins {
            for &model in &axes.models {
                for &window_len in &axes.windows {
                    for r in 0..repeats.max(1) as u64 {
                        keys.push(CellKey { scenario, pin, model, window_len, seed: base_seed.wrapping_add(r) });
                    }
                }
            }
        }
    }
    keys.sort();
    keys.dedup();
    keys
}

/// Runs every cell on a pool of `opts.workers` threads. Failed cells are
/// recorded, not propagated; rows come back sorted by key.
pub fn run_grid(dataset: &Dataset, axes: &GridAxes, base: &ScenarioConfig, opts: &GridOptions) -> Result<Vec<GridRow>> {
    axes.validate()?;
    base.validate()?;
    let mut keys = grid_keys(axes, base.seed, opts.repeats);
    if let Some(s) = opts.schedule_seed {
        keys.shuffle(&mut rng_from_seed(s));
    }
    let total = keys.len();
    let done = std::sync::atomic::AtomicUsize::new(0);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.workers.max(1))
        .build()
        .map_err(|e| Error::InvalidParameter(format!("worker pool: {e}")))?;
    let mut rows: Vec<GridRow> = pool.install(|| {
        keys.par_iter()
            .map(|key| {
                let outcome = run_cell(dataset, &key.config(base));
                let n = done.fetch_add(1, std::sync::atomic::Ordering::Relaxed) + 1;
                match outcome {
                    Ok(r) => {
                        info!("[{n}/{total}] {} seed {}: acc {:.4} auc {:.4}", key.stem(), key.seed, r.window_accuracy, r.auc);
                        GridRow { key: *key, result: Some(r), error: None }
                    }
                    Err(e) => {
                        warn!("[{n}/{total}] {} seed {} failed: {e}", key.stem(), key.seed);
                        GridRow { key: *key, result: None, error: Some(e.to_string()) }
                    }
                }
            })
            .collect()
    });
    rows.sort_by_key(|r| r.key);
    Ok(rows)
}

fn fmt_metric(v: f64) -> String {
    format!("{v:.6}")
}

/// Results table; failed cells keep their key with empty metric fields.
pub fn write_results_csv<W: Write>(rows: &[GridRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(RESULTS_CSV_HEADER)?;
    for row in rows {
        let k = &row.key;
        let metrics = match &row.result {
            Some(r) => [fmt_metric(r.window_accuracy), fmt_metric(r.trial_accuracy), fmt_metric(r.auc)],
            None => Default::default(),
        };
        let mut rec = vec![k.scenario.to_string(), k.pin.to_string(), k.model.to_string(), k.window_len.to_string(), k.seed.to_string()];
        rec.extend(metrics);
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_results(rows: &[GridRow], csv_path: &Path, json_path: &Path) -> Result<()> {
    write_results_csv(rows, std::fs::File::create(csv_path)?)?;
    serde_json::to_writer_pretty(std::io::BufWriter::new(std::fs::File::create(json_path)?), rows)?;
    Ok(())
}

pub fn load_results_json(path: &Path) -> Result<Vec<GridRow>> {
    Ok(serde_json::from_reader(std::io::BufReader::new(std::fs::File::open(path)?))?)
}

/// ROC points of one cell as `fpr,tpr,threshold`.
pub fn write_roc_csv<W: Write>(result: &EvalResult, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["fpr", "tpr", "threshold"])?;
    for p in &result.roc_points {
        w.write_record([p.fpr.to_string(), p.tpr.to_string(), p.threshold.to_string()])?;
    }
    w.flush()?;
    Ok(())
}
