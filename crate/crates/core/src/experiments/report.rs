//! Per-scenario accuracy matrices, ROC point files and optional SVG plots.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::grid::{write_roc_csv, CellKey, GridRow};
use crate::error::Result;
use crate::models::ModelKind;
use crate::trajectory::Pin;
use crate::windowing::Scenario;

/// One row: a classifier on a PIN, one value per window length.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatrixRow {
    pub model: ModelKind,
    pub pin: Pin,
    /// Mean over seeds; `None` when every run of the cell failed.
    pub values: Vec<Option<f64>>,
    /// Column index of the row maximum (first one on ties).
    pub best: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AccuracyMatrix {
    pub scenario: Scenario,
    pub windows: Vec<usize>,
    pub rows: Vec<MatrixRow>,
}

fn argmax(values: &[Option<f64>]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, v) in values.iter().enumerate() {
        if let Some(v) = *v {
            if best.is_none_or(|(_, b)| v > b) {
                best = Some((i, v));
            }
        }
    }
    best.map(|(i, _)| i)
}

/// Window-accuracy matrices, one per scenario; rows grouped by PIN, then classifier.
pub fn accuracy_matrices(rows: &[GridRow]) -> Vec<AccuracyMatrix> {
    let mut sums: BTreeMap<(Scenario, Pin, ModelKind, usize), (f64, usize)> = BTreeMap::new();
    let mut cells: BTreeMap<Scenario, (BTreeSet<Pin>, BTreeSet<ModelKind>, BTreeSet<usize>)> = BTreeMap::new();
    for row in rows {
        let k = &row.key;
        let axes = cells.entry(k.scenario).or_default();
        axes.0.insert(k.pin);
        axes.1.insert(k.model);
        axes.2.insert(k.window_len);
        if let Some(r) = &row.result {
            let e = sums.entry((k.scenario, k.pin, k.model, k.window_len)).or_insert((0.0, 0));
            e.0 += r.window_accuracy;
            e.1 += 1;
        }
    }
    cells
        .into_iter()
        .map(|(scenario, (pins, models, windows))| {
            let windows: Vec<usize> = windows.into_iter().collect();
            let mut out = Vec::new();
            for &pin in &pins {
                for &model in &models {
                    let values: Vec<Option<f64>> = windows
                        .iter()
                        .map(|&w| sums.get(&(scenario, pin, model, w)).map(|&(s, n)| s / n as f64))
                        .collect();
                    out.push(MatrixRow { model, pin, best: argmax(&values), values });
                }
            }
            AccuracyMatrix { scenario, windows, rows: out }
        })
        .collect()
}

fn row_label(r: &MatrixRow) -> String {
    format!("{} {}", r.model.display_name(), r.pin)
}

fn cell_text(v: Option<f64>) -> String {
    v.map_or_else(String::new, |v| format!("{v:.4}"))
}

/// CSV form: `WS,<windows...>,best_ws`, one row per classifier/PIN.
pub fn matrix_csv(m: &AccuracyMatrix) -> String {
    let mut s = String::from("WS");
    for w in &m.windows {
        let _ = write!(s, ",{w}");
    }
    s.push_str(",best_ws\n");
    for r in &m.rows {
        s.push_str(&row_label(r));
        for v in &r.values {
            let _ = write!(s, ",{}", cell_text(*v));
        }
        let _ = writeln!(s, ",{}", r.best.map_or_else(String::new, |i| m.windows[i].to_string()));
    }
    s
}

/// Markdown form with each row's best value in bold.
pub fn matrix_markdown(m: &AccuracyMatrix) -> String {
    let mut s = format!("### {} window accuracy\n\n| WS |", scenario_title(m.scenario));
    for w in &m.windows {
        let _ = write!(s, " {w} |");
    }
    s.push_str("\n|---|");
    s.push_str(&"---|".repeat(m.windows.len()));
    s.push('\n');
    for r in &m.rows {
        let _ = write!(s, "| {} |", row_label(r));
        for (i, v) in r.values.iter().enumerate() {
            let t = cell_text(*v);
            if r.best == Some(i) {
                let _ = write!(s, " **{t}** |");
            } else {
                let _ = write!(s, " {t} |");
            }
        }
        s.push('\n');
    }
    s
}

pub fn scenario_title(s: Scenario) -> &'static str {
    match s {
        Scenario::Controller => "Controller",
        Scenario::HandTracking => "Hand tracking",
        Scenario::CrossDevice => "Cross-device",
        Scenario::MixedDevice => "Mixed-device",
    }
}

pub const SUMMARY_HEADER: &str = "scenario,pin,classifier,window_len,runs,failed,window_accuracy,trial_accuracy,auc";

/// Seed-averaged metrics per cell.
pub fn summary_csv(rows: &[GridRow]) -> String {
    let mut groups: BTreeMap<(Scenario, Pin, ModelKind, usize), Vec<&GridRow>> = BTreeMap::new();
    for r in rows {
        groups.entry((r.key.scenario, r.key.pin, r.key.model, r.key.window_len)).or_default().push(r);
    }
    let mut s = format!("{SUMMARY_HEADER}\n");
    for ((sc, pin, model, w), members) in groups {
        let ok: Vec<_> = members.iter().filter_map(|r| r.result.as_ref()).collect();
        let mean = |f: &dyn Fn(&super::cell::EvalResult) -> f64| {
            if ok.is_empty() {
                String::new()
            } else {
                format!("{:.6}", ok.iter().map(|r| f(r)).sum::<f64>() / ok.len() as f64)
            }
        };
        let _ = writeln!(
            s,
            "{sc},{pin},{model},{w},{},{},{},{},{}",
            members.len(),
            members.len() - ok.len(),
            mean(&|r| r.window_accuracy),
            mean(&|r| r.trial_accuracy),
            mean(&|r| r.auc)
        );
    }
    s
}

#[derive(Clone, Debug, Default)]
pub struct ReportOptions {
    pub svg: bool,
}

/// Paths written by [`write_report`].
#[derive(Clone, Debug, Default)]
pub struct ReportFiles {
    pub matrices_csv: Vec<PathBuf>,
    pub matrices_md: Vec<PathBuf>,
    pub summary: PathBuf,
    pub roc: Vec<PathBuf>,
    pub svg: Vec<PathBuf>,
}

pub fn roc_file_name(key: &CellKey) -> String {
    format!("{}_seed{}.csv", key.stem(), key.seed)
}

pub fn write_report(rows: &[GridRow], dir: &Path, opts: &ReportOptions) -> Result<ReportFiles> {
    std::fs::create_dir_all(dir)?;
    let mut files = ReportFiles { summary: dir.join("summary.csv"), ..Default::default() };
    std::fs::write(&files.summary, summary_csv(rows))?;
    let matrices = accuracy_matrices(rows);
    let mut md = String::new();
    for m in &matrices {
        let csv_path = dir.join(format!("accuracy_{}.csv", m.scenario));
        std::fs::write(&csv_path, matrix_csv(m))?;
        let md_path = dir.join(format!("accuracy_{}.md", m.scenario));
        let text = matrix_markdown(m);
        std::fs::write(&md_path, &text)?;
        md.push_str(&text);
        md.push('\n');
        files.matrices_csv.push(csv_path);
        files.matrices_md.push(md_path);
    }
    std::fs::write(dir.join("report.md"), md)?;
    let roc_dir = dir.join("roc");
    std::fs::create_dir_all(&roc_dir)?;
    for row in rows {
        if let Some(r) = &row.result {
            let path = roc_dir.join(roc_file_name(&row.key));
            write_roc_csv(r, std::fs::File::create(&path)?)?;
            files.roc.push(path);
        }
    }
    if opts.svg {
        files.svg = write_svgs(rows, &dir.join("plots"))?;
    }
    Ok(files)
}

const PALETTE: [&str; 8] = ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"];

/// Minimal line chart; `series` are (label, points in data coordinates).
fn svg_chart(title: &str, x_label: &str, y_label: &str, x_range: (f64, f64), y_range: (f64, f64), series: &[(String, Vec<(f64, f64)>)]) -> String {
    let (w, h, m) = (480.0, 360.0, 50.0);
    let sx = |x: f64| m + (x - x_range.0) / (x_range.1 - x_range.0).max(1e-12) * (w - 2.0 * m);
    let sy = |y: f64| h - m - (y - y_range.0) / (y_range.1 - y_range.0).max(1e-12) * (h - 2.0 * m);
    let mut s = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" font-family=\"sans-serif\" font-size=\"11\">\n\
         <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n\
         <text x=\"{}\" y=\"20\" text-anchor=\"middle\" font-size=\"13\">{title}</text>\n\
         <rect x=\"{m}\" y=\"{m}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"black\"/>\n\
         <text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{x_label}</text>\n\
         <text x=\"14\" y=\"{}\" text-anchor=\"middle\" transform=\"rotate(-90 14 {})\">{y_label}</text>\n",
        w / 2.0,
        w - 2.0 * m,
        h - 2.0 * m,
        w / 2.0,
        h - 12.0,
        h / 2.0,
        h / 2.0
    );
    for (i, (label, pts)) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let path: Vec<String> = pts.iter().map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y))).collect();
        let _ = writeln!(s, "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\" points=\"{}\"/>", path.join(" "));
        let ly = m + 14.0 + 14.0 * i as f64;
        let _ = writeln!(s, "<text x=\"{}\" y=\"{ly}\" fill=\"{color}\">{label}</text>", w - m - 90.0);
    }
    s.push_str("</svg>\n");
    s
}

/// ROC and loss-curve plots, one file each per (scenario, PIN, classifier).
fn write_svgs(rows: &[GridRow], dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut groups: BTreeMap<(Scenario, Pin, ModelKind), Vec<&GridRow>> = BTreeMap::new();
    for r in rows.iter().filter(|r| r.result.is_some()) {
        groups.entry((r.key.scenario, r.key.pin, r.key.model)).or_default().push(r);
    }
    let mut out = Vec::new();
    for ((sc, pin, model), members) in groups {
        let label = |r: &GridRow| format!("WS {} s{}", r.key.window_len, r.key.seed);
        let roc: Vec<(String, Vec<(f64, f64)>)> = members
            .iter()
            .map(|r| {
                let res = r.result.as_ref().expect("filtered");
                (format!("{} ({:.3})", label(r), res.auc), res.roc_points.iter().map(|p| (p.fpr, p.tpr)).collect())
            })
            .collect();
        let title = format!("{} {} {}", scenario_title(sc), model.display_name(), pin);
        let path = dir.join(format!("roc_{sc}_{pin}_{model}.svg"));
        std::fs::write(&path, svg_chart(&format!("ROC: {title}"), "false positive rate", "true positive rate", (0.0, 1.0), (0.0, 1.0), &roc))?;
        out.push(path);

        let loss: Vec<(String, Vec<(f64, f64)>)> = members
            .iter()
            .map(|r| {
                let c = &r.result.as_ref().expect("filtered").loss_curve;
                (label(r), c.iter().enumerate().map(|(i, &v)| ((i + 1) as f64, v)).collect())
            })
            .collect();
        let max_epoch = loss.iter().map(|(_, p)| p.len()).max().unwrap_or(1) as f64;
        let ymax = loss.iter().flat_map(|(_, p)| p.iter().map(|q| q.1)).fold(0.0, f64::max);
        let path = dir.join(format!("loss_{sc}_{pin}_{model}.svg"));
        std::fs::write(&path, svg_chart(&format!("Training loss: {title}"), "epoch", "loss", (1.0, max_epoch.max(2.0)), (0.0, ymax.max(1e-6)), &loss))?;
        out.push(path);
    }
    Ok(out)
}
