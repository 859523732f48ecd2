//! Training and evaluation of single cells and full grids, plus metrics and
//! report rendering.

pub mod cell;
pub mod config;
pub mod grid;
pub mod metrics;
pub mod report;

pub use cell::{cell_data, evaluate, evaluate_checkpoint, run_cell, CheckpointMeta, train_cell, AnyGraph, EvalResult, TrainedCell};
pub use config::ScenarioConfig;
pub use grid::{grid_keys, run_grid, CellKey, GridAxes, GridOptions, GridRow};
pub use metrics::{roc_auc, Confusion, RocPoint};
pub use report::{accuracy_matrices, write_report, AccuracyMatrix, ReportOptions};
