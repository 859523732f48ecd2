//! Detecting VR familiarity from dominant-hand motion during PIN entry.
//!
//! The crate covers the whole pipeline: the trajectory data model and CSV
//! format ([`trajectory`]), sliding windows and participant splits
//! ([`windowing`]), a synthetic trajectory generator ([`synth`]), a small
//! differentiable layer engine ([`nn`]), the MLP / FCN / InceptionTime
//! builders ([`models`]) and the training, evaluation and grid-sweep driver
//! ([`experiments`]).

pub mod config;
pub mod error;
pub mod experiments;
pub mod models;
pub mod nn;
pub mod seed;
pub mod synth;
pub mod trajectory;
pub mod windowing;

pub use error::{Error, Result};
