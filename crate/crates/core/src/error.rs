use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: malformed row: {reason}")]
    MalformedRow { line: u64, reason: String },

    #[error("line {line}: duplicate key {key}")]
    DuplicateKey { line: u64, key: String },

    #[error("trial {trial}: timestamps not strictly increasing at frame {frame_idx}")]
    NonMonotoneTime { trial: String, frame_idx: u32 },

    #[error("line {line}: unknown PIN {pin:?}")]
    UnknownPin { line: u64, pin: String },

    #[error("trial {trial} references unknown participant {participant:?}")]
    UnknownParticipant { trial: String, participant: String },

    #[error("participant {0:?} listed more than once")]
    DuplicateParticipant(String),

    #[error("trial {0} has no frames")]
    EmptyTrial(String),

    #[error("no frames to fit channel statistics")]
    EmptyInput,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("degenerate split: {0}")]
    DegenerateSplit(String),

    #[error("empty scenario: no {side} windows")]
    EmptyScenario { side: &'static str },

    #[error("window too short: {len} frames, need at least {min}")]
    WindowTooShort { len: usize, min: usize },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("non-finite value produced by {0}")]
    NonFiniteOutput(String),

    #[error("backward called on {0} without a cached forward pass")]
    NoCachedForward(String),

    #[error("test set contains a single class")]
    SingleClassTestSet,

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
