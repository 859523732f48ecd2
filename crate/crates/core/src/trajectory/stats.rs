use serde::{Deserialize, Serialize};

use super::{Trial, Vec3};
use crate::error::{Error, Result};

/// Lower bound applied to every per-axis standard deviation.
pub const STD_FLOOR: f64 = 1e-8;

/// Per-axis z-score parameters for positional channels.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelStats {
    pub mean: Vec3,
    /// Population standard deviation, floored at [`STD_FLOOR`].
    pub std: Vec3,
}

impl ChannelStats {
    pub fn identity() -> Self {
        Self { mean: [0.0; 3], std: [1.0; 3] }
    }
}

/// Welford accumulation over every positional sample of `trials`.
pub fn fit_channel_stats<'a, I>(trials: I) -> Result<ChannelStats>
where
    I: IntoIterator<Item = &'a Trial>,
{
    let mut n = 0u64;
    let mut mean = [0.0f64; 3];
    let mut m2 = [0.0f64; 3];
    for frame in trials.into_iter().flat_map(|t| t.frames.iter()) {
        n += 1;
        for axis in 0..3 {
            let x = frame.pos[axis];
            let delta = x - mean[axis];
            mean[axis] += delta / n as f64;
            m2[axis] += delta * (x - mean[axis]);
        }
    }
    if n == 0 {
        return Err(Error::EmptyInput);
    }
    let std = m2.map(|s| (s / n as f64).sqrt().max(STD_FLOOR));
    Ok(ChannelStats { mean, std })
}

/// Returns a copy with positions mapped to `(x - mean) / std` per axis.
pub fn normalize(trial: &Trial, stats: &ChannelStats) -> Trial {
    let mut out = trial.clone();
    for f in &mut out.frames {
        for axis in 0..3 {
            f.pos[axis] = (f.pos[axis] - stats.mean[axis]) / stats.std[axis];
        }
    }
    out
}

/// Inverse of [`normalize`].
pub fn denormalize(trial: &Trial, stats: &ChannelStats) -> Trial {
    let mut out = trial.clone();
    for f in &mut out.frames {
        for axis in 0..3 {
            f.pos[axis] = f.pos[axis] * stats.std[axis] + stats.mean[axis];
        }
    }
    out
}
