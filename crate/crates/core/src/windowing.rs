//! Sliding windows over trials and participant-level train/test splits.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;

use log::warn;
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::{derive_seed, rng_from_seed};
use crate::trajectory::{fit_channel_stats, normalize, ChannelStats, Dataset, Familiarity, Modality, Participant, Pin, Trial, TrialKey};

/// Window lengths, in frames, of the reference experiment grid.
pub const GRID_WINDOW_LENGTHS: [usize; 8] = [50, 60, 70, 80, 90, 100, 110, 120];

/// Positional channels per frame.
pub const CHANNELS: usize = 3;

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct WindowOrigin {
    pub trial: TrialKey,
    pub start_frame: usize,
}

/// A fixed-length slice of positions, stored channel-major (`x[0..L]`, `y[..]`, `z[..]`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabeledWindow {
    pub data: Vec<f64>,
    pub len: usize,
    pub label: Familiarity,
    pub origin: WindowOrigin,
}

impl LabeledWindow {
    pub fn channel(&self, c: usize) -> &[f64] {
        &self.data[c * self.len..(c + 1) * self.len]
    }
}

/// A trial that produced no windows because it is shorter than the window.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkipRecord {
    pub trial: TrialKey,
    pub frames: usize,
    pub window_len: usize,
}

#[derive(Clone, Debug, Default)]
pub struct Extraction {
    pub windows: Vec<LabeledWindow>,
    pub skipped: Option<SkipRecord>,
}

/// Number of windows of `length` frames at `stride` over `frames` frames.
pub fn window_count(frames: usize, length: usize, stride: usize) -> usize {
    if frames < length {
        0
    } else {
        (frames - length) / stride + 1
    }
}

pub fn extract_windows(trial: &Trial, label: Familiarity, length: usize, stride: usize) -> Result<Extraction> {
    if length < 2 {
        return Err(Error::InvalidParameter(format!("window length {length} < 2")));
    }
    if stride < 1 {
        return Err(Error::InvalidParameter("stride must be >= 1".into()));
    }
    let total = trial.frames.len();
    if total < length {
        let rec = SkipRecord { trial: trial.key(), frames: total, window_len: length };
        warn!("skipping trial {} ({} frames < window {})", rec.trial, total, length);
        return Ok(Extraction { windows: Vec::new(), skipped: Some(rec) });
    }
    let key = trial.key();
    let windows = (0..window_count(total, length, stride))
        .map(|i| {
            let start = i * stride;
            let slice = &trial.frames[start..start + length];
            let mut data = Vec::with_capacity(CHANNELS * length);
            for c in 0..CHANNELS {
                data.extend(slice.iter().map(|f| f.pos[c]));
            }
            LabeledWindow { data, len: length, label, origin: WindowOrigin { trial: key.clone(), start_frame: start } }
        })
        .collect();
    Ok(Extraction { windows, skipped: None })
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_ids: BTreeSet<String>,
    pub test_ids: BTreeSet<String>,
    pub seed: u64,
    pub stratified: bool,
}

/// Stratified participant split.
///
/// Per class, `round(train_fraction * n)` participants (halves round toward
/// train) go to train after a seeded shuffle of the id-sorted class members.
pub fn split_participants(participants: &[Participant], train_fraction: f64, seed: u64) -> Result<SplitSpec> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::InvalidParameter(format!("train_fraction {train_fraction} outside (0, 1)")));
    }
    let mut train_ids = BTreeSet::new();
    let mut test_ids = BTreeSet::new();
    for class in [Familiarity::Novice, Familiarity::Experienced] {
        let mut ids: Vec<&str> = participants.iter().filter(|p| p.class_label == class).map(|p| p.id.as_str()).collect();
        if ids.is_empty() {
            return Err(Error::DegenerateSplit(format!("class {class:?} has no participants")));
        }
        ids.sort_unstable();
        let n_train = (train_fraction * ids.len() as f64 + 0.5).floor() as usize;
        if n_train >= ids.len() {
            return Err(Error::DegenerateSplit(format!("class {class:?} would have an empty test set")));
        }
        if n_train == 0 {
            return Err(Error::DegenerateSplit(format!("class {class:?} would have an empty train set")));
        }
        let mut rng = rng_from_seed(derive_seed(seed, &["split", &format!("{class:?}")]));
        ids.shuffle(&mut rng);
        train_ids.extend(ids[..n_train].iter().map(|s| s.to_string()));
        test_ids.extend(ids[n_train..].iter().map(|s| s.to_string()));
    }
    Ok(SplitSpec { train_ids, test_ids, seed, stratified: true })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Scenario {
    Controller,
    HandTracking,
    CrossDevice,
    MixedDevice,
}

impl Scenario {
    pub const ALL: [Scenario; 4] = [Scenario::Controller, Scenario::HandTracking, Scenario::CrossDevice, Scenario::MixedDevice];

    pub fn as_str(self) -> &'static str {
        match self {
            Scenario::Controller => "controller",
            Scenario::HandTracking => "hand",
            Scenario::CrossDevice => "cross",
            Scenario::MixedDevice => "mixed",
        }
    }

    pub fn train_modalities(self) -> &'static [Modality] {
        match self {
            Scenario::Controller | Scenario::CrossDevice => &[Modality::Controller],
            Scenario::HandTracking => &[Modality::HandTracking],
            Scenario::MixedDevice => &Modality::ALL,
        }
    }

    pub fn test_modalities(self) -> &'static [Modality] {
        match self {
            Scenario::Controller => &[Modality::Controller],
            Scenario::HandTracking | Scenario::CrossDevice => &[Modality::HandTracking],
            Scenario::MixedDevice => &Modality::ALL,
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Scenario::ALL
            .into_iter()
            .find(|sc| sc.as_str() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown scenario {s:?}")))
    }
}

/// Which participants supply the hand-tracking test data in the cross-device scenario.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CrossDeviceTest {
    /// Only the held-out test participants.
    #[default]
    HeldOut,
    /// Every participant, including those trained on.
    AllParticipants,
}

impl FromStr for CrossDeviceTest {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "held_out" => Ok(Self::HeldOut),
            "all_participants" => Ok(Self::AllParticipants),
            other => Err(Error::InvalidParameter(format!("unknown cross-device test set {other:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScenarioOptions {
    pub stride: usize,
    /// Test-side stride; `None` uses `stride`.
    #[serde(default)]
    pub test_stride: Option<usize>,
    pub cross_device_test: CrossDeviceTest,
}

impl Default for ScenarioOptions {
    fn default() -> Self {
        Self { stride: 1, test_stride: None, cross_device_test: CrossDeviceTest::HeldOut }
    }
}

#[derive(Clone, Debug)]
pub struct ScenarioData {
    pub train: Vec<LabeledWindow>,
    pub test: Vec<LabeledWindow>,
    pub stats: ChannelStats,
    pub skipped: Vec<SkipRecord>,
}

/// Windows every trial in parallel; output keeps the input trial order.
fn window_trials(trials: &[&Trial], labels: &HashMap<&str, Familiarity>, stats: &ChannelStats, length: usize, stride: usize) -> Result<(Vec<LabeledWindow>, Vec<SkipRecord>)> {
    let parts: Vec<Extraction> = trials
        .par_iter()
        .map(|t| extract_windows(&normalize(t, stats), labels[t.participant_id.as_str()], length, stride))
        .collect::<Result<_>>()?;
    let mut windows = Vec::with_capacity(parts.iter().map(|p| p.windows.len()).sum());
    let mut skipped = Vec::new();
    for p in parts {
        windows.extend(p.windows);
        skipped.extend(p.skipped);
    }
    Ok((windows, skipped))
}

/// Train and test trials of a cell, each sorted by trial key.
fn cell_trials<'a>(dataset: &'a Dataset, scenario: Scenario, pin: Pin, split: &SplitSpec, opts: ScenarioOptions) -> (Vec<&'a Trial>, Vec<&'a Trial>) {
    let select = |ids: &BTreeSet<String>, modalities: &[Modality]| -> Vec<&Trial> {
        let mut v: Vec<&Trial> = dataset
            .trials
            .iter()
            .filter(|t| t.pin == pin && modalities.contains(&t.modality) && ids.contains(&t.participant_id))
            .collect();
        v.sort_by_key(|t| t.key());
        v
    };
    let test_ids = match (scenario, opts.cross_device_test) {
        (Scenario::CrossDevice, CrossDeviceTest::AllParticipants) => dataset.participants.iter().map(|p| p.id.clone()).collect(),
        _ => split.test_ids.clone(),
    };
    (select(&split.train_ids, scenario.train_modalities()), select(&test_ids, scenario.test_modalities()))
}

/// Builds normalized train/test windows for one (scenario, pin, length) cell.
pub fn build_scenario(dataset: &Dataset, scenario: Scenario, pin: Pin, length: usize, split: &SplitSpec, opts: ScenarioOptions) -> Result<ScenarioData> {
    let labels = dataset.labels();
    let (train_trials, test_trials) = cell_trials(dataset, scenario, pin, split, opts);

    let usable: Vec<&Trial> = train_trials.iter().copied().filter(|t| t.frames.len() >= length).collect();
    if usable.is_empty() {
        return Err(Error::EmptyScenario { side: "train" });
    }
    let stats = fit_channel_stats(usable.iter().copied())?;

    let (train, mut skipped) = window_trials(&train_trials, &labels, &stats, length, opts.stride)?;
    let (test, test_skipped) = window_trials(&test_trials, &labels, &stats, length, opts.test_stride.unwrap_or(opts.stride))?;
    skipped.extend(test_skipped);
    if train.is_empty() {
        return Err(Error::EmptyScenario { side: "train" });
    }
    if test.is_empty() {
        return Err(Error::EmptyScenario { side: "test" });
    }
    Ok(ScenarioData { train, test, stats, skipped })
}

/// Test windows only, normalized with previously fitted `stats`.
pub fn build_test_windows(dataset: &Dataset, scenario: Scenario, pin: Pin, length: usize, split: &SplitSpec, opts: ScenarioOptions, stats: &ChannelStats) -> Result<(Vec<LabeledWindow>, Vec<SkipRecord>)> {
    let (_, test_trials) = cell_trials(dataset, scenario, pin, split, opts);
    let (test, skipped) = window_trials(&test_trials, &dataset.labels(), stats, length, opts.test_stride.unwrap_or(opts.stride))?;
    if test.is_empty() {
        return Err(Error::EmptyScenario { side: "test" });
    }
    Ok((test, skipped))
}
