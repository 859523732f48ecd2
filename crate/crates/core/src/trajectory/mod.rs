//! Motion-capture data model: frames, trials, participants and datasets.

mod io;
mod stats;
mod validate;

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use io::{format_float, parse_dataset, parse_dataset_with_rule, write_dataset, DatasetFiles};
pub use stats::{denormalize, fit_channel_stats, normalize, ChannelStats, STD_FLOOR};
pub use validate::{
    validate, JitterWarning, MissingCell, QuaternionViolation, ValidationReport, JITTER_TOLERANCE,
    FULL_TRIAL_COUNT, QUAT_NORM_TOLERANCE,
};

/// Nominal capture rate of the headset.
pub const FPS: f64 = 72.0;

/// Trials recorded per (participant, modality, PIN).
pub const TRIALS_PER_PIN: u8 = 10;

pub type Vec3 = [f64; 3];

/// Quaternion stored as `[x, y, z, w]`.
pub type Quat = [f64; 4];

pub const IDENTITY_QUAT: Quat = [0.0, 0.0, 0.0, 1.0];

/// One motion sample.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameSample {
    /// Seconds since trial start.
    pub t: f64,
    /// Position in meters.
    pub pos: Vec3,
    pub orient: Quat,
}

impl FrameSample {
    pub fn quat_norm(&self) -> f64 {
        self.orient.iter().map(|q| q * q).sum::<f64>().sqrt()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Modality {
    Controller,
    HandTracking,
}

impl Modality {
    pub const ALL: [Modality; 2] = [Modality::Controller, Modality::HandTracking];

    pub fn as_str(self) -> &'static str {
        match self {
            Modality::Controller => "controller",
            Modality::HandTracking => "hand",
        }
    }
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Modality {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "controller" => Ok(Modality::Controller),
            "hand" => Ok(Modality::HandTracking),
            other => Err(Error::InvalidParameter(format!("unknown modality {other:?}"))),
        }
    }
}

/// One of the four studied passcodes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u16", into = "u16")]
pub struct Pin(u16);

impl Pin {
    pub const ALL: [Pin; 4] = [Pin(1379), Pin(2468), Pin(2648), Pin(3197)];

    pub fn new(value: u16) -> Option<Pin> {
        Pin::ALL.iter().copied().find(|p| p.0 == value)
    }

    pub fn value(self) -> u16 {
        self.0
    }

    /// Digits in entry order.
    pub fn digits(self) -> [u8; 4] {
        let v = self.0;
        [(v / 1000) as u8, (v / 100 % 10) as u8, (v / 10 % 10) as u8, (v % 10) as u8]
    }
}

impl TryFrom<u16> for Pin {
    type Error = String;

    fn try_from(v: u16) -> std::result::Result<Self, String> {
        Pin::new(v).ok_or_else(|| format!("unknown PIN {v}"))
    }
}

impl From<Pin> for u16 {
    fn from(p: Pin) -> u16 {
        p.0
    }
}

impl fmt::Display for Pin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:04}", self.0)
    }
}

impl FromStr for Pin {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidParameter(format!("unknown PIN {s:?}"));
        if s.len() != 4 || !s.bytes().all(|b| b.is_ascii_digit()) {
            return Err(bad());
        }
        s.parse::<u16>().ok().and_then(Pin::new).ok_or_else(bad)
    }
}

/// Identifies a trial within a dataset.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TrialKey {
    pub participant_id: String,
    pub modality: Modality,
    pub pin: Pin,
    pub trial_index: u8,
}

impl fmt::Display for TrialKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}/{}/{}", self.participant_id, self.modality, self.pin, self.trial_index)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trial {
    pub participant_id: String,
    /// Recording session, 1 or 2.
    pub session: u8,
    pub modality: Modality,
    pub pin: Pin,
    pub trial_index: u8,
    pub frames: Vec<FrameSample>,
}

impl Trial {
    pub fn key(&self) -> TrialKey {
        TrialKey {
            participant_id: self.participant_id.clone(),
            modality: self.modality,
            pin: self.pin,
            trial_index: self.trial_index,
        }
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    fn check(&self) -> Result<()> {
        if self.frames.is_empty() {
            return Err(Error::EmptyTrial(self.key().to_string()));
        }
        if let Some(i) = self.frames.windows(2).position(|w| w[1].t <= w[0].t) {
            return Err(Error::NonMonotoneTime { trial: self.key().to_string(), frame_idx: (i + 1) as u32 });
        }
        Ok(())
    }
}

/// Binary VR-familiarity class.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Familiarity {
    Novice,
    Experienced,
}

impl Familiarity {
    /// Class index used as the training target.
    pub fn index(self) -> usize {
        match self {
            Familiarity::Novice => 0,
            Familiarity::Experienced => 1,
        }
    }
}

/// Maps a 1..5 self-rating to a class: experienced iff `rating >= threshold`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelRule {
    pub threshold: u8,
}

impl Default for LabelRule {
    fn default() -> Self {
        Self { threshold: 3 }
    }
}

impl LabelRule {
    pub fn classify(self, self_rating: u8) -> Familiarity {
        if self_rating >= self.threshold {
            Familiarity::Experienced
        } else {
            Familiarity::Novice
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Participant {
    pub id: String,
    pub age: u32,
    pub gender: String,
    pub self_rating: u8,
    pub class_label: Familiarity,
}

impl Participant {
    pub fn new(id: impl Into<String>, age: u32, gender: impl Into<String>, self_rating: u8, rule: LabelRule) -> Result<Self> {
        if !(1..=5).contains(&self_rating) {
            return Err(Error::InvalidParameter(format!("self_rating {self_rating} outside 1..=5")));
        }
        Ok(Self { id: id.into(), age, gender: gender.into(), self_rating, class_label: rule.classify(self_rating) })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Real,
    Synthetic { seed: u64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub participants: Vec<Participant>,
    pub trials: Vec<Trial>,
    pub provenance: Provenance,
}

impl Dataset {
    /// Checks referential integrity, trial-key uniqueness and per-trial frame invariants.
    pub fn new(participants: Vec<Participant>, trials: Vec<Trial>, provenance: Provenance) -> Result<Self> {
        let mut ids = BTreeSet::new();
        for p in &participants {
            if !ids.insert(p.id.as_str()) {
                return Err(Error::DuplicateParticipant(p.id.clone()));
            }
        }
        let mut keys = BTreeSet::new();
        for t in &trials {
            if !ids.contains(t.participant_id.as_str()) {
                return Err(Error::UnknownParticipant { trial: t.key().to_string(), participant: t.participant_id.clone() });
            }
            if !keys.insert(t.key()) {
                return Err(Error::DuplicateKey { line: 0, key: t.key().to_string() });
            }
            t.check()?;
        }
        Ok(Self { participants, trials, provenance })
    }

    pub fn participant(&self, id: &str) -> Option<&Participant> {
        self.participants.iter().find(|p| p.id == id)
    }

    pub fn labels(&self) -> HashMap<&str, Familiarity> {
        self.participants.iter().map(|p| (p.id.as_str(), p.class_label)).collect()
    }

    /// Removes a trial by key, returning it. Used to build incomplete datasets.
    pub fn remove_trial(&mut self, key: &TrialKey) -> Option<Trial> {
        let i = self.trials.iter().position(|t| &t.key() == key)?;
        Some(self.trials.remove(i))
    }
}
