//! CSV ingestion and serialization of datasets.
//!
//! A dataset directory holds `frames.csv`, `participants.csv` and an optional
//! `dataset.json` sidecar recording provenance and the labeling rule.

use std::collections::btree_map::Entry;
use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{Dataset, FrameSample, LabelRule, Modality, Participant, Pin, Provenance, Trial, TrialKey};
use crate::error::{Error, Result};

pub const FRAMES_FILE: &str = "frames.csv";
pub const PARTICIPANTS_FILE: &str = "participants.csv";
pub const SIDECAR_FILE: &str = "dataset.json";

const FRAME_HEADER: [&str; 14] = [
    "participant_id", "session", "modality", "pin", "trial_index", "frame_idx", "t", "px", "py", "pz", "qx", "qy", "qz", "qw",
];
const PARTICIPANT_HEADER: [&str; 4] = ["participant_id", "age", "gender", "self_rating"];

#[derive(Debug, Serialize, Deserialize)]
struct Sidecar {
    format_version: u32,
    provenance: Provenance,
    label_rule: LabelRule,
}

#[derive(Clone, Debug)]
pub struct DatasetFiles {
    pub frames: PathBuf,
    pub participants: PathBuf,
    pub sidecar: PathBuf,
}

impl DatasetFiles {
    /// Resolves the three paths from a dataset directory or a frames CSV path.
    pub fn locate(path: &Path) -> Self {
        let (dir, frames) = if path.is_dir() {
            (path.to_path_buf(), path.join(FRAMES_FILE))
        } else {
            (path.parent().map(Path::to_path_buf).unwrap_or_default(), path.to_path_buf())
        };
        Self { frames, participants: dir.join(PARTICIPANTS_FILE), sidecar: dir.join(SIDECAR_FILE) }
    }
}

/// Decimal rendering that round-trips exactly and carries at least 9 significant digits.
pub fn format_float(v: f64) -> String {
    let mut s = format!("{v}");
    if !v.is_finite() {
        return s;
    }
    let significant = s.chars().filter(char::is_ascii_digit).skip_while(|&c| c == '0').count();
    if significant < 9 {
        if !s.contains('.') {
            s.push('.');
        }
        // a zero value has no significant digits; pad it to the same width
        s.extend(std::iter::repeat_n('0', 9 - significant));
    }
    s
}

pub fn parse_dataset(path: &Path) -> Result<Dataset> {
    let files = DatasetFiles::locate(path);
    let sidecar = read_sidecar(&files.sidecar)?;
    let rule = sidecar.as_ref().map(|s| s.label_rule).unwrap_or_default();
    parse_files(&files, rule, sidecar.map(|s| s.provenance))
}

/// Like [`parse_dataset`] but with an explicit labeling rule.
pub fn parse_dataset_with_rule(path: &Path, rule: LabelRule) -> Result<Dataset> {
    let files = DatasetFiles::locate(path);
    let provenance = read_sidecar(&files.sidecar)?.map(|s| s.provenance);
    parse_files(&files, rule, provenance)
}

fn read_sidecar(path: &Path) -> Result<Option<Sidecar>> {
    if !path.exists() {
        return Ok(None);
    }
    Ok(Some(serde_json::from_slice(&fs::read(path)?)?))
}

fn parse_files(files: &DatasetFiles, rule: LabelRule, provenance: Option<Provenance>) -> Result<Dataset> {
    let participants = parse_participants(&files.participants, rule)?;
    let trials = parse_frames(&files.frames)?;
    Dataset::new(participants, trials, provenance.unwrap_or(Provenance::Real))
}

fn reader(path: &Path) -> Result<csv::Reader<fs::File>> {
    Ok(csv::ReaderBuilder::new().has_headers(false).flexible(true).from_path(path)?)
}

fn check_header(record: Option<csv::Result<csv::StringRecord>>, expected: &[&str]) -> Result<()> {
    let record = record.ok_or_else(|| Error::MalformedRow { line: 1, reason: "missing header".into() })??;
    if record.iter().map(str::trim).ne(expected.iter().copied()) {
        return Err(Error::MalformedRow { line: 1, reason: format!("header must be `{}`", expected.join(",")) });
    }
    Ok(())
}

fn field<T: std::str::FromStr>(record: &csv::StringRecord, idx: usize, line: u64) -> Result<T> {
    let raw = record[idx].trim();
    raw.parse::<T>().map_err(|_| Error::MalformedRow { line, reason: format!("bad {} {raw:?}", FRAME_HEADER[idx]) })
}

fn float(record: &csv::StringRecord, idx: usize, line: u64) -> Result<f64> {
    let v: f64 = field(record, idx, line)?;
    if !v.is_finite() {
        return Err(Error::MalformedRow { line, reason: format!("non-finite {}", FRAME_HEADER[idx]) });
    }
    Ok(v)
}

fn parse_participants(path: &Path, rule: LabelRule) -> Result<Vec<Participant>> {
    let mut rdr = reader(path)?;
    let mut records = rdr.records();
    check_header(records.next(), &PARTICIPANT_HEADER)?;
    let mut out = Vec::new();
    for record in records {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != PARTICIPANT_HEADER.len() {
            return Err(Error::MalformedRow { line, reason: format!("expected 4 fields, got {}", record.len()) });
        }
        let malformed = |what: &str| Error::MalformedRow { line, reason: format!("bad {what}") };
        let age = record[1].trim().parse().map_err(|_| malformed("age"))?;
        let rating = record[3].trim().parse().map_err(|_| malformed("self_rating"))?;
        let p = Participant::new(record[0].trim(), age, record[2].trim(), rating, rule)
            .map_err(|e| Error::MalformedRow { line, reason: e.to_string() })?;
        out.push(p);
    }
    Ok(out)
}

struct PendingTrial {
    session: u8,
    frames: BTreeMap<u32, FrameSample>,
}

fn parse_frames(path: &Path) -> Result<Vec<Trial>> {
    let mut rdr = reader(path)?;
    let mut records = rdr.records();
    check_header(records.next(), &FRAME_HEADER)?;

    let mut pending: BTreeMap<TrialKey, PendingTrial> = BTreeMap::new();
    for record in records {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != FRAME_HEADER.len() {
            return Err(Error::MalformedRow { line, reason: format!("expected 14 fields, got {}", record.len()) });
        }
        let participant_id = record[0].trim().to_string();
        if participant_id.is_empty() {
            return Err(Error::MalformedRow { line, reason: "empty participant_id".into() });
        }
        let session: u8 = field(&record, 1, line)?;
        if !(1..=2).contains(&session) {
            return Err(Error::MalformedRow { line, reason: format!("session {session} not in {{1,2}}") });
        }
        let modality: Modality = record[2]
            .trim()
            .parse()
            .map_err(|e: Error| Error::MalformedRow { line, reason: e.to_string() })?;
        let pin_raw = record[3].trim();
        let pin: Pin = pin_raw.parse().map_err(|_| Error::UnknownPin { line, pin: pin_raw.to_string() })?;
        let trial_index: u8 = field(&record, 4, line)?;
        if trial_index >= super::TRIALS_PER_PIN {
            return Err(Error::MalformedRow { line, reason: format!("trial_index {trial_index} outside 0..=9") });
        }
        let frame_idx: u32 = field(&record, 5, line)?;
        let t = float(&record, 6, line)?;
        if t < 0.0 {
            return Err(Error::MalformedRow { line, reason: "negative t".into() });
        }
        let mut vals = [0.0; 7];
        for (i, v) in vals.iter_mut().enumerate() {
            *v = float(&record, 7 + i, line)?;
        }
        let frame = FrameSample { t, pos: [vals[0], vals[1], vals[2]], orient: [vals[3], vals[4], vals[5], vals[6]] };

        let key = TrialKey { participant_id, modality, pin, trial_index };
        let entry = pending.entry(key.clone()).or_insert_with(|| PendingTrial { session, frames: BTreeMap::new() });
        if entry.session != session {
            return Err(Error::MalformedRow { line, reason: format!("session changes within trial {key}") });
        }
        match entry.frames.entry(frame_idx) {
            Entry::Occupied(_) => return Err(Error::DuplicateKey { line, key: format!("{key}/{frame_idx}") }),
            Entry::Vacant(v) => {
                v.insert(frame);
            }
        }
    }

    let mut trials = Vec::with_capacity(pending.len());
    for (key, p) in pending {
        let mut prev: Option<f64> = None;
        for (&idx, f) in &p.frames {
            if prev.is_some_and(|t| f.t <= t) {
                return Err(Error::NonMonotoneTime { trial: key.to_string(), frame_idx: idx });
            }
            prev = Some(f.t);
        }
        trials.push(Trial {
            participant_id: key.participant_id,
            session: p.session,
            modality: key.modality,
            pin: key.pin,
            trial_index: key.trial_index,
            frames: p.frames.into_values().collect(),
        });
    }
    Ok(trials)
}

/// Writes the dataset into `dir` (created if needed), rows sorted by
/// (participant_id, modality, pin, trial_index, frame_idx).
pub fn write_dataset(dataset: &Dataset, dir: &Path, rule: LabelRule) -> Result<DatasetFiles> {
    fs::create_dir_all(dir)?;
    let files = DatasetFiles {
        frames: dir.join(FRAMES_FILE),
        participants: dir.join(PARTICIPANTS_FILE),
        sidecar: dir.join(SIDECAR_FILE),
    };

    let mut participants: Vec<&Participant> = dataset.participants.iter().collect();
    participants.sort_by(|a, b| a.id.cmp(&b.id));
    let mut w = csv::Writer::from_path(&files.participants)?;
    w.write_record(PARTICIPANT_HEADER)?;
    for p in participants {
        w.write_record([p.id.clone(), p.age.to_string(), p.gender.clone(), p.self_rating.to_string()])?;
    }
    w.flush()?;

    let mut trials: Vec<&Trial> = dataset.trials.iter().collect();
    trials.sort_by_key(|t| t.key());
    let mut w = csv::WriterBuilder::new().from_writer(std::io::BufWriter::new(fs::File::create(&files.frames)?));
    w.write_record(FRAME_HEADER)?;
    for trial in trials {
        let prefix = [
            trial.participant_id.clone(),
            trial.session.to_string(),
            trial.modality.to_string(),
            trial.pin.to_string(),
            trial.trial_index.to_string(),
        ];
        for (idx, f) in trial.frames.iter().enumerate() {
            let mut row: Vec<String> = prefix.to_vec();
            row.push(idx.to_string());
            row.push(format_float(f.t));
            row.extend(f.pos.iter().chain(f.orient.iter()).map(|&v| format_float(v)));
            w.write_record(&row)?;
        }
    }
    w.flush()?;

    let sidecar = Sidecar { format_version: 1, provenance: dataset.provenance, label_rule: rule };
    fs::write(&files.sidecar, serde_json::to_vec_pretty(&sidecar)?)?;
    Ok(files)
}
