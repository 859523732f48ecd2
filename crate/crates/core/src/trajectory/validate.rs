use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::{Dataset, Modality, Pin, TrialKey, FPS, TRIALS_PER_PIN};

/// Trials in a complete recording: 26 participants x 40 trials x 2 modalities.
pub const FULL_TRIAL_COUNT: usize = 2080;

/// Allowed deviation of |q| from 1.
pub const QUAT_NORM_TOLERANCE: f64 = 1e-3;

/// Relative deviation of a frame interval from 1/72 s before a warning is raised.
pub const JITTER_TOLERANCE: f64 = 0.2;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JitterWarning {
    pub trial: TrialKey,
    /// Index of the later frame of the offending interval.
    pub frame_idx: usize,
    pub dt: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuaternionViolation {
    pub trial: TrialKey,
    pub frame_idx: usize,
    pub norm: f64,
}

/// A (participant, modality, pin, trial_index) cell with no recorded trial.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct MissingCell {
    pub participant_id: String,
    pub modality: Modality,
    pub pin: Pin,
    pub trial_index: u8,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub participant_count: usize,
    pub trial_count: usize,
    pub frame_counts: Vec<(TrialKey, usize)>,
    pub jitter_warnings: Vec<JitterWarning>,
    pub missing_cells: Vec<MissingCell>,
    pub quaternion_violations: Vec<QuaternionViolation>,
    /// True when the dataset has the full 2080-trial shape.
    pub full_cohort: bool,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.jitter_warnings.is_empty() && self.missing_cells.is_empty() && self.quaternion_violations.is_empty()
    }
}

/// Inspects a dataset without modifying it.
///
/// Expected cells are every participant crossed with every modality and PIN
/// that occurs anywhere in the dataset, and trial indices `0..10`.
pub fn validate(d: &Dataset) -> ValidationReport {
    let nominal = 1.0 / FPS;
    let mut frame_counts = Vec::with_capacity(d.trials.len());
    let mut jitter_warnings = Vec::new();
    let mut quaternion_violations = Vec::new();

    for trial in &d.trials {
        let key = trial.key();
        frame_counts.push((key.clone(), trial.frames.len()));
        for (i, pair) in trial.frames.windows(2).enumerate() {
            let dt = pair[1].t - pair[0].t;
            if ((dt - nominal) / nominal).abs() > JITTER_TOLERANCE {
                jitter_warnings.push(JitterWarning { trial: key.clone(), frame_idx: i + 1, dt });
            }
        }
        for (i, f) in trial.frames.iter().enumerate() {
            let norm = f.quat_norm();
            if (norm - 1.0).abs() > QUAT_NORM_TOLERANCE {
                quaternion_violations.push(QuaternionViolation { trial: key.clone(), frame_idx: i, norm });
            }
        }
    }

    let modalities: BTreeSet<Modality> = d.trials.iter().map(|t| t.modality).collect();
    let pins: BTreeSet<Pin> = d.trials.iter().map(|t| t.pin).collect();
    let present: BTreeSet<TrialKey> = d.trials.iter().map(|t| t.key()).collect();
    let mut missing_cells = Vec::new();
    for p in &d.participants {
        for &modality in &modalities {
            for &pin in &pins {
                for trial_index in 0..TRIALS_PER_PIN {
                    let key = TrialKey { participant_id: p.id.clone(), modality, pin, trial_index };
                    if !present.contains(&key) {
                        missing_cells.push(MissingCell { participant_id: p.id.clone(), modality, pin, trial_index });
                    }
                }
            }
        }
    }
    missing_cells.sort();

    let full_cohort = d.trials.len() == FULL_TRIAL_COUNT
        && missing_cells.is_empty()
        && modalities.len() == Modality::ALL.len()
        && pins.len() == Pin::ALL.len();

    ValidationReport {
        participant_count: d.participants.len(),
        trial_count: d.trials.len(),
        frame_counts,
        jitter_warnings,
        missing_cells,
        quaternion_violations,
        full_cohort,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trajectory::{FrameSample, LabelRule, Participant, Provenance, Trial, IDENTITY_QUAT};

    fn small() -> Dataset {
        let p = Participant::new("P1", 30, "f", 5, LabelRule::default()).unwrap();
        let frames = (0..4).map(|i| FrameSample { t: i as f64 / FPS, pos: [0.0; 3], orient: IDENTITY_QUAT }).collect();
        let trial = Trial {
            participant_id: "P1".into(),
            session: 1,
            modality: Modality::HandTracking,
            pin: Pin::ALL[0],
            trial_index: 0,
            frames,
        };
        Dataset::new(vec![p], vec![trial], Provenance::Real).unwrap()
    }

    #[test]
    fn quaternion_norm_violation_is_reported() {
        let mut d = small();
        d.trials[0].frames[2].orient = [0.0, 0.0, 0.0, 2.0];
        let r = validate(&d);
        assert_eq!(r.quaternion_violations.len(), 1);
        assert_eq!(r.quaternion_violations[0].frame_idx, 2);
        assert!((r.quaternion_violations[0].norm - 2.0).abs() < 1e-15);
    }

    #[test]
    fn jitter_beyond_twenty_percent_warns() {
        let mut d = small();
        d.trials[0].frames[3].t += 0.3 / FPS;
        let r = validate(&d);
        assert_eq!(r.jitter_warnings.len(), 1);
        assert_eq!(r.jitter_warnings[0].frame_idx, 3);
        d.trials[0].frames[3].t -= 0.2 / FPS;
        assert!(validate(&d).jitter_warnings.is_empty());
    }

    #[test]
    fn missing_indices_are_listed() {
        let r = validate(&small());
        assert_eq!(r.trial_count, 1);
        assert_eq!(r.missing_cells.len(), 9);
        assert!(!r.full_cohort);
    }
}
