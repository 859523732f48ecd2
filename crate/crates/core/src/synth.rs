//! Synthetic PIN-entry trajectories.
//!
//! Reaches between keys follow the minimum-jerk profile. Novice motion adds
//! larger tremor, white positional noise, slower and more variable segments,
//! and frequent overshoot-and-correct moves. The classes are separable by
//! construction; the absolute kinematics are qualitative only.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::KeyValues;
use crate::error::{Error, Result};
use crate::seed::{derive_seed, rng_from_seed};
use crate::trajectory::{
    Dataset, FrameSample, LabelRule, Modality, Participant, Pin, Provenance, Trial, Vec3, FPS, IDENTITY_QUAT, TRIALS_PER_PIN,
};

/// 3x3 keypad in a vertical plane; digit `d` sits at `key_positions[d - 1]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KeypadLayout {
    pub key_positions: [Vec3; 9],
}

impl KeypadLayout {
    /// Rows 1-2-3 (top) to 7-8-9 (bottom), centered on the z axis.
    pub fn grid(pitch: f64, plane_z: f64) -> Self {
        let key_positions = std::array::from_fn(|i| {
            let (row, col) = ((i / 3) as f64, (i % 3) as f64);
            [(col - 1.0) * pitch, (1.0 - row) * pitch, plane_z]
        });
        Self { key_positions }
    }

    pub fn key(&self, digit: u8) -> Option<Vec3> {
        (1..=9).contains(&digit).then(|| self.key_positions[digit as usize - 1])
    }
}

impl Default for KeypadLayout {
    fn default() -> Self {
        Self::grid(0.06, 0.5)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MotionProfile {
    /// Mean key-to-key reach duration, seconds.
    pub segment_duration_mean: f64,
    /// Reach durations are scaled by `1 + jitter * U(-1, 1)`.
    pub segment_duration_jitter: f64,
    pub tremor_amp: f64,
    pub tremor_freq: f64,
    pub overshoot_prob: f64,
    /// Overshoot distance as a fraction of the reach vector.
    pub overshoot_scale: f64,
    pub dwell_frames_mean: f64,
    pub path_noise_sigma: f64,
}

impl MotionProfile {
    pub fn expert() -> Self {
        Self {
            segment_duration_mean: 0.45,
            segment_duration_jitter: 0.1,
            tremor_amp: 0.0015,
            tremor_freq: 9.0,
            overshoot_prob: 0.05,
            overshoot_scale: 0.1,
            dwell_frames_mean: 6.0,
            path_noise_sigma: 0.001,
        }
    }

    pub fn novice() -> Self {
        Self {
            segment_duration_mean: 0.8,
            segment_duration_jitter: 0.4,
            tremor_amp: 0.006,
            tremor_freq: 7.0,
            overshoot_prob: 0.35,
            overshoot_scale: 0.25,
            dwell_frames_mean: 14.0,
            path_noise_sigma: 0.004,
        }
    }

    /// No tremor, noise, jitter or overshoot.
    pub fn noiseless(segment_duration_mean: f64, dwell_frames_mean: f64) -> Self {
        Self {
            segment_duration_mean,
            segment_duration_jitter: 0.0,
            tremor_amp: 0.0,
            tremor_freq: 0.0,
            overshoot_prob: 0.0,
            overshoot_scale: 0.0,
            dwell_frames_mean,
            path_noise_sigma: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [
            self.segment_duration_mean,
            self.segment_duration_jitter,
            self.tremor_amp,
            self.tremor_freq,
            self.overshoot_prob,
            self.overshoot_scale,
            self.dwell_frames_mean,
            self.path_noise_sigma,
        ];
        if fields.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidParameter("motion profile values must be finite and non-negative".into()));
        }
        if self.overshoot_prob > 1.0 {
            return Err(Error::InvalidParameter("overshoot_prob must be <= 1".into()));
        }
        if self.segment_duration_mean <= 0.0 {
            return Err(Error::InvalidParameter("segment_duration_mean must be > 0".into()));
        }
        Ok(())
    }

    fn apply_kv(&mut self, kv: &KeyValues, prefix: &str) -> Result<()> {
        for (name, slot) in self.fields_mut() {
            kv.apply(&format!("{prefix}.{name}"), slot)?;
        }
        Ok(())
    }

    fn fields_mut(&mut self) -> [(&'static str, &mut f64); 8] {
        [
            ("segment_duration_mean", &mut self.segment_duration_mean),
            ("segment_duration_jitter", &mut self.segment_duration_jitter),
            ("tremor_amp", &mut self.tremor_amp),
            ("tremor_freq", &mut self.tremor_freq),
            ("overshoot_prob", &mut self.overshoot_prob),
            ("overshoot_scale", &mut self.overshoot_scale),
            ("dwell_frames_mean", &mut self.dwell_frames_mean),
            ("path_noise_sigma", &mut self.path_noise_sigma),
        ]
    }
}

/// Everything the dataset generator needs besides cohort size and seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub expert: MotionProfile,
    pub novice: MotionProfile,
    /// Controller trials scale tremor by this factor.
    pub controller_tremor_scale: f64,
    /// Controller trials scale dwell by this factor.
    pub controller_dwell_scale: f64,
    /// Per-participant multiplicative spread on duration and tremor.
    pub participant_variation: f64,
    pub keypad_pitch: f64,
    pub keypad_plane_z: f64,
    /// Hand position before the first reach.
    pub rest: Vec3,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            expert: MotionProfile::expert(),
            novice: MotionProfile::novice(),
            controller_tremor_scale: 0.5,
            controller_dwell_scale: 1.5,
            participant_variation: 0.15,
            keypad_pitch: 0.06,
            keypad_plane_z: 0.5,
            rest: [0.05, -0.2, 0.3],
        }
    }
}

impl SynthConfig {
    pub fn from_kv(kv: &KeyValues) -> Result<Self> {
        let mut c = Self::default();
        c.apply_kv(kv)?;
        Ok(c)
    }

    /// Overrides fields present in `kv`; unknown keys are ignored.
    pub fn apply_kv(&mut self, kv: &KeyValues) -> Result<()> {
        self.expert.apply_kv(kv, "expert")?;
        self.novice.apply_kv(kv, "novice")?;
        kv.apply("controller.tremor_scale", &mut self.controller_tremor_scale)?;
        kv.apply("controller.dwell_scale", &mut self.controller_dwell_scale)?;
        kv.apply("participant_variation", &mut self.participant_variation)?;
        kv.apply("keypad.pitch", &mut self.keypad_pitch)?;
        kv.apply("keypad.plane_z", &mut self.keypad_plane_z)?;
        for (i, axis) in ["x", "y", "z"].iter().enumerate() {
            kv.apply(&format!("rest.{axis}"), &mut self.rest[i])?;
        }
        self.expert.validate()?;
        self.novice.validate()
    }

    /// Every field as `key = value`, suitable for a config file.
    pub fn to_kv(&self) -> KeyValues {
        let mut kv = KeyValues::default();
        for (prefix, mut p) in [("expert", self.expert), ("novice", self.novice)] {
            for (name, v) in p.fields_mut() {
                kv.insert(format!("{prefix}.{name}"), *v);
            }
        }
        kv.insert("controller.tremor_scale", self.controller_tremor_scale);
        kv.insert("controller.dwell_scale", self.controller_dwell_scale);
        kv.insert("participant_variation", self.participant_variation);
        kv.insert("keypad.pitch", self.keypad_pitch);
        kv.insert("keypad.plane_z", self.keypad_plane_z);
        for (i, axis) in ["x", "y", "z"].iter().enumerate() {
            kv.insert(format!("rest.{axis}"), self.rest[i]);
        }
        kv
    }

    pub fn layout(&self) -> KeypadLayout {
        KeypadLayout::grid(self.keypad_pitch, self.keypad_plane_z)
    }
}

/// Minimum-jerk position profile `10s^3 - 15s^4 + 6s^5`.
pub fn min_jerk_shape(s: f64) -> f64 {
    s * s * s * (10.0 + s * (-15.0 + 6.0 * s))
}

/// Samples a minimum-jerk reach from `p0` to `p1`.
///
/// The duration is quantized to `n = max(1, round(duration * fps))` frame
/// intervals; samples sit at `t = k / fps`, `tau = k / n` for `k = 0..=n`.
pub fn min_jerk_segment(p0: Vec3, p1: Vec3, duration: f64, fps: f64) -> Result<Vec<FrameSample>> {
    if !(duration > 0.0 && fps > 0.0) {
        return Err(Error::InvalidParameter("duration and fps must be positive".into()));
    }
    let n = ((duration * fps).round() as usize).max(1);
    Ok((0..=n)
        .map(|k| {
            let s = min_jerk_shape(k as f64 / n as f64);
            let pos = std::array::from_fn(|a| p0[a] + (p1[a] - p0[a]) * s);
            FrameSample { t: k as f64 / fps, pos, orient: IDENTITY_QUAT }
        })
        .collect())
}

fn push_reach(path: &mut Vec<Vec3>, from: Vec3, to: Vec3, duration: f64) {
    let seg = min_jerk_segment(from, to, duration, FPS).expect("positive duration");
    path.extend(seg.into_iter().skip(1).map(|f| f.pos));
}

fn path_through(waypoints: &[Vec3], profile: &MotionProfile, rng: &mut impl Rng) -> Vec<Vec3> {
    let mut path = vec![waypoints[0]];
    for pair in waypoints.windows(2) {
        let (from, to) = (pair[0], pair[1]);
        let jitter = profile.segment_duration_jitter * rng.gen_range(-1.0..=1.0);
        let duration = (profile.segment_duration_mean * (1.0 + jitter)).max(0.1);
        if rng.gen_bool(profile.overshoot_prob) {
            let reach = profile.overshoot_scale * rng.gen_range(0.5..=1.0);
            let beyond = std::array::from_fn(|a| to[a] + (to[a] - from[a]) * reach);
            push_reach(&mut path, from, beyond, duration);
            push_reach(&mut path, beyond, to, (0.3 * duration).max(2.0 / FPS));
        } else {
            push_reach(&mut path, from, to, duration);
        }
        let dwell = (profile.dwell_frames_mean * rng.gen_range(0.5..=1.5)).round() as usize;
        path.extend(std::iter::repeat_n(to, dwell));
    }
    path
}

/// Generates one trial entering `pin`, starting from the default rest position.
///
/// The returned trial carries placeholder metadata (participant `"synthetic"`,
/// hand tracking, session 1, index 0).
pub fn synth_trial(pin: Pin, profile: &MotionProfile, layout: &KeypadLayout, seed: u64) -> Trial {
    synth_trial_from(pin, profile, layout, SynthConfig::default().rest, seed)
}

pub fn synth_trial_from(pin: Pin, profile: &MotionProfile, layout: &KeypadLayout, rest: Vec3, seed: u64) -> Trial {
    let mut rng = rng_from_seed(seed);
    let mut waypoints = vec![rest];
    waypoints.extend(pin.digits().iter().map(|&d| layout.key(d).expect("PIN digits are 1..=9")));
    let path = path_through(&waypoints, profile, &mut rng);

    let phase: [f64; 3] = std::array::from_fn(|_| rng.gen_range(0.0..2.0 * PI));
    let noise = Normal::new(0.0, profile.path_noise_sigma).expect("sigma is non-negative");
    let frames = path
        .into_iter()
        .enumerate()
        .map(|(k, p)| {
            let t = k as f64 / FPS;
            let pos = std::array::from_fn(|a| {
                let mut x = p[a];
                if profile.tremor_amp > 0.0 {
                    x += profile.tremor_amp * (2.0 * PI * profile.tremor_freq * t + phase[a]).sin();
                }
                if profile.path_noise_sigma > 0.0 {
                    x += noise.sample(&mut rng);
                }
                x
            });
            FrameSample { t, pos, orient: IDENTITY_QUAT }
        })
        .collect();
    Trial {
        participant_id: "synthetic".into(),
        session: 1,
        modality: Modality::HandTracking,
        pin,
        trial_index: 0,
        frames,
    }
}

/// Self-ratings assigned to synthetic novices and experts.
pub const NOVICE_RATING: u8 = 1;
pub const EXPERT_RATING: u8 = 5;

/// Generates `2 * n_per_class` participants (ids `P001..`, alternating
/// novice/expert) with ten trials per (pin, modality).
pub fn synth_dataset(n_per_class: usize, pins: &[Pin], modalities: &[Modality], seed: u64, cfg: &SynthConfig) -> Result<Dataset> {
    if n_per_class == 0 {
        return Err(Error::InvalidParameter("n_per_class must be >= 1".into()));
    }
    cfg.expert.validate()?;
    cfg.novice.validate()?;
    let layout = cfg.layout();
    let rule = LabelRule::default();

    struct Person {
        participant: Participant,
        duration_scale: f64,
        tremor_scale: f64,
        hand_first: bool,
    }
    let people: Vec<Person> = (0..2 * n_per_class)
        .map(|i| {
            let id = format!("P{:03}", i + 1);
            let mut rng = rng_from_seed(derive_seed(seed, &["participant", &id]));
            let rating = if i % 2 == 0 { NOVICE_RATING } else { EXPERT_RATING };
            let age = rng.gen_range(20..=40);
            let gender = if rng.gen_bool(0.5) { "female" } else { "male" };
            let v = cfg.participant_variation;
            let duration_scale = 1.0 + v * rng.gen_range(-1.0..=1.0);
            let tremor_scale = 1.0 + v * rng.gen_range(-1.0..=1.0);
            let participant = Participant::new(id, age, gender, rating, rule).expect("rating in range");
            Person { participant, duration_scale, tremor_scale, hand_first: i % 2 == 0 }
        })
        .collect();

    let mut jobs = Vec::new();
    for person in &people {
        for &modality in modalities {
            for &pin in pins {
                for trial_index in 0..TRIALS_PER_PIN {
                    jobs.push((person, modality, pin, trial_index));
                }
            }
        }
    }
    let mut trials: Vec<Trial> = jobs
        .into_par_iter()
        .map(|(person, modality, pin, trial_index)| {
            let p = &person.participant;
            let mut profile = if p.class_label.index() == 1 { cfg.expert } else { cfg.novice };
            profile.segment_duration_mean *= person.duration_scale;
            profile.tremor_amp *= person.tremor_scale;
            if modality == Modality::Controller {
                profile.tremor_amp *= cfg.controller_tremor_scale;
                profile.dwell_frames_mean *= cfg.controller_dwell_scale;
            }
            let trial_seed = derive_seed(seed, &[&p.id, modality.as_str(), &pin.to_string(), &trial_index.to_string()]);
            let mut trial = synth_trial_from(pin, &profile, &layout, cfg.rest, trial_seed);
            trial.participant_id = p.id.clone();
            trial.modality = modality;
            trial.trial_index = trial_index;
            trial.session = match (modality == Modality::HandTracking, person.hand_first) {
                (true, true) | (false, false) => 1,
                _ => 2,
            };
            trial
        })
        .collect();
    trials.sort_by_key(Trial::key);
    Dataset::new(people.into_iter().map(|p| p.participant).collect(), trials, Provenance::Synthetic { seed })
}
