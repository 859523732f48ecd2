use serde::{Deserialize, Serialize};

use crate::config::KeyValues;
use crate::error::{Error, Result};
use crate::models::{ModelKind, ModelSettings};
use crate::nn::{AdamConfig, LossConfig, Precision};
use crate::seed::{derive_seed, fnv1a64};
use crate::trajectory::Pin;
use crate::windowing::{CrossDeviceTest, Scenario, ScenarioOptions};

pub const DEFAULT_EPOCHS: usize = 1000;
pub const DEFAULT_BATCH_SIZE: usize = 64;

/// Everything that determines one grid cell's result.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub scenario: Scenario,
    pub pin: Pin,
    pub model: ModelKind,
    pub window_len: usize,
    pub stride: usize,
    /// Test-window stride; `None` uses `stride`.
    pub test_stride: Option<usize>,
    pub epochs: usize,
    pub batch_size: usize,
    /// Windows per inference batch; does not affect results.
    pub eval_batch_size: usize,
    pub seed: u64,
    pub split_fraction: f64,
    pub cross_device_test: CrossDeviceTest,
    pub loss: LossConfig,
    pub adam: AdamConfig,
    pub models: ModelSettings,
    pub precision: Precision,
    /// Chance-level control: random class-balanced window labels in train and test.
    pub label_shuffle: bool,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            scenario: Scenario::HandTracking,
            pin: Pin::ALL[0],
            model: ModelKind::Fcn,
            window_len: 60,
            stride: 1,
            test_stride: None,
            epochs: DEFAULT_EPOCHS,
            batch_size: DEFAULT_BATCH_SIZE,
            eval_batch_size: 256,
            seed: 0,
            split_fraction: 0.8,
            cross_device_test: CrossDeviceTest::HeldOut,
            loss: LossConfig::default(),
            adam: AdamConfig::default(),
            models: ModelSettings::default(),
            precision: Precision::F64,
            label_shuffle: false,
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::InvalidParameter("epochs must be >= 1".into()));
        }
        if self.batch_size == 0 || self.eval_batch_size == 0 {
            return Err(Error::InvalidParameter("batch sizes must be >= 1".into()));
        }
        if self.stride == 0 || self.test_stride == Some(0) {
            return Err(Error::InvalidParameter("stride must be >= 1".into()));
        }
        if !(self.split_fraction > 0.0 && self.split_fraction < 1.0) {
            return Err(Error::InvalidParameter(format!("split_fraction {} outside (0, 1)", self.split_fraction)));
        }
        let a = &self.adam;
        if !(a.learning_rate > 0.0 && (0.0..1.0).contains(&a.beta1) && (0.0..1.0).contains(&a.beta2) && a.eps_hat > 0.0) {
            return Err(Error::InvalidParameter(format!("invalid Adam settings {a:?}")));
        }
        self.loss.validate()
    }

    /// Seed of the participant split; shared by every cell of a run.
    pub fn split_seed(&self) -> u64 {
        derive_seed(self.seed, &["split"])
    }

    /// Seed for initialization and shuffling, derived from the cell identity
    /// only (never from scheduling order).
    pub fn cell_seed(&self) -> u64 {
        derive_seed(
            self.seed,
            &[self.scenario.as_str(), &self.pin.to_string(), self.model.as_str(), &self.window_len.to_string()],
        )
    }

    pub fn scenario_options(&self) -> ScenarioOptions {
        ScenarioOptions { stride: self.stride, test_stride: self.test_stride, cross_device_test: self.cross_device_test }
    }

    /// Applies recognised keys; unknown keys are left for other consumers.
    pub fn apply_kv(&mut self, kv: &KeyValues) -> Result<()> {
        kv.apply("scenario", &mut self.scenario)?;
        kv.apply("pin", &mut self.pin)?;
        kv.apply("model", &mut self.model)?;
        kv.apply("window", &mut self.window_len)?;
        kv.apply("stride", &mut self.stride)?;
        if let Some(v) = kv.get_str("test_stride") {
            self.test_stride = match v {
                "" | "same" => None,
                v => Some(v.parse().map_err(|_| Error::InvalidParameter(format!("test_stride: bad value {v:?}")))?),
            };
        }
        kv.apply("epochs", &mut self.epochs)?;
        kv.apply("batch_size", &mut self.batch_size)?;
        kv.apply("eval_batch_size", &mut self.eval_batch_size)?;
        kv.apply("seed", &mut self.seed)?;
        kv.apply("split_fraction", &mut self.split_fraction)?;
        kv.apply("cross_device_test", &mut self.cross_device_test)?;
        kv.apply("epsilon", &mut self.loss.epsilon)?;
        kv.apply("adam.lr", &mut self.adam.learning_rate)?;
        kv.apply("adam.beta1", &mut self.adam.beta1)?;
        kv.apply("adam.beta2", &mut self.adam.beta2)?;
        kv.apply("adam.eps", &mut self.adam.eps_hat)?;
        kv.apply("precision", &mut self.precision)?;
        kv.apply("label_shuffle", &mut self.label_shuffle)?;
        self.models.apply_kv(kv)
    }

    /// Every setting as key/value pairs; `apply_kv(to_kv())` is the identity.
    pub fn to_kv(&self) -> KeyValues {
        let mut kv = self.models.to_kv();
        kv.insert("scenario", self.scenario);
        kv.insert("pin", self.pin);
        kv.insert("model", self.model);
        kv.insert("window", self.window_len);
        kv.insert("stride", self.stride);
        kv.insert("test_stride", self.test_stride.map_or_else(|| "same".to_string(), |v| v.to_string()));
        kv.insert("epochs", self.epochs);
        kv.insert("batch_size", self.batch_size);
        kv.insert("eval_batch_size", self.eval_batch_size);
        kv.insert("seed", self.seed);
        kv.insert("split_fraction", self.split_fraction);
        kv.insert(
            "cross_device_test",
            match self.cross_device_test {
                CrossDeviceTest::HeldOut => "held_out",
                CrossDeviceTest::AllParticipants => "all_participants",
            },
        );
        kv.insert("epsilon", self.loss.epsilon);
        kv.insert("adam.lr", self.adam.learning_rate);
        kv.insert("adam.beta1", self.adam.beta1);
        kv.insert("adam.beta2", self.adam.beta2);
        kv.insert("adam.eps", self.adam.eps_hat);
        kv.insert("precision", self.precision.as_str());
        kv.insert("label_shuffle", self.label_shuffle);
        kv
    }

    /// Short stable digest of the full configuration.
    pub fn config_hash(&self) -> String {
        format!("{:016x}", fnv1a64(self.to_kv().to_text().as_bytes()))
    }
}
