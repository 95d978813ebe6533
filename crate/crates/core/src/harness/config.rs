//! Experiment configuration. A TOML file with explicit units (dBm, MHz,
//! Mbps); every field is optional and defaults to the reference scenario at
//! desk scale. Units are converted to SI once, here.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::alloc::BestChannelRule;
use crate::error::{Error, Result};
use crate::gnn::{Activation, TrainConfig, TrainMode};
use crate::model::SystemParams;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SystemSection {
    pub tx_power_dbm: f64,
    pub total_bandwidth_mhz: f64,
    pub noise_density_dbm_per_hz: f64,
    pub path_loss_exp: f64,
    pub min_secrecy_rate_mbps: f64,
    pub area_half_width_m: f64,
    pub num_users: usize,
}

impl Default for SystemSection {
    fn default() -> Self {
        SystemSection {
            tx_power_dbm: 23.0,
            total_bandwidth_mhz: 10.0,
            noise_density_dbm_per_hz: -174.0,
            path_loss_exp: 3.0,
            min_secrecy_rate_mbps: 0.8,
            area_half_width_m: 100.0,
            num_users: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    pub train_samples: usize,
    pub test_samples: usize,
    /// Block size used for the iterative-search labels and the reference.
    pub label_delta_w_mhz: f64,
}

impl Default for DataSection {
    fn default() -> Self {
        DataSection {
            train_samples: 20_000,
            test_samples: 1_000,
            label_delta_w_mhz: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub hidden_activation: Activation,
}

impl Default for TrainSection {
    fn default() -> Self {
        TrainSection {
            learning_rate: 0.5,
            batch_size: 64,
            epochs: 50,
            hidden_activation: Activation::Tanh,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub bec_rule: BestChannelRule,
    pub moving_average_window: usize,
    pub sweep_delta_w_mhz: Vec<f64>,
    pub uncertainty_fractions: Vec<f64>,
}

impl Default for EvalSection {
    fn default() -> Self {
        EvalSection {
            bec_rule: BestChannelRule::LegitimateSnr,
            moving_average_window: 50,
            sweep_delta_w_mhz: vec![1.0, 0.1, 0.01],
            uncertainty_fractions: (0..=6).map(|i| f64::from(i) * 25.0 / 1000.0).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub output_dir: PathBuf,
    pub system: SystemSection,
    pub data: DataSection,
    pub train: TrainSection,
    pub eval: EvalSection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: 2024,
            output_dir: PathBuf::from("runs"),
            system: SystemSection::default(),
            data: DataSection::default(),
            train: TrainSection::default(),
            eval: EvalSection::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::format("config", e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::format("config", e.to_string()))
    }

    /// Full-size training set (1e5 samples).
    pub fn full_scale(mut self) -> Self {
        self.data.train_samples = 100_000;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.system_params()?;
        let bad = |msg: String| Err(Error::InvalidParam(msg));
        if self.system.num_users == 0 {
            return bad("num_users must be >= 1".into());
        }
        if !(self.data.label_delta_w_mhz > 0.0) {
            return bad("label_delta_w_mhz must be > 0".into());
        }
        if self.eval.sweep_delta_w_mhz.iter().any(|&v| !(v > 0.0)) {
            return bad("sweep_delta_w_mhz entries must be > 0".into());
        }
        if self.eval.uncertainty_fractions.iter().any(|&v| !(0.0..=1.0).contains(&v)) {
            return bad("uncertainty_fractions must lie in [0, 1]".into());
        }
        if self.eval.moving_average_window == 0 {
            return bad("moving_average_window must be >= 1".into());
        }
        self.train_config(TrainMode::Usl).validate()
    }

    pub fn system_params(&self) -> Result<SystemParams> {
        let s = &self.system;
        SystemParams::from_table_units(
            s.tx_power_dbm,
            s.total_bandwidth_mhz,
            s.noise_density_dbm_per_hz,
            s.path_loss_exp,
            s.min_secrecy_rate_mbps,
            s.area_half_width_m,
        )
    }

    pub fn label_delta_w_hz(&self) -> f64 {
        self.data.label_delta_w_mhz * 1e6
    }

    pub fn train_config(&self, mode: TrainMode) -> TrainConfig {
        TrainConfig {
            learning_rate: self.train.learning_rate,
            batch_size: self.train.batch_size,
            epochs: self.train.epochs,
            mode,
            seed: derive_seed(self.seed, &format!("train-{}", mode.as_str()), 0),
            hidden_activation: self.train.hidden_activation,
        }
    }

    /// Hash of everything that determines the generated data.
    pub fn data_hash(&self) -> String {
        let key = serde_json::json!({
            "seed": self.seed,
            "system": self.system,
            "label_delta_w_mhz": self.data.label_delta_w_mhz,
        });
        hex(&Sha256::digest(key.to_string().as_bytes()))
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// SplitMix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Independent per-stage, per-item seed from the master seed.
pub fn derive_seed(master: u64, stream: &str, index: u64) -> u64 {
    let tag = stream
        .bytes()
        .fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3));
    mix(mix(master ^ tag) ^ index)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_reference_params() {
        let cfg = ExperimentConfig::default();
        cfg.validate().unwrap();
        assert_eq!(cfg.system_params().unwrap(), SystemParams::reference());
        assert_eq!(cfg.eval.uncertainty_fractions.len(), 7);
        assert_eq!(cfg.full_scale().data.train_samples, 100_000);
    }

    #[test]
    fn partial_file_fills_defaults() {
        let cfg = ExperimentConfig::from_toml(
            "seed = 9\n[system]\ntotal_bandwidth_mhz = 20.0\n[eval]\nbec_rule = \"marginal-gain\"\n",
        )
        .unwrap();
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.system_params().unwrap().total_bandwidth_hz, 20e6);
        assert_eq!(cfg.eval.bec_rule, BestChannelRule::MarginalGain);
        assert_eq!(cfg.data, DataSection::default());
    }

    #[test]
    fn rejects_bad_values() {
        for text in [
            "[system]\nmin_secrecy_rate_mbps = 0.0\n",
            "[system]\nnum_users = 0\n",
            "[eval]\nsweep_delta_w_mhz = [1.0, -0.1]\n",
            "[eval]\nuncertainty_fractions = [1.5]\n",
            "[train]\nbatch_size = 0\n",
            "[system]\nunknown_key = 1\n",
        ] {
            assert!(ExperimentConfig::from_toml(text).is_err(), "{text}");
        }
    }

    #[test]
    fn toml_round_trip() {
        let cfg = ExperimentConfig::default();
        assert_eq!(ExperimentConfig::from_toml(&cfg.to_toml().unwrap()).unwrap(), cfg);
    }

    #[test]
    fn streams_are_distinct() {
        let a = derive_seed(1, "train", 0);
        assert_ne!(a, derive_seed(1, "test", 0));
        assert_ne!(a, derive_seed(1, "train", 1));
        assert_ne!(a, derive_seed(2, "train", 0));
        assert_eq!(a, derive_seed(1, "train", 0));
    }
}
