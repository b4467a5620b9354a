//! Training configuration.
//!
//! Loads from a flat TOML key-value document whose keys match the field
//! names exactly; unknown keys are rejected. Command-line overrides are
//! applied by the CLI after parsing, flags winning over file values.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trainer::mode::{mode_by_name, mode_names};

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    /// Samples drawn per domain per step.
    pub batch_size: usize,
    pub epochs: usize,
    /// 0 selects ceil(max(N_s, N_t) / batch_size).
    pub iters_per_epoch: usize,
    pub lr: f64,
    pub momentum: f64,
    /// Student's-t kernel degree of freedom.
    pub alpha: f64,
    /// Steepness of the GRL lambda ramp.
    pub gamma: f64,
    pub max_lambda: f64,
    /// Share of the one-hot pseudo-label in the mixed auxiliary target.
    pub mix_weight: f64,
    pub seed: u64,
    /// One of the registered training modes.
    pub mode: String,
    /// Use the mixed soft distribution instead of hard pseudo-labels in
    /// the target classification loss.
    pub soft_target_cls: bool,
    /// Re-run the k-means initialization block at the start of every
    /// epoch instead of only once.
    pub reinit_kmeans_each_epoch: bool,
    pub embed_dim: usize,
    pub feature_hidden: Vec<usize>,
    pub disc_hidden: Vec<usize>,
    pub w_source_cls: f64,
    pub w_target_cls: f64,
    pub w_domain: f64,
    pub w_cluster: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 32,
            epochs: 120,
            iters_per_epoch: 0,
            lr: 0.005,
            momentum: 0.9,
            alpha: 1.0,
            gamma: 5.0,
            max_lambda: 0.5,
            mix_weight: 0.5,
            seed: 0,
            mode: "dcda_full".into(),
            soft_target_cls: false,
            reinit_kmeans_each_epoch: true,
            embed_dim: 16,
            feature_hidden: vec![64, 32],
            disc_hidden: vec![32],
            w_source_cls: 1.0,
            w_target_cls: 1.0,
            w_domain: 1.0,
            w_cluster: 1.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size < 2 {
            return Err(Error::InvalidConfig(format!(
                "batch_size must be >= 2, got {}",
                self.batch_size
            )));
        }
        if self.epochs == 0 {
            return Err(Error::InvalidConfig("epochs must be >= 1".into()));
        }
        if self.lr.is_nan() || self.lr <= 0.0 {
            return Err(Error::InvalidConfig(format!("lr must be > 0, got {}", self.lr)));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::InvalidConfig(format!(
                "momentum must lie in [0,1), got {}",
                self.momentum
            )));
        }
        if self.alpha.is_nan() || self.alpha <= 0.0 {
            return Err(Error::InvalidConfig(format!(
                "alpha must be > 0, got {}",
                self.alpha
            )));
        }
        if self.max_lambda < 0.0 {
            return Err(Error::InvalidConfig(format!(
                "max_lambda must be >= 0, got {}",
                self.max_lambda
            )));
        }
        if !(0.0..=1.0).contains(&self.mix_weight) {
            return Err(Error::InvalidConfig(format!(
                "mix_weight must lie in [0,1], got {}",
                self.mix_weight
            )));
        }
        if self.embed_dim == 0 {
            return Err(Error::InvalidConfig("embed_dim must be >= 1".into()));
        }
        mode_by_name(&self.mode)?;
        for (name, w) in [
            ("w_source_cls", self.w_source_cls),
            ("w_target_cls", self.w_target_cls),
            ("w_domain", self.w_domain),
            ("w_cluster", self.w_cluster),
        ] {
            if !w.is_finite() || w < 0.0 {
                return Err(Error::InvalidConfig(format!(
                    "{name} must be finite and >= 0, got {w}"
                )));
            }
        }
        Ok(())
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let config: TrainConfig = toml::from_str(text).map_err(|e| {
            Error::InvalidConfig(format!(
                "config parse failed ({e}); known keys: {}; known modes: {}",
                KNOWN_KEYS.join(", "),
                mode_names().join(", ")
            ))
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::io(path.display().to_string(), e))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

const KNOWN_KEYS: &[&str] = &[
    "batch_size",
    "epochs",
    "iters_per_epoch",
    "lr",
    "momentum",
    "alpha",
    "gamma",
    "max_lambda",
    "mix_weight",
    "seed",
    "mode",
    "soft_target_cls",
    "reinit_kmeans_each_epoch",
    "embed_dim",
    "feature_hidden",
    "disc_hidden",
    "w_source_cls",
    "w_target_cls",
    "w_domain",
    "w_cluster",
];

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_is_valid() {
        TrainConfig::default().validate().unwrap();
    }

    #[test]
    fn round_trips_through_toml() {
        let config = TrainConfig {
            seed: 42,
            mode: "da_only".into(),
            feature_hidden: vec![8, 4],
            ..TrainConfig::default()
        };
        let text = config.to_toml_string();
        let parsed = TrainConfig::from_toml_str(&text).unwrap();
        assert_eq!(config, parsed);
    }

    #[test]
    fn unknown_keys_rejected() {
        let err = TrainConfig::from_toml_str("learning_rate = 0.1\n").unwrap_err();
        assert!(err.to_string().contains("known keys"), "was: {err}");
    }

    #[test]
    fn invalid_values_rejected() {
        assert!(TrainConfig::from_toml_str("batch_size = 1\n").is_err());
        assert!(TrainConfig::from_toml_str("lr = 0.0\n").is_err());
        assert!(TrainConfig::from_toml_str("momentum = 1.0\n").is_err());
        assert!(TrainConfig::from_toml_str("mode = \"dcda\"\n").is_err());
        assert!(TrainConfig::from_toml_str("mix_weight = 1.5\n").is_err());
    }

    #[test]
    fn partial_file_fills_defaults() {
        let config = TrainConfig::from_toml_str("seed = 9\nepochs = 3\n").unwrap();
        assert_eq!(config.seed, 9);
        assert_eq!(config.epochs, 3);
        assert_eq!(config.batch_size, 32);
    }
}
