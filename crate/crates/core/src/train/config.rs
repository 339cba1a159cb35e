use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::encoder::EncoderConfig;
use crate::error::{Error, Result};
use crate::generator::GeneratorConfig;
use crate::graph::{DynamicNetwork, MetapathSpec};
use crate::importance::ImportanceConfig;
use crate::imputer::TrajectoryConfig;
use crate::ppr::PprConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    /// Years of imputed history fed to the trajectory encoder.
    pub history_window: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    /// Weight of the temporal alignment term.
    pub beta_time: f64,
    pub epochs: usize,
    /// Early stopping patience on validation MAE, in epochs.
    pub patience: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            history_window: 3,
            learning_rate: 1e-3,
            batch_size: 3000,
            beta_time: 0.5,
            epochs: 50,
            patience: 10,
            seed: 0,
        }
    }
}

/// Publication-year split: `train_years` consecutive training years, then one
/// validation year and one test year. Without `first_train_year` the test
/// year is the last observed year.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitConfig {
    pub train_years: usize,
    pub first_train_year: Option<i32>,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self {
            train_years: 6,
            first_train_year: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<i32>,
    pub val: i32,
    pub test: i32,
}

impl Split {
    pub fn years(&self, split: SplitName) -> Vec<i32> {
        match split {
            SplitName::Train => self.train.clone(),
            SplitName::Val => vec![self.val],
            SplitName::Test => vec![self.test],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitName {
    Train,
    Val,
    Test,
}

impl SplitName {
    pub fn name(self) -> &'static str {
        match self {
            SplitName::Train => "train",
            SplitName::Val => "val",
            SplitName::Test => "test",
        }
    }
}

impl std::str::FromStr for SplitName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(SplitName::Train),
            "val" | "validation" => Ok(SplitName::Val),
            "test" => Ok(SplitName::Test),
            other => Err(Error::InvalidConfig(format!("unknown split {other:?}"))),
        }
    }
}

impl SplitConfig {
    pub fn resolve(&self, network: &DynamicNetwork) -> Result<Split> {
        if self.train_years == 0 {
            return Err(Error::InvalidConfig("train_years must be positive".into()));
        }
        let n = self.train_years as i32;
        let first = self.first_train_year.unwrap_or(network.last_year() - n - 1);
        let split = Split {
            train: (first..first + n).collect(),
            val: first + n,
            test: first + n + 1,
        };
        if first <= network.first_year() || split.test > network.last_year() {
            return Err(Error::InvalidConfig(format!(
                "split {first}..={} does not fit the observed years {}..={} with at least one year of history",
                split.test,
                network.first_year(),
                network.last_year()
            )));
        }
        Ok(split)
    }
}

/// Everything a run needs. Widths shared between modules are set once via
/// `dim` and `feature_dim` and copied into the module configs by [`Config::resolve`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Config {
    pub dim: usize,
    pub feature_dim: usize,
    pub metapaths: Vec<String>,
    pub train: TrainConfig,
    pub split: SplitConfig,
    pub ppr: PprConfig,
    pub encoder: EncoderConfig,
    pub trajectory: TrajectoryConfig,
    pub importance: ImportanceConfig,
    pub generator: GeneratorConfig,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            dim: 32,
            feature_dim: 32,
            metapaths: vec!["PAP".into(), "PVP".into(), "PKP".into()],
            train: TrainConfig::default(),
            split: SplitConfig::default(),
            ppr: PprConfig::default(),
            encoder: EncoderConfig::default(),
            trajectory: TrajectoryConfig::default(),
            importance: ImportanceConfig::default(),
            generator: GeneratorConfig::default(),
        }
    }
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Config = toml::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        cfg.resolve()
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serialises")
    }

    /// Copy shared widths into the module configs and validate.
    pub fn resolve(mut self) -> Result<Self> {
        self.encoder.input_dim = self.feature_dim;
        self.encoder.dim = self.dim;
        self.trajectory.hidden = self.dim;
        self.importance.input_dim = self.feature_dim;
        self.importance.dim = self.dim;
        self.importance.k = self.ppr.k;
        self.encoder.validate()?;
        self.ppr.validate()?;
        self.generator.validate()?;
        for m in &self.metapaths {
            MetapathSpec::parse(m)?;
        }
        if self.metapaths.is_empty() {
            return Err(Error::InvalidConfig("at least one metapath is required".into()));
        }
        let t = &self.train;
        if t.history_window == 0 || t.batch_size == 0 {
            return Err(Error::InvalidConfig("history_window and batch_size must be positive".into()));
        }
        if !(t.learning_rate > 0.0) || !(t.beta_time >= 0.0) {
            return Err(Error::InvalidConfig("learning_rate must be positive and beta_time nonnegative".into()));
        }
        Ok(self)
    }

    pub fn metapath_specs(&self) -> Vec<MetapathSpec> {
        self.metapaths.iter().map(|m| MetapathSpec::parse(m).expect("validated")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_roundtrip_through_toml() {
        let cfg = Config::default().resolve().unwrap();
        let back = Config::from_toml(&cfg.to_toml()).unwrap();
        assert_eq!(cfg, back);
    }

    #[test]
    fn partial_files_fill_defaults() {
        let cfg = Config::from_toml("dim = 16\n[train]\nepochs = 3\n").unwrap();
        assert_eq!(cfg.train.epochs, 3);
        assert_eq!(cfg.train.batch_size, 3000);
        assert_eq!(cfg.encoder.dim, 16);
        assert_eq!(cfg.importance.k, 32);
    }

    #[test]
    fn bad_values_are_rejected() {
        assert!(Config::from_toml("metapaths = [\"PXP\"]").is_err());
        assert!(Config::from_toml("[ppr]\nalpha = 1.5").is_err());
        assert!(Config::from_toml("dim = 30").is_err());
    }
}
