use std::path::{Path, PathBuf};

use alimony_core::audit::AuditConfig;
use alimony_core::data::{Subset, SyntheticConfig};
use alimony_core::hurdle::HurdleConfig;
use alimony_service::ServiceConfig;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    /// Defaults to `<out>/data.csv`.
    pub data: Option<PathBuf>,
    /// Defaults to `<out>/schema.toml`.
    pub schema: Option<PathBuf>,
    /// Defaults to `<out>/model.artifact`.
    pub model: Option<PathBuf>,
    /// Defaults to `out`.
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenerateConfig {
    /// Used when `synthetic` is absent: the reference generator at this size.
    pub n_cases: usize,
    pub synthetic: Option<SyntheticConfig>,
}

impl Default for GenerateConfig {
    fn default() -> Self {
        Self {
            n_cases: 2000,
            synthetic: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    pub test_fraction: f64,
    pub subset: Subset,
    pub exclude_monthly: bool,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self {
            test_fraction: 0.2,
            subset: Subset::All,
            exclude_monthly: true,
        }
    }
}

/// Contents of the `--config` TOML file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Drives generation, forest bootstrap, the split and the audit split.
    pub seed: Option<u64>,
    pub paths: Paths,
    pub generate: GenerateConfig,
    pub model: HurdleConfig,
    pub split: SplitConfig,
    pub audit: AuditConfig,
    pub service: ServiceConfig,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::input_missing(path, e))?;
        toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    pub fn seed(&self) -> Result<u64, CliError> {
        self.seed
            .ok_or_else(|| CliError::Config("a seed is required: set `seed` in the config or pass --seed".into()))
    }

    pub fn out_dir(&self) -> PathBuf {
        self.paths.out.clone().unwrap_or_else(|| PathBuf::from("out"))
    }

    pub fn data_path(&self) -> PathBuf {
        self.paths.data.clone().unwrap_or_else(|| self.out_dir().join("data.csv"))
    }

    pub fn schema_path(&self) -> PathBuf {
        self.paths.schema.clone().unwrap_or_else(|| self.out_dir().join("schema.toml"))
    }

    pub fn model_path(&self) -> PathBuf {
        self.paths.model.clone().unwrap_or_else(|| self.out_dir().join("model.artifact"))
    }

    /// The generator configuration with the run seed applied.
    pub fn synthetic(&self) -> Result<SyntheticConfig, CliError> {
        let seed = self.seed()?;
        let mut synth = self
            .generate
            .synthetic
            .clone()
            .unwrap_or_else(|| SyntheticConfig::reference(self.generate.n_cases, seed));
        synth.seed = seed;
        Ok(synth)
    }

    /// The model configuration with the run seed applied to the forest.
    pub fn hurdle(&self) -> Result<HurdleConfig, CliError> {
        let mut model = self.model.clone();
        model.forest.seed = self.seed()?;
        Ok(model)
    }

    pub fn audit(&self) -> Result<AuditConfig, CliError> {
        let mut audit = self.audit.clone();
        audit.split_seed = self.seed()?;
        audit.test_fraction = self.split.test_fraction;
        Ok(audit)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sparse_file_fills_defaults() {
        let c: RunConfig = toml::from_str("seed = 3\n[model.forest]\nn_trees = 10\n").unwrap();
        assert_eq!(c.seed().unwrap(), 3);
        assert_eq!(c.model.forest.n_trees, 10);
        assert_eq!(c.data_path(), PathBuf::from("out/data.csv"));
        assert_eq!(c.hurdle().unwrap().forest.seed, 3);
        assert_eq!(c.synthetic().unwrap().n_cases, 2000);
    }

    #[test]
    fn unknown_keys_and_missing_seed_are_errors() {
        assert!(toml::from_str::<RunConfig>("sede = 3\n").is_err());
        assert!(RunConfig::default().seed().is_err());
    }

    #[test]
    fn full_config_round_trips() {
        let mut c = RunConfig {
            seed: Some(9),
            ..RunConfig::default()
        };
        c.generate.synthetic = Some(SyntheticConfig::reference(100, 1));
        let text = toml::to_string(&c).unwrap();
        assert_eq!(toml::from_str::<RunConfig>(&text).unwrap(), c);
    }
}
