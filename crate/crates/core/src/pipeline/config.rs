use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::balance::BalanceConfig;
use crate::corpus::DEFAULT_LOOKUP_ENDPOINT;
use crate::evaluate::{critical_value, Averaging, CvConfig};
use crate::models::{ModelKind, ModelSpec};
use crate::preprocess::PreprocessConfig;
use crate::seed::{self, Stream};
use crate::vectorize::DEFAULT_TOKEN_CAP;

/// Relative paths resolve against the directory of the config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub index: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fixture: Option<PathBuf>,
    pub out: PathBuf,
    /// `model,accuracy,precision,recall,f1` means to compare against.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reference: Option<PathBuf>,
    /// Same format; rows are added to the report as externally supplied
    /// results.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub external: Option<PathBuf>,
}

impl Default for Paths {
    fn default() -> Self {
        Paths {
            index: None,
            fixture: None,
            out: PathBuf::from("out"),
            reference: None,
            external: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HydrationKind {
    Fixture,
    Live,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HydrationSettings {
    pub mode: HydrationKind,
    pub endpoint: String,
    pub parallelism: usize,
    pub max_retries: u32,
}

impl Default for HydrationSettings {
    fn default() -> Self {
        HydrationSettings {
            mode: HydrationKind::Fixture,
            endpoint: DEFAULT_LOOKUP_ENDPOINT.to_string(),
            parallelism: 4,
            max_retries: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VectorizeSettings {
    pub token_cap: usize,
}

impl Default for VectorizeSettings {
    fn default() -> Self {
        VectorizeSettings {
            token_cap: DEFAULT_TOKEN_CAP,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluateSettings {
    pub k: usize,
    pub repeats: usize,
    pub mu0: f64,
    pub alpha: f64,
    /// Model whose fold accuracies go into the t-test.
    pub ttest_model: ModelKind,
    pub averaging: Averaging,
}

impl Default for EvaluateSettings {
    fn default() -> Self {
        EvaluateSettings {
            k: 5,
            repeats: 6,
            mu0: 0.93,
            alpha: 0.05,
            ttest_model: ModelKind::LinearSvm,
            averaging: Averaging::Binary,
        }
    }
}

fn default_models() -> Vec<ModelSpec> {
    ModelKind::ALL.iter().map(|&k| ModelSpec::default_for(k, 0)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Master seed; every stage seed is derived from it.
    pub seed: u64,
    pub paths: Paths,
    pub hydration: HydrationSettings,
    pub preprocess: PreprocessConfig,
    pub vectorize: VectorizeSettings,
    /// `seed` here is ignored; balancing seeds derive from the master seed.
    pub balance: BalanceConfig,
    pub evaluate: EvaluateSettings,
    pub models: Vec<ModelSpec>,
    /// Directory relative paths resolve against. Not part of the file.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            seed: 0,
            paths: Paths::default(),
            hydration: HydrationSettings::default(),
            preprocess: PreprocessConfig::default(),
            vectorize: VectorizeSettings::default(),
            balance: BalanceConfig::default(),
            evaluate: EvaluateSettings::default(),
            models: default_models(),
            base_dir: PathBuf::from("."),
        }
    }
}

impl PipelineConfig {
    pub fn from_toml(s: &str) -> Result<Self, PipelineError> {
        toml::from_str(s).map_err(|e| PipelineError::Config(e.to_string()))
    }

    /// Panics on seeds above `i64::MAX`, which TOML integers cannot hold.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes to TOML")
    }

    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| PipelineError::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text)?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(cfg)
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn out_dir(&self) -> PathBuf {
        self.resolve(&self.paths.out)
    }

    /// Configuration as recorded in manifests and reports: the output
    /// directory is left out so relocating a run does not change artifacts.
    pub fn snapshot(&self) -> serde_json::Value {
        let mut v = serde_json::to_value(self).expect("config serializes");
        if let Some(paths) = v.get_mut("paths").and_then(|p| p.as_object_mut()) {
            paths.remove("out");
        }
        v
    }

    pub fn balance_config(&self) -> BalanceConfig {
        BalanceConfig {
            seed: seed::derive(self.seed, Stream::Balance, 0),
            ..self.balance.clone()
        }
    }

    pub fn cv_config(&self) -> CvConfig {
        CvConfig {
            k: self.evaluate.k,
            repeats: self.evaluate.repeats,
            seed: self.seed,
            preprocess: self.preprocess,
            token_cap: self.vectorize.token_cap,
            balance: self.balance.clone(),
            averaging: self.evaluate.averaging,
        }
    }

    /// Checks values that do not depend on the filesystem.
    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: String| Err(PipelineError::Config(m));
        if self.preprocess.word_count_threshold == 0 {
            return bad("preprocess.word_count_threshold must be positive".into());
        }
        if self.vectorize.token_cap == 0 {
            return bad("vectorize.token_cap must be at least 1".into());
        }
        if self.evaluate.k < 2 {
            return bad(format!("evaluate.k must be at least 2, got {}", self.evaluate.k));
        }
        if self.evaluate.repeats == 0 {
            return bad("evaluate.repeats must be at least 1".into());
        }
        if !self.evaluate.mu0.is_finite() {
            return bad("evaluate.mu0 must be finite".into());
        }
        if critical_value(1, self.evaluate.alpha).is_err() {
            return bad(format!("evaluate.alpha must be 0.05 or 0.01, got {}", self.evaluate.alpha));
        }
        if self.hydration.parallelism == 0 {
            return bad("hydration.parallelism must be at least 1".into());
        }
        self.balance
            .validate()
            .map_err(|e| PipelineError::Config(format!("balance: {e}")))?;
        if self.models.is_empty() {
            return bad("at least one model is required".into());
        }
        for (i, m) in self.models.iter().enumerate() {
            m.params
                .validate()
                .map_err(|e| PipelineError::Config(format!("models[{i}] ({}): {e}", m.kind())))?;
            if self.models[..i].iter().any(|o| o.kind() == m.kind()) {
                return bad(format!("models[{i}]: {} listed twice", m.kind()));
            }
        }
        Ok(())
    }

    /// Resolved path of a configured input, which must exist.
    pub fn input_path(&self, name: &str, p: &Option<PathBuf>) -> Result<PathBuf, PipelineError> {
        let p = p
            .as_ref()
            .ok_or_else(|| PipelineError::Config(format!("paths.{name} is not set")))?;
        let resolved = self.resolve(p);
        if !resolved.is_file() {
            return Err(PipelineError::Config(format!(
                "paths.{name} {} does not exist",
                resolved.display()
            )));
        }
        Ok(resolved)
    }
}
