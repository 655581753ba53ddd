//! TOML run configuration. Command-line flags override every value here.

use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::AppError;
use crate::cnlp::{Dictionary, Pipeline};
use crate::eval::bootstrap::DEFAULT_RESAMPLES;
use crate::eval::report::DEFAULT_MIN_SUBGROUP;
use crate::features::index::DEFAULT_MIN_FREQUENCY;
use crate::features::{Featurizer, SocialRiskTable};
use crate::gbdt::TrainConfig;
use crate::rules::{DangerZones, RuleTable};
use crate::synth::GeneratorConfig;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub dictionary: Option<PathBuf>,
    pub high_risk_rules: Option<PathBuf>,
    pub danger_zones: Option<PathBuf>,
    pub social_risk: Option<PathBuf>,
    pub data: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub output_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalOptions {
    pub n_resamples: usize,
    pub level: f64,
    pub subgroups: Vec<String>,
    pub min_subgroup: usize,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self { n_resamples: DEFAULT_RESAMPLES, level: 0.95, subgroups: Vec::new(), min_subgroup: DEFAULT_MIN_SUBGROUP }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KFoldOptions {
    pub k: usize,
    pub stratified: bool,
}

impl Default for KFoldOptions {
    fn default() -> Self {
        Self { k: 5, stratified: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureOptions {
    pub min_frequency: usize,
}

impl Default for FeatureOptions {
    fn default() -> Self {
        Self { min_frequency: DEFAULT_MIN_FREQUENCY }
    }
}

/// The whole configuration file. The single `seed` drives every random
/// component; per-section seeds are overwritten with it.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub log_level: Option<String>,
    pub paths: Paths,
    pub features: FeatureOptions,
    pub train: TrainConfig,
    /// Present when the file has a `[generator]` section.
    pub generator: Option<GeneratorConfig>,
    pub eval: EvalOptions,
    pub kfold: KFoldOptions,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, AppError> {
        let text = std::fs::read_to_string(path).map_err(|e| AppError::io(path, e))?;
        let config: RunConfig =
            toml::from_str(&text).map_err(|e| AppError::Usage(format!("config {}: {}", path.display(), e.message())))?;
        config.validate()?;
        Ok(config)
    }

    /// Referenced resource paths must exist.
    pub fn validate(&self) -> Result<(), AppError> {
        let p = &self.paths;
        for path in [&p.dictionary, &p.high_risk_rules, &p.danger_zones, &p.social_risk, &p.data, &p.model].into_iter().flatten()
        {
            if !path.exists() {
                return Err(AppError::io(
                    path,
                    std::io::Error::new(std::io::ErrorKind::NotFound, "referenced path does not exist"),
                ));
            }
        }
        Ok(())
    }

    /// Featurizer from bundled resources, replaced by any configured files.
    pub fn featurizer(&self, dictionary_override: Option<&Path>) -> Result<Featurizer, AppError> {
        let mut f = Featurizer::bundled();
        if let Some(path) = dictionary_override.or(self.paths.dictionary.as_deref()) {
            let dict = Dictionary::from_tsv(open(path)?).map_err(|e| AppError::Data(format!("{}: {e}", path.display())))?;
            f.pipeline = Pipeline::with_dictionary(dict);
        }
        if let Some(path) = &self.paths.high_risk_rules {
            f.high_risk = RuleTable::from_tsv(open(path)?, "high-risk rules").map_err(|e| AppError::Data(e.to_string()))?;
        }
        if let Some(path) = &self.paths.danger_zones {
            f.danger_zones = DangerZones::from_tsv(open(path)?).map_err(|e| AppError::Data(e.to_string()))?;
        }
        if let Some(path) = &self.paths.social_risk {
            f.social_risk = SocialRiskTable::from_tsv(open(path)?).map_err(|e| AppError::Data(e.to_string()))?;
        }
        Ok(f)
    }
}

pub fn open(path: &Path) -> Result<BufReader<File>, AppError> {
    File::open(path).map(BufReader::new).map_err(|e| AppError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_sections_and_rejects_unknown_keys() {
        let cfg: RunConfig = toml::from_str("seed = 7\n[train]\nn_rounds = 20\n[eval]\nsubgroups = [\"age\"]\n").unwrap();
        assert_eq!(cfg.seed, Some(7));
        assert_eq!(cfg.train.n_rounds, 20);
        assert_eq!(cfg.train.max_depth, 6);
        assert_eq!(cfg.eval.subgroups, vec!["age".to_string()]);
        assert!(toml::from_str::<RunConfig>("[train]\nrounds = 3\n").is_err());
    }

    #[test]
    fn missing_paths_fail_validation() {
        let cfg = RunConfig {
            paths: Paths { dictionary: Some("/nonexistent/dict.tsv".into()), ..Default::default() },
            ..Default::default()
        };
        assert_eq!(cfg.validate().unwrap_err().exit_code(), 2);
    }
}
