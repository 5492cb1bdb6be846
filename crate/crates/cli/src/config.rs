//! Run configuration (one JSON file per experiment).

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use mgtd::boundary::{FeaturizerSpec, PostProcess};
use mgtd::corpus::{CleanMode, LabelScheme};
use mgtd::ensemble::PredictionKind;
use mgtd::regress::{ElasticNetConfig, OlsConfig, RegressorConfig, SoftmaxConfig};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Binary,
    Multiway,
    Boundary,
}

impl Task {
    pub fn scheme(self) -> LabelScheme {
        match self {
            Task::Binary => LabelScheme::Binary,
            Task::Multiway => LabelScheme::Multiway6,
            Task::Boundary => LabelScheme::Boundary,
        }
    }

    pub fn metric_name(self) -> &'static str {
        match self {
            Task::Boundary => "mae",
            _ => "accuracy",
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Task::Binary => "binary",
            Task::Multiway => "multiway",
            Task::Boundary => "boundary",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ModelSpec {
    Ols(OlsConfig),
    Elasticnet(ElasticNetConfig),
    Softmax(SoftmaxConfig),
    /// Predictions produced elsewhere (e.g. by the encoder exporter), one
    /// file per split.
    External {
        prediction_kind: PredictionKind,
        predictions: BTreeMap<String, PathBuf>,
    },
}

impl ModelSpec {
    pub fn regressor(&self) -> Option<RegressorConfig> {
        match self {
            ModelSpec::Ols(c) => Some(RegressorConfig::Ols(c.clone())),
            ModelSpec::Elasticnet(c) => Some(RegressorConfig::Elasticnet(c.clone())),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentConfig {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub featurizer: Option<FeaturizerSpec>,
    pub model: ModelSpec,
    /// Embedding files per split, for `featurizer.kind = "embeddings"`.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub embeddings: BTreeMap<String, PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub task: Task,
    #[serde(default)]
    pub cleaning: CleanMode,
    /// Corpus files by split name; `train` is required for `fit`.
    pub splits: BTreeMap<String, PathBuf>,
    pub components: Vec<ComponentConfig>,
    #[serde(default)]
    pub postprocess: PostProcess,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub seed: u64,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("runs")
}

fn resolve(base: &Path, p: &mut PathBuf) {
    if p.is_relative() {
        *p = base.join(&*p);
    }
}

impl RunConfig {
    /// Reads the config, resolving relative paths against its directory.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        let mut config: RunConfig = serde_json::from_str(&text)
            .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in config.splits.values_mut() {
            resolve(base, p);
        }
        for c in &mut config.components {
            for p in c.embeddings.values_mut() {
                resolve(base, p);
            }
            if let ModelSpec::External { predictions, .. } = &mut c.model {
                for p in predictions.values_mut() {
                    resolve(base, p);
                }
            }
        }
        resolve(base, &mut config.output_dir);
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.components.is_empty() {
            return Err(CliError::Usage(format!(
                "{} task needs at least one component",
                self.task.name()
            )));
        }
        let mut names = std::collections::BTreeSet::new();
        for c in &self.components {
            if c.name.is_empty() || c.name.contains(['/', '\\']) {
                return Err(CliError::Usage(format!("invalid component name {:?}", c.name)));
            }
            if !names.insert(&c.name) {
                return Err(CliError::Usage(format!("duplicate component name {:?}", c.name)));
            }
            let is_regressor = c.model.regressor().is_some();
            match (&c.model, self.task) {
                (ModelSpec::External { .. }, _) => {}
                (_, Task::Boundary) if !is_regressor => {
                    return Err(CliError::Usage(format!(
                        "{}: boundary components need an ols or elasticnet model",
                        c.name
                    )))
                }
                (_, Task::Binary | Task::Multiway) if is_regressor => {
                    return Err(CliError::Usage(format!(
                        "{}: classification components need a softmax or external model",
                        c.name
                    )))
                }
                _ => {}
            }
            if !matches!(c.model, ModelSpec::External { .. }) && c.featurizer.is_none() {
                return Err(CliError::Usage(format!("{}: missing featurizer", c.name)));
            }
        }
        for (split, path) in &self.splits {
            if !path.exists() {
                return Err(CliError::Usage(format!(
                    "split {split:?}: {} does not exist",
                    path.display()
                )));
            }
        }
        Ok(())
    }

    pub fn split_path(&self, split: &str) -> Result<&Path, CliError> {
        self.splits
            .get(split)
            .map(PathBuf::as_path)
            .ok_or_else(|| CliError::Usage(format!("config has no {split:?} split")))
    }

    pub fn models_dir(&self) -> PathBuf {
        self.output_dir.join("models")
    }

    pub fn predictions_dir(&self, split: &str) -> PathBuf {
        self.output_dir.join("predictions").join(split)
    }

    pub fn reports_dir(&self) -> PathBuf {
        self.output_dir.join("reports")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_minimal_config_with_defaults() {
        let json = r#"{
            "task": "boundary",
            "splits": {"train": "train.jsonl"},
            "components": [
                {"name": "tfidf+ols", "featurizer": {"kind": "tfidf", "min_df": 1}, "model": {"kind": "ols"}},
                {"name": "ppmi+en", "featurizer": {"kind": "ppmi"}, "model": {"kind": "elasticnet", "lambda1": 0.5}}
            ]
        }"#;
        let cfg: RunConfig = serde_json::from_str(json).unwrap();
        assert_eq!(cfg.cleaning, CleanMode::None);
        assert_eq!(cfg.postprocess, PostProcess::default());
        match &cfg.components[1].model {
            ModelSpec::Elasticnet(c) => {
                assert_eq!(c.lambda1, 0.5);
                assert_eq!(c.lambda2, 1.0);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn empty_component_list_is_a_config_error() {
        let cfg = RunConfig {
            task: Task::Boundary,
            cleaning: CleanMode::None,
            splits: BTreeMap::new(),
            components: vec![],
            postprocess: PostProcess::default(),
            output_dir: "out".into(),
            seed: 0,
        };
        assert!(matches!(cfg.validate(), Err(CliError::Usage(_))));
    }
}
