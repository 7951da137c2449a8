use std::path::Path;

use serde::{Deserialize, Serialize};
use spheretopic::corpus::VocabOptions;
use spheretopic::embedding::SkipGramConfig;
use spheretopic::model::ModelConfig;
use spheretopic::training::TrainConfig;

use crate::error::{AppError, AppResult};

/// Keyword derivation from labeled documents.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KeywordOptions {
    pub per_class: usize,
    pub train_frac: f64,
}

impl Default for KeywordOptions {
    fn default() -> Self {
        Self {
            per_class: 3,
            train_frac: 0.2,
        }
    }
}

/// Everything `--config` can set. Missing sections take their defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
#[derive(Default)]
pub struct AppConfig {
    pub vocab: VocabOptions,
    pub embedding: SkipGramConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub keywords: KeywordOptions,
}


impl AppConfig {
    pub fn load(path: Option<&Path>) -> AppResult<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| AppError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        let config: Self = serde_json::from_str(&text)
            .map_err(|e| AppError::Usage(format!("config {}: {e}", path.display())))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> AppResult<()> {
        self.model.validate()?;
        self.train.validate()?;
        if !(self.vocab.max_doc_frac > 0.0 && self.vocab.max_doc_frac <= 1.0) {
            return Err(AppError::Usage("vocab.max_doc_frac must lie in (0, 1]".into()));
        }
        if self.keywords.per_class == 0 || !(self.keywords.train_frac > 0.0 && self.keywords.train_frac <= 1.0) {
            return Err(AppError::Usage("keywords.per_class must be >= 1 and train_frac in (0, 1]".into()));
        }
        if self.model.embedding_dim != self.embedding.dim {
            return Err(AppError::Usage(format!(
                "model.embedding_dim {} differs from embedding.dim {}",
                self.model.embedding_dim, self.embedding.dim
            )));
        }
        Ok(())
    }

    /// Overrides every seed in the configuration.
    pub fn with_seed(mut self, seed: Option<u64>) -> Self {
        if let Some(s) = seed {
            self.embedding.seed = s;
            self.model.seed = s;
            self.train.seed = s;
        }
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partial_config_fills_defaults() {
        let c: AppConfig = serde_json::from_str(r#"{"model": {"num_topics": 4}}"#).unwrap();
        assert_eq!(c.model.num_topics, 4);
        assert_eq!(c.model.hidden_sizes, vec![256, 64]);
        assert_eq!(c.train, TrainConfig::default());
    }

    #[test]
    fn unknown_section_is_rejected() {
        assert!(serde_json::from_str::<AppConfig>(r#"{"modle": {}}"#).is_err());
    }

    #[test]
    fn seed_override_reaches_every_section() {
        let c = AppConfig::default().with_seed(Some(7));
        assert_eq!((c.embedding.seed, c.model.seed, c.train.seed), (7, 7, 7));
    }
}
