//! The operator config file: one flat TOML document.
//!
//! ```toml
//! store_dir = "store"
//! embeddings_path = "fixtures/embeddings.txt"
//! similarity.metric = "jaccard"
//! threshold = 0.5
//! listen = "127.0.0.1:8080"
//! experts = [
//!   { id = "ana", token = "..." },
//!   { id = "bea", token = "..." },
//!   { id = "carlos", token = "..." },
//! ]
//! ```

use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use bookcbr::{EngineConfig, Metric, PipelineConfig};
use bookcbr_api::ExpertCredential;
use serde::Deserialize;

pub const DEFAULT_LISTEN: &str = "127.0.0.1:8080";
pub const DEFAULT_STORE_DIR: &str = "store";

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CliConfig {
    pub store_dir: Option<PathBuf>,
    pub embeddings_path: Option<PathBuf>,
    pub stopwords_path: Option<PathBuf>,
    #[serde(default)]
    pub remove_stopwords: bool,
    #[serde(default)]
    pub similarity: Similarity,
    pub threshold: Option<f64>,
    pub top_k: Option<usize>,
    pub fallback_count: Option<usize>,
    pub listen: Option<String>,
    #[serde(default)]
    pub experts: Vec<ExpertCredential>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Similarity {
    pub metric: Option<Metric>,
}

impl CliConfig {
    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()))?;
        toml::from_str(&text).map_err(|e| format!("invalid config {}: {e}", path.display()))
    }

    pub fn store_dir(&self) -> PathBuf {
        self.store_dir.clone().unwrap_or_else(|| PathBuf::from(DEFAULT_STORE_DIR))
    }

    pub fn pipeline(&self) -> PipelineConfig {
        PipelineConfig {
            remove_stopwords: self.remove_stopwords,
            stopwords_path: self.stopwords_path.clone(),
            embeddings_path: self.embeddings_path.clone(),
        }
    }

    pub fn engine(&self) -> Result<EngineConfig, String> {
        let defaults = EngineConfig::default();
        let config = EngineConfig {
            metric: self.similarity.metric.unwrap_or(defaults.metric),
            threshold: self.threshold.unwrap_or(defaults.threshold),
            top_k: self.top_k.unwrap_or(defaults.top_k),
            fallback_count: self.fallback_count.unwrap_or(defaults.fallback_count),
        };
        config.validate().map_err(|e| e.to_string())?;
        if config.metric.needs_embeddings() && self.embeddings_path.is_none() {
            return Err(format!("similarity.metric = {} needs embeddings_path", config.metric));
        }
        if self.remove_stopwords && self.stopwords_path.is_none() {
            return Err("remove_stopwords needs stopwords_path".into());
        }
        Ok(config)
    }

    pub fn listen(&self) -> Result<SocketAddr, String> {
        let raw = self.listen.as_deref().unwrap_or(DEFAULT_LISTEN);
        raw.parse().map_err(|_| format!("listen address {raw:?} is not host:port"))
    }

    pub fn expert_ids(&self) -> Result<Vec<String>, String> {
        if self.experts.len() != 3 {
            return Err(format!("exactly 3 experts are required, config has {}", self.experts.len()));
        }
        Ok(self.experts.iter().map(|e| e.id.clone()).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_flat_document() {
        let c: CliConfig = toml::from_str(
            r#"
            store_dir = "/tmp/s"
            embeddings_path = "e.txt"
            similarity.metric = "softcosine"
            threshold = 0.6
            listen = "0.0.0.0:9000"
            experts = [{ id = "a", token = "1" }, { id = "b", token = "2" }, { id = "c", token = "3" }]
            "#,
        )
        .unwrap();
        let e = c.engine().unwrap();
        assert_eq!((e.metric, e.threshold, e.top_k), (Metric::SoftCosine, 0.6, 5));
        assert_eq!(c.listen().unwrap().port(), 9000);
        assert_eq!(c.expert_ids().unwrap(), ["a", "b", "c"]);
    }

    #[test]
    fn vector_metric_requires_embeddings() {
        let c: CliConfig = toml::from_str("similarity.metric = \"cosine\"").unwrap();
        assert!(c.engine().unwrap_err().contains("embeddings_path"));
    }

    #[test]
    fn rejects_unknown_keys_and_bad_panels() {
        assert!(toml::from_str::<CliConfig>("treshold = 0.5").is_err());
        let c: CliConfig = toml::from_str("experts = [{ id = \"a\", token = \"1\" }]").unwrap();
        assert!(c.expert_ids().is_err());
        assert_eq!(CliConfig::default().store_dir(), PathBuf::from("store"));
    }
}
