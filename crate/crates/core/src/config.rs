//! Layered application configuration.
//!
//! Layers, lowest to highest: built-in defaults, the TOML file
//! (`lemmahead.toml` unless another path is given), `LEMMAHEAD_*`
//! environment variables, then command-line overrides. Override keys may be
//! dotted (`decoding.keywords.temperature`).

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize, Serializer};
use thiserror::Error;
use toml::{Table, Value};

use crate::corpus_ingest::ChunkParams;
use crate::lean_verifier::LeanConfig;
use crate::llm_gateway::{DecodingParams, PromptPaths, RetryPolicy};
use crate::pipelines::{PipelineConfig, StageDecoding, Variant};

pub const DEFAULT_CONFIG_FILE: &str = "lemmahead.toml";

/// Environment variables and the keys they set.
pub const ENV_KEYS: [(&str, &str); 5] = [
    ("LEMMAHEAD_API_KEY", "api_key"),
    ("LEMMAHEAD_CHAT_URL", "chat_url"),
    ("LEMMAHEAD_CHAT_MODEL", "chat_model"),
    ("LEMMAHEAD_EMBED_URL", "embed_url"),
    ("LEMMAHEAD_EMBED_MODEL", "embed_model"),
];

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config file {path}: {detail}")]
    File { path: PathBuf, detail: String },
    #[error("invalid override `{0}`: expected key=value")]
    Override(String),
    #[error("override `{key}` conflicts with a non-table value")]
    Conflict { key: String },
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

/// A credential whose `Debug`, `Display` and serialized forms are redacted.
#[derive(Clone, PartialEq, Eq, Deserialize)]
#[serde(transparent)]
pub struct Secret(String);

impl Secret {
    pub fn new(value: impl Into<String>) -> Self {
        Self(value.into())
    }

    pub fn expose(&self) -> &str {
        &self.0
    }
}

impl fmt::Debug for Secret {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("Secret(***)")
    }
}

impl fmt::Display for Secret {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("***")
    }
}

impl Serialize for Secret {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str("***")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Segmenter {
    /// Model-proposed boundaries, falling back to rules on unusable output.
    #[default]
    Llm,
    Rules,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecodingConfig {
    pub transcription: DecodingParams,
    pub segmentation: DecodingParams,
    pub keywords: DecodingParams,
    pub informal_proof: DecodingParams,
    pub formalization: DecodingParams,
}

/// Fully resolved settings for every command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AppConfig {
    pub chat_url: String,
    pub chat_model: String,
    pub embed_url: String,
    pub embed_model: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub api_key: Option<Secret>,
    pub max_retries: u32,
    pub backoff_base_ms: u64,

    pub store: PathBuf,
    pub runs_dir: PathBuf,
    pub embed_max_chars: usize,

    pub min_chunk_chars: usize,
    pub max_chunk_chars: usize,
    pub segmenter: Segmenter,
    pub rasterizer_cmd: String,

    pub variant: Variant,
    pub retrieval_k: usize,
    pub sigma: usize,
    pub include_verifier_feedback: bool,
    pub early_exit: bool,
    pub eqg_multi_query: bool,
    pub parallelism: usize,

    pub lean_cmd: String,
    pub lean_project_dir: PathBuf,
    pub verify_timeout_s: u64,

    #[serde(skip_serializing_if = "Option::is_none")]
    pub transcription_prompt_path: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub segmentation_prompt_path: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub keywords_prompt_path: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub informal_proof_prompt_path: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub formalization_prompt_path: Option<PathBuf>,

    pub decoding: DecodingConfig,
}

impl Default for AppConfig {
    fn default() -> Self {
        let chunk = ChunkParams::default();
        let lean = LeanConfig::default();
        let pipeline = PipelineConfig::default();
        Self {
            chat_url: "https://api.openai.com/v1/chat/completions".into(),
            chat_model: "gpt-4".into(),
            embed_url: "https://api.openai.com/v1/embeddings".into(),
            embed_model: "text-embedding-3-small".into(),
            api_key: None,
            max_retries: 3,
            backoff_base_ms: 1000,
            store: PathBuf::from("lemmahead.lhkb"),
            runs_dir: PathBuf::from("runs"),
            embed_max_chars: 8000,
            min_chunk_chars: chunk.min_chunk_chars,
            max_chunk_chars: chunk.max_chunk_chars,
            segmenter: Segmenter::Llm,
            rasterizer_cmd: "pdftoppm -png -r 200 {pdf} {out_dir}/{doc_id}_p".into(),
            variant: pipeline.variant,
            retrieval_k: pipeline.retrieval_k,
            sigma: pipeline.sigma,
            include_verifier_feedback: pipeline.include_verifier_feedback,
            early_exit: pipeline.early_exit,
            eqg_multi_query: pipeline.eqg_multi_query,
            parallelism: 1,
            lean_cmd: lean.lean_cmd,
            lean_project_dir: lean.lean_project_dir,
            verify_timeout_s: lean.verify_timeout_s,
            transcription_prompt_path: None,
            segmentation_prompt_path: None,
            keywords_prompt_path: None,
            informal_proof_prompt_path: None,
            formalization_prompt_path: None,
            decoding: DecodingConfig::default(),
        }
    }
}

/// Inputs to [`AppConfig::resolve`].
#[derive(Debug, Clone, Default)]
pub struct ConfigSources {
    /// Explicit config file; it must exist. Without one, `lemmahead.toml`
    /// in the working directory is read if present.
    pub file: Option<PathBuf>,
    /// `(variable, value)` pairs, typically from `std::env::vars()`.
    pub env: Vec<(String, String)>,
    /// Command-line overrides, applied in order.
    pub overrides: Vec<(String, Value)>,
}

impl ConfigSources {
    pub fn from_process_env() -> Self {
        Self {
            env: std::env::vars().filter(|(k, _)| k.starts_with("LEMMAHEAD_")).collect(),
            ..Self::default()
        }
    }

    /// Adds a `key=value` override. The value is read as a TOML literal when
    /// it parses as one, otherwise as a bare string.
    pub fn set(&mut self, assignment: &str) -> Result<(), ConfigError> {
        let (key, raw) = assignment
            .split_once('=')
            .ok_or_else(|| ConfigError::Override(assignment.to_string()))?;
        let key = key.trim();
        if key.is_empty() {
            return Err(ConfigError::Override(assignment.to_string()));
        }
        self.overrides.push((key.to_string(), parse_literal(raw.trim())));
        Ok(())
    }

    pub fn set_value(&mut self, key: &str, value: impl Into<Value>) {
        self.overrides.push((key.to_string(), value.into()));
    }
}

fn parse_literal(raw: &str) -> Value {
    toml::from_str::<Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.to_string()))
}

fn insert_dotted(table: &mut Table, key: &str, value: Value) -> Result<(), ConfigError> {
    let mut parts: Vec<&str> = key.split('.').collect();
    let last = parts.pop().expect("split yields at least one part");
    let mut cursor = table;
    for part in parts {
        let entry = cursor.entry(part).or_insert_with(|| Value::Table(Table::new()));
        cursor = entry
            .as_table_mut()
            .ok_or_else(|| ConfigError::Conflict { key: key.to_string() })?;
    }
    cursor.insert(last.to_string(), value);
    Ok(())
}

fn merge(base: &mut Table, layer: Table) {
    for (key, value) in layer {
        match (base.get_mut(&key), value) {
            (Some(Value::Table(existing)), Value::Table(incoming)) => merge(existing, incoming),
            (_, value) => {
                base.insert(key, value);
            }
        }
    }
}

impl AppConfig {
    pub fn resolve(sources: &ConfigSources) -> Result<Self, ConfigError> {
        let mut merged = Table::new();
        let file = match &sources.file {
            Some(path) => Some(path.clone()),
            None => Some(PathBuf::from(DEFAULT_CONFIG_FILE)).filter(|p| p.is_file()),
        };
        if let Some(path) = file {
            merge(&mut merged, read_file(&path)?);
        }
        let mut env_layer = Table::new();
        for (var, key) in ENV_KEYS {
            if let Some((_, value)) = sources.env.iter().rev().find(|(k, _)| k == var) {
                env_layer.insert(key.to_string(), Value::String(value.clone()));
            }
        }
        merge(&mut merged, env_layer);
        let mut flag_layer = Table::new();
        for (key, value) in &sources.overrides {
            insert_dotted(&mut flag_layer, key, value.clone())?;
        }
        merge(&mut merged, flag_layer);
        let config: AppConfig = Value::Table(merged)
            .try_into()
            .map_err(|e: toml::de::Error| ConfigError::Invalid(e.message().to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let positive = [
            ("retrieval_k", self.retrieval_k),
            ("sigma", self.sigma),
            ("parallelism", self.parallelism),
            ("max_chunk_chars", self.max_chunk_chars),
            ("embed_max_chars", self.embed_max_chars),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(ConfigError::Invalid(format!("{name} must be at least 1")));
        }
        if self.min_chunk_chars > self.max_chunk_chars {
            return Err(ConfigError::Invalid(format!(
                "min_chunk_chars ({}) exceeds max_chunk_chars ({})",
                self.min_chunk_chars, self.max_chunk_chars
            )));
        }
        if self.lean_cmd.split_whitespace().next().is_none() {
            return Err(ConfigError::Invalid("lean_cmd is empty".into()));
        }
        Ok(())
    }

    pub fn chunk_params(&self) -> ChunkParams {
        ChunkParams {
            min_chunk_chars: self.min_chunk_chars,
            max_chunk_chars: self.max_chunk_chars,
        }
    }

    pub fn lean_config(&self) -> LeanConfig {
        LeanConfig {
            lean_cmd: self.lean_cmd.clone(),
            lean_project_dir: self.lean_project_dir.clone(),
            verify_timeout_s: self.verify_timeout_s,
        }
    }

    pub fn retry_policy(&self) -> RetryPolicy {
        RetryPolicy {
            max_retries: self.max_retries,
            backoff_base: std::time::Duration::from_millis(self.backoff_base_ms),
        }
    }

    pub fn prompt_paths(&self) -> PromptPaths {
        PromptPaths {
            transcription: self.transcription_prompt_path.clone(),
            segmentation: self.segmentation_prompt_path.clone(),
            keywords: self.keywords_prompt_path.clone(),
            informal_proof: self.informal_proof_prompt_path.clone(),
            formalization: self.formalization_prompt_path.clone(),
        }
    }

    pub fn pipeline_config(&self) -> PipelineConfig {
        PipelineConfig {
            variant: self.variant,
            retrieval_k: self.retrieval_k,
            sigma: self.sigma,
            include_verifier_feedback: self.include_verifier_feedback,
            early_exit: self.early_exit,
            eqg_multi_query: self.eqg_multi_query,
            use_retrieval: true,
            decoding: StageDecoding {
                keywords: self.decoding.keywords.clone(),
                informal_proof: self.decoding.informal_proof.clone(),
                formalization: self.decoding.formalization.clone(),
            },
        }
    }

    /// TOML rendering with the API key redacted.
    pub fn to_redacted_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

fn read_file(path: &Path) -> Result<Table, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError::File {
        path: path.to_path_buf(),
        detail: e.to_string(),
    })?;
    toml::from_str(&text).map_err(|e| ConfigError::File {
        path: path.to_path_buf(),
        detail: e.message().to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sources_with_file(contents: &str) -> (tempfile::TempDir, ConfigSources) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("lemmahead.toml");
        std::fs::write(&path, contents).unwrap();
        let sources = ConfigSources {
            file: Some(path),
            ..ConfigSources::default()
        };
        (dir, sources)
    }

    #[test]
    fn defaults() {
        let config = AppConfig::default();
        assert_eq!(config.retrieval_k, 5);
        assert_eq!(config.sigma, 5);
        assert_eq!(config.variant, Variant::Ipa);
        assert!(config.include_verifier_feedback);
        assert!(!config.early_exit);
        assert_eq!(config.verify_timeout_s, 300);
        assert_eq!(config.max_retries, 3);
        assert_eq!(config.min_chunk_chars, 200);
        assert_eq!(config.max_chunk_chars, 4000);
        assert_eq!(config.decoding.keywords.temperature, 0.0);
        if !Path::new(DEFAULT_CONFIG_FILE).exists() {
            assert_eq!(AppConfig::resolve(&ConfigSources::default()).unwrap(), config);
        }
    }

    #[test]
    fn precedence_flag_env_file_default() {
        let (_dir, mut sources) = sources_with_file(
            "chat_model = \"file-model\"\nchat_url = \"http://file\"\nsigma = 3\nembed_model = \"file-embed\"\n",
        );
        sources.env = vec![
            ("LEMMAHEAD_CHAT_MODEL".into(), "env-model".into()),
            ("LEMMAHEAD_CHAT_URL".into(), "http://env".into()),
        ];
        sources.set("chat_model=flag-model").unwrap();
        let config = AppConfig::resolve(&sources).unwrap();
        assert_eq!(config.chat_model, "flag-model");
        assert_eq!(config.chat_url, "http://env");
        assert_eq!(config.embed_model, "file-embed");
        assert_eq!(config.sigma, 3);
        assert_eq!(config.retrieval_k, 5);
    }

    #[test]
    fn dotted_overrides_and_literals() {
        let (_dir, mut sources) = sources_with_file("[decoding.keywords]\ntemperature = 0.5\nmax_tokens = 100\n");
        sources.set("decoding.keywords.temperature=0.2").unwrap();
        sources.set("variant=eqg").unwrap();
        sources.set("early_exit=true").unwrap();
        let config = AppConfig::resolve(&sources).unwrap();
        assert_eq!(config.decoding.keywords.temperature, 0.2);
        assert_eq!(config.decoding.keywords.max_tokens, Some(100));
        assert_eq!(config.variant, Variant::Eqg);
        assert!(config.early_exit);
    }

    #[test]
    fn rejects_bad_input() {
        let (_dir, sources) = sources_with_file("retrival_k = 4\n");
        assert!(matches!(AppConfig::resolve(&sources), Err(ConfigError::Invalid(_))));
        let (_dir, mut sources) = sources_with_file("");
        sources.set("sigma=0").unwrap();
        assert!(matches!(AppConfig::resolve(&sources), Err(ConfigError::Invalid(_))));
        assert!(matches!(sources.set("novalue"), Err(ConfigError::Override(_))));
        let missing = ConfigSources {
            file: Some(PathBuf::from("/nonexistent/lemmahead.toml")),
            ..ConfigSources::default()
        };
        assert!(matches!(AppConfig::resolve(&missing), Err(ConfigError::File { .. })));
    }

    #[test]
    fn api_key_is_never_rendered() {
        let (_dir, mut sources) = sources_with_file("");
        sources.env = vec![("LEMMAHEAD_API_KEY".into(), "sk-very-secret".into())];
        let config = AppConfig::resolve(&sources).unwrap();
        assert_eq!(config.api_key.as_ref().unwrap().expose(), "sk-very-secret");
        assert!(!format!("{config:?}").contains("sk-very-secret"));
        assert!(!config.to_redacted_toml().contains("sk-very-secret"));
        assert!(config.to_redacted_toml().contains("***"));
    }
}
