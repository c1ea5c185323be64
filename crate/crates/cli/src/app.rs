//! Exit codes and construction of clients from the resolved config.

use std::fmt;
use std::path::Path;
use std::sync::Arc;

use lemmahead::config::AppConfig;
use lemmahead::knowledge_base::{Embedder, LoadError, OpenAiEmbeddingClient};
use lemmahead::lean_verifier::{LeanChecker, ProofChecker};
use lemmahead::llm_gateway::{ChatClient, OpenAiChatClient, RetryPolicy, Transcript};
use lemmahead::mock_script::MockScript;
use lemmahead::{Clock, Gateway, KnowledgeBase, PromptSet};

pub const EXIT_OK: u8 = 0;
pub const EXIT_FAILED: u8 = 1;
pub const EXIT_USAGE: u8 = 2;
pub const EXIT_EMPTY_STORE: u8 = 3;
pub const EXIT_INFRA: u8 = 4;

/// An error paired with the process exit code it maps to.
pub struct Failure {
    pub code: u8,
    pub error: anyhow::Error,
}

impl fmt::Debug for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "exit {}: {:#}", self.code, self.error)
    }
}

pub fn usage(error: impl Into<anyhow::Error>) -> Failure {
    Failure {
        code: EXIT_USAGE,
        error: error.into(),
    }
}

pub fn infra(error: impl Into<anyhow::Error>) -> Failure {
    Failure {
        code: EXIT_INFRA,
        error: error.into(),
    }
}

pub type Outcome = Result<u8, Failure>;

pub struct App {
    pub config: AppConfig,
    pub mock: Option<MockScript>,
}

impl App {
    pub fn new(config: AppConfig, mock_path: Option<&Path>) -> Result<Self, Failure> {
        let mock = mock_path.map(MockScript::load).transpose().map_err(usage)?;
        Ok(Self { config, mock })
    }

    pub fn clock(&self) -> Clock {
        if self.mock.is_some() {
            Clock::Frozen
        } else {
            Clock::System
        }
    }

    pub fn gateway(&self, transcript: Option<Transcript>) -> Gateway {
        let client: Arc<dyn ChatClient> = match &self.mock {
            Some(script) => Arc::new(script.chat_client()),
            None => Arc::new(OpenAiChatClient::new(
                &self.config.chat_url,
                &self.config.chat_model,
                self.api_key(),
            )),
        };
        let retry = match &self.mock {
            Some(_) => RetryPolicy::immediate(self.config.max_retries),
            None => self.config.retry_policy(),
        };
        let gateway = Gateway::new(client).with_retry(retry).with_clock(self.clock());
        match transcript {
            Some(t) => gateway.with_transcript(t),
            None => gateway,
        }
    }

    pub fn embedder(&self, dimension: Option<usize>) -> Embedder {
        let client = match &self.mock {
            Some(script) => script.embedding_client(),
            None => Box::new(OpenAiEmbeddingClient::new(
                &self.config.embed_url,
                &self.config.embed_model,
                self.api_key(),
            )),
        };
        Embedder::new(client, self.config.embed_max_chars).expect_dimension(dimension)
    }

    pub fn verifier(&self) -> Box<dyn ProofChecker> {
        match self.mock.as_ref().and_then(MockScript::verifier) {
            Some(scripted) => Box::new(scripted),
            None => Box::new(LeanChecker::new(self.config.lean_config())),
        }
    }

    pub fn prompts(&self) -> Result<PromptSet, Failure> {
        PromptSet::load(&self.config.prompt_paths()).map_err(usage)
    }

    fn api_key(&self) -> Option<String> {
        self.config.api_key.as_ref().map(|k| k.expose().to_string())
    }
}

/// Loads a store, mapping a missing or unreadable file to a usage error.
pub fn load_store(path: &Path) -> Result<KnowledgeBase, Failure> {
    if !path.exists() {
        return Err(usage(anyhow::anyhow!("store {} does not exist", path.display())));
    }
    KnowledgeBase::load(path).map_err(|e| match e {
        LoadError::Io { .. } => infra(e),
        other => usage(other),
    })
}

/// `<prefix>-<unix seconds>`.
pub fn default_run_id(prefix: &str) -> String {
    let secs = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    format!("{prefix}-{secs}")
}
