//! LLM backend abstraction: a trait the orchestrator calls per prompt, with
//! deterministic mock implementations for offline runs and an
//! OpenAI-compatible HTTP client for hosted models.

pub mod http;
pub mod mock;

use serde::{Deserialize, Serialize};

use crate::config::LlmParams;

pub use http::{HttpBackend, HttpBackendConfig, HttpResponse, HttpTransport, RetryPolicy, TransportError};
pub use mock::{MockBackend, MockBehavior, PerturbConfig};

/// Name of the environment variable holding the API key for remote backends.
pub const API_KEY_ENV: &str = "LAMSUM_API_KEY";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptKind {
    /// "select the best q sentences": output is an approval set.
    Approval,
    /// "order all sentences by relevance": output is a ranking.
    Ranked,
}

/// One fully-built request; `prompt_text` is the exact wire payload.
#[derive(Debug, Clone, PartialEq)]
pub struct LlmRequest {
    pub prompt_text: String,
    pub max_output_tokens: u32,
    pub temperature: f64,
    pub top_p: f64,
    pub context_budget_tokens: u32,
}

impl LlmRequest {
    pub fn new(prompt_text: String, params: &LlmParams) -> Self {
        LlmRequest {
            prompt_text,
            max_output_tokens: params.max_output_tokens,
            temperature: params.temperature,
            top_p: params.top_p,
            context_budget_tokens: params.context_budget_tokens,
        }
    }
}

/// Where in the pipeline a request originates. Mocks lean on this to behave
/// like position-biased LLMs without parsing the prompt prose.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CallContext {
    pub level: usize,
    pub chunk_index: usize,
    /// 1..=m for shuffle variants; 0 for the vanilla single call.
    pub shuffle_index: usize,
    pub kind: PromptKind,
    /// Number of sentence lines in the prompt.
    pub n_units: usize,
    /// How many lines the backend is asked to select (approval prompts).
    pub target: usize,
    /// The run seed, so seeded mocks stay reproducible per call site.
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct Completion {
    pub text: String,
    /// Attempts spent, including the successful one.
    pub attempts: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum BackendError {
    #[error("authentication failed (HTTP {status}): {message}")]
    Auth { status: u16, message: String },
    #[error("rate limit not cleared after {attempts} attempts: {message}")]
    RateLimitExhausted { attempts: u32, message: String },
    #[error("timed out after {attempts} attempts: {message}")]
    TimeoutExhausted { attempts: u32, message: String },
    #[error("API error (HTTP {status}) after {attempts} attempts: {message}")]
    Api {
        status: u16,
        attempts: u32,
        message: String,
    },
    #[error("transport failure after {attempts} attempts: {message}")]
    Transport { attempts: u32, message: String },
    #[error("malformed response: {message}")]
    MalformedResponse { message: String },
    #[error("missing API key: set the {env} environment variable")]
    MissingApiKey { env: String },
}

/// A text-completion backend. Implementations must be safe to call from
/// multiple threads at once; the orchestrator issues chunk and shuffle calls
/// concurrently.
pub trait LlmBackend: Send + Sync {
    /// Stable human-readable identifier recorded in run manifests.
    fn name(&self) -> String;

    fn complete(&self, request: &LlmRequest, ctx: &CallContext) -> Result<Completion, BackendError>;
}
