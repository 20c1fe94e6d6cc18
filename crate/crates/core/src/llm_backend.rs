//! Neural insertion path: the fine-tuning configuration and a client for an
//! external completion service.
//!
//! Nothing here trains or runs a model. [`export_finetune_config`] writes
//! the LoRA hyperparameters as JSON for an external trainer, and
//! [`RemoteClient`] sends fluent utterances to a completion endpoint and
//! accepts only completions that strip back to the input.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use url::Url;

use crate::annotation::{
    is_filler_word, parse_annotated, strip_disfluencies, token_texts, AnnotatedUtterance,
    ParseError, Token,
};

/// Environment variable holding the completion endpoint URL.
pub const ENDPOINT_ENV: &str = "DISFLUENCY_ENDPOINT";
/// Environment variable holding an optional bearer token.
pub const TOKEN_ENV: &str = "DISFLUENCY_TOKEN";

pub const PROMPT_VERSION: u32 = 1;

/// Prompt sent for each utterance; `{utterance}` is replaced by the fluent
/// text.
pub const PROMPT_TEMPLATE: &str = "\
### Instruction (disfluency prompt v1)
Rewrite the utterance as natural spontaneous speech. Add hesitations such as \
\"um\" and \"uh\", repetitions, false starts, silent pauses and self-corrections. \
Keep every original word in its original order. Mark fillers as {F um}, \
editing terms as {E uh}, restarts as [ reparandum + repair ] and silent pauses \
as <sil>. Reply with the rewritten utterance only.

### Utterance
{utterance}

### Rewritten
";

pub fn render_prompt(fluent: &[Token]) -> String {
    PROMPT_TEMPLATE.replace("{utterance}", &token_texts(fluent).join(" "))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FinetuneConfig {
    pub base_model: String,
    pub lora_rank: u32,
    pub lora_alpha: u32,
    pub lora_dropout: f64,
    pub learning_rate: f64,
    pub max_seq_len: u32,
    pub batch_size: u32,
    pub grad_accum_steps: u32,
}

impl Default for FinetuneConfig {
    fn default() -> Self {
        FinetuneConfig {
            base_model: "Llama-2-7b-chat-hf".to_string(),
            lora_rank: 32,
            lora_alpha: 64,
            lora_dropout: 0.1,
            learning_rate: 2e-4,
            max_seq_len: 200,
            batch_size: 2,
            grad_accum_steps: 4,
        }
    }
}

impl FinetuneConfig {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("configs always serialize")
    }
}

/// Field-wise overrides for [`FinetuneConfig`]; `None` keeps the default.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FinetuneOverrides {
    pub base_model: Option<String>,
    pub lora_rank: Option<u32>,
    pub lora_alpha: Option<u32>,
    pub lora_dropout: Option<f64>,
    pub learning_rate: Option<f64>,
    pub max_seq_len: Option<u32>,
    pub batch_size: Option<u32>,
    pub grad_accum_steps: Option<u32>,
}

#[derive(Debug, Error)]
pub enum LlmError {
    #[error("invalid value for `{0}`")]
    InvalidOverride(&'static str),
    #[error("invalid endpoint: {0}")]
    InvalidEndpoint(String),
    #[error("cannot send an empty utterance")]
    EmptyInput,
    #[error("request timed out")]
    Timeout,
    #[error("endpoint answered with HTTP status {0}")]
    HttpError(u16),
    #[error("transport error: {0}")]
    Transport(String),
    #[error("response is not a completion document: {0}")]
    MalformedResponse(String),
    #[error("completion does not parse ({error}): {completion:?}")]
    UnparseableCompletion {
        completion: String,
        error: ParseError,
    },
    #[error("completion changes the fluent content: {completion:?}")]
    RoundTripViolation { completion: String },
}

/// The default configuration with `overrides` applied field by field.
pub fn export_finetune_config(overrides: &FinetuneOverrides) -> Result<FinetuneConfig, LlmError> {
    let mut c = FinetuneConfig::default();
    if let Some(v) = &overrides.base_model {
        if v.trim().is_empty() {
            return Err(LlmError::InvalidOverride("base_model"));
        }
        c.base_model = v.clone();
    }
    let positive = |v: Option<u32>, field, slot: &mut u32| match v {
        Some(0) => Err(LlmError::InvalidOverride(field)),
        Some(v) => {
            *slot = v;
            Ok(())
        }
        None => Ok(()),
    };
    positive(overrides.lora_rank, "lora_rank", &mut c.lora_rank)?;
    positive(overrides.lora_alpha, "lora_alpha", &mut c.lora_alpha)?;
    positive(overrides.max_seq_len, "max_seq_len", &mut c.max_seq_len)?;
    positive(overrides.batch_size, "batch_size", &mut c.batch_size)?;
    positive(
        overrides.grad_accum_steps,
        "grad_accum_steps",
        &mut c.grad_accum_steps,
    )?;
    if let Some(v) = overrides.lora_dropout {
        if !(0.0..1.0).contains(&v) {
            return Err(LlmError::InvalidOverride("lora_dropout"));
        }
        c.lora_dropout = v;
    }
    if let Some(v) = overrides.learning_rate {
        if !(v.is_finite() && v > 0.0) {
            return Err(LlmError::InvalidOverride("learning_rate"));
        }
        c.learning_rate = v;
    }
    Ok(c)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RemoteEndpoint {
    pub base_url: Url,
    pub timeout: Duration,
    pub max_retries: u32,
    pub bearer_token: Option<String>,
}

impl RemoteEndpoint {
    pub fn new(base_url: &str, timeout: Duration, max_retries: u32) -> Result<Self, LlmError> {
        let base_url =
            Url::parse(base_url).map_err(|e| LlmError::InvalidEndpoint(e.to_string()))?;
        if !matches!(base_url.scheme(), "http" | "https") {
            return Err(LlmError::InvalidEndpoint(format!(
                "unsupported scheme {}",
                base_url.scheme()
            )));
        }
        if timeout.is_zero() {
            return Err(LlmError::InvalidEndpoint("timeout must be positive".into()));
        }
        Ok(RemoteEndpoint {
            base_url,
            timeout,
            max_retries,
            bearer_token: None,
        })
    }

    /// Reads the URL from `DISFLUENCY_ENDPOINT` and the token from
    /// `DISFLUENCY_TOKEN`.
    pub fn from_env(timeout: Duration, max_retries: u32) -> Result<Self, LlmError> {
        let url = std::env::var(ENDPOINT_ENV)
            .map_err(|_| LlmError::InvalidEndpoint(format!("{ENDPOINT_ENV} is not set")))?;
        let mut endpoint = RemoteEndpoint::new(&url, timeout, max_retries)?;
        endpoint.bearer_token = std::env::var(TOKEN_ENV).ok().filter(|t| !t.is_empty());
        Ok(endpoint)
    }

    pub fn with_token(mut self, token: impl Into<String>) -> Self {
        self.bearer_token = Some(token.into());
        self
    }
}

/// Wraps bare filler words outside braces as `{F ..}` so that plain-text
/// completions parse. Fragments need nothing: the parser wraps them.
pub fn normalize_completion(completion: &str) -> String {
    let mut in_brace = false;
    let mut out = Vec::new();
    for tok in completion.split_whitespace() {
        if in_brace || tok.starts_with('{') {
            in_brace = !tok.ends_with('}');
            out.push(tok.to_string());
        } else if is_filler_word(tok) {
            out.push(format!("{{F {tok}}}"));
        } else {
            out.push(tok.to_string());
        }
    }
    out.join(" ")
}

/// Parses a completion and enforces the strip round trip against `fluent`.
pub fn accept_completion(
    fluent: &[Token],
    completion: &str,
) -> Result<AnnotatedUtterance, LlmError> {
    let u = parse_annotated(&normalize_completion(completion)).map_err(|error| {
        LlmError::UnparseableCompletion {
            completion: completion.to_string(),
            error,
        }
    })?;
    if token_texts(&strip_disfluencies(&u)) != token_texts(fluent) {
        log::warn!("rejecting completion that alters the fluent content: {completion:?}");
        return Err(LlmError::RoundTripViolation {
            completion: completion.to_string(),
        });
    }
    Ok(u)
}

#[derive(Serialize)]
struct CompletionRequest<'a> {
    prompt: &'a str,
}

#[derive(Deserialize)]
struct CompletionResponse {
    completion: String,
}

/// A reusable, thread-safe client for one endpoint.
pub struct RemoteClient {
    endpoint: RemoteEndpoint,
    agent: ureq::Agent,
}

impl RemoteClient {
    pub fn new(endpoint: RemoteEndpoint) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(endpoint.timeout))
            .http_status_as_error(false)
            .build()
            .into();
        RemoteClient { endpoint, agent }
    }

    pub fn endpoint(&self) -> &RemoteEndpoint {
        &self.endpoint
    }

    fn post_once(&self, body: &str) -> Result<String, LlmError> {
        let mut request = self
            .agent
            .post(self.endpoint.base_url.as_str())
            .header("Content-Type", "application/json");
        if let Some(token) = &self.endpoint.bearer_token {
            request = request.header("Authorization", &format!("Bearer {token}"));
        }
        let mut response = request.send(body).map_err(transport_error)?;
        let status = response.status().as_u16();
        if !(200..300).contains(&status) {
            return Err(LlmError::HttpError(status));
        }
        let text = response
            .body_mut()
            .read_to_string()
            .map_err(transport_error)?;
        serde_json::from_str::<CompletionResponse>(&text)
            .map(|r| r.completion)
            .map_err(|e| LlmError::MalformedResponse(e.to_string()))
    }

    /// Requests a completion, retrying timeouts, transport failures and 5xx
    /// answers with the same body.
    pub fn complete(&self, fluent: &[Token]) -> Result<String, LlmError> {
        if fluent.is_empty() {
            return Err(LlmError::EmptyInput);
        }
        let prompt = render_prompt(fluent);
        let body = serde_json::to_string(&CompletionRequest { prompt: &prompt })
            .expect("requests always serialize");
        let mut attempt = 0;
        loop {
            match self.post_once(&body) {
                Err(e) if attempt < self.endpoint.max_retries && retryable(&e) => {
                    attempt += 1;
                    log::debug!("retrying after {e} (attempt {attempt})");
                }
                other => return other,
            }
        }
    }

    pub fn insert(&self, fluent: &[Token]) -> Result<AnnotatedUtterance, LlmError> {
        let completion = self.complete(fluent)?;
        accept_completion(fluent, &completion)
    }

    /// Inserts into every utterance with at most `max_in_flight` concurrent
    /// requests. Results keep input order.
    pub fn insert_many(
        &self,
        utterances: &[Vec<Token>],
        max_in_flight: usize,
    ) -> Vec<Result<AnnotatedUtterance, LlmError>> {
        let slots: Vec<Mutex<Option<Result<AnnotatedUtterance, LlmError>>>> =
            utterances.iter().map(|_| Mutex::new(None)).collect();
        let next = AtomicUsize::new(0);
        let workers = max_in_flight.clamp(1, utterances.len().max(1));
        std::thread::scope(|scope| {
            for _ in 0..workers {
                scope.spawn(|| loop {
                    let i = next.fetch_add(1, Ordering::Relaxed);
                    let Some(fluent) = utterances.get(i) else {
                        break;
                    };
                    *slots[i].lock().unwrap() = Some(self.insert(fluent));
                });
            }
        });
        slots
            .into_iter()
            .map(|s| s.into_inner().unwrap().expect("every slot is filled"))
            .collect()
    }
}

fn transport_error(e: ureq::Error) -> LlmError {
    match e {
        ureq::Error::Timeout(_) => LlmError::Timeout,
        ureq::Error::Io(io) if io.kind() == std::io::ErrorKind::TimedOut => LlmError::Timeout,
        ureq::Error::StatusCode(status) => LlmError::HttpError(status),
        other => LlmError::Transport(other.to_string()),
    }
}

fn retryable(e: &LlmError) -> bool {
    match e {
        LlmError::Timeout | LlmError::Transport(_) => true,
        LlmError::HttpError(status) => *status >= 500,
        _ => false,
    }
}

/// One-shot convenience around [`RemoteClient::insert`].
pub fn insert_remote(
    endpoint: &RemoteEndpoint,
    fluent: &[Token],
) -> Result<AnnotatedUtterance, LlmError> {
    RemoteClient::new(endpoint.clone()).insert(fluent)
}
