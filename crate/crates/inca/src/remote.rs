//! HTTP backends speaking the common chat-completions and embeddings JSON
//! schemas, plus the process-wide network guard used by `--mock` runs.

use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Condvar, Mutex};
use std::time::Duration;

use inca_core::{ChatClient, CompletionParams, Embedder};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

pub const ENV_CHAT_ENDPOINT: &str = "INCA_CHAT_ENDPOINT";
pub const ENV_EMBED_ENDPOINT: &str = "INCA_EMBED_ENDPOINT";
pub const ENV_API_KEY: &str = "INCA_API_KEY";

static NETWORK_FORBIDDEN: AtomicBool = AtomicBool::new(false);

/// After this call any attempt to issue an HTTP request panics.
pub fn forbid_network() {
    NETWORK_FORBIDDEN.store(true, Ordering::SeqCst);
}

pub fn network_forbidden() -> bool {
    NETWORK_FORBIDDEN.load(Ordering::SeqCst)
}

fn network_guard(url: &str) {
    if network_forbidden() {
        panic!("network access to {url} attempted while the network is forbidden");
    }
}

#[derive(Debug, Clone, Copy)]
pub struct RetryPolicy {
    pub attempts: u32,
    pub initial_backoff: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            attempts: 3,
            initial_backoff: Duration::from_millis(250),
        }
    }
}

/// Counting semaphore bounding concurrent requests.
#[derive(Debug)]
struct InFlight {
    limit: usize,
    active: Mutex<usize>,
    released: Condvar,
}

struct Permit<'a>(&'a InFlight);

impl InFlight {
    fn new(limit: usize) -> Self {
        Self {
            limit: limit.max(1),
            active: Mutex::new(0),
            released: Condvar::new(),
        }
    }

    fn acquire(&self) -> Permit<'_> {
        let mut active = self.active.lock().unwrap();
        while *active >= self.limit {
            active = self.released.wait(active).unwrap();
        }
        *active += 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.active.lock().unwrap() -= 1;
        self.0.released.notify_one();
    }
}

#[derive(Debug, Clone)]
pub struct EndpointConfig {
    pub url: String,
    pub model: String,
    pub api_key: Option<String>,
    pub max_in_flight: usize,
    pub timeout: Duration,
    pub retry: RetryPolicy,
}

impl EndpointConfig {
    pub fn new(url: impl Into<String>, model: impl Into<String>) -> Self {
        Self {
            url: url.into(),
            model: model.into(),
            api_key: None,
            max_in_flight: 4,
            timeout: Duration::from_secs(120),
            retry: RetryPolicy::default(),
        }
    }

    /// Endpoint URL from `var`, API key from `INCA_API_KEY`.
    pub fn from_env(var: &str, model: impl Into<String>) -> Result<Self, String> {
        let url =
            std::env::var(var).map_err(|_| format!("environment variable {var} is not set"))?;
        let mut cfg = Self::new(url, model);
        cfg.api_key = std::env::var(ENV_API_KEY).ok().filter(|k| !k.is_empty());
        Ok(cfg)
    }
}

#[derive(Debug)]
struct HttpEndpoint {
    config: EndpointConfig,
    agent: ureq::Agent,
    in_flight: InFlight,
}

impl HttpEndpoint {
    fn new(config: EndpointConfig) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(config.timeout))
            .build()
            .into();
        let in_flight = InFlight::new(config.max_in_flight);
        Self {
            config,
            agent,
            in_flight,
        }
    }

    fn post_json<Req: Serialize, Resp: DeserializeOwned>(
        &self,
        body: &Req,
    ) -> inca_core::Result<Resp> {
        network_guard(&self.config.url);
        let _permit = self.in_flight.acquire();
        let retry = self.config.retry;
        let mut last_error = String::new();
        for attempt in 0..retry.attempts.max(1) {
            if attempt > 0 {
                std::thread::sleep(retry.initial_backoff * 2u32.pow(attempt - 1));
            }
            let mut request = self.agent.post(&self.config.url);
            if let Some(key) = &self.config.api_key {
                request = request.header("Authorization", &format!("Bearer {key}"));
            }
            match request.send_json(body) {
                Ok(mut response) => match response.body_mut().read_json::<Resp>() {
                    Ok(parsed) => return Ok(parsed),
                    Err(e) => last_error = format!("malformed response: {e}"),
                },
                Err(ureq::Error::StatusCode(code)) if (400..500).contains(&code) && code != 429 => {
                    return Err(inca_core::Error::BackendUnavailable(format!(
                        "{} rejected the request with status {code}",
                        self.config.url
                    )));
                }
                Err(e) => last_error = e.to_string(),
            }
            log::warn!(
                "request to {} failed (attempt {}/{}): {last_error}",
                self.config.url,
                attempt + 1,
                retry.attempts
            );
        }
        Err(inca_core::Error::BackendUnavailable(format!(
            "{} failed after {} attempts: {last_error}",
            self.config.url, retry.attempts
        )))
    }
}

#[derive(Serialize)]
struct ChatMessage<'a> {
    role: &'a str,
    content: &'a str,
}

#[derive(Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    messages: [ChatMessage<'a>; 1],
    temperature: f64,
    max_tokens: usize,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatResponseMessage,
}

#[derive(Deserialize)]
struct ChatResponseMessage {
    #[serde(default)]
    content: Option<String>,
}

#[derive(Debug)]
pub struct RemoteChatClient {
    endpoint: HttpEndpoint,
    identity: String,
    context_window: Option<usize>,
}

impl RemoteChatClient {
    pub fn new(config: EndpointConfig, context_window: Option<usize>) -> Self {
        let identity = format!("chat:{}@{}", config.model, config.url);
        Self {
            endpoint: HttpEndpoint::new(config),
            identity,
            context_window,
        }
    }
}

impl ChatClient for RemoteChatClient {
    fn identity(&self) -> &str {
        &self.identity
    }

    fn context_window(&self) -> Option<usize> {
        self.context_window
    }

    fn complete(&self, prompt: &str, params: &CompletionParams) -> inca_core::Result<String> {
        let request = ChatRequest {
            model: &self.endpoint.config.model,
            messages: [ChatMessage {
                role: "user",
                content: prompt,
            }],
            temperature: params.temperature,
            max_tokens: params.max_tokens,
        };
        let response: ChatResponse = self.endpoint.post_json(&request)?;
        response
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| inca_core::Error::BackendUnavailable("response has no choices".into()))
    }
}

#[derive(Serialize)]
struct EmbedRequest<'a> {
    model: &'a str,
    input: &'a [&'a str],
}

#[derive(Deserialize)]
struct EmbedResponse {
    data: Vec<EmbedDatum>,
}

#[derive(Deserialize)]
struct EmbedDatum {
    embedding: Vec<f64>,
    #[serde(default)]
    index: Option<usize>,
}

#[derive(Debug)]
pub struct RemoteEmbedder {
    endpoint: HttpEndpoint,
    identity: String,
    dimension: usize,
}

impl RemoteEmbedder {
    /// With `dimension = None` the endpoint is probed once to learn it.
    pub fn new(config: EndpointConfig, dimension: Option<usize>) -> inca_core::Result<Self> {
        let identity = format!("embed:{}@{}", config.model, config.url);
        let mut embedder = Self {
            endpoint: HttpEndpoint::new(config),
            identity,
            dimension: dimension.unwrap_or(0),
        };
        if dimension.is_none() {
            let probe = embedder.request(&["dimension probe"])?;
            embedder.dimension = probe[0].len();
        }
        Ok(embedder)
    }

    fn request(&self, texts: &[&str]) -> inca_core::Result<Vec<Vec<f64>>> {
        let response: EmbedResponse = self.endpoint.post_json(&EmbedRequest {
            model: &self.endpoint.config.model,
            input: texts,
        })?;
        let mut data = response.data;
        if data.iter().all(|d| d.index.is_some()) {
            data.sort_by_key(|d| d.index);
        }
        if data.len() != texts.len() {
            return Err(inca_core::Error::BackendUnavailable(format!(
                "{} returned {} embeddings for {} inputs",
                self.endpoint.config.url,
                data.len(),
                texts.len()
            )));
        }
        Ok(data.into_iter().map(|d| d.embedding).collect())
    }
}

impl Embedder for RemoteEmbedder {
    fn identity(&self) -> &str {
        &self.identity
    }

    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed_batch(&self, texts: &[&str]) -> inca_core::Result<Vec<Vec<f64>>> {
        self.request(texts)
    }
}
