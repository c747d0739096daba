//! HTTP backend speaking the OpenAI chat-completions wire format.
//!
//! The transport is a trait so retry and classification logic can be tested
//! against scripted responses without a network. Retries use deterministic
//! exponential backoff (no jitter) and honor Retry-After on 429s. A condvar
//! gate caps concurrent in-flight requests across worker threads.

use std::env;
use std::sync::{Condvar, Mutex};
use std::time::Duration;

use serde_json::{json, Value};

use super::{BackendError, CallContext, Completion, LlmBackend, LlmRequest, API_KEY_ENV};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HttpResponse {
    pub status: u16,
    /// Seconds from a Retry-After header, when present.
    pub retry_after: Option<u64>,
    pub body: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TransportError {
    Timeout,
    Connect(String),
}

pub trait HttpTransport: Send + Sync {
    fn post_json(
        &self,
        url: &str,
        api_key: &str,
        body: &Value,
        timeout_ms: u64,
    ) -> Result<HttpResponse, TransportError>;
}

pub struct ReqwestTransport {
    client: reqwest::blocking::Client,
}

impl ReqwestTransport {
    pub fn new() -> Self {
        ReqwestTransport {
            // Per-request timeouts are set on each call.
            client: reqwest::blocking::Client::builder()
                .timeout(None)
                .build()
                .expect("building an HTTP client with static options cannot fail"),
        }
    }
}

impl Default for ReqwestTransport {
    fn default() -> Self {
        Self::new()
    }
}

impl HttpTransport for ReqwestTransport {
    fn post_json(
        &self,
        url: &str,
        api_key: &str,
        body: &Value,
        timeout_ms: u64,
    ) -> Result<HttpResponse, TransportError> {
        let response = self
            .client
            .post(url)
            .bearer_auth(api_key)
            .timeout(Duration::from_millis(timeout_ms))
            .json(body)
            .send()
            .map_err(|e| {
                if e.is_timeout() {
                    TransportError::Timeout
                } else {
                    TransportError::Connect(e.to_string())
                }
            })?;
        let status = response.status().as_u16();
        let retry_after = response
            .headers()
            .get("retry-after")
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.trim().parse().ok());
        let body = response.text().unwrap_or_default();
        Ok(HttpResponse {
            status,
            retry_after,
            body,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub base_delay_ms: u64,
    pub max_delay_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_retries: 3,
            base_delay_ms: 250,
            max_delay_ms: 4000,
        }
    }
}

impl RetryPolicy {
    /// Backoff before retry number `retry` (1-based): base * 2^(retry-1),
    /// capped.
    pub fn delay_ms(&self, retry: u32) -> u64 {
        let factor = 1u64 << (retry - 1).min(32);
        self.base_delay_ms.saturating_mul(factor).min(self.max_delay_ms)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HttpBackendConfig {
    /// Full URL of the chat-completions endpoint.
    pub endpoint: String,
    pub model: String,
    /// Environment variable holding the bearer token.
    pub api_key_env: String,
    pub max_in_flight: usize,
    pub timeout_ms: u64,
    pub retry: RetryPolicy,
}

impl Default for HttpBackendConfig {
    fn default() -> Self {
        HttpBackendConfig {
            endpoint: "https://api.openai.com/v1/chat/completions".to_string(),
            model: "gpt-4o".to_string(),
            api_key_env: API_KEY_ENV.to_string(),
            max_in_flight: 4,
            timeout_ms: 120_000,
            retry: RetryPolicy::default(),
        }
    }
}

/// Counting semaphore over Mutex + Condvar; permits release on drop.
struct InFlightGate {
    available: Mutex<usize>,
    freed: Condvar,
}

struct Permit<'a> {
    gate: &'a InFlightGate,
}

impl InFlightGate {
    fn new(permits: usize) -> Self {
        InFlightGate {
            available: Mutex::new(permits.max(1)),
            freed: Condvar::new(),
        }
    }

    fn acquire(&self) -> Permit<'_> {
        let mut available = self.available.lock().unwrap();
        while *available == 0 {
            available = self.freed.wait(available).unwrap();
        }
        *available -= 1;
        Permit { gate: self }
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        let mut available = self.gate.available.lock().unwrap();
        *available += 1;
        self.gate.freed.notify_one();
    }
}

type SleepFn = Box<dyn Fn(u64) + Send + Sync>;

pub struct HttpBackend {
    config: HttpBackendConfig,
    transport: Box<dyn HttpTransport>,
    sleep: SleepFn,
    gate: InFlightGate,
}

enum Outcome {
    Done(Completion),
    Fatal(BackendError),
    /// Retryable; carries the sleep override (Retry-After) if any.
    Retry {
        reason: RetryReason,
        after_ms: Option<u64>,
    },
}

#[derive(Clone)]
enum RetryReason {
    RateLimit(String),
    Timeout,
    Transport(String),
    Api { status: u16, message: String },
}

impl HttpBackend {
    pub fn new(config: HttpBackendConfig) -> Self {
        Self::with_transport(config, Box::new(ReqwestTransport::new()))
    }

    pub fn with_transport(config: HttpBackendConfig, transport: Box<dyn HttpTransport>) -> Self {
        let gate = InFlightGate::new(config.max_in_flight);
        HttpBackend {
            config,
            transport,
            sleep: Box::new(|ms| std::thread::sleep(Duration::from_millis(ms))),
            gate,
        }
    }

    /// Replaces the real sleep, so retry tests run instantly.
    pub fn with_sleep(mut self, sleep: impl Fn(u64) + Send + Sync + 'static) -> Self {
        self.sleep = Box::new(sleep);
        self
    }

    fn request_body(&self, request: &LlmRequest) -> Value {
        json!({
            "model": self.config.model,
            "messages": [{"role": "user", "content": request.prompt_text}],
            "temperature": request.temperature,
            "top_p": request.top_p,
            "max_tokens": request.max_output_tokens,
        })
    }

    fn classify(result: Result<HttpResponse, TransportError>) -> Outcome {
        match result {
            Err(TransportError::Timeout) => Outcome::Retry {
                reason: RetryReason::Timeout,
                after_ms: None,
            },
            Err(TransportError::Connect(message)) => Outcome::Retry {
                reason: RetryReason::Transport(message),
                after_ms: None,
            },
            Ok(response) => match response.status {
                200..=299 => match extract_content(&response.body) {
                    Some(text) => Outcome::Done(Completion { text, attempts: 0 }),
                    None => Outcome::Fatal(BackendError::MalformedResponse {
                        message: truncate(&response.body),
                    }),
                },
                401 | 403 => Outcome::Fatal(BackendError::Auth {
                    status: response.status,
                    message: truncate(&response.body),
                }),
                429 => Outcome::Retry {
                    reason: RetryReason::RateLimit(truncate(&response.body)),
                    after_ms: response.retry_after.map(|secs| secs * 1000),
                },
                408 | 500..=599 => Outcome::Retry {
                    reason: RetryReason::Api {
                        status: response.status,
                        message: truncate(&response.body),
                    },
                    after_ms: None,
                },
                status => Outcome::Fatal(BackendError::Api {
                    status,
                    attempts: 0,
                    message: truncate(&response.body),
                }),
            },
        }
    }

    fn exhausted(reason: RetryReason, attempts: u32) -> BackendError {
        match reason {
            RetryReason::RateLimit(message) => BackendError::RateLimitExhausted { attempts, message },
            RetryReason::Timeout => BackendError::TimeoutExhausted {
                attempts,
                message: "request timed out".to_string(),
            },
            RetryReason::Transport(message) => BackendError::Transport { attempts, message },
            RetryReason::Api { status, message } => BackendError::Api {
                status,
                attempts,
                message,
            },
        }
    }
}

fn extract_content(body: &str) -> Option<String> {
    let value: Value = serde_json::from_str(body).ok()?;
    let content = value.get("choices")?.get(0)?.get("message")?.get("content")?;
    content.as_str().map(str::to_string)
}

fn truncate(body: &str) -> String {
    const LIMIT: usize = 400;
    if body.len() <= LIMIT {
        body.to_string()
    } else {
        let cut = (0..=LIMIT).rev().find(|i| body.is_char_boundary(*i)).unwrap_or(0);
        format!("{}...", &body[..cut])
    }
}

impl LlmBackend for HttpBackend {
    fn name(&self) -> String {
        format!("http:{}", self.config.model)
    }

    fn complete(&self, request: &LlmRequest, _ctx: &CallContext) -> Result<Completion, BackendError> {
        let api_key = env::var(&self.config.api_key_env).map_err(|_| BackendError::MissingApiKey {
            env: self.config.api_key_env.clone(),
        })?;
        let body = self.request_body(request);
        let _permit = self.gate.acquire();
        let mut attempts = 0u32;
        loop {
            attempts += 1;
            let result = self
                .transport
                .post_json(&self.config.endpoint, &api_key, &body, self.config.timeout_ms);
            match Self::classify(result) {
                Outcome::Done(mut completion) => {
                    completion.attempts = attempts;
                    return Ok(completion);
                }
                Outcome::Fatal(mut error) => {
                    if let BackendError::Api { attempts: a, .. } = &mut error {
                        *a = attempts;
                    }
                    return Err(error);
                }
                Outcome::Retry { reason, after_ms } => {
                    let retries_done = attempts - 1;
                    if retries_done >= self.config.retry.max_retries {
                        return Err(Self::exhausted(reason, attempts));
                    }
                    let backoff = self.config.retry.delay_ms(retries_done + 1);
                    (self.sleep)(after_ms.unwrap_or(backoff));
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::PromptKind;
    use std::sync::atomic::{AtomicUsize, Ordering};
    use std::sync::{Arc, Mutex as StdMutex};

    struct Scripted {
        responses: StdMutex<Vec<Result<HttpResponse, TransportError>>>,
        calls: AtomicUsize,
    }

    impl Scripted {
        fn new(responses: Vec<Result<HttpResponse, TransportError>>) -> Self {
            Scripted {
                responses: StdMutex::new(responses),
                calls: AtomicUsize::new(0),
            }
        }
    }

    impl HttpTransport for Scripted {
        fn post_json(
            &self,
            _url: &str,
            _api_key: &str,
            _body: &Value,
            _timeout_ms: u64,
        ) -> Result<HttpResponse, TransportError> {
            self.calls.fetch_add(1, Ordering::SeqCst);
            let mut responses = self.responses.lock().unwrap();
            if responses.is_empty() {
                panic!("transport called more times than scripted");
            }
            responses.remove(0)
        }
    }

    fn ok_response(content: &str) -> HttpResponse {
        HttpResponse {
            status: 200,
            retry_after: None,
            body: json!({"choices": [{"message": {"content": content}}]}).to_string(),
        }
    }

    fn status_response(status: u16, retry_after: Option<u64>) -> HttpResponse {
        HttpResponse {
            status,
            retry_after,
            body: format!("{{\"error\": \"status {status}\"}}"),
        }
    }

    fn request() -> LlmRequest {
        LlmRequest {
            prompt_text: "1. alpha\n2. beta".to_string(),
            max_output_tokens: 8192,
            temperature: 0.0,
            top_p: 1.0,
            context_budget_tokens: 8192,
        }
    }

    fn ctx() -> CallContext {
        CallContext {
            level: 0,
            chunk_index: 0,
            shuffle_index: 1,
            kind: PromptKind::Approval,
            n_units: 2,
            target: 1,
            seed: 0,
        }
    }

    fn backend(responses: Vec<Result<HttpResponse, TransportError>>) -> (HttpBackend, Arc<StdMutex<Vec<u64>>>) {
        let slept = Arc::new(StdMutex::new(Vec::new()));
        let recorder = Arc::clone(&slept);
        let config = HttpBackendConfig {
            api_key_env: "LAMSUM_TEST_KEY".to_string(),
            ..HttpBackendConfig::default()
        };
        std::env::set_var("LAMSUM_TEST_KEY", "sk-test");
        let backend = HttpBackend::with_transport(config, Box::new(Scripted::new(responses)))
            .with_sleep(move |ms| recorder.lock().unwrap().push(ms));
        (backend, slept)
    }

    #[test]
    fn missing_api_key_fails_without_calling_transport() {
        std::env::remove_var("LAMSUM_MISSING_KEY");
        let config = HttpBackendConfig {
            api_key_env: "LAMSUM_MISSING_KEY".to_string(),
            ..HttpBackendConfig::default()
        };
        let backend = HttpBackend::with_transport(config, Box::new(Scripted::new(vec![])));
        let err = backend.complete(&request(), &ctx()).unwrap_err();
        assert!(matches!(err, BackendError::MissingApiKey { env } if env == "LAMSUM_MISSING_KEY"));
    }

    #[test]
    fn success_parses_chat_content() {
        let (backend, slept) = backend(vec![Ok(ok_response("alpha"))]);
        let completion = backend.complete(&request(), &ctx()).unwrap();
        assert_eq!(completion.text, "alpha");
        assert_eq!(completion.attempts, 1);
        assert!(slept.lock().unwrap().is_empty());
    }

    #[test]
    fn auth_errors_do_not_retry() {
        let (backend, slept) = backend(vec![Ok(status_response(401, None))]);
        let err = backend.complete(&request(), &ctx()).unwrap_err();
        assert!(matches!(err, BackendError::Auth { status: 401, .. }));
        assert!(slept.lock().unwrap().is_empty());
    }

    #[test]
    fn rate_limits_back_off_then_succeed() {
        let (backend, slept) = backend(vec![
            Ok(status_response(429, None)),
            Ok(status_response(429, None)),
            Ok(ok_response("done")),
        ]);
        let completion = backend.complete(&request(), &ctx()).unwrap();
        assert_eq!(completion.attempts, 3);
        assert_eq!(*slept.lock().unwrap(), vec![250, 500]);
    }

    #[test]
    fn retry_after_header_overrides_backoff() {
        let (backend, slept) = backend(vec![
            Ok(status_response(429, Some(2))),
            Ok(ok_response("done")),
        ]);
        backend.complete(&request(), &ctx()).unwrap();
        assert_eq!(*slept.lock().unwrap(), vec![2000]);
    }

    #[test]
    fn timeouts_exhaust_after_max_retries() {
        let (backend, slept) = backend(vec![
            Err(TransportError::Timeout),
            Err(TransportError::Timeout),
            Err(TransportError::Timeout),
            Err(TransportError::Timeout),
        ]);
        let err = backend.complete(&request(), &ctx()).unwrap_err();
        assert!(matches!(err, BackendError::TimeoutExhausted { attempts: 4, .. }));
        assert_eq!(*slept.lock().unwrap(), vec![250, 500, 1000]);
    }

    #[test]
    fn server_errors_retry_and_carry_last_status() {
        let (backend, _) = backend(vec![
            Ok(status_response(500, None)),
            Ok(status_response(503, None)),
            Ok(status_response(502, None)),
            Ok(status_response(500, None)),
        ]);
        let err = backend.complete(&request(), &ctx()).unwrap_err();
        assert!(matches!(err, BackendError::Api { status: 500, attempts: 4, .. }));
    }

    #[test]
    fn client_errors_other_than_retryable_are_fatal() {
        let (backend, slept) = backend(vec![Ok(status_response(400, None))]);
        let err = backend.complete(&request(), &ctx()).unwrap_err();
        assert!(matches!(err, BackendError::Api { status: 400, attempts: 1, .. }));
        assert!(slept.lock().unwrap().is_empty());
    }

    #[test]
    fn malformed_success_body_is_fatal() {
        let (backend, _) = backend(vec![Ok(HttpResponse {
            status: 200,
            retry_after: None,
            body: "{\"choices\": []}".to_string(),
        })]);
        let err = backend.complete(&request(), &ctx()).unwrap_err();
        assert!(matches!(err, BackendError::MalformedResponse { .. }));
    }

    #[test]
    fn backoff_doubles_and_caps() {
        let policy = RetryPolicy::default();
        assert_eq!(policy.delay_ms(1), 250);
        assert_eq!(policy.delay_ms(2), 500);
        assert_eq!(policy.delay_ms(3), 1000);
        assert_eq!(policy.delay_ms(5), 4000);
        assert_eq!(policy.delay_ms(12), 4000);
    }

    #[test]
    fn in_flight_gate_caps_concurrency() {
        use std::thread;
        struct Counting {
            active: AtomicUsize,
            peak: AtomicUsize,
        }
        impl HttpTransport for Counting {
            fn post_json(
                &self,
                _url: &str,
                _api_key: &str,
                _body: &Value,
                _timeout_ms: u64,
            ) -> Result<HttpResponse, TransportError> {
                let now = self.active.fetch_add(1, Ordering::SeqCst) + 1;
                self.peak.fetch_max(now, Ordering::SeqCst);
                thread::sleep(Duration::from_millis(20));
                self.active.fetch_sub(1, Ordering::SeqCst);
                Ok(ok_response("ok"))
            }
        }
        // The backend consumes its transport, so observe the peak through a
        // shared handle.
        struct Shared(Arc<Counting>);
        impl HttpTransport for Shared {
            fn post_json(
                &self,
                url: &str,
                api_key: &str,
                body: &Value,
                timeout_ms: u64,
            ) -> Result<HttpResponse, TransportError> {
                self.0.post_json(url, api_key, body, timeout_ms)
            }
        }
        std::env::set_var("LAMSUM_TEST_KEY", "sk-test");
        let transport = Arc::new(Counting {
            active: AtomicUsize::new(0),
            peak: AtomicUsize::new(0),
        });
        let config = HttpBackendConfig {
            api_key_env: "LAMSUM_TEST_KEY".to_string(),
            max_in_flight: 2,
            ..HttpBackendConfig::default()
        };
        let backend = Arc::new(HttpBackend::with_transport(
            config,
            Box::new(Shared(Arc::clone(&transport))),
        ));
        let handles: Vec<_> = (0..6)
            .map(|_| {
                let b = Arc::clone(&backend);
                thread::spawn(move || b.complete(&request(), &ctx()).unwrap())
            })
            .collect();
        for handle in handles {
            handle.join().unwrap();
        }
        assert!(transport.peak.load(Ordering::SeqCst) <= 2);
        assert_eq!(transport.active.load(Ordering::SeqCst), 0);
    }
}
