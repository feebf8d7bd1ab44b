//! Scoring and completion backends.
//!
//! Real backends are JSON-over-HTTP services: `POST {endpoint}/score` with
//! `{"input": ...}` returns `{"probs": [19 floats]}`, and
//! `POST {endpoint}/complete` with `{"prompt", "temperature", "top_p",
//! "max_tokens"}` returns `{"text": ...}`. The builtin mock backend derives
//! deterministic outputs from a hash of model name and input, so whole
//! experiment grids run offline and reproduce byte-identically.
//!
//! Transport failures are retried with exponential backoff up to the retry
//! policy's attempt bound, then surfaced with the attempt count. Malformed
//! responses (wrong length, out-of-range probabilities) are hard errors and
//! are never retried.

use std::sync::atomic::{AtomicU64, Ordering};
use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::{LabelSet, ValueLabel, LABEL_COUNT};

use super::{
    BackendFamily, BackendSpec, DecodeParams, ModelIoError, ProbabilityVector, PromptRendering,
};

/// Bounded-retry policy for transport failures.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub base_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> RetryPolicy {
        RetryPolicy { max_attempts: 3, base_delay: Duration::from_millis(250) }
    }
}

#[derive(Serialize)]
struct ScoreRequest<'a> {
    input: &'a str,
}

#[derive(Deserialize)]
struct ScoreResponse {
    probs: Vec<f64>,
}

#[derive(Serialize)]
struct CompleteRequest<'a> {
    prompt: &'a str,
    temperature: f64,
    top_p: f64,
    max_tokens: u32,
}

#[derive(Deserialize)]
struct CompleteResponse {
    text: String,
}

/// HTTP client for remote scoring/completion services. Keeps a running
/// count of retried attempts for run bookkeeping.
pub struct HttpBackendClient {
    client: reqwest::blocking::Client,
    policy: RetryPolicy,
    retries: AtomicU64,
}

impl HttpBackendClient {
    pub fn new(policy: RetryPolicy) -> HttpBackendClient {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(120))
            .build()
            .expect("default TLS-less client construction cannot fail");
        HttpBackendClient { client, policy, retries: AtomicU64::new(0) }
    }

    /// Total transport retries performed so far.
    pub fn retries(&self) -> u64 {
        self.retries.load(Ordering::Relaxed)
    }

    fn post_json<T: serde::de::DeserializeOwned>(
        &self,
        url: &str,
        body: &impl Serialize,
    ) -> Result<T, ModelIoError> {
        let mut last_error = String::new();
        for attempt in 1..=self.policy.max_attempts {
            if attempt > 1 {
                self.retries.fetch_add(1, Ordering::Relaxed);
                let backoff = self.policy.base_delay * 2u32.saturating_pow(attempt - 2);
                std::thread::sleep(backoff);
            }
            match self.client.post(url).json(body).send() {
                Ok(response) => {
                    let status = response.status();
                    if status.is_server_error() {
                        last_error = format!("server error {status}");
                        continue;
                    }
                    if !status.is_success() {
                        return Err(ModelIoError::MalformedResponse {
                            reason: format!("unexpected status {status}"),
                        });
                    }
                    return response.json::<T>().map_err(|e| ModelIoError::MalformedResponse {
                        reason: e.to_string(),
                    });
                }
                Err(e) => last_error = e.to_string(),
            }
        }
        Err(ModelIoError::Transport { attempts: self.policy.max_attempts, reason: last_error })
    }

    pub fn score(&self, endpoint: &str, input: &str) -> Result<ProbabilityVector, ModelIoError> {
        let url = format!("{}/score", endpoint.trim_end_matches('/'));
        let response: ScoreResponse = self.post_json(&url, &ScoreRequest { input })?;
        ProbabilityVector::from_slice(&response.probs)
    }

    pub fn complete(
        &self,
        endpoint: &str,
        prompt: &str,
        params: &DecodeParams,
    ) -> Result<String, ModelIoError> {
        let url = format!("{}/complete", endpoint.trim_end_matches('/'));
        let response: CompleteResponse = self.post_json(
            &url,
            &CompleteRequest {
                prompt,
                temperature: params.temperature,
                top_p: params.top_p,
                max_tokens: params.max_tokens,
            },
        )?;
        Ok(response.text)
    }
}

fn seeded_rng(tag: &str, model: &str, input: &str) -> ChaCha8Rng {
    let mut hasher = Sha256::new();
    hasher.update(tag.as_bytes());
    hasher.update([0]);
    hasher.update(model.as_bytes());
    hasher.update([0]);
    hasher.update(input.as_bytes());
    ChaCha8Rng::from_seed(hasher.finalize().into())
}

/// Builtin deterministic scoring: probabilities derived from a hash of
/// (model, input), skewed low so thresholding yields sparse label sets.
pub fn mock_probabilities(model: &str, input: &str) -> ProbabilityVector {
    let mut rng = seeded_rng("score", model, input);
    let mut probs = [0.0f64; LABEL_COUNT];
    for p in probs.iter_mut() {
        *p = rng.random::<f64>().powi(8);
    }
    ProbabilityVector::new(probs).expect("powers of a unit uniform stay in [0, 1]")
}

/// Builtin deterministic completion: a sparse label set derived from a hash
/// of (model, prompt), rendered as a canonical comma list or NONE.
pub fn mock_completion(model: &str, prompt: &str) -> String {
    let mut rng = seeded_rng("complete", model, prompt);
    let labels: LabelSet = ValueLabel::ALL
        .into_iter()
        .filter(|_| rng.random::<f64>() < 0.04)
        .collect();
    labels.canonical_list()
}

/// Score one input with a backend of the encoder (or mock) family.
pub fn score_encoder(backend: &BackendSpec, input_text: &str) -> Result<ProbabilityVector, ModelIoError> {
    match backend.family {
        BackendFamily::Encoder | BackendFamily::Mock => {}
        family => return Err(ModelIoError::WrongFamily { family }),
    }
    if backend.is_builtin() {
        return Ok(mock_probabilities(&backend.model, input_text));
    }
    HttpBackendClient::new(RetryPolicy::default()).score(&backend.endpoint, input_text)
}

/// Request one completion from a backend of the llm (or mock) family. The
/// returned text is untrimmed; parsing is the caller's concern.
pub fn complete(
    backend: &BackendSpec,
    prompt: &PromptRendering,
    params: &DecodeParams,
) -> Result<String, ModelIoError> {
    match backend.family {
        BackendFamily::Llm | BackendFamily::Mock => {}
        family => return Err(ModelIoError::WrongFamily { family }),
    }
    if backend.is_builtin() {
        return Ok(mock_completion(&backend.model, &prompt.text));
    }
    HttpBackendClient::new(RetryPolicy::default()).complete(&backend.endpoint, &prompt.text, params)
}
