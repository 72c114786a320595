//! Async HTTP client for chat-completions-compatible endpoints.
//!
//! One [`GatewayClient`] wraps one endpoint profile. All operations share a
//! semaphore sized to the profile's `max_in_flight`, so however callers
//! compose futures, at most that many requests are outstanding at once.
//! Transient failures (transport errors, HTTP 408/429/5xx) are retried with
//! exponential backoff; other HTTP errors fail fast.

use std::collections::BTreeMap;
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use serde::de::DeserializeOwned;
use serde_json::json;
use tokio::sync::Semaphore;

use crate::closed_metrics::{compare_sampled, to_distribution, LogprobValidation};
use crate::error::{Error, Result};
use crate::matrix::{PromptJob, SurveyQuestion, TaskKind};
use crate::preprocess::{extract_structured_field, JudgeVerdict};

use super::types::{EndpointProfile, LogprobMode, OptionLogprobs};

/// Instruction sent to the judge model, verbatim, ahead of the text under
/// review.
pub const JUDGE_INSTRUCTION: &str = include_str!("../../data/judge_instruction.txt");

/// The suffix appended to a survey prompt so the scored option is the
/// continuation of the answer field.
const ANSWER_FIELD_PREFIX: &str = "\n{\"answer_option\": \"";

/// Result of one chat completion.
#[derive(Debug, Clone, PartialEq)]
pub struct ChatOutcome {
    /// Assistant message, verbatim.
    pub text: String,
    /// 1-based attempt count of the request that succeeded.
    pub attempts: u32,
    pub latency_ms: u64,
}

/// HTTP client bound to one endpoint profile.
pub struct GatewayClient {
    profile: EndpointProfile,
    http: reqwest::Client,
    permits: Arc<Semaphore>,
    bearer: Option<String>,
    /// Embedding dimensionality pinned by the first batch of the run.
    embed_dim: Mutex<Option<usize>>,
}

impl GatewayClient {
    /// Builds a client, resolving the bearer token from the profile's
    /// `api_key_env` if one is configured.
    pub fn new(profile: EndpointProfile) -> Result<Self> {
        profile.validate()?;
        let bearer = match &profile.api_key_env {
            Some(var) => Some(std::env::var(var).map_err(|_| {
                Error::Config(format!(
                    "endpoint '{}': api_key_env '{var}' is not set",
                    profile.model
                ))
            })?),
            None => None,
        };
        let http = reqwest::Client::builder()
            .timeout(Duration::from_millis(profile.timeout_ms))
            .build()
            .map_err(|e| Error::Config(format!("HTTP client: {e}")))?;
        let permits = Arc::new(Semaphore::new(profile.max_in_flight));
        Ok(GatewayClient {
            profile,
            http,
            permits,
            bearer,
            embed_dim: Mutex::new(None),
        })
    }

    pub fn profile(&self) -> &EndpointProfile {
        &self.profile
    }

    /// POSTs `body` to `base_url + path` with bounded concurrency and the
    /// profile's retry policy. Returns the parsed body and the attempt count.
    async fn post_json<T: DeserializeOwned>(
        &self,
        path: &str,
        body: &serde_json::Value,
    ) -> Result<(T, u32)> {
        let url = format!("{}{path}", self.profile.base_url.trim_end_matches('/'));
        let policy = self.profile.retry;
        let mut last_failure = String::new();
        for attempt in 1..=policy.max_attempts.max(1) {
            if attempt > 1 {
                tokio::time::sleep(backoff_delay(policy.backoff_ms, attempt)).await;
            }
            let _permit = self
                .permits
                .acquire()
                .await
                .expect("request semaphore closed");
            let mut request = self.http.post(&url).json(body);
            if let Some(token) = &self.bearer {
                request = request.bearer_auth(token);
            }
            match request.send().await {
                Ok(response) => {
                    let status = response.status();
                    if status.is_success() {
                        let parsed = response.json::<T>().await.map_err(|e| Error::Http {
                            status: status.as_u16(),
                            url: url.clone(),
                            detail: format!("unreadable response body: {e}"),
                        })?;
                        return Ok((parsed, attempt));
                    }
                    let detail = response.text().await.unwrap_or_default();
                    let detail = detail.trim().chars().take(200).collect::<String>();
                    if !is_retryable_status(status.as_u16()) {
                        return Err(Error::Http {
                            status: status.as_u16(),
                            url,
                            detail,
                        });
                    }
                    last_failure = format!("HTTP {}: {detail}", status.as_u16());
                }
                Err(e) => last_failure = format!("transport: {e}"),
            }
            log::debug!("attempt {attempt}/{} against {url} failed: {last_failure}", policy.max_attempts);
        }
        Err(Error::Transport {
            url,
            attempts: policy.max_attempts.max(1),
            detail: last_failure,
        })
    }

    /// Sends the rendered prompt as a single user message and returns the
    /// assistant message verbatim.
    pub async fn complete_chat(&self, job: &PromptJob) -> Result<ChatOutcome> {
        let body = json!({
            "model": self.profile.model,
            "messages": [{"role": "user", "content": job.prompt}],
            "temperature": job.decoding.temperature,
            "top_p": job.decoding.top_p,
            "max_tokens": job.decoding.max_tokens,
            "seed": job.seed,
        });
        let started = Instant::now();
        let (response, attempts): (ChatResponse, u32) =
            self.post_json("/chat/completions", &body).await?;
        let text = response
            .choices
            .into_iter()
            .next()
            .map(|c| c.message.content)
            .ok_or_else(|| Error::Data("chat response carried no choices".to_string()))?;
        Ok(ChatOutcome {
            text,
            attempts,
            latency_ms: started.elapsed().as_millis() as u64,
        })
    }

    /// Scores each answer option as the continuation of the answer field and
    /// returns temperature-scaled log-probabilities.
    pub async fn option_logprobs(
        &self,
        job: &PromptJob,
        options: &[String],
    ) -> Result<OptionLogprobs> {
        if job.task != TaskKind::SubjectiveQa {
            return Err(Error::Validation(format!(
                "option scoring applies to the survey task, not {}",
                job.task
            )));
        }
        let question_id = job.question_id.clone().ok_or_else(|| {
            Error::Validation(format!("job '{}' has no question id", job.id))
        })?;
        let temperature = effective_temperature(self.profile.decoding.temperature);
        let (logprobs, first_token_match) = match self.profile.logprob_mode {
            LogprobMode::Echo => (self.echo_scores(job, options).await?, false),
            LogprobMode::FirstToken => (self.first_token_scores(job, options).await?, true),
            LogprobMode::Unsupported => {
                return Err(Error::Capability(format!(
                    "endpoint '{}' exposes no log-probabilities; collect sampled \
                     answers and use the validate-logprobs path instead",
                    self.profile.model
                )));
            }
        };
        let scored = OptionLogprobs {
            question_id,
            options: options.to_vec(),
            logprobs: logprobs
                .into_iter()
                .map(|lp| lp.map(|v| v / temperature))
                .collect(),
            temperature,
            first_token_match,
        };
        scored.validate()?;
        if scored.has_absent() {
            log::warn!(
                "job '{}': {} option(s) could not be scored",
                job.id,
                scored.logprobs.iter().filter(|lp| lp.is_none()).count()
            );
        }
        Ok(scored)
    }

    /// Echo mode: one completions request per option with `echo` on and no
    /// generated tokens, summing token log-probs over the option's span.
    async fn echo_scores(
        &self,
        job: &PromptJob,
        options: &[String],
    ) -> Result<Vec<Option<f64>>> {
        let requests = options.iter().map(|option| async move {
            let prompt = format!("{}{ANSWER_FIELD_PREFIX}{option}\"}}", job.prompt);
            let body = json!({
                "model": self.profile.model,
                "prompt": prompt,
                "echo": true,
                "max_tokens": 0,
                "logprobs": 0,
            });
            let (response, _): (CompletionsResponse, u32) =
                self.post_json("/completions", &body).await?;
            let payload = response
                .choices
                .into_iter()
                .next()
                .and_then(|c| c.logprobs)
                .ok_or_else(|| {
                    Error::Capability(format!(
                        "endpoint '{}' returned no logprobs in echo mode",
                        self.profile.model
                    ))
                })?;
            let span_start = job.prompt.len() + ANSWER_FIELD_PREFIX.len();
            Ok(sum_span_logprobs(
                &payload.tokens,
                &payload.token_logprobs,
                span_start,
                span_start + option.len(),
            ))
        });
        futures::future::try_join_all(requests).await
    }

    /// First-token mode: one completion over the answer-field prefix with
    /// top-k log-probs, matching options by their leading token.
    async fn first_token_scores(
        &self,
        job: &PromptJob,
        options: &[String],
    ) -> Result<Vec<Option<f64>>> {
        let body = json!({
            "model": self.profile.model,
            "prompt": format!("{}{ANSWER_FIELD_PREFIX}", job.prompt),
            "max_tokens": 1,
            "logprobs": 20,
        });
        let (response, _): (CompletionsResponse, u32) =
            self.post_json("/completions", &body).await?;
        let top = response
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.logprobs)
            .and_then(|lp| lp.top_logprobs.into_iter().next())
            .ok_or_else(|| {
                Error::Capability(format!(
                    "endpoint '{}' returned no top log-probs",
                    self.profile.model
                ))
            })?;
        Ok(options
            .iter()
            .map(|option| match_first_token(option, &top))
            .collect())
    }

    /// Embeds `texts`, one unit-norm vector per text. The dimensionality of
    /// the first batch is pinned; later batches must match it.
    pub async fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>> {
        if texts.is_empty() {
            return Err(Error::Validation(
                "embedding request with no texts".to_string(),
            ));
        }
        let body = json!({"model": self.profile.model, "input": texts});
        let (response, _): (EmbeddingsResponse, u32) = self.post_json("/embeddings", &body).await?;
        if response.data.len() != texts.len() {
            return Err(Error::Data(format!(
                "asked for {} embeddings, got {}",
                texts.len(),
                response.data.len()
            )));
        }
        let mut rows = response.data;
        rows.sort_by_key(|row| row.index);
        let mut vectors = Vec::with_capacity(rows.len());
        for row in rows {
            let norm = row.embedding.iter().map(|v| v * v).sum::<f64>().sqrt();
            if !norm.is_finite() || norm == 0.0 {
                return Err(Error::Data(format!(
                    "embedding {} has norm {norm}; cannot normalize",
                    row.index
                )));
            }
            vectors.push(row.embedding.iter().map(|v| v / norm).collect::<Vec<f64>>());
        }
        let dim = vectors[0].len();
        if let Some(bad) = vectors.iter().find(|v| v.len() != dim) {
            return Err(Error::Data(format!(
                "embedding dimensions differ within one batch: {dim} vs {}",
                bad.len()
            )));
        }
        let mut pinned = self.embed_dim.lock().expect("embed_dim poisoned");
        match *pinned {
            Some(expected) if expected != dim => {
                return Err(Error::Data(format!(
                    "embedding dimension changed across batches: {expected} then {dim}"
                )));
            }
            Some(_) => {}
            None => *pinned = Some(dim),
        }
        Ok(vectors)
    }

    /// Classifies whether `text` reads as a human persona or as an AI
    /// assistant, using the bundled annotator instruction. An unparseable
    /// judge reply is retried once, then resolved conservatively as
    /// [`JudgeVerdict::Unresolved`].
    pub async fn judge_role_violation(&self, text: &str) -> Result<JudgeVerdict> {
        let content = format!("{}\n{text}", JUDGE_INSTRUCTION.trim_end());
        let body = json!({
            "model": self.profile.model,
            "messages": [{"role": "user", "content": content}],
            "temperature": self.profile.decoding.temperature,
            "top_p": self.profile.decoding.top_p,
            "max_tokens": self.profile.decoding.max_tokens,
        });
        for _ in 0..2 {
            let (response, _): (ChatResponse, u32) =
                self.post_json("/chat/completions", &body).await?;
            let reply = response
                .choices
                .into_iter()
                .next()
                .map(|c| c.message.content)
                .unwrap_or_default();
            if let Some(verdict) = parse_judge_verdict(&reply) {
                return Ok(verdict);
            }
            log::warn!("judge reply was not parseable, reprompting once: {reply:?}");
        }
        Ok(JudgeVerdict::Unresolved)
    }

    /// Cross-checks scored option log-probabilities against `samples`
    /// sampled completions of the same prompt.
    pub async fn validate_logprobs(
        &self,
        job: &PromptJob,
        question: &SurveyQuestion,
        samples: usize,
    ) -> Result<LogprobValidation> {
        let scored = self.option_logprobs(job, &question.options).await?;
        let distribution = to_distribution(&scored)?;
        let completions = (0..samples as u64).map(|i| {
            let mut sample_job = job.clone();
            sample_job.seed = job.seed.wrapping_add(i);
            // Sample at the profile's decoding parameters: the scored
            // distribution is scaled by the profile temperature, so the
            // comparison is only meaningful at that same temperature.
            sample_job.decoding = self.profile.decoding;
            async move { self.complete_chat(&sample_job).await }
        });
        let outcomes = futures::future::try_join_all(completions).await?;
        let sampled: Vec<Option<String>> = outcomes
            .iter()
            .map(|outcome| {
                extract_structured_field(&outcome.text, TaskKind::SubjectiveQa)
                    .ok()
                    .map(|extraction| extraction.text)
            })
            .collect();
        compare_sampled(&sampled, &distribution)
    }
}

/// Exponential backoff: `backoff_ms · 2^(attempt−1)` before retry `attempt`.
fn backoff_delay(backoff_ms: u64, attempt: u32) -> Duration {
    Duration::from_millis(backoff_ms.saturating_mul(1u64 << (attempt - 1).min(20)))
}

fn is_retryable_status(status: u16) -> bool {
    status == 408 || status == 429 || (500..600).contains(&status)
}

fn effective_temperature(temperature: f64) -> f64 {
    // Greedy decoding (t = 0) leaves nothing to scale by; score at t = 1.
    if temperature > 0.0 {
        temperature
    } else {
        1.0
    }
}

/// Sums token log-probs over the byte span `[start, end)` of the echoed
/// prompt. Returns `None` when the span is not covered or any overlapping
/// token has no log-prob (typically the document-initial token).
fn sum_span_logprobs(
    tokens: &[String],
    token_logprobs: &[Option<f64>],
    start: usize,
    end: usize,
) -> Option<f64> {
    let mut offset = 0usize;
    let mut sum = 0.0;
    let mut covered = 0usize;
    for (token, logprob) in tokens.iter().zip(token_logprobs) {
        let token_start = offset;
        let token_end = offset + token.len();
        offset = token_end;
        if token_end <= start || token_start >= end {
            continue;
        }
        sum += (*logprob)?;
        covered += token_end.min(end) - token_start.max(start);
    }
    (covered == end - start && end > start).then_some(sum)
}

/// Matches an option against a top-k token map by its leading characters,
/// preferring the longest matching token.
fn match_first_token(option: &str, top: &BTreeMap<String, f64>) -> Option<f64> {
    top.iter()
        .filter(|(token, _)| {
            let token = token.trim();
            !token.is_empty()
                && option.len() >= token.len()
                && option[..token.len()].eq_ignore_ascii_case(token)
        })
        .max_by_key(|(token, _)| token.trim().len())
        .map(|(_, lp)| *lp)
}

/// Tolerantly parses the judge's annotation.
///
/// Accepts the requested `{"author": "AI"}` shape (with or without the
/// trailing comma the instruction itself shows), arbitrary wrapping text,
/// and a bare `AI` / `human` reply.
fn parse_judge_verdict(reply: &str) -> Option<JudgeVerdict> {
    let lower = reply.to_lowercase();
    if let Some(pos) = lower.find("\"author\"") {
        let tail = &lower[pos + "\"author\"".len()..];
        let tail = tail.trim_start().strip_prefix(':')?.trim_start();
        let value = tail.strip_prefix('"').map_or_else(
            || tail.split(|c: char| c == ',' || c == '}' || c.is_whitespace()).next().unwrap_or(""),
            |quoted| quoted.split('"').next().unwrap_or(""),
        );
        return match value.trim() {
            "ai" => Some(JudgeVerdict::Ai),
            "human" => Some(JudgeVerdict::Human),
            _ => None,
        };
    }
    match lower.trim().trim_matches(|c: char| c == '"' || c == '.') {
        "ai" => Some(JudgeVerdict::Ai),
        "human" => Some(JudgeVerdict::Human),
        _ => None,
    }
}

#[derive(serde::Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
}

#[derive(serde::Deserialize)]
struct ChatChoice {
    message: ChatMessage,
}

#[derive(serde::Deserialize)]
struct ChatMessage {
    content: String,
}

#[derive(serde::Deserialize)]
struct CompletionsResponse {
    choices: Vec<CompletionChoice>,
}

#[derive(serde::Deserialize)]
struct CompletionChoice {
    #[serde(default)]
    logprobs: Option<LogprobsPayload>,
}

#[derive(serde::Deserialize)]
struct LogprobsPayload {
    #[serde(default)]
    tokens: Vec<String>,
    #[serde(default)]
    token_logprobs: Vec<Option<f64>>,
    #[serde(default)]
    top_logprobs: Vec<BTreeMap<String, f64>>,
}

#[derive(serde::Deserialize)]
struct EmbeddingsResponse {
    data: Vec<EmbeddingRow>,
}

#[derive(serde::Deserialize)]
struct EmbeddingRow {
    index: usize,
    embedding: Vec<f64>,
}
