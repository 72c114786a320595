//! Deterministic OpenAI-compatible mock endpoints for tests and desk runs.
//!
//! The server implements just enough of `/v1/chat/completions`,
//! `/v1/completions` (echo scoring), and `/v1/embeddings` to drive the full
//! audit pipeline offline. Every response is a pure function of the request
//! content (FNV-1a hashes feeding ChaCha8 streams), so identical runs produce
//! identical artifacts:
//!
//! * Open-ended prompts get short persona texts whose vocabulary leans on the
//!   prompt hash, with a configurable share of Spanish answers for prompts
//!   carrying an explicit Hispanic descriptor.
//! * Survey prompts are answered by sampling from a per-question softmax; the
//!   echo scorer exposes *the same* underlying scores, so sampled answers and
//!   scored log-probabilities agree in distribution.
//! * Judge prompts (recognized by the annotator instruction) classify the
//!   trailing text by AI-identity keywords.
//!
//! Failure injection (`fail_first`, `always_status`, `latency_ms`) exercises
//! the client's retry and error paths.

use std::future::IntoFuture;
use std::net::SocketAddr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::post;
use axum::{Json, Router};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};
use tokio::net::TcpListener;
use tokio::sync::oneshot;

/// Answer-field suffix the client appends when scoring options.
const ANSWER_FIELD_PREFIX: &str = "\n{\"answer_option\": \"";

/// Leading text of the role-violation judge instruction.
const JUDGE_PREFIX: &str = "You are an expert annotator";

/// Knobs for one mock instance.
#[derive(Debug, Clone)]
pub struct MockConfig {
    /// Added to every response, for timeout tests.
    pub latency_ms: u64,
    /// The first N requests (across all endpoints) fail with 503.
    pub fail_first: u64,
    /// Every request fails with this status.
    pub always_status: Option<u16>,
    /// Share of open-ended answers written in Spanish when the prompt
    /// carries an explicit Hispanic descriptor.
    pub spanish_share: f64,
    /// Share of open-ended answers voiced as an AI assistant instead of the
    /// persona.
    pub violation_share: f64,
    pub embed_dim: usize,
}

impl Default for MockConfig {
    fn default() -> Self {
        MockConfig {
            latency_ms: 0,
            fail_first: 0,
            always_status: None,
            spanish_share: 0.2,
            violation_share: 0.0,
            embed_dim: 16,
        }
    }
}

struct Shared {
    config: MockConfig,
    served: AtomicU64,
}

/// A running mock server; shuts down when dropped.
pub struct MockServer {
    addr: SocketAddr,
    shutdown: Option<oneshot::Sender<()>>,
}

impl MockServer {
    /// Binds an ephemeral localhost port and serves in a background task.
    /// Must be called from within a tokio runtime.
    pub async fn spawn(config: MockConfig) -> std::io::Result<MockServer> {
        let listener = TcpListener::bind("127.0.0.1:0").await?;
        Self::serve_on(listener, config)
    }

    /// Serves on an already-bound listener (used by the standalone binary).
    pub fn serve_on(listener: TcpListener, config: MockConfig) -> std::io::Result<MockServer> {
        let addr = listener.local_addr()?;
        let (tx, rx) = oneshot::channel::<()>();
        let app = router(config);
        tokio::spawn(
            axum::serve(listener, app)
                .with_graceful_shutdown(async {
                    rx.await.ok();
                })
                .into_future(),
        );
        Ok(MockServer {
            addr,
            shutdown: Some(tx),
        })
    }

    /// OpenAI-style base URL, ending in `/v1`.
    pub fn base_url(&self) -> String {
        format!("http://{}/v1", self.addr)
    }
}

impl Drop for MockServer {
    fn drop(&mut self) {
        if let Some(tx) = self.shutdown.take() {
            tx.send(()).ok();
        }
    }
}

/// The axum router serving the three endpoints.
pub fn router(config: MockConfig) -> Router {
    let state = Arc::new(Shared {
        config,
        served: AtomicU64::new(0),
    });
    Router::new()
        .route("/v1/chat/completions", post(chat_completions))
        .route("/v1/completions", post(completions))
        .route("/v1/embeddings", post(embeddings))
        .with_state(state)
}

// ---------------------------------------------------------------------------
// Determinism primitives
// ---------------------------------------------------------------------------

/// FNV-1a over the parts, with a separator fold between them so that
/// `["ab", "c"]` and `["a", "bc"]` hash differently.
pub fn fnv1a(parts: &[&str]) -> u64 {
    let mut hash = 0xcbf2_9ce4_8422_2325u64;
    for part in parts {
        for byte in part.as_bytes() {
            hash ^= u64::from(*byte);
            hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
        }
        hash ^= 0x1f;
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

/// Hash folded into `[0, 1)`.
pub fn unit_hash(parts: &[&str]) -> f64 {
    (fnv1a(parts) >> 11) as f64 / (1u64 << 53) as f64
}

fn rng_for(parts: &[&str]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(fnv1a(parts))
}

/// The raw (pre-temperature) score this mock assigns to `option` as the
/// answer to the survey prompt `prompt`. Both the chat sampler and the echo
/// scorer derive from this one function, so sampling and scoring agree.
pub fn option_raw_score(prompt: &str, option: &str) -> f64 {
    3.0 * unit_hash(&["qa", prompt, option])
}

/// Extracts the option list from a rendered survey prompt
/// (`… Options: a; b; c. Only respond …`).
pub fn parse_options(prompt: &str) -> Option<Vec<String>> {
    let start = prompt.rfind("Options: ")? + "Options: ".len();
    let tail = &prompt[start..];
    let end = tail.find(". Only respond").or_else(|| tail.rfind('.'))?;
    let options: Vec<String> = tail[..end].split("; ").map(str::to_string).collect();
    (!options.is_empty()).then_some(options)
}

fn softmax_probs(raws: &[f64], temperature: f64) -> Vec<f64> {
    let scaled: Vec<f64> = raws.iter().map(|r| r / temperature).collect();
    let max = scaled.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scaled.iter().map(|s| (s - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.iter().map(|e| e / total).collect()
}

/// Samples one option index for a survey prompt; temperature 0 is greedy.
fn sample_option(prompt: &str, options: &[String], temperature: f64, seed: u64) -> usize {
    let raws: Vec<f64> = options
        .iter()
        .map(|option| option_raw_score(prompt, option))
        .collect();
    if temperature <= 0.0 {
        return raws
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, _)| i)
            .unwrap_or(0);
    }
    let probs = softmax_probs(&raws, temperature);
    let mut rng = rng_for(&["qa-sample", prompt, &seed.to_string()]);
    let draw: f64 = rng.gen();
    let mut cumulative = 0.0;
    for (i, p) in probs.iter().enumerate() {
        cumulative += p;
        if draw < cumulative {
            return i;
        }
    }
    probs.len() - 1
}

// ---------------------------------------------------------------------------
// Canned text generation
// ---------------------------------------------------------------------------

const TRAITS: [&str; 8] = [
    "curious", "careful", "outgoing", "quiet", "driven", "patient", "creative", "practical",
];
const HOBBIES: [&str; 10] = [
    "hiking",
    "painting",
    "reading",
    "gardening",
    "cycling",
    "cooking",
    "photography",
    "chess",
    "running",
    "pottery",
];
const TOPICS: [&str; 8] = [
    "family", "music", "travel", "food", "books", "nature", "science", "art",
];
const FLAVORS: [&str; 10] = [
    "resilience",
    "heritage",
    "culture",
    "community",
    "tradition",
    "faith",
    "identity",
    "strength",
    "pride",
    "craft",
];
const EXTRAS: [&str; 5] = [
    "I volunteer at the neighborhood library most Sundays.",
    "Lately I have been teaching myself to bake sourdough.",
    "On weekdays you will find me tending a small balcony garden.",
    "I keep a journal of every trail I have walked.",
    "My bookshelf is organized by color, not by author.",
];

const TRAITS_ES: [&str; 4] = ["curiosa", "tranquila", "creativa", "práctica"];
const HOBBIES_ES: [&str; 4] = [
    "caminando por la montaña",
    "pintando acuarelas",
    "leyendo novelas",
    "cocinando para la familia",
];
const TOPICS_ES: [&str; 4] = ["música", "familia", "comida", "naturaleza"];
const FLAVORS_ES: [&str; 4] = ["cultura", "tradición", "herencia", "fe"];

const VIOLATIONS: [&str; 3] = [
    "Just a language model navigating the human world.",
    "As an AI assistant, I do not have a personal life to describe.",
    "I cannot fulfill this request.",
];

fn pick<'a>(rng: &mut ChaCha8Rng, pool: &[&'a str]) -> &'a str {
    pool[rng.gen_range(0..pool.len())]
}

/// Deterministic persona text for an open-ended prompt. The flavor words are
/// chosen from the prompt hash alone (stable per prompt cell), the rest from
/// the (prompt, seed) stream, so corpora differ across groups and vary
/// across seeds.
fn persona_text(prompt: &str, seed: u64, config: &MockConfig) -> String {
    let seed_str = seed.to_string();
    if unit_hash(&["viol", prompt, &seed_str]) < config.violation_share {
        let mut rng = rng_for(&["viol-pick", prompt, &seed_str]);
        return pick(&mut rng, &VIOLATIONS).to_string();
    }
    let spanish = prompt.contains("Hispanic")
        && unit_hash(&["lang", prompt, &seed_str]) < config.spanish_share;
    let mut rng = rng_for(&["text", prompt, &seed_str]);
    if spanish {
        let mut cell = rng_for(&["flavor", prompt]);
        return format!(
            "Soy una persona {} de {} años que pasa los fines de semana {}. \
             Mis amigos dicen que la {} me mantiene con los pies en la tierra, \
             y la {} y la comunidad significan mucho para mí.",
            pick(&mut rng, &TRAITS_ES),
            22 + rng.gen_range(0..40),
            pick(&mut rng, &HOBBIES_ES),
            pick(&mut rng, &TOPICS_ES),
            pick(&mut cell, &FLAVORS_ES),
        );
    }
    let mut cell = rng_for(&["flavor", prompt]);
    let flavor_a = pick(&mut cell, &FLAVORS);
    let flavor_b = pick(&mut cell, &FLAVORS);
    format!(
        "I am a {}-year-old, {} person who spends weekends {} and {}. \
         Friends say my love of {} keeps me grounded, and {} and {} matter \
         deeply to me. {}",
        22 + rng.gen_range(0..40),
        pick(&mut rng, &TRAITS),
        pick(&mut rng, &HOBBIES),
        pick(&mut rng, &HOBBIES),
        pick(&mut rng, &TOPICS),
        flavor_a,
        flavor_b,
        pick(&mut rng, &EXTRAS),
    )
}

fn bio_username(prompt: &str, seed: u64) -> String {
    let mut rng = rng_for(&["user", prompt, &seed.to_string()]);
    format!("@{}{}", pick(&mut rng, &HOBBIES), rng.gen_range(10..100))
}

fn judge_reply(content: &str) -> String {
    let text = content
        .rsplit("social media bio:")
        .next()
        .unwrap_or(content)
        .to_lowercase();
    let ai_markers = [
        "language model",
        "as an ai",
        "ai assistant",
        "artificial intelligence",
        "chat assistant",
        "cannot fulfill",
        "can't fulfill",
        "i am an ai",
    ];
    if ai_markers.iter().any(|marker| text.contains(marker)) {
        r#"{"author": "AI"}"#.to_string()
    } else {
        r#"{"author": "human"}"#.to_string()
    }
}

// ---------------------------------------------------------------------------
// Handlers
// ---------------------------------------------------------------------------

async fn gate(state: &Shared) -> Option<Response> {
    if state.config.latency_ms > 0 {
        tokio::time::sleep(std::time::Duration::from_millis(state.config.latency_ms)).await;
    }
    if let Some(code) = state.config.always_status {
        let status = StatusCode::from_u16(code).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        return Some((status, "injected failure").into_response());
    }
    let n = state.served.fetch_add(1, Ordering::SeqCst);
    if n < state.config.fail_first {
        return Some((StatusCode::SERVICE_UNAVAILABLE, "injected failure").into_response());
    }
    None
}

fn last_user_content(body: &Value) -> Option<String> {
    body.get("messages")?
        .as_array()?
        .iter()
        .rev()
        .find(|m| m.get("role").and_then(Value::as_str) == Some("user"))?
        .get("content")?
        .as_str()
        .map(str::to_string)
}

async fn chat_completions(State(state): State<Arc<Shared>>, Json(body): Json<Value>) -> Response {
    if let Some(rejection) = gate(&state).await {
        return rejection;
    }
    let Some(content) = last_user_content(&body) else {
        return (StatusCode::BAD_REQUEST, "no user message").into_response();
    };
    let seed = body.get("seed").and_then(Value::as_u64).unwrap_or(0);
    let temperature = body
        .get("temperature")
        .and_then(Value::as_f64)
        .unwrap_or(1.0);

    let reply = if content.starts_with(JUDGE_PREFIX) {
        judge_reply(&content)
    } else if content.contains("\"answer_option\"") {
        match parse_options(&content) {
            Some(options) => {
                let idx = sample_option(&content, &options, temperature, seed);
                json!({ "answer_option": options[idx] }).to_string()
            }
            None => return (StatusCode::BAD_REQUEST, "no options found").into_response(),
        }
    } else if content.contains("\"self_description\"") {
        json!({ "self_description": persona_text(&content, seed, &state.config) }).to_string()
    } else if content.contains("\"bio\"") {
        json!({
            "username": bio_username(&content, seed),
            "bio": persona_text(&content, seed, &state.config),
        })
        .to_string()
    } else {
        "Mock response.".to_string()
    };

    Json(json!({
        "object": "chat.completion",
        "model": body.get("model").and_then(Value::as_str).unwrap_or("mock"),
        "choices": [{
            "index": 0,
            "message": { "role": "assistant", "content": reply },
            "finish_reason": "stop",
        }],
    }))
    .into_response()
}

async fn completions(State(state): State<Arc<Shared>>, Json(body): Json<Value>) -> Response {
    if let Some(rejection) = gate(&state).await {
        return rejection;
    }
    let Some(prompt) = body.get("prompt").and_then(Value::as_str) else {
        return (StatusCode::BAD_REQUEST, "no prompt").into_response();
    };
    let echo = body.get("echo").and_then(Value::as_bool).unwrap_or(false);
    let max_tokens = body.get("max_tokens").and_then(Value::as_u64).unwrap_or(0);

    let logprobs_payload = if echo && max_tokens == 0 {
        // Echo scoring: the prompt ends in `…{"answer_option": "<option>"}`.
        let Some(at) = prompt.rfind(ANSWER_FIELD_PREFIX) else {
            return (StatusCode::BAD_REQUEST, "echo prompt has no answer field").into_response();
        };
        let base = &prompt[..at];
        let Some(option) = prompt[at + ANSWER_FIELD_PREFIX.len()..].strip_suffix("\"}") else {
            return (StatusCode::BAD_REQUEST, "unterminated answer field").into_response();
        };
        let raw = option_raw_score(base, option);
        json!({
            "tokens": [format!("{base}{ANSWER_FIELD_PREFIX}"), option, "\"}"],
            "token_logprobs": [Value::Null, raw, 0.0],
            "top_logprobs": [],
        })
    } else {
        // First-token scoring: the prompt ends in the bare answer prefix.
        let base = prompt.strip_suffix(ANSWER_FIELD_PREFIX).unwrap_or(prompt);
        let Some(options) = parse_options(base) else {
            return (StatusCode::BAD_REQUEST, "no options found").into_response();
        };
        let mut top = serde_json::Map::new();
        let mut best = (0usize, f64::NEG_INFINITY);
        for (i, option) in options.iter().enumerate() {
            let raw = option_raw_score(base, option);
            if raw > best.1 {
                best = (i, raw);
            }
            top.insert(option.clone(), json!(raw));
        }
        top.insert("The".to_string(), json!(-9.0));
        json!({
            "tokens": [options[best.0]],
            "token_logprobs": [best.1],
            "top_logprobs": [top],
        })
    };

    Json(json!({
        "object": "text_completion",
        "model": body.get("model").and_then(Value::as_str).unwrap_or("mock"),
        "choices": [{
            "index": 0,
            "text": "",
            "logprobs": logprobs_payload,
            "finish_reason": "stop",
        }],
    }))
    .into_response()
}

/// Token-additive embedding: each word contributes a fixed random vector, so
/// texts sharing vocabulary land closer together. The client normalizes.
pub fn embed_text(text: &str, dim: usize) -> Vec<f64> {
    let mut vector = vec![0.0_f64; dim];
    let lowered = text.to_lowercase();
    let mut any = false;
    for token in lowered.split(|c: char| !c.is_alphanumeric()) {
        if token.is_empty() {
            continue;
        }
        any = true;
        let mut rng = rng_for(&["embed", token]);
        for slot in vector.iter_mut() {
            *slot += rng.gen_range(-1.0..1.0);
        }
    }
    if !any {
        vector[0] = 1.0;
    }
    vector
}

async fn embeddings(State(state): State<Arc<Shared>>, Json(body): Json<Value>) -> Response {
    if let Some(rejection) = gate(&state).await {
        return rejection;
    }
    let Some(input) = body.get("input").and_then(Value::as_array) else {
        return (StatusCode::BAD_REQUEST, "input must be an array").into_response();
    };
    let data: Vec<Value> = input
        .iter()
        .enumerate()
        .map(|(index, item)| {
            let text = item.as_str().unwrap_or_default();
            json!({
                "object": "embedding",
                "index": index,
                "embedding": embed_text(text, state.config.embed_dim),
            })
        })
        .collect();
    Json(json!({ "object": "list", "data": data })).into_response()
}
