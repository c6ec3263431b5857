//! Answer-producing agents: a remote chat-completions endpoint and scripted
//! policies used for testing the environment and the benchmark.

use std::fmt;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::thread;
use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use crate::error::{Error, Result, TransportError};
use crate::format::{wrap, BlockOrder};
use crate::metrics::AdLabel;
use crate::model::{LogSample, SubTask};

/// Environment variable holding the endpoint bearer token.
pub const DEFAULT_TOKEN_ENV: &str = "LOGREASON_API_KEY";

/// Reasoning emitted by the scripted policies.
pub const CANNED_REASONING: &str =
    "Step 1: Split the log into its constant text and its dynamic fields.\n\
Step 2: Relate the fields and keywords to the behaviour of the component that emitted it.\n\
Step 3: Draw the conclusion the task asks for.";

/// Answer substituted by the noisy oracle on non-binary tasks.
pub const CORRUPTED_ANSWER: &str = "unrelated output";

/// A prompt plus, for scripted policies, the sample it was built from.
#[derive(Debug, Clone, Copy)]
pub struct PolicyRequest<'a> {
    pub prompt: &'a str,
    pub sample: Option<&'a LogSample>,
}

/// Generated texts and the number of attempts it took.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Completion {
    pub texts: Vec<String>,
    pub attempts: u32,
}

#[derive(Clone, Default)]
struct Secret(Option<String>);

impl fmt::Debug for Secret {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(if self.0.is_some() {
            "Some(<redacted>)"
        } else {
            "None"
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EndpointConfig {
    pub url: String,
    pub model: String,
    /// Name of the environment variable holding the bearer token.
    pub token_env: String,
    pub timeout: Duration,
    pub max_retries: u32,
    pub temperature: f64,
    /// First backoff delay; doubles on each retry and is jittered by ±50%.
    pub backoff_base: Duration,
}

impl Default for EndpointConfig {
    fn default() -> Self {
        Self {
            url: String::new(),
            model: "default".into(),
            token_env: DEFAULT_TOKEN_ENV.into(),
            timeout: Duration::from_secs(60),
            max_retries: 3,
            temperature: 0.7,
            backoff_base: Duration::from_millis(500),
        }
    }
}

impl EndpointConfig {
    fn chat_url(&self) -> String {
        let base = self.url.trim_end_matches('/');
        if base.ends_with("/chat/completions") {
            base.to_string()
        } else {
            format!("{base}/chat/completions")
        }
    }
}

#[derive(Debug, Clone)]
pub struct EndpointClient {
    cfg: EndpointConfig,
    token: Secret,
    http: reqwest::blocking::Client,
}

impl EndpointClient {
    pub fn new(cfg: EndpointConfig) -> Result<Self> {
        if cfg.url.is_empty() {
            return Err(Error::Config("endpoint url is empty".into()));
        }
        let http = reqwest::blocking::Client::builder()
            .timeout(cfg.timeout)
            .build()
            .map_err(|e| Error::Config(format!("http client: {e}")))?;
        let token = Secret(std::env::var(&cfg.token_env).ok().filter(|t| !t.is_empty()));
        Ok(Self { cfg, token, http })
    }

    pub fn config(&self) -> &EndpointConfig {
        &self.cfg
    }

    fn backoff(&self, retry: u32) -> Duration {
        let base = self.cfg.backoff_base.as_secs_f64() * 2f64.powi(retry as i32);
        let jitter = rand::thread_rng().gen_range(0.5..1.5);
        Duration::from_secs_f64((base * jitter).min(30.0))
    }

    /// One HTTP exchange; `Err` carries the status (if any) and a message.
    fn request_once(
        &self,
        prompt: &str,
        n: usize,
    ) -> std::result::Result<Vec<String>, (Option<u16>, String)> {
        let body = json!({
            "model": self.cfg.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": self.cfg.temperature,
            "n": n,
        });
        let mut req = self.http.post(self.cfg.chat_url()).json(&body);
        if let Some(t) = &self.token.0 {
            req = req.bearer_auth(t);
        }
        let resp = req.send().map_err(|e| (None, e.to_string()))?;
        let status = resp.status();
        if !status.is_success() {
            let text = resp.text().unwrap_or_default();
            let snippet: String = text.chars().take(200).collect();
            return Err((Some(status.as_u16()), format!("HTTP {status}: {snippet}")));
        }
        let value: serde_json::Value = resp
            .json()
            .map_err(|e| (Some(status.as_u16()), e.to_string()))?;
        let choices = value.get("choices").and_then(|c| c.as_array()).ok_or((
            Some(status.as_u16()),
            "response has no `choices` array".to_string(),
        ))?;
        Ok(choices
            .iter()
            .filter_map(|c| c.pointer("/message/content").and_then(|t| t.as_str()))
            .map(str::to_string)
            .collect())
    }

    /// Requests `n` texts, retrying failures with exponential backoff.
    ///
    /// Servers that return fewer choices than asked are queried again for the rest.
    pub fn complete(
        &self,
        prompt: &str,
        n: usize,
    ) -> std::result::Result<Completion, TransportError> {
        let mut texts = Vec::with_capacity(n);
        let mut attempts = 0u32;
        let mut failures = 0u32;
        while texts.len() < n {
            attempts += 1;
            match self.request_once(prompt, n - texts.len()) {
                Ok(got) if !got.is_empty() => texts.extend(got),
                Ok(_) => {
                    failures += 1;
                    if failures > self.cfg.max_retries {
                        return Err(TransportError {
                            status: None,
                            attempts,
                            message: "endpoint returned no choices".into(),
                        });
                    }
                }
                Err((status, message)) => {
                    failures += 1;
                    log::debug!("attempt {attempts} failed: {message}");
                    if failures > self.cfg.max_retries {
                        return Err(TransportError {
                            status,
                            attempts,
                            message,
                        });
                    }
                    thread::sleep(self.backoff(failures - 1));
                }
            }
        }
        texts.truncate(n);
        Ok(Completion { texts, attempts })
    }
}

/// Any agent that turns prompts into candidate responses.
#[derive(Debug, Clone)]
pub enum PolicyClient {
    Endpoint(EndpointClient),
    /// Wraps the gold answer with canned reasoning.
    Oracle,
    /// Oracle whose answer is corrupted with probability `p`.
    NoisyOracle {
        p: f64,
        seed: u64,
    },
    /// Emits reasoning and answer with no tags.
    Malformed,
    /// Always returns the same text.
    Fixed(String),
}

fn corrupt(sample: &LogSample) -> String {
    if sample.task == SubTask::Ad {
        match AdLabel::parse(&sample.answer, true) {
            AdLabel::Abnormal => "normal".into(),
            _ => "abnormal".into(),
        }
    } else {
        CORRUPTED_ANSWER.into()
    }
}

/// Stable per-(seed, prompt, draw) RNG.
fn draw_rng(seed: u64, prompt: &str, k: usize) -> ChaCha8Rng {
    use sha2::{Digest, Sha256};
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update((k as u64).to_le_bytes());
    h.update(prompt.as_bytes());
    ChaCha8Rng::from_seed(h.finalize().into())
}

impl PolicyClient {
    pub fn validate(&self) -> Result<()> {
        match self {
            PolicyClient::NoisyOracle { p, .. } if !(0.0..=1.0).contains(p) => Err(Error::Config(
                format!("noise probability must be in [0, 1], got {p}"),
            )),
            _ => Ok(()),
        }
    }

    pub fn is_scripted(&self) -> bool {
        !matches!(self, PolicyClient::Endpoint(_))
    }

    /// Produces `n` texts for one prompt.
    pub fn complete(&self, req: PolicyRequest<'_>, n: usize) -> Result<Completion> {
        if n == 0 {
            return Err(Error::TooFew { min: 1, got: 0 });
        }
        let gold = || req.sample.ok_or(Error::MissingSample);
        let texts = match self {
            PolicyClient::Endpoint(c) => return c.complete(req.prompt, n).map_err(Error::from),
            PolicyClient::Oracle => {
                let t = wrap(CANNED_REASONING, &gold()?.answer, BlockOrder::ThinkFirst)?;
                vec![t; n]
            }
            PolicyClient::NoisyOracle { p, seed } => {
                let s = gold()?;
                (0..n)
                    .map(|k| {
                        let mut rng = draw_rng(*seed, req.prompt, k);
                        let answer = if rng.gen_bool(*p) {
                            corrupt(s)
                        } else {
                            s.answer.clone()
                        };
                        wrap(CANNED_REASONING, &answer, BlockOrder::ThinkFirst)
                    })
                    .collect::<Result<_>>()?
            }
            PolicyClient::Malformed => {
                let answer = req.sample.map(|s| s.answer.as_str()).unwrap_or("unknown");
                vec![format!("{CANNED_REASONING}\nFinal answer: {answer}"); n]
            }
            PolicyClient::Fixed(text) => vec![text.clone(); n],
        };
        Ok(Completion { texts, attempts: 1 })
    }

    /// Completes every request with at most `parallelism` in flight.
    ///
    /// Results are in input order; each position carries its own error.
    pub fn complete_batch(
        &self,
        reqs: &[PolicyRequest<'_>],
        n: usize,
        parallelism: usize,
    ) -> Vec<Result<Completion>> {
        let workers = parallelism.max(1).min(reqs.len());
        if workers <= 1 || self.is_scripted() {
            return reqs.iter().map(|r| self.complete(*r, n)).collect();
        }
        let next = AtomicUsize::new(0);
        let slots: Vec<Mutex<Option<Result<Completion>>>> =
            reqs.iter().map(|_| Mutex::new(None)).collect();
        thread::scope(|scope| {
            for _ in 0..workers {
                scope.spawn(|| loop {
                    let i = next.fetch_add(1, Ordering::Relaxed);
                    let Some(req) = reqs.get(i) else { break };
                    let out = self.complete(*req, n);
                    *slots[i].lock().unwrap() = Some(out);
                });
            }
        });
        slots
            .into_iter()
            .map(|s| s.into_inner().unwrap().expect("every slot is filled"))
            .collect()
    }
}
