//! Delegating router backend: classification by a remote chat model.
//!
//! The router prompt instructs the model to answer with exactly one
//! category name out of the configured domains plus `Other`. Parsing is
//! deliberately strict (exact match after trim and lowercasing): the
//! prompt demands a bare category name, and lenient parsing would hide
//! exactly the compliance failures worth measuring.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::time::Duration;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::models::{ModelError, Outcome, RouteDecision, RouteError, Router};

/// Environment variable holding the bearer token for the HTTP backend.
pub const API_KEY_ENV: &str = "GQR_API_KEY";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LlmRouterConfig {
    pub endpoint: String,
    pub model: String,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
    #[serde(default = "default_max_retries")]
    pub max_retries: u32,
    #[serde(default)]
    pub temperature: f64,
}

fn default_timeout_ms() -> u64 {
    30_000
}

fn default_max_retries() -> u32 {
    3
}

impl LlmRouterConfig {
    pub fn new(endpoint: impl Into<String>, model: impl Into<String>) -> Self {
        Self {
            endpoint: endpoint.into(),
            model: model.into(),
            timeout_ms: default_timeout_ms(),
            max_retries: default_max_retries(),
            temperature: 0.0,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.endpoint.is_empty() {
            return Err(ModelError::Invalid("endpoint URL must not be empty".into()));
        }
        if self.model.is_empty() {
            return Err(ModelError::Invalid("model identifier must not be empty".into()));
        }
        if self.timeout_ms == 0 {
            return Err(ModelError::Invalid("timeout must be positive".into()));
        }
        if self.max_retries > 5 {
            return Err(ModelError::Invalid(format!(
                "max_retries {} exceeds the bound of 5",
                self.max_retries
            )));
        }
        if !self.temperature.is_finite() || self.temperature < 0.0 {
            return Err(ModelError::Invalid(format!(
                "temperature {} must be finite and nonnegative",
                self.temperature
            )));
        }
        Ok(())
    }
}

fn title_case(s: &str) -> String {
    let mut chars = s.chars();
    match chars.next() {
        None => String::new(),
        Some(c) => c.to_uppercase().chain(chars).collect(),
    }
}

fn number_word(n: usize) -> String {
    const WORDS: [&str; 21] = [
        "zero", "one", "two", "three", "four", "five", "six", "seven", "eight", "nine", "ten",
        "eleven", "twelve", "thirteen", "fourteen", "fifteen", "sixteen", "seventeen",
        "eighteen", "nineteen", "twenty",
    ];
    WORDS.get(n).map_or_else(|| n.to_string(), |w| (*w).to_string())
}

/// "A", "A and B", or "A, B, and C" (Oxford comma); `conj` is "and"/"or".
fn join_list(items: &[String], conj: &str) -> String {
    match items {
        [] => String::new(),
        [only] => only.clone(),
        [a, b] => format!("{a} {conj} {b}"),
        [head @ .., last] => format!("{}, {conj} {last}", head.join(", ")),
    }
}

/// System half of the router prompt, instantiated for `domains`.
pub fn system_prompt(domains: &[String]) -> String {
    let titled: Vec<String> = domains.iter().map(|d| title_case(d)).collect();
    let mut with_other = titled.clone();
    with_other.push("Other".to_string());
    format!(
        "You are a highly accurate text classifier. Your task is to categorize passages \
         into one of {count} predefined domains. The ONLY valid categories are: {valid}. \
         Any passage that does not clearly belong to {members} MUST be categorized as \
         Other. You must respond with ONLY the category name, and nothing else.  \
         No explanations, no extra words.",
        count = number_word(domains.len() + 1),
        valid = join_list(&with_other, "and"),
        members = join_list(&titled, "or"),
    )
}

/// User half of the router prompt with the passage substituted in.
pub fn user_prompt(domains: &[String], query: &str) -> String {
    let mut titled: Vec<String> = domains.iter().map(|d| title_case(d)).collect();
    titled.push("Other".to_string());
    format!(
        "Classify the following passage into one of the categories: {}.\nPassage:\n{}\nCategory:",
        join_list(&titled, "or"),
        query,
    )
}

/// Strict verdict parse: trim, lowercase, then exact match against
/// "other" or a configured domain. Anything else is an error carrying
/// the raw completion.
pub fn parse_completion(domains: &[String], completion: &str) -> Result<Outcome, RouteError> {
    let verdict = completion.trim().to_lowercase();
    if verdict == "other" {
        return Ok(Outcome::Reject);
    }
    match domains.iter().find(|d| d.to_lowercase() == verdict) {
        Some(d) => Ok(Outcome::Domain(d.clone())),
        None => Err(RouteError::UnparseableVerdict { completion: completion.to_string() }),
    }
}

/// One classification request: the prompt pair actually sent, plus the
/// raw query so replay backends can key on it.
#[derive(Debug, Clone, PartialEq)]
pub struct ChatRequest {
    pub query: String,
    pub system: String,
    pub user: String,
    pub model: String,
    pub temperature: f64,
}

/// Transport abstraction under [`LlmRouter`]: returns the completion
/// text for one request.
pub trait ChatClient: Send + Sync {
    fn complete(&self, request: &ChatRequest) -> Result<String, RouteError>;
}

/// Runs `attempt` up to `max_retries + 1` times. `attempt` reports
/// whether its failure is retryable; non-retryable failures and the
/// final attempt's error pass straight through.
fn with_retries<T>(
    max_retries: u32,
    mut attempt: impl FnMut() -> Result<T, (bool, RouteError)>,
) -> Result<T, RouteError> {
    let mut tries = 0;
    loop {
        match attempt() {
            Ok(v) => return Ok(v),
            Err((retryable, err)) => {
                tries += 1;
                if !retryable || tries > max_retries {
                    return Err(err);
                }
            }
        }
    }
}

#[derive(Serialize)]
struct WireMessage<'a> {
    role: &'static str,
    content: &'a str,
}

#[derive(Serialize)]
struct WireRequest<'a> {
    model: &'a str,
    temperature: f64,
    messages: [WireMessage<'a>; 2],
}

#[derive(Deserialize)]
struct WireResponse {
    choices: Vec<WireChoice>,
}

#[derive(Deserialize)]
struct WireChoice {
    message: WireContent,
}

#[derive(Deserialize)]
struct WireContent {
    content: String,
}

/// Blocking chat-completions client. Retries cover transport failures
/// and 5xx statuses only, resending the identical request; 4xx and
/// malformed bodies fail immediately.
pub struct HttpChatClient {
    endpoint: String,
    max_retries: u32,
    api_key: Option<String>,
    client: reqwest::blocking::Client,
}

impl HttpChatClient {
    pub fn new(config: &LlmRouterConfig) -> Result<Self, ModelError> {
        config.validate()?;
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_millis(config.timeout_ms))
            .build()
            .map_err(|e| ModelError::Invalid(format!("http client: {e}")))?;
        Ok(Self {
            endpoint: config.endpoint.clone(),
            max_retries: config.max_retries,
            api_key: std::env::var(API_KEY_ENV).ok(),
            client,
        })
    }
}

impl ChatClient for HttpChatClient {
    fn complete(&self, request: &ChatRequest) -> Result<String, RouteError> {
        let body = WireRequest {
            model: &request.model,
            temperature: request.temperature,
            messages: [
                WireMessage { role: "system", content: &request.system },
                WireMessage { role: "user", content: &request.user },
            ],
        };
        with_retries(self.max_retries, || {
            let mut req = self.client.post(&self.endpoint).json(&body);
            if let Some(key) = &self.api_key {
                req = req.bearer_auth(key);
            }
            let response = req
                .send()
                .map_err(|e| (true, RouteError::Transport(format!("request failed: {e}"))))?;
            let status = response.status();
            if !status.is_success() {
                let retryable = status.is_server_error();
                return Err((
                    retryable,
                    RouteError::Transport(format!("endpoint returned HTTP {status}")),
                ));
            }
            let parsed: WireResponse = response
                .json()
                .map_err(|e| (false, RouteError::Transport(format!("malformed response: {e}"))))?;
            parsed
                .choices
                .into_iter()
                .next()
                .map(|c| c.message.content)
                .ok_or((false, RouteError::Transport("response carried no choices".into())))
        })
    }
}

#[derive(Debug, Error)]
pub enum FixtureError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}:{line}: {message}", path.display())]
    Malformed { path: PathBuf, line: usize, message: String },
}

#[derive(Debug, Deserialize, Serialize)]
struct FixtureLine {
    query: String,
    completion: String,
}

/// Offline test double: replays canned completions keyed by the raw
/// query, so evaluation runs with no network.
#[derive(Debug, Clone)]
pub struct ReplayStub {
    completions: HashMap<String, String>,
}

impl ReplayStub {
    pub fn new(pairs: impl IntoIterator<Item = (String, String)>) -> Self {
        Self { completions: pairs.into_iter().collect() }
    }

    /// Loads a JSON-lines fixture of `{"query", "completion"}` records.
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self, FixtureError> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|source| FixtureError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut completions = HashMap::new();
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|source| FixtureError::Io {
                path: path.to_path_buf(),
                source,
            })?;
            if line.trim().is_empty() {
                continue;
            }
            let record: FixtureLine =
                serde_json::from_str(&line).map_err(|e| FixtureError::Malformed {
                    path: path.to_path_buf(),
                    line: i + 1,
                    message: e.to_string(),
                })?;
            completions.insert(record.query, record.completion);
        }
        Ok(Self { completions })
    }

    pub fn len(&self) -> usize {
        self.completions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.completions.is_empty()
    }
}

impl ChatClient for ReplayStub {
    fn complete(&self, request: &ChatRequest) -> Result<String, RouteError> {
        self.completions.get(&request.query).cloned().ok_or_else(|| {
            RouteError::Transport(format!("no fixture completion for query {:?}", request.query))
        })
    }
}

/// Router that delegates every decision to a chat backend. Scores are
/// placeholders (1.0 for the verdict, 0.0 elsewhere), flagged via
/// `calibrated: false`; there is no tunable threshold.
pub struct LlmRouter<C> {
    domains: Vec<String>,
    model: String,
    temperature: f64,
    client: C,
}

impl<C: ChatClient> LlmRouter<C> {
    pub fn new(domains: Vec<String>, config: &LlmRouterConfig, client: C) -> Result<Self, ModelError> {
        config.validate()?;
        crate::models::validate_domains(&domains)?;
        if domains.iter().any(|d| d.eq_ignore_ascii_case("other")) {
            return Err(ModelError::Invalid(
                "domain \"other\" collides with the prompt's rejection category".into(),
            ));
        }
        Ok(Self {
            domains,
            model: config.model.clone(),
            temperature: config.temperature,
            client,
        })
    }

    fn decision(&self, outcome: Outcome) -> RouteDecision {
        let mut scores = IndexMap::with_capacity(self.domains.len());
        for d in &self.domains {
            let s = match &outcome {
                Outcome::Domain(chosen) if chosen == d => 1.0,
                _ => 0.0,
            };
            scores.insert(d.clone(), s);
        }
        RouteDecision { outcome, scores, calibrated: false }
    }
}

impl<C: ChatClient> Router for LlmRouter<C> {
    fn domains(&self) -> &[String] {
        &self.domains
    }

    fn route(&self, text: &str) -> Result<RouteDecision, RouteError> {
        let request = ChatRequest {
            query: text.to_string(),
            system: system_prompt(&self.domains),
            user: user_prompt(&self.domains, text),
            model: self.model.clone(),
            temperature: self.temperature,
        };
        let completion = self.client.complete(&request)?;
        let outcome = parse_completion(&self.domains, &completion)?;
        Ok(self.decision(outcome))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reference_domains() -> Vec<String> {
        vec!["law".into(), "finance".into(), "health".into()]
    }

    // The full prompt pair for the three reference domains, frozen
    // byte for byte (note the double space before "No explanations").
    const REFERENCE_SYSTEM: &str = "You are a highly accurate text classifier. Your task is to \
        categorize passages into one of four predefined domains. The ONLY valid categories are: \
        Law, Finance, Health, and Other. Any passage that does not clearly belong to Law, \
        Finance, or Health MUST be categorized as Other. You must respond with ONLY the \
        category name, and nothing else.  No explanations, no extra words.";

    #[test]
    fn system_prompt_is_byte_exact_for_reference_domains() {
        assert_eq!(system_prompt(&reference_domains()), REFERENCE_SYSTEM);
    }

    #[test]
    fn user_prompt_is_byte_exact_for_reference_domains() {
        let got = user_prompt(&reference_domains(), "What is a 401(k)?");
        let want = "Classify the following passage into one of the categories: Law, Finance, \
            Health, or Other.\nPassage:\nWhat is a 401(k)?\nCategory:";
        assert_eq!(got, want);
    }

    #[test]
    fn prompt_scales_with_domain_count() {
        let two: Vec<String> = vec!["alpha".into(), "beta".into()];
        let sys = system_prompt(&two);
        assert!(sys.contains("into one of three predefined domains"), "{sys}");
        assert!(sys.contains("The ONLY valid categories are: Alpha, Beta, and Other."), "{sys}");
        assert!(sys.contains("does not clearly belong to Alpha or Beta MUST"), "{sys}");
        let user = user_prompt(&two, "q");
        assert!(user.contains("categories: Alpha, Beta, or Other."), "{user}");

        let five: Vec<String> =
            ["a", "b", "c", "d", "e"].iter().map(|s| s.to_string()).collect();
        let sys = system_prompt(&five);
        assert!(sys.contains("into one of six predefined domains"), "{sys}");
        assert!(sys.contains("are: A, B, C, D, E, and Other."), "{sys}");
        assert!(sys.contains("belong to A, B, C, D, or E MUST"), "{sys}");
    }

    #[test]
    fn parse_table_covers_compliant_and_noncompliant_completions() {
        let domains = reference_domains();
        let accepts: [(&str, Outcome); 7] = [
            ("Finance", Outcome::Domain("finance".into())),
            ("finance", Outcome::Domain("finance".into())),
            ("FINANCE", Outcome::Domain("finance".into())),
            ("  Law\n", Outcome::Domain("law".into())),
            ("Health", Outcome::Domain("health".into())),
            ("Other", Outcome::Reject),
            ("\tother  ", Outcome::Reject),
        ];
        for (completion, want) in accepts {
            assert_eq!(parse_completion(&domains, completion).unwrap(), want, "{completion:?}");
        }

        let rejects = [
            "Category: Law",
            "Law.",
            "The passage is about Finance",
            "Finance or Law",
            "finance\nfinance",
            "Lawyer",
            "",
            "   ",
        ];
        for completion in rejects {
            match parse_completion(&domains, completion) {
                Err(RouteError::UnparseableVerdict { completion: raw }) => {
                    assert_eq!(raw, completion, "error must carry the raw completion");
                }
                other => panic!("{completion:?} should be unparseable, got {other:?}"),
            }
        }
    }

    fn stub_router(pairs: &[(&str, &str)]) -> LlmRouter<ReplayStub> {
        let stub = ReplayStub::new(
            pairs.iter().map(|(q, c)| (q.to_string(), c.to_string())),
        );
        let config = LlmRouterConfig::new("http://localhost:0/v1/chat/completions", "test-model");
        LlmRouter::new(reference_domains(), &config, stub).unwrap()
    }

    #[test]
    fn routed_scores_are_degenerate_and_uncalibrated() {
        let router = stub_router(&[
            ("how do I contest a will", "Law"),
            ("weather tomorrow", "Other"),
            ("noncompliant", "It's about Law"),
        ]);

        let d = router.route("how do I contest a will").unwrap();
        assert_eq!(d.outcome, Outcome::Domain("law".into()));
        assert!(!d.calibrated);
        let scores: Vec<f64> = d.scores.values().copied().collect();
        assert_eq!(scores, vec![1.0, 0.0, 0.0]);

        let r = router.route("weather tomorrow").unwrap();
        assert_eq!(r.outcome, Outcome::Reject);
        assert!(r.scores.values().all(|&s| s == 0.0));
        assert!(!r.calibrated);

        let err = router.route("noncompliant").unwrap_err();
        assert!(matches!(err, RouteError::UnparseableVerdict { .. }), "{err}");

        let missing = router.route("never recorded").unwrap_err();
        assert!(matches!(missing, RouteError::Transport(_)), "{missing}");
    }

    #[test]
    fn fixture_file_round_trips_and_reports_bad_lines() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("replay.jsonl");
        std::fs::write(
            &path,
            concat!(
                "{\"query\":\"a b c\",\"completion\":\"Law\"}\n",
                "\n",
                "{\"query\":\"d e\",\"completion\":\"Other\"}\n",
            ),
        )
        .unwrap();
        let stub = ReplayStub::from_file(&path).unwrap();
        assert_eq!(stub.len(), 2);
        let request = ChatRequest {
            query: "d e".into(),
            system: String::new(),
            user: String::new(),
            model: String::new(),
            temperature: 0.0,
        };
        assert_eq!(stub.complete(&request).unwrap(), "Other");

        std::fs::write(&path, "{\"query\":\"x\"}\n").unwrap();
        let err = ReplayStub::from_file(&path).unwrap_err();
        assert!(matches!(err, FixtureError::Malformed { line: 1, .. }), "{err}");
    }

    #[test]
    fn retries_are_bounded_and_stop_on_nonretryable_failures() {
        let mut calls = 0;
        let out: Result<(), _> = with_retries(3, || {
            calls += 1;
            Err((true, RouteError::Transport("down".into())))
        });
        assert!(out.is_err());
        assert_eq!(calls, 4, "initial attempt plus three retries");

        let mut calls = 0;
        let out: Result<(), _> = with_retries(5, || {
            calls += 1;
            Err((false, RouteError::Transport("bad request".into())))
        });
        assert!(out.is_err());
        assert_eq!(calls, 1, "non-retryable failures must not be retried");

        let mut calls = 0;
        let out = with_retries(5, || {
            calls += 1;
            if calls < 3 {
                Err((true, RouteError::Transport("flaky".into())))
            } else {
                Ok(calls)
            }
        });
        assert_eq!(out.unwrap(), 3);
    }

    #[test]
    fn config_validation_enforces_bounds() {
        let good = LlmRouterConfig::new("http://localhost/v1", "m");
        assert!(good.validate().is_ok());

        let mut c = good.clone();
        c.timeout_ms = 0;
        assert!(c.validate().is_err());

        let mut c = good.clone();
        c.max_retries = 6;
        assert!(c.validate().is_err());

        let mut c = good.clone();
        c.temperature = f64::NAN;
        assert!(c.validate().is_err());

        let mut c = good.clone();
        c.endpoint.clear();
        assert!(c.validate().is_err());

        let stub = ReplayStub::new([]);
        let clash = LlmRouter::new(
            vec!["law".into(), "other".into()],
            &good,
            stub,
        );
        assert!(clash.is_err(), "domain \"other\" must be refused");
    }
}
