//! Judge gateway: every semantic judgment the metrics need, behind one trait.
//!
//! [`DeterministicJudge`] is a token-overlap oracle that runs offline and is
//! a pure function of its inputs. [`RemoteJudge`] forwards the same questions
//! to a chat-completion endpoint.

use std::collections::BTreeSet;
use std::fmt;
use std::sync::{Condvar, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::exam::{strip_side_label, ExamQuestion, QuestionKind};
use crate::graph::{GraphNode, NodeId};
use crate::report::Report;
use crate::text;

pub const DEFAULT_TAU: f64 = 0.6;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PresenceVerdict {
    pub node_id: NodeId,
    pub hit: bool,
    pub rationale: String,
    pub confidence: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StanceScores {
    pub thesis: f64,
    pub antithesis: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl StanceScores {
    pub fn new(thesis: f64, antithesis: f64) -> Self {
        Self {
            thesis,
            antithesis,
            note: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExamAnswer {
    pub text: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Debug, Error)]
pub enum JudgeError {
    #[error("invalid judge configuration: {0}")]
    Config(String),
    #[error("judge transport failure: {0}")]
    Transport(String),
    #[error("judge endpoint returned HTTP {status}: {body}")]
    Status { status: u16, body: String },
    #[error("unusable judge reply: {0}")]
    Malformed(String),
}

impl JudgeError {
    /// Failures worth another attempt: transport errors, 429 and 5xx.
    pub fn is_transient(&self) -> bool {
        match self {
            JudgeError::Transport(_) => true,
            JudgeError::Status { status, .. } => *status == 429 || *status >= 500,
            _ => false,
        }
    }
}

/// One logged request/response pair.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Exchange {
    pub task: String,
    pub request: Value,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub response: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

pub trait Judge: Send + Sync {
    /// Short label used in run records.
    fn label(&self) -> String;

    fn assess_presence(&self, node: &GraphNode, report: &Report) -> Result<PresenceVerdict, JudgeError>;

    /// Answer using only the report as context.
    fn answer_exam(&self, question: &ExamQuestion, report: &Report) -> Result<ExamAnswer, JudgeError>;

    /// Support scores in `[0, 10]` for each side, read from the report alone.
    fn audit_stance(&self, thesis: &str, antithesis: &str, report: &Report) -> Result<StanceScores, JudgeError>;

    /// Logged exchanges, if the backend records any.
    fn exchanges(&self) -> Vec<Exchange> {
        Vec::new()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemoteConfig {
    /// Base URL; `/chat/completions` is appended unless already present.
    pub endpoint: String,
    pub model: String,
    #[serde(default)]
    pub temperature: f64,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
    #[serde(default = "default_parallel")]
    pub max_parallel: usize,
    /// Name of the environment variable holding the bearer credential.
    #[serde(default)]
    pub api_key_env: Option<String>,
    /// Extra attempts after a transient failure.
    #[serde(default = "default_retries")]
    pub transport_retries: u32,
}

fn default_timeout() -> u64 {
    60
}

fn default_parallel() -> usize {
    4
}

fn default_retries() -> u32 {
    1
}

impl RemoteConfig {
    pub fn new(endpoint: impl Into<String>, model: impl Into<String>) -> Self {
        Self {
            endpoint: endpoint.into(),
            model: model.into(),
            temperature: 0.0,
            timeout_secs: default_timeout(),
            max_parallel: default_parallel(),
            api_key_env: None,
            transport_retries: default_retries(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum JudgeBackend {
    Deterministic { tau: f64 },
    Remote(RemoteConfig),
}

impl Default for JudgeBackend {
    fn default() -> Self {
        JudgeBackend::Deterministic { tau: DEFAULT_TAU }
    }
}

impl JudgeBackend {
    pub fn validate(&self) -> Result<(), JudgeError> {
        match self {
            JudgeBackend::Deterministic { tau } => {
                if !(0.0..=1.0).contains(tau) {
                    return Err(JudgeError::Config(format!("tau {tau} outside [0, 1]")));
                }
            }
            JudgeBackend::Remote(cfg) => {
                if cfg.max_parallel == 0 {
                    return Err(JudgeError::Config("max_parallel must be at least 1".into()));
                }
                if cfg.endpoint.trim().is_empty() || cfg.model.trim().is_empty() {
                    return Err(JudgeError::Config("remote judge needs an endpoint and a model".into()));
                }
            }
        }
        Ok(())
    }

    pub fn build(&self) -> Result<Box<dyn Judge>, JudgeError> {
        self.validate()?;
        Ok(match self {
            JudgeBackend::Deterministic { tau } => Box::new(DeterministicJudge::new(*tau)?),
            JudgeBackend::Remote(cfg) => Box::new(RemoteJudge::new(cfg.clone())?),
        })
    }
}

/// Position and strength of a sentence match.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SentenceMatch {
    /// Index into `report.sections`.
    pub section: usize,
    /// Index into that section's sentences.
    pub sentence: usize,
    pub recall: f64,
}

/// Content-token recall of `claim` against every sentence, best first
/// (ties keep document order).
pub fn sentence_matches(claim: &str, report: &Report) -> Vec<SentenceMatch> {
    let needle = text::content_tokens(claim);
    let mut out: Vec<SentenceMatch> = report
        .sections
        .iter()
        .enumerate()
        .flat_map(|(si, s)| s.sentences.iter().enumerate().map(move |(ti, t)| (si, ti, t)))
        .map(|(section, sentence, t)| SentenceMatch {
            section,
            sentence,
            recall: text::recall(&needle, &text::token_set(&t.plain_text())),
        })
        .collect();
    out.sort_by(|a, b| b.recall.total_cmp(&a.recall));
    out
}

fn report_tokens(report: &Report) -> BTreeSet<String> {
    report
        .sentences()
        .flat_map(|s| text::token_set(&s.plain_text()))
        .collect()
}

/// Offline token-overlap judge.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeterministicJudge {
    tau: f64,
}

impl DeterministicJudge {
    pub fn new(tau: f64) -> Result<Self, JudgeError> {
        if !(0.0..=1.0).contains(&tau) {
            return Err(JudgeError::Config(format!("tau {tau} outside [0, 1]")));
        }
        Ok(Self { tau })
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    fn best_sentence_for(&self, claim: &str, report: &Report) -> Option<SentenceMatch> {
        sentence_matches(claim, report).into_iter().next()
    }
}

impl Judge for DeterministicJudge {
    fn label(&self) -> String {
        format!("deterministic(tau={})", self.tau)
    }

    fn assess_presence(&self, node: &GraphNode, report: &Report) -> Result<PresenceVerdict, JudgeError> {
        let (hit, rationale) = match self.best_sentence_for(&node.content, report) {
            None => (false, "report has no sentences".to_string()),
            Some(m) => (
                text::meets(m.recall, self.tau),
                format!(
                    "best sentence: section {} sentence {}, content-token recall {:.3} (tau {})",
                    m.section + 1,
                    m.sentence + 1,
                    m.recall,
                    self.tau
                ),
            ),
        };
        Ok(PresenceVerdict {
            node_id: node.id.clone(),
            hit,
            rationale,
            confidence: 1.0,
        })
    }

    fn answer_exam(&self, question: &ExamQuestion, report: &Report) -> Result<ExamAnswer, JudgeError> {
        if question.is_literal_true_false() {
            let supported = self
                .best_sentence_for(&question.question, report)
                .is_some_and(|m| text::meets(m.recall, self.tau));
            let word = if supported { "true" } else { "false" };
            let text = question
                .options
                .iter()
                .find(|o| text::normalize(text::strip_option_label(o)) == word)
                .cloned()
                .unwrap_or_else(|| if supported { "True".into() } else { "False".into() });
            return Ok(ExamAnswer { text, note: None });
        }
        match question.kind {
            QuestionKind::MultipleChoice | QuestionKind::TrueFalse => {
                let hay = report_tokens(report);
                let mut best = (0usize, -1.0f64);
                for (i, option) in question.options.iter().enumerate() {
                    let needle = text::content_tokens(text::strip_option_label(option));
                    let r = text::recall(&needle, &hay);
                    if r > best.1 {
                        best = (i, r);
                    }
                }
                let note = (best.1 <= 0.0)
                    .then(|| "low evidence: no option overlaps the report; first option chosen".to_string());
                Ok(ExamAnswer {
                    text: question.options.get(best.0).cloned().unwrap_or_default(),
                    note,
                })
            }
            QuestionKind::FillInBlank => {
                let stem = text::content_tokens(&question.question);
                let mut best: Option<(usize, &str)> = None;
                for sentence in report.sentences() {
                    let n = text::overlap(&stem, &text::token_set(&sentence.plain_text()));
                    if best.is_none_or(|(b, _)| n > b) {
                        best = Some((n, sentence.text.as_str()));
                    }
                }
                Ok(match best {
                    Some((n, s)) if n > 0 => ExamAnswer {
                        text: s.to_string(),
                        note: None,
                    },
                    _ => ExamAnswer {
                        text: String::new(),
                        note: Some("low evidence: no report sentence overlaps the question".into()),
                    },
                })
            }
        }
    }

    fn audit_stance(&self, thesis: &str, antithesis: &str, report: &Report) -> Result<StanceScores, JudgeError> {
        let hay = report_tokens(report);
        let side = |claim: &str| {
            let r = text::recall(&text::content_tokens(strip_side_label(claim)), &hay);
            (10.0 * r.clamp(0.0, 1.0)).round()
        };
        Ok(StanceScores::new(side(thesis), side(antithesis)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

impl ChatMessage {
    fn system(content: impl Into<String>) -> Self {
        Self {
            role: "system".into(),
            content: content.into(),
        }
    }

    fn user(content: impl Into<String>) -> Self {
        Self {
            role: "user".into(),
            content: content.into(),
        }
    }
}

/// Request templates. Exam and stance requests carry the report and the
/// question only; ground-truth answers and scores never enter a request.
pub mod prompts {
    use super::*;

    pub fn presence(node: &GraphNode, report: &Report) -> Vec<ChatMessage> {
        vec![
            ChatMessage::system(
                "You verify whether a research report states a given claim. \
                 Reply with YES or NO on the first line, then one sentence of rationale.",
            ),
            ChatMessage::user(format!(
                "CLAIM:\n{}\n\nREPORT:\n{}\n\nIs the claim (or a semantically equivalent statement) present in the report?",
                node.content,
                report.source()
            )),
        ]
    }

    pub fn exam(question: &ExamQuestion, report: &Report) -> Vec<ChatMessage> {
        let mut body = format!(
            "Answer the question using ONLY the report below. Do not use outside knowledge.\n\nREPORT:\n{}\n\nQUESTION ({}):\n{}\n",
            report.source(),
            question.kind,
            question.question
        );
        if !question.options.is_empty() {
            body.push_str("\nOPTIONS:\n");
            for o in &question.options {
                body.push_str(o);
                body.push('\n');
            }
            body.push_str("\nReply with the exact text of one option.");
        } else {
            body.push_str("\nReply with a short answer only.");
        }
        vec![
            ChatMessage::system("You are a careful reader taking a closed-book exam on a single report."),
            ChatMessage::user(body),
        ]
    }

    pub fn stance(thesis: &str, antithesis: &str, report: &Report) -> Vec<ChatMessage> {
        vec![
            ChatMessage::system(
                "You audit how strongly a report supports two competing positions. \
                 Use the report as your only evidence.",
            ),
            ChatMessage::user(format!(
                "REPORT:\n{}\n\nTHESIS: {}\nANTITHESIS: {}\n\n\
                 Rate the evidentiary support the report gives each position from 0 (none) to 10 (conclusive). \
                 Reply exactly as:\nTHESIS: <score>\nANTITHESIS: <score>",
                report.source(),
                strip_side_label(thesis),
                strip_side_label(antithesis)
            )),
        ]
    }
}

/// First-word YES/NO; the rest of the reply is the rationale.
pub fn parse_yes_no(reply: &str) -> Option<(bool, String)> {
    let trimmed = reply.trim_start_matches(|c: char| !c.is_alphanumeric());
    let word: String = trimmed.chars().take_while(|c| c.is_alphabetic()).collect();
    let verdict = match word.to_lowercase().as_str() {
        "yes" => true,
        "no" => false,
        _ => return None,
    };
    let rest = trimmed[word.len()..]
        .trim_start_matches(|c: char| !c.is_alphanumeric())
        .trim()
        .to_string();
    Some((verdict, rest))
}

fn number_after(haystack: &str, label: &str) -> Option<f64> {
    let lower = haystack.to_lowercase();
    let mut search = 0;
    while let Some(pos) = lower[search..].find(label) {
        let at = search + pos;
        // "thesis" also occurs inside "antithesis"
        let standalone = at == 0 || !lower[..at].ends_with(|c: char| c.is_alphabetic());
        if standalone {
            let tail = lower[at + label.len()..].trim_start_matches(|c: char| !c.is_ascii_digit() && c != '-');
            let num: String = tail
                .chars()
                .take_while(|c| c.is_ascii_digit() || *c == '.' || *c == '-')
                .collect();
            return num.trim_end_matches('.').parse().ok();
        }
        search = at + label.len();
    }
    None
}

/// Two scores from a stance reply, labelled or as the first two numbers.
pub fn parse_stance(reply: &str) -> Option<(f64, f64)> {
    if let (Some(a), Some(b)) = (number_after(reply, "thesis"), number_after(reply, "antithesis")) {
        return Some((a, b));
    }
    let nums: Vec<f64> = reply
        .split(|c: char| !(c.is_ascii_digit() || c == '.' || c == '-'))
        .filter_map(|t| t.trim_end_matches('.').parse().ok())
        .collect();
    (nums.len() >= 2).then(|| (nums[0], nums[1]))
}

fn clamp_score(v: f64, side: &str, notes: &mut Vec<String>) -> f64 {
    if (0.0..=10.0).contains(&v) {
        v
    } else {
        let c = if v.is_nan() { 0.0 } else { v.clamp(0.0, 10.0) };
        notes.push(format!("{side} score {v} out of range; clamped to {c}"));
        c
    }
}

struct Semaphore {
    permits: Mutex<usize>,
    freed: Condvar,
}

impl Semaphore {
    fn new(n: usize) -> Self {
        Self {
            permits: Mutex::new(n),
            freed: Condvar::new(),
        }
    }

    fn acquire(&self) -> Permit<'_> {
        let mut n = self.permits.lock().expect("semaphore poisoned");
        while *n == 0 {
            n = self.freed.wait(n).expect("semaphore poisoned");
        }
        *n -= 1;
        Permit(self)
    }
}

struct Permit<'a>(&'a Semaphore);

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.permits.lock().expect("semaphore poisoned") += 1;
        self.0.freed.notify_one();
    }
}

/// Chat-completion backed judge.
pub struct RemoteJudge {
    config: RemoteConfig,
    url: String,
    api_key: Option<String>,
    client: reqwest::blocking::Client,
    limiter: Semaphore,
    log: Mutex<Vec<Exchange>>,
}

impl fmt::Debug for RemoteJudge {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("RemoteJudge")
            .field("url", &self.url)
            .field("model", &self.config.model)
            .finish_non_exhaustive()
    }
}

impl RemoteJudge {
    pub fn new(config: RemoteConfig) -> Result<Self, JudgeError> {
        JudgeBackend::Remote(config.clone()).validate()?;
        let base = config.endpoint.trim_end_matches('/');
        let url = if base.ends_with("/chat/completions") {
            base.to_string()
        } else {
            format!("{base}/chat/completions")
        };
        let api_key = match &config.api_key_env {
            Some(var) => match std::env::var(var) {
                Ok(v) if !v.is_empty() => Some(v),
                _ => {
                    log::warn!("credential variable {var} is unset; sending requests without authorization");
                    None
                }
            },
            None => None,
        };
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(config.timeout_secs.max(1)))
            .build()
            .map_err(|e| JudgeError::Config(e.to_string()))?;
        Ok(Self {
            limiter: Semaphore::new(config.max_parallel),
            config,
            url,
            api_key,
            client,
            log: Mutex::new(Vec::new()),
        })
    }

    pub fn request_body(&self, messages: &[ChatMessage]) -> Value {
        json!({
            "model": self.config.model,
            "messages": messages,
            "temperature": self.config.temperature,
        })
    }

    fn record(&self, task: &str, request: &Value, outcome: &Result<String, JudgeError>) {
        let entry = Exchange {
            task: task.to_string(),
            request: request.clone(),
            response: outcome.as_ref().ok().cloned(),
            error: outcome.as_ref().err().map(ToString::to_string),
        };
        self.log.lock().expect("judge log poisoned").push(entry);
    }

    fn post_once(&self, body: &Value) -> Result<String, JudgeError> {
        let _permit = self.limiter.acquire();
        let mut req = self.client.post(&self.url).json(body);
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| JudgeError::Transport(e.to_string()))?;
        let status = resp.status();
        let text = resp.text().map_err(|e| JudgeError::Transport(e.to_string()))?;
        if !status.is_success() {
            return Err(JudgeError::Status {
                status: status.as_u16(),
                body: text,
            });
        }
        let parsed: Value =
            serde_json::from_str(&text).map_err(|e| JudgeError::Malformed(format!("response is not JSON: {e}")))?;
        parsed
            .pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .map(str::to_string)
            .ok_or_else(|| JudgeError::Malformed("response lacks choices[0].message.content".into()))
    }

    /// Send a chat request, retrying transport failures, 429 and 5xx.
    pub fn complete(&self, task: &str, messages: &[ChatMessage]) -> Result<String, JudgeError> {
        let body = self.request_body(messages);
        let mut attempt = 0;
        loop {
            let outcome = self.post_once(&body);
            self.record(task, &body, &outcome);
            match outcome {
                Err(e) if e.is_transient() && attempt < self.config.transport_retries => attempt += 1,
                other => return other,
            }
        }
    }
}

impl Judge for RemoteJudge {
    fn label(&self) -> String {
        format!("remote({})", self.config.model)
    }

    fn assess_presence(&self, node: &GraphNode, report: &Report) -> Result<PresenceVerdict, JudgeError> {
        let messages = prompts::presence(node, report);
        for attempt in 0..2 {
            let reply = self.complete("presence", &messages)?;
            if let Some((hit, rationale)) = parse_yes_no(&reply) {
                return Ok(PresenceVerdict {
                    node_id: node.id.clone(),
                    hit,
                    rationale,
                    confidence: 1.0,
                });
            }
            log::debug!("presence reply for {} not yes/no (attempt {})", node.id, attempt + 1);
        }
        Ok(PresenceVerdict {
            node_id: node.id.clone(),
            hit: false,
            rationale: "judge reply was not YES/NO after one retry; counted as miss".into(),
            confidence: 0.0,
        })
    }

    fn answer_exam(&self, question: &ExamQuestion, report: &Report) -> Result<ExamAnswer, JudgeError> {
        let reply = self.complete("exam", &prompts::exam(question, report))?;
        let line = reply.lines().find(|l| !l.trim().is_empty()).unwrap_or("").trim();
        let text = line
            .strip_prefix("Answer:")
            .or_else(|| line.strip_prefix("ANSWER:"))
            .unwrap_or(line)
            .trim()
            .to_string();
        Ok(ExamAnswer { text, note: None })
    }

    fn audit_stance(&self, thesis: &str, antithesis: &str, report: &Report) -> Result<StanceScores, JudgeError> {
        let messages = prompts::stance(thesis, antithesis, report);
        let mut last = String::new();
        for _ in 0..2 {
            let reply = self.complete("stance", &messages)?;
            if let Some((a, b)) = parse_stance(&reply) {
                let mut notes = Vec::new();
                let a = clamp_score(a, "thesis", &mut notes);
                let b = clamp_score(b, "antithesis", &mut notes);
                return Ok(StanceScores {
                    thesis: a,
                    antithesis: b,
                    note: (!notes.is_empty()).then(|| notes.join("; ")),
                });
            }
            last = reply;
        }
        Err(JudgeError::Malformed(format!("no stance scores in reply `{last}`")))
    }

    fn exchanges(&self) -> Vec<Exchange> {
        self.log.lock().expect("judge log poisoned").clone()
    }
}
