//! Exam suites: fact-recall quizzes and dialectical bias audits, answered
//! with the report as the only context.

use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::judge::{Judge, StanceScores};
use crate::report::Report;
use crate::text;

pub const EXAM_SCHEMA_VERSION: u32 = 1;

/// Token recall of the reference answer required for a fill-in-blank hit.
pub const FILL_IN_RECALL: f64 = 0.8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuestionKind {
    MultipleChoice,
    #[serde(alias = "true_or_false")]
    TrueFalse,
    #[serde(alias = "fill_in_the_blank")]
    FillInBlank,
}

impl fmt::Display for QuestionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            QuestionKind::MultipleChoice => "multiple_choice",
            QuestionKind::TrueFalse => "true_false",
            QuestionKind::FillInBlank => "fill_in_blank",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExamQuestion {
    #[serde(rename = "type")]
    pub kind: QuestionKind,
    pub question: String,
    #[serde(default)]
    pub options: Vec<String>,
    pub answer: String,
    pub depth_metric: u8,
}

impl ExamQuestion {
    /// Index of the option the ground-truth answer designates. Accepts the
    /// option text (with or without its label) or a bare option letter.
    pub fn answer_option(&self) -> Option<usize> {
        option_index(&self.options, &self.answer)
    }

    /// True/false question whose options are the literal words (or absent).
    pub fn is_literal_true_false(&self) -> bool {
        self.kind == QuestionKind::TrueFalse
            && (self.options.is_empty()
                || self
                    .options
                    .iter()
                    .all(|o| matches!(normalize_choice(o).as_str(), "true" | "false")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasAuditItem {
    pub question: String,
    pub thesis: String,
    pub antithesis: String,
    pub gt_scores: [u8; 2],
    #[serde(default)]
    pub rationale: String,
}

impl BiasAuditItem {
    pub fn ground_truth(&self) -> StanceScores {
        StanceScores::new(f64::from(self.gt_scores[0]), f64::from(self.gt_scores[1]))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ExamSuite {
    pub questions: Vec<ExamQuestion>,
    pub bias_audits: Vec<BiasAuditItem>,
}

#[derive(Debug, Error)]
pub enum ExamError {
    #[error("malformed exam file: {0}")]
    Syntax(#[from] serde_json::Error),
    #[error("{item}: {message}")]
    Schema { item: String, message: String },
    #[error("{item}: depth_metric {depth} outside 0..=5")]
    DepthOutOfRange { item: String, depth: i64 },
    #[error("{item}: multiple choice needs at least 2 options, found {count}")]
    TooFewOptions { item: String, count: usize },
    #[error("{item}: answer `{answer}` matches no option")]
    AnswerNotAnOption { item: String, answer: String },
    #[error("{item}: score {score} outside 0..=10")]
    ScoreOutOfRange { item: String, score: i64 },
    #[error("{item}: thesis and antithesis are identical")]
    IdenticalSides { item: String },
}

#[derive(Deserialize)]
struct ExamFile {
    #[serde(default)]
    #[allow(dead_code)]
    schema_version: Option<u32>,
    #[serde(default)]
    quiz: Vec<Value>,
    #[serde(default)]
    bias_audits: Vec<Value>,
}

#[derive(Deserialize)]
struct RawQuestion {
    #[serde(rename = "type")]
    kind: QuestionKind,
    question: String,
    #[serde(default)]
    options: Vec<String>,
    answer: String,
    depth_metric: i64,
}

// Either the lifted form (thesis/antithesis/gt_scores) or the generator's
// native form: two "Thesis:"/"Antithesis:" options and two answers ending in
// "Score: n.".
#[derive(Deserialize)]
struct RawAudit {
    question: String,
    thesis: Option<String>,
    antithesis: Option<String>,
    gt_scores: Option<Vec<i64>>,
    #[serde(default)]
    rationale: Option<String>,
    #[serde(default)]
    options: Vec<String>,
    #[serde(default)]
    answer: Vec<String>,
}

pub fn load_exam(bytes: &[u8]) -> Result<ExamSuite, ExamError> {
    let file: ExamFile = serde_json::from_slice(bytes)?;
    let questions = file
        .quiz
        .into_iter()
        .enumerate()
        .map(|(i, v)| validate_question(&format!("quiz[{i}]"), v))
        .collect::<Result<_, _>>()?;
    let bias_audits = file
        .bias_audits
        .into_iter()
        .enumerate()
        .map(|(i, v)| validate_audit(&format!("bias_audits[{i}]"), v))
        .collect::<Result<_, _>>()?;
    Ok(ExamSuite { questions, bias_audits })
}

fn schema_err(item: &str, e: impl fmt::Display) -> ExamError {
    ExamError::Schema {
        item: item.to_string(),
        message: e.to_string(),
    }
}

fn validate_question(item: &str, value: Value) -> Result<ExamQuestion, ExamError> {
    let raw: RawQuestion = serde_json::from_value(value).map_err(|e| schema_err(item, e))?;
    if !(0..=5).contains(&raw.depth_metric) {
        return Err(ExamError::DepthOutOfRange {
            item: item.to_string(),
            depth: raw.depth_metric,
        });
    }
    if raw.question.trim().is_empty() {
        return Err(schema_err(item, "empty question"));
    }
    let q = ExamQuestion {
        kind: raw.kind,
        question: raw.question,
        options: raw.options,
        answer: raw.answer,
        depth_metric: raw.depth_metric as u8,
    };
    match q.kind {
        QuestionKind::MultipleChoice => {
            if q.options.len() < 2 {
                return Err(ExamError::TooFewOptions {
                    item: item.to_string(),
                    count: q.options.len(),
                });
            }
            if q.answer_option().is_none() {
                return Err(ExamError::AnswerNotAnOption {
                    item: item.to_string(),
                    answer: q.answer.clone(),
                });
            }
        }
        QuestionKind::TrueFalse => {
            let ok = if q.options.is_empty() {
                matches!(normalize_choice(&q.answer).as_str(), "true" | "false")
            } else {
                q.answer_option().is_some()
            };
            if !ok {
                return Err(ExamError::AnswerNotAnOption {
                    item: item.to_string(),
                    answer: q.answer.clone(),
                });
            }
        }
        QuestionKind::FillInBlank => {
            if text::tokens(&q.answer).is_empty() {
                return Err(schema_err(item, "empty answer"));
            }
        }
    }
    Ok(q)
}

fn validate_audit(item: &str, value: Value) -> Result<BiasAuditItem, ExamError> {
    let raw: RawAudit = serde_json::from_value(value).map_err(|e| schema_err(item, e))?;
    let (thesis, antithesis, scores) = match (raw.thesis, raw.antithesis, raw.gt_scores) {
        (Some(t), Some(a), Some(s)) => (t, a, s),
        (None, None, None) if raw.options.len() == 2 && raw.answer.len() == 2 => {
            let score = |s: &str| extract_score(s).ok_or_else(|| schema_err(item, format!("no `Score: n` in `{s}`")));
            (
                strip_side_label(&raw.options[0]).to_string(),
                strip_side_label(&raw.options[1]).to_string(),
                vec![score(&raw.answer[0])?, score(&raw.answer[1])?],
            )
        }
        _ => {
            return Err(schema_err(
                item,
                "expected thesis, antithesis and gt_scores (or two options with two scored answers)",
            ))
        }
    };
    if scores.len() != 2 {
        return Err(schema_err(
            item,
            format!("gt_scores needs 2 values, found {}", scores.len()),
        ));
    }
    for &score in &scores {
        if !(0..=10).contains(&score) {
            return Err(ExamError::ScoreOutOfRange {
                item: item.to_string(),
                score,
            });
        }
    }
    if text::normalize(&thesis) == text::normalize(&antithesis) {
        return Err(ExamError::IdenticalSides { item: item.to_string() });
    }
    Ok(BiasAuditItem {
        question: raw.question,
        thesis,
        antithesis,
        gt_scores: [scores[0] as u8, scores[1] as u8],
        rationale: raw.rationale.unwrap_or_else(|| raw.answer.join(" | ")),
    })
}

fn extract_score(s: &str) -> Option<i64> {
    let lower = s.to_lowercase();
    let pos = lower.rfind("score")?;
    let digits: String = lower[pos + 5..]
        .trim_start_matches([':', ' ', '='])
        .chars()
        .take_while(|c| c.is_ascii_digit() || *c == '-')
        .collect();
    digits.parse().ok()
}

/// Drop a leading `Thesis:` / `Antithesis:` label.
pub fn strip_side_label(s: &str) -> &str {
    let t = s.trim();
    for label in ["thesis:", "antithesis:"] {
        if t.len() >= label.len() && t[..label.len()].eq_ignore_ascii_case(label) {
            return t[label.len()..].trim();
        }
    }
    t
}

fn normalize_choice(s: &str) -> String {
    text::normalize(text::strip_option_label(s))
}

fn option_index(options: &[String], answer: &str) -> Option<usize> {
    let want = normalize_choice(answer);
    if let Some(i) = options.iter().position(|o| normalize_choice(o) == want) {
        return Some(i);
    }
    // Bare letter: "B" or "b)".
    let letter = answer.trim().trim_end_matches([')', '.', ':']);
    let mut chars = letter.chars();
    match (chars.next(), chars.next()) {
        (Some(c), None) if c.is_ascii_alphabetic() => {
            let i = (c.to_ascii_lowercase() as u8 - b'a') as usize;
            (i < options.len()).then_some(i)
        }
        _ => None,
    }
}

/// Decide whether `produced` is equivalent to the question's ground truth.
pub fn grade_answer(question: &ExamQuestion, produced: &str) -> bool {
    match question.kind {
        QuestionKind::MultipleChoice | QuestionKind::TrueFalse => {
            let got = normalize_choice(produced);
            if got.is_empty() {
                return false;
            }
            let truth = match question.answer_option() {
                Some(i) => normalize_choice(&question.options[i]),
                None => normalize_choice(&question.answer),
            };
            if got == truth {
                return true;
            }
            // A bare letter naming the right option also counts.
            match (option_index(&question.options, produced), question.answer_option()) {
                (Some(a), Some(b)) => a == b,
                _ => false,
            }
        }
        QuestionKind::FillInBlank => {
            let truth = text::token_set(&question.answer);
            let got = text::token_set(produced);
            text::meets(text::recall(&truth, &got), FILL_IN_RECALL)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradedAnswer {
    pub question_index: usize,
    pub kind: QuestionKind,
    pub depth_metric: u8,
    pub produced: String,
    pub correct: bool,
    pub rationale: String,
}

/// A question or audit item that could not be judged.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Excluded {
    pub index: usize,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ExamRun {
    pub graded: Vec<GradedAnswer>,
    pub ungraded: Vec<Excluded>,
}

impl ExamRun {
    pub fn correct(&self) -> usize {
        self.graded.iter().filter(|g| g.correct).count()
    }

    /// Correct and attempted counts per depth_metric value.
    pub fn by_depth(&self) -> [(usize, usize); 6] {
        let mut out = [(0, 0); 6];
        for g in &self.graded {
            let slot = &mut out[g.depth_metric.min(5) as usize];
            slot.1 += 1;
            if g.correct {
                slot.0 += 1;
            }
        }
        out
    }
}

pub fn run_exam(questions: &[ExamQuestion], report: &Report, judge: &dyn Judge) -> ExamRun {
    let outcomes: Vec<_> = questions
        .par_iter()
        .enumerate()
        .map(|(i, q)| (i, q, judge.answer_exam(q, report)))
        .collect();
    let mut run = ExamRun::default();
    for (i, q, outcome) in outcomes {
        match outcome {
            Ok(answer) => {
                let correct = grade_answer(q, &answer.text);
                let mut rationale = format!(
                    "{} vs ground truth `{}`",
                    if correct { "matches" } else { "differs" },
                    q.answer
                );
                if let Some(note) = answer.note {
                    rationale.push_str("; ");
                    rationale.push_str(&note);
                }
                run.graded.push(GradedAnswer {
                    question_index: i,
                    kind: q.kind,
                    depth_metric: q.depth_metric,
                    produced: answer.text,
                    correct,
                    rationale,
                });
            }
            Err(e) => run.ungraded.push(Excluded {
                index: i,
                reason: e.to_string(),
            }),
        }
    }
    run
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AuditResult {
    pub item_index: usize,
    pub scores: StanceScores,
    pub ground_truth: StanceScores,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct AuditRun {
    pub results: Vec<AuditResult>,
    pub excluded: Vec<Excluded>,
}

impl AuditRun {
    pub fn pairs(&self) -> Vec<(StanceScores, StanceScores)> {
        self.results
            .iter()
            .map(|r| (r.scores.clone(), r.ground_truth.clone()))
            .collect()
    }
}

/// Blind stance audit: the judge sees thesis, antithesis and report only.
pub fn run_bias_audit(items: &[BiasAuditItem], report: &Report, judge: &dyn Judge) -> AuditRun {
    let outcomes: Vec<_> = items
        .par_iter()
        .enumerate()
        .map(|(i, item)| (i, item, judge.audit_stance(&item.thesis, &item.antithesis, report)))
        .collect();
    let mut run = AuditRun::default();
    for (i, item, outcome) in outcomes {
        match outcome {
            Ok(scores) => run.results.push(AuditResult {
                item_index: i,
                scores,
                ground_truth: item.ground_truth(),
            }),
            Err(e) => run.excluded.push(Excluded {
                index: i,
                reason: e.to_string(),
            }),
        }
    }
    run
}
