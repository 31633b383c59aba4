//! Meta-evaluation: graph-guided report perturbation, responsiveness rates
//! and range-normalized cross-evaluator spread.
//!
//! Perturbations edit the report text directly. `degrade` deletes the
//! sentences that carry chosen hit nodes; `improve` appends the content of
//! chosen missed nodes to the best-matching section. Every choice derives
//! from an explicit seed.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{NodeId, NodeLevel, ResearchGraph};
use crate::judge::{sentence_matches, DEFAULT_TAU};
use crate::projection::ProjectionResult;
use crate::report::{parse_report_with, Report};
use crate::text;

/// Delta scaling applied to 0–10 judge scores before comparing them with
/// 0–100 metrics.
pub const DEFAULT_ALPHA: f64 = 10.0;

pub const MAX_TARGETS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PerturbKind {
    Degrade,
    Improve,
}

impl PerturbKind {
    /// File suffix for perturbed reports.
    pub fn suffix(self) -> &'static str {
        match self {
            PerturbKind::Degrade => "deg",
            PerturbKind::Improve => "imp",
        }
    }
}

/// Which node levels a perturbation may target.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetLevels {
    #[default]
    Facts,
    FactsAndInsights,
}

impl TargetLevels {
    pub fn admits(self, level: NodeLevel) -> bool {
        match self {
            TargetLevels::Facts => level == NodeLevel::AtomicFact,
            TargetLevels::FactsAndInsights => level != NodeLevel::GlobalInsight,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerturbOptions {
    pub count: usize,
    pub seed: u64,
    pub levels: TargetLevels,
    /// Degrade keeps deleting a target's best-matching sentence while that
    /// sentence still reaches this content-token recall.
    pub witness_threshold: f64,
}

impl Default for PerturbOptions {
    fn default() -> Self {
        Self {
            count: 1,
            seed: 0,
            levels: TargetLevels::Facts,
            witness_threshold: DEFAULT_TAU,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum Edit {
    Removed {
        node: NodeId,
        section: usize,
        text: String,
    },
    Inserted {
        node: NodeId,
        section: usize,
        heading: String,
        text: String,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Perturbation {
    pub kind: PerturbKind,
    pub seed: u64,
    pub targets: Vec<NodeId>,
    pub edits: Vec<Edit>,
}

#[derive(Debug, Error, PartialEq)]
pub enum PerturbError {
    #[error("perturbation count must be 1..={MAX_TARGETS}, got {0}")]
    InvalidCount(usize),
    #[error("need {needed} hit nodes to degrade, only {available} available")]
    InsufficientHits { needed: usize, available: usize },
    #[error("need {needed} missed nodes to improve, only {available} available")]
    InsufficientMisses { needed: usize, available: usize },
}

fn pick_targets(mut candidates: Vec<NodeId>, count: usize, seed: u64) -> Vec<NodeId> {
    candidates.sort();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rand::seq::index::sample(&mut rng, candidates.len(), count)
        .into_iter()
        .map(|i| candidates[i].clone())
        .collect()
}

fn check_count(count: usize) -> Result<(), PerturbError> {
    if (1..=MAX_TARGETS).contains(&count) {
        Ok(())
    } else {
        Err(PerturbError::InvalidCount(count))
    }
}

/// Remove `count` seeded-random hit nodes from the report.
pub fn degrade(
    report: &Report,
    graph: &ResearchGraph,
    projection: &ProjectionResult,
    options: &PerturbOptions,
) -> Result<(Report, Perturbation), PerturbError> {
    check_count(options.count)?;
    let candidates: Vec<NodeId> = graph
        .nodes()
        .iter()
        .filter(|n| options.levels.admits(n.level) && projection.is_hit(n.id.as_str()))
        .map(|n| n.id.clone())
        .collect();
    if candidates.len() < options.count {
        return Err(PerturbError::InsufficientHits {
            needed: options.count,
            available: candidates.len(),
        });
    }
    let targets = pick_targets(candidates, options.count, options.seed);
    let (current, edits) = remove_witnesses(report, graph, &targets, options.witness_threshold);
    Ok((
        current,
        Perturbation {
            kind: PerturbKind::Degrade,
            seed: options.seed,
            targets,
            edits,
        },
    ))
}

/// Delete each target's best-matching sentence, repeating while the next
/// best still reaches `witness_threshold`.
pub fn remove_witnesses(
    report: &Report,
    graph: &ResearchGraph,
    targets: &[NodeId],
    witness_threshold: f64,
) -> (Report, Vec<Edit>) {
    let mut text = report.source().to_string();
    let mut current = report.clone();
    let mut edits = Vec::new();
    for target in targets {
        let Some(node) = graph.node(target.as_str()) else {
            continue;
        };
        let mut first = true;
        while let Some(best) = sentence_matches(&node.content, &current).into_iter().next() {
            if best.recall <= 0.0 || (!first && !text::meets(best.recall, witness_threshold)) {
                break;
            }
            let section = &current.sections[best.section];
            let sentence = &section.sentences[best.sentence];
            edits.push(Edit::Removed {
                node: target.clone(),
                section: section.ordinal,
                text: sentence.text.clone(),
            });
            text.replace_range(sentence.span.clone(), "");
            current = parse_report_with(&text, report.options());
            first = false;
        }
    }
    (current, edits)
}

/// Insert the content of `count` seeded-random missed nodes.
pub fn improve(
    report: &Report,
    graph: &ResearchGraph,
    projection: &ProjectionResult,
    options: &PerturbOptions,
) -> Result<(Report, Perturbation), PerturbError> {
    check_count(options.count)?;
    let candidates: Vec<NodeId> = graph
        .nodes()
        .iter()
        .filter(|n| options.levels.admits(n.level) && !projection.is_hit(n.id.as_str()))
        .map(|n| n.id.clone())
        .collect();
    if candidates.len() < options.count {
        return Err(PerturbError::InsufficientMisses {
            needed: options.count,
            available: candidates.len(),
        });
    }
    let targets = pick_targets(candidates, options.count, options.seed);
    let (current, edits) = insert_claims(report, graph, &targets);
    Ok((
        current,
        Perturbation {
            kind: PerturbKind::Improve,
            seed: options.seed,
            targets,
            edits,
        },
    ))
}

/// Append each target's content to the section whose heading overlaps it
/// most; ties go to the later section.
pub fn insert_claims(report: &Report, graph: &ResearchGraph, targets: &[NodeId]) -> (Report, Vec<Edit>) {
    let mut text = report.source().to_string();
    let mut current = report.clone();
    let mut edits = Vec::new();
    for target in targets {
        let Some(node) = graph.node(target.as_str()) else {
            continue;
        };
        let claim = text::content_tokens(&node.content);
        let section = current
            .sections
            .iter()
            .enumerate()
            .max_by_key(|(i, s)| (text::overlap(&claim, &text::token_set(&s.heading)), *i))
            .map(|(_, s)| s)
            .expect("a report always has a section");

        let sentence = as_sentence(&node.content);
        let at = section.span.end;
        let before = &text[..at];
        let lead = if before.is_empty() || before.ends_with("\n\n") {
            ""
        } else if before.ends_with('\n') {
            "\n"
        } else {
            "\n\n"
        };
        let trail = if at == text.len() { "\n" } else { "\n\n" };
        edits.push(Edit::Inserted {
            node: target.clone(),
            section: section.ordinal,
            heading: section.heading.clone(),
            text: sentence.clone(),
        });
        text.insert_str(at, &format!("{lead}{sentence}{trail}"));
        current = parse_report_with(&text, report.options());
    }
    (current, edits)
}

/// Single-line sentence with terminal punctuation.
fn as_sentence(content: &str) -> String {
    let mut s = content.split_whitespace().collect::<Vec<_>>().join(" ");
    if !s.ends_with(['.', '!', '?']) {
        s.push('.');
    }
    s
}

#[derive(Debug, Error, PartialEq)]
pub enum MetaError {
    #[error("no score triples supplied")]
    Empty,
    #[error("scale range is degenerate: [{min}, {max}]")]
    DegenerateScale { min: f64, max: f64 },
    #[error("report {row} has {found} evaluator scores, expected {expected} (at least 2)")]
    Ragged { row: usize, found: usize, expected: usize },
}

/// Scores of one report before and after perturbation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreTriple {
    pub original: f64,
    pub degraded: Option<f64>,
    pub improved: Option<f64>,
}

impl ScoreTriple {
    pub fn new(original: f64, degraded: f64, improved: f64) -> Self {
        Self {
            original,
            degraded: Some(degraded),
            improved: Some(improved),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResponsivenessReport {
    pub rr_deg: Option<f64>,
    pub rr_imp: Option<f64>,
    /// `S(r) - S(r-)` per instance with a degraded score.
    pub deg_deltas: Vec<f64>,
    /// `S(r+) - S(r)` per instance with an improved score.
    pub imp_deltas: Vec<f64>,
    pub threshold: f64,
}

/// Share of perturbations that moved the score strictly past `threshold` in
/// the expected direction.
pub fn responsiveness(triples: &[ScoreTriple], threshold: f64) -> Result<ResponsivenessReport, MetaError> {
    if triples.is_empty() {
        return Err(MetaError::Empty);
    }
    let deg_deltas: Vec<f64> = triples
        .iter()
        .filter_map(|t| t.degraded.map(|d| t.original - d))
        .collect();
    let imp_deltas: Vec<f64> = triples
        .iter()
        .filter_map(|t| t.improved.map(|i| i - t.original))
        .collect();
    let rate = |deltas: &[f64]| {
        (!deltas.is_empty())
            .then(|| 100.0 * deltas.iter().filter(|d| **d > threshold).count() as f64 / deltas.len() as f64)
    };
    Ok(ResponsivenessReport {
        rr_deg: rate(&deg_deltas),
        rr_imp: rate(&imp_deltas),
        deg_deltas,
        imp_deltas,
        threshold,
    })
}

/// Score difference `(original - perturbed) * alpha`.
pub fn scaled_delta(original: f64, perturbed: f64, alpha: f64) -> f64 {
    (original - perturbed) * alpha
}

/// Mean over reports of the population standard deviation across
/// evaluators, divided by the scale range, as a percentage.
///
/// `scores[report][evaluator]`.
pub fn consistency_sigma(scores: &[Vec<f64>], scale_min: f64, scale_max: f64) -> Result<f64, MetaError> {
    if scale_max.is_nan() || scale_min.is_nan() || scale_max <= scale_min {
        return Err(MetaError::DegenerateScale {
            min: scale_min,
            max: scale_max,
        });
    }
    let expected = scores.first().ok_or(MetaError::Empty)?.len();
    let range = scale_max - scale_min;
    let mut total = 0.0;
    for (row, values) in scores.iter().enumerate() {
        if values.len() != expected || values.len() < 2 {
            return Err(MetaError::Ragged {
                row,
                found: values.len(),
                expected: expected.max(2),
            });
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        total += 100.0 * var.sqrt() / range;
    }
    Ok(total / scores.len() as f64)
}

/// Scores of one metric across reports and evaluators, with its scale.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricMatrix {
    pub scale_min: f64,
    pub scale_max: f64,
    pub scores: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConsistencyReport {
    pub evaluators: Vec<String>,
    /// σ_norm (percent) per metric.
    pub sigma_norm: BTreeMap<String, f64>,
    pub scales: BTreeMap<String, (f64, f64)>,
    pub alpha: f64,
}

pub fn consistency_report(
    evaluators: Vec<String>,
    metrics: &BTreeMap<String, MetricMatrix>,
    alpha: f64,
) -> Result<ConsistencyReport, MetaError> {
    let mut sigma_norm = BTreeMap::new();
    let mut scales = BTreeMap::new();
    for (name, m) in metrics {
        sigma_norm.insert(name.clone(), consistency_sigma(&m.scores, m.scale_min, m.scale_max)?);
        scales.insert(name.clone(), (m.scale_min, m.scale_max));
    }
    Ok(ConsistencyReport {
        evaluators,
        sigma_norm,
        scales,
        alpha,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn responsiveness_counts_strict_moves() {
        let triples = [
            ScoreTriple::new(10.0, 9.0, 11.0),
            ScoreTriple::new(10.0, 10.0, 12.0),
            ScoreTriple::new(10.0, 8.0, 10.5),
        ];
        let r = responsiveness(&triples, 0.0).unwrap();
        assert_abs_diff_eq!(r.rr_deg.unwrap(), 200.0 / 3.0, epsilon = 1e-9);
        assert_eq!(r.rr_imp, Some(100.0));
        assert_eq!(r.deg_deltas, vec![1.0, 0.0, 2.0]);

        let scaled: Vec<_> = triples
            .iter()
            .map(|t| ScoreTriple {
                original: t.original * 10.0,
                degraded: t.degraded.map(|d| d * 10.0),
                improved: t.improved.map(|i| i * 10.0),
            })
            .collect();
        let s = responsiveness(&scaled, 0.0).unwrap();
        assert_eq!((s.rr_deg, s.rr_imp), (r.rr_deg, r.rr_imp));
        assert_eq!(responsiveness(&[], 0.0), Err(MetaError::Empty));
    }

    #[test]
    fn one_sided_triples() {
        let r = responsiveness(
            &[ScoreTriple {
                original: 5.0,
                degraded: Some(4.0),
                improved: None,
            }],
            0.0,
        )
        .unwrap();
        assert_eq!((r.rr_deg, r.rr_imp), (Some(100.0), None));
    }

    #[test]
    fn sigma_fixtures() {
        assert_eq!(consistency_sigma(&[vec![50.0, 50.0, 50.0]], 0.0, 100.0), Ok(0.0));
        assert_abs_diff_eq!(
            consistency_sigma(&[vec![40.0, 60.0]], 0.0, 100.0).unwrap(),
            10.0,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(
            consistency_sigma(&[vec![4.0, 6.0]], 0.0, 10.0).unwrap(),
            10.0,
            epsilon = 1e-12
        );
        assert!(matches!(
            consistency_sigma(&[vec![1.0, 2.0]], 5.0, 5.0),
            Err(MetaError::DegenerateScale { .. })
        ));
        assert!(matches!(
            consistency_sigma(&[vec![1.0]], 0.0, 10.0),
            Err(MetaError::Ragged { .. })
        ));
        assert!(matches!(
            consistency_sigma(&[vec![1.0, 2.0], vec![1.0, 2.0, 3.0]], 0.0, 10.0),
            Err(MetaError::Ragged { row: 1, .. })
        ));
        assert_eq!(consistency_sigma(&[], 0.0, 10.0), Err(MetaError::Empty));
    }

    #[test]
    fn alpha_scaling() {
        assert_eq!(scaled_delta(7.0, 5.5, DEFAULT_ALPHA), 15.0);
    }

    #[test]
    fn target_selection_is_seeded() {
        let ids: Vec<NodeId> = (0..10).map(|i| NodeId::new(format!("n{i}"))).collect();
        let a = pick_targets(ids.clone(), 3, 42);
        let b = pick_targets(ids.iter().rev().cloned().collect(), 3, 42);
        assert_eq!(a, b);
        assert_eq!(a.len(), 3);
        assert!(check_count(0).is_err() && check_count(4).is_err());
    }

    #[test]
    fn sentence_form() {
        assert_eq!(as_sentence("multi\n line claim"), "multi line claim.");
        assert_eq!(as_sentence("Done!"), "Done!");
    }
}
