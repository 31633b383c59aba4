//! Metric formulas: level and depth-weighted recall, logical consistency,
//! QA utility, objectivity, source dominance, narrative monopolization and
//! the overall aggregate. All scores are on a 0–100 scale.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{total_weight, NodeLevel, ResearchGraph, WeightTable};
use crate::judge::StanceScores;
use crate::projection::{ProjectionResult, SupportVerdict};
use crate::report::{CitationDistribution, SectionPresence};

pub const DEFAULT_EPSILON: f64 = 1e-9;
pub const DEFAULT_LAMBDA: f64 = 5.0;
pub const DEFAULT_OVERALL_WEIGHTS: [f64; 4] = [0.25; 4];

#[derive(Debug, Error, PartialEq)]
pub enum MetricError {
    #[error("graph has no nodes; nothing to audit")]
    EmptyGraph,
    #[error("invalid metric config: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricConfig {
    pub epsilon: f64,
    pub lambda_penalty: f64,
    /// Weights for (R_weighted, C_logic, U_qa, O_bias).
    pub overall_weights: [f64; 4],
}

impl Default for MetricConfig {
    fn default() -> Self {
        Self {
            epsilon: DEFAULT_EPSILON,
            lambda_penalty: DEFAULT_LAMBDA,
            overall_weights: DEFAULT_OVERALL_WEIGHTS,
        }
    }
}

impl MetricConfig {
    pub fn validate(&self) -> Result<(), MetricError> {
        if self.epsilon.is_nan() || self.epsilon <= 0.0 {
            return Err(MetricError::Config(format!(
                "epsilon must be positive, got {}",
                self.epsilon
            )));
        }
        if self.lambda_penalty.is_nan() || self.lambda_penalty <= 0.0 {
            return Err(MetricError::Config(format!(
                "lambda must be positive, got {}",
                self.lambda_penalty
            )));
        }
        if self.overall_weights.iter().any(|w| w.is_nan() || *w < 0.0) {
            return Err(MetricError::Config("overall weights must be non-negative".into()));
        }
        let sum: f64 = self.overall_weights.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(MetricError::Config(format!("overall weights sum to {sum}, expected 1")));
        }
        Ok(())
    }
}

/// Every metric for one report. `None` marks a score that is undefined for
/// the inputs; the reason is recorded in `diagnostics`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricScores {
    pub r1: Option<f64>,
    pub r2: Option<f64>,
    pub r3: Option<f64>,
    pub r_weighted: Option<f64>,
    pub c_logic: Option<f64>,
    pub u_qa: Option<f64>,
    pub o_bias: Option<f64>,
    pub d_src: Option<f64>,
    pub m_mono: Option<f64>,
    pub overall: Option<f64>,
    pub diagnostics: Vec<String>,
}

impl MetricScores {
    pub fn core(&self) -> [Option<f64>; 4] {
        [self.r_weighted, self.c_logic, self.u_qa, self.o_bias]
    }

    /// Fill `overall` from the four core scores.
    pub fn finish(&mut self, config: &MetricConfig) {
        match overall(self.core(), config) {
            Ok(v) => self.overall = Some(v),
            Err(missing) => {
                self.overall = None;
                self.diagnostics
                    .push(format!("overall undefined: missing {}", missing.join(", ")));
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Coverage {
    pub r1: Option<f64>,
    pub r2: Option<f64>,
    pub r3: Option<f64>,
    pub r_weighted: f64,
}

/// Per-level recall and depth-weighted recall.
pub fn coverage(
    graph: &ResearchGraph,
    weights: &WeightTable,
    result: &ProjectionResult,
) -> Result<Coverage, MetricError> {
    if graph.is_empty() {
        return Err(MetricError::EmptyGraph);
    }
    let level = |l: NodeLevel| {
        let total = graph.level_count(l);
        (total > 0).then(|| 100.0 * result.hits.at(l).len() as f64 / total as f64)
    };
    let total = total_weight(graph, weights);
    let hit: u64 = graph
        .nodes()
        .iter()
        .filter(|n| result.is_hit(n.id.as_str()))
        .map(|n| u64::from(weights.get(n.id.as_str()).unwrap_or(0)))
        .sum();
    Ok(Coverage {
        r1: level(NodeLevel::AtomicFact),
        r2: level(NodeLevel::KeyInsight),
        r3: level(NodeLevel::GlobalInsight),
        r_weighted: 100.0 * hit as f64 / total as f64,
    })
}

/// Supported-to-hit ratio times global coverage. `None` without globals.
pub fn logical_consistency(graph: &ResearchGraph, support: &[SupportVerdict], config: &MetricConfig) -> Option<f64> {
    let total = graph.level_count(NodeLevel::GlobalInsight);
    if total == 0 {
        return None;
    }
    let hit = support.iter().filter(|s| s.hit).count();
    let supported = support.iter().filter(|s| s.supported).count();
    Some(consistency_from_counts(total, hit, supported, config.epsilon))
}

pub fn consistency_from_counts(total: usize, hit: usize, supported: usize, epsilon: f64) -> f64 {
    let hit = hit as f64;
    100.0 * (supported as f64 / (hit + epsilon)) * (hit / total as f64)
}

/// Fraction of graded answers that are correct. `None` when nothing was graded.
pub fn utility(correct: usize, graded: usize) -> Option<f64> {
    (graded > 0).then(|| 100.0 * correct as f64 / graded as f64)
}

/// Stance calibration score for one audit item.
pub fn objectivity_item(scores: &StanceScores, truth: &StanceScores, lambda: f64) -> f64 {
    let error = (scores.thesis - truth.thesis).abs() + (scores.antithesis - truth.antithesis).abs();
    (100.0 - lambda * error).max(0.0)
}

/// Mean of per-item clamped calibration scores. `None` for no items.
pub fn objectivity(items: &[(StanceScores, StanceScores)], config: &MetricConfig) -> Option<f64> {
    if items.is_empty() {
        return None;
    }
    let sum: f64 = items
        .iter()
        .map(|(s, gt)| objectivity_item(s, gt, config.lambda_penalty))
        .sum();
    Some(sum / items.len() as f64)
}

/// Shannon entropy in bits of a probability vector.
pub fn entropy_bits(probabilities: &[f64]) -> f64 {
    probabilities.iter().filter(|p| **p > 0.0).map(|p| -p * p.log2()).sum()
}

/// One minus normalized entropy of the citation volume. A single source
/// scores 100; no citations give `None`.
pub fn source_dominance(dist: &CitationDistribution) -> Option<f64> {
    let p: Vec<f64> = dist.proportions().into_iter().map(|(_, p)| p).collect();
    dominance_from_proportions(&p)
}

pub fn dominance_from_proportions(p: &[f64]) -> Option<f64> {
    match p.len() {
        0 => None,
        1 => Some(100.0),
        n => {
            let d = 100.0 * (1.0 - entropy_bits(p) / (n as f64).log2());
            // Rounding can leave a uniform distribution a hair below zero.
            Some(d.clamp(0.0, 100.0))
        }
    }
}

/// Largest share of sections citing a single source. `None` without citations.
pub fn narrative_monopolization(presence: &SectionPresence) -> Option<f64> {
    if presence.total_sections == 0 {
        return None;
    }
    presence
        .per_source
        .values()
        .max()
        .map(|&k| 100.0 * k as f64 / presence.total_sections as f64)
}

/// Weighted average of (R_weighted, C_logic, U_qa, O_bias). Returns the
/// names of missing components when any is `None`.
pub fn overall(core: [Option<f64>; 4], config: &MetricConfig) -> Result<f64, Vec<&'static str>> {
    const NAMES: [&str; 4] = ["r_weighted", "c_logic", "u_qa", "o_bias"];
    let missing: Vec<&str> = core
        .iter()
        .zip(NAMES)
        .filter(|(v, _)| v.is_none())
        .map(|(_, n)| n)
        .collect();
    if !missing.is_empty() {
        return Err(missing);
    }
    Ok(core
        .iter()
        .zip(config.overall_weights)
        .map(|(v, w)| v.expect("checked") * w)
        .sum())
}
