//! Graph-anchored auditing of long-form research reports.
//!
//! A [`ResearchGraph`] of atomic facts, key insights and global insights is
//! projected onto a parsed [`Report`] by a [`Judge`]. The projection drives
//! coverage and logical-consistency scores; an [`ExamSuite`] drives QA
//! utility and objectivity; citation markers drive source dominance and
//! narrative monopolization. [`meta`] perturbs reports along the graph to
//! check that a metric responds.

pub mod exam;
pub mod graph;
pub mod judge;
pub mod meta;
pub mod metrics;
pub mod pipeline;
pub mod projection;
pub mod report;
pub mod text;

pub use exam::{load_exam, BiasAuditItem, ExamError, ExamQuestion, ExamRun, ExamSuite, QuestionKind};
pub use graph::{
    compute_weights, load_graph, GraphEdge, GraphError, GraphNode, GraphWarning, NodeId, NodeLevel, Relation,
    ResearchGraph, WeightTable,
};
pub use judge::{DeterministicJudge, Judge, JudgeBackend, JudgeError, RemoteConfig, RemoteJudge, StanceScores};
pub use meta::{PerturbKind, PerturbOptions, Perturbation, ScoreTriple, TargetLevels};
pub use metrics::{MetricConfig, MetricError, MetricScores};
pub use pipeline::{evaluate_report, AuditContext, ReportEvaluation};
pub use projection::{project, verify_support, ProjectionResult, SupportVerdict};
pub use report::{parse_report, parse_report_with, ParseOptions, Report};
