//! End-to-end evaluation of one report against a graph and exam suite.

use serde::Serialize;

use crate::exam::{run_bias_audit, run_exam, AuditRun, ExamRun, ExamSuite};
use crate::graph::{ResearchGraph, WeightTable};
use crate::judge::Judge;
use crate::metrics::{self, MetricConfig, MetricError, MetricScores};
use crate::projection::{project, verify_support, ProjectionResult, SupportVerdict};
use crate::report::{CitationDistribution, Report, SectionPresence};

/// Inputs shared by every report of a run.
#[derive(Debug, Clone, Copy)]
pub struct AuditContext<'a> {
    pub graph: &'a ResearchGraph,
    pub weights: &'a WeightTable,
    pub exam: Option<&'a ExamSuite>,
    pub config: MetricConfig,
}

impl<'a> AuditContext<'a> {
    pub fn new(graph: &'a ResearchGraph, weights: &'a WeightTable) -> Self {
        Self {
            graph,
            weights,
            exam: None,
            config: MetricConfig::default(),
        }
    }

    pub fn with_exam(mut self, exam: &'a ExamSuite) -> Self {
        self.exam = Some(exam);
        self
    }

    pub fn with_config(mut self, config: MetricConfig) -> Self {
        self.config = config;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportEvaluation {
    pub scores: MetricScores,
    pub projection: ProjectionResult,
    pub support: Vec<SupportVerdict>,
    pub exam: Option<ExamRun>,
    pub audit: Option<AuditRun>,
    pub citations: CitationDistribution,
    pub presence: SectionPresence,
    /// Some judgments failed and were scored as misses or excluded.
    pub partial: bool,
}

pub fn evaluate_report(
    ctx: &AuditContext<'_>,
    report: &Report,
    judge: &dyn Judge,
) -> Result<ReportEvaluation, MetricError> {
    ctx.config.validate()?;
    let projection = project(ctx.graph, report, judge);
    let coverage = metrics::coverage(ctx.graph, ctx.weights, &projection)?;
    let support = verify_support(ctx.graph, &projection);

    let mut scores = MetricScores {
        r1: coverage.r1,
        r2: coverage.r2,
        r3: coverage.r3,
        r_weighted: Some(coverage.r_weighted),
        c_logic: metrics::logical_consistency(ctx.graph, &support, &ctx.config),
        ..MetricScores::default()
    };
    let notes = &mut scores.diagnostics;
    notes.extend(report.diagnostics.iter().map(ToString::to_string));
    if !projection.failed.is_empty() {
        notes.push(format!(
            "presence judgment failed for {} node(s), scored as misses",
            projection.failed.len()
        ));
    }
    if scores.c_logic.is_none() {
        notes.push("c_logic undefined: graph has no global insights".into());
    }

    let (exam, audit) = match ctx.exam {
        Some(suite) => {
            let exam = run_exam(&suite.questions, report, judge);
            let audit = run_bias_audit(&suite.bias_audits, report, judge);
            (Some(exam), Some(audit))
        }
        None => (None, None),
    };
    match &exam {
        Some(run) => {
            scores.u_qa = metrics::utility(run.correct(), run.graded.len());
            if !run.ungraded.is_empty() {
                notes.push(format!(
                    "{} exam question(s) excluded after judge failure",
                    run.ungraded.len()
                ));
            }
            if scores.u_qa.is_none() {
                notes.push("u_qa undefined: no gradable questions".into());
            }
        }
        None => notes.push("u_qa undefined: no exam supplied".into()),
    }
    match &audit {
        Some(run) => {
            scores.o_bias = metrics::objectivity(&run.pairs(), &ctx.config);
            if !run.excluded.is_empty() {
                notes.push(format!(
                    "{} bias audit item(s) excluded after judge failure",
                    run.excluded.len()
                ));
            }
            if scores.o_bias.is_none() {
                notes.push("o_bias undefined: no scorable bias audit items".into());
            }
        }
        None => notes.push("o_bias undefined: no exam supplied".into()),
    }

    let citations = report.citation_distribution();
    let presence = report.section_presence();
    scores.d_src = metrics::source_dominance(&citations);
    if scores.d_src.is_none() {
        scores.diagnostics.push("d_src undefined: no resolved citations".into());
    }
    scores.m_mono = metrics::narrative_monopolization(&presence);
    if scores.m_mono.is_none() {
        scores.diagnostics.push("m_mono undefined: no content sections".into());
    }
    scores.finish(&ctx.config);

    let partial = projection.is_partial()
        || exam.as_ref().is_some_and(|r| !r.ungraded.is_empty())
        || audit.as_ref().is_some_and(|r| !r.excluded.is_empty());
    Ok(ReportEvaluation {
        scores,
        projection,
        support,
        exam,
        audit,
        citations,
        presence,
        partial,
    })
}
