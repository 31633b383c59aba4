//! Input loading, batch evaluation and run-directory persistence.

use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};

use anyhow::Context;
use graphaudit_core::graph::total_weight;
use graphaudit_core::projection::recovered_subgraph;
use graphaudit_core::{
    compute_weights, evaluate_report, load_exam, load_graph, parse_report_with, AuditContext, ExamSuite, Judge,
    MetricScores, ParseOptions, Report, ReportEvaluation, ResearchGraph, WeightTable,
};
use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::{Evaluator, Format, RunConfig};
use crate::error::Failure;
use crate::table;

pub struct ReportInput {
    pub name: String,
    pub path: PathBuf,
    pub text: Result<String, String>,
}

pub struct Inputs {
    pub graph: ResearchGraph,
    pub weights: WeightTable,
    pub exam: Option<ExamSuite>,
    pub reports: Vec<ReportInput>,
    /// SHA-256 over every input byte and the scoring configuration.
    pub digest: String,
}

pub fn read_graph(path: &Path) -> Result<(ResearchGraph, Vec<u8>), Failure> {
    let bytes = fs::read(path)
        .with_context(|| format!("cannot read graph {}", path.display()))
        .map_err(Failure::unreadable)?;
    let graph = load_graph(&bytes)
        .with_context(|| format!("invalid graph {}", path.display()))
        .map_err(Failure::invalid)?;
    Ok((graph, bytes))
}

/// Expand directories to their `.md` files (perturbed copies excluded).
pub fn collect_reports(paths: &[PathBuf]) -> Result<Vec<PathBuf>, Failure> {
    let mut out = Vec::new();
    for p in paths {
        if p.is_dir() {
            let mut found: Vec<PathBuf> = fs::read_dir(p)
                .with_context(|| format!("cannot list {}", p.display()))
                .map_err(Failure::unreadable)?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|f| {
                    let name = f.file_name().and_then(|n| n.to_str()).unwrap_or("");
                    f.is_file() && name.ends_with(".md") && !name.ends_with(".deg.md") && !name.ends_with(".imp.md")
                })
                .collect();
            found.sort();
            out.extend(found);
        } else if p.is_file() {
            out.push(p.clone());
        } else {
            return Err(Failure::usage(format!("report path {} does not exist", p.display())));
        }
    }
    if out.is_empty() {
        return Err(Failure::usage(
            "no reports given (--report or `reports` in the config file)",
        ));
    }
    Ok(out)
}

fn report_inputs(paths: &[PathBuf]) -> Result<Vec<ReportInput>, Failure> {
    let mut inputs: Vec<ReportInput> = collect_reports(paths)?
        .into_iter()
        .map(|path| {
            let name = path
                .file_name()
                .map_or_else(String::new, |n| n.to_string_lossy().into_owned());
            let text = fs::read(&path)
                .map_err(|e| format!("cannot read {}: {e}", path.display()))
                .and_then(|b| String::from_utf8(b).map_err(|_| format!("{} is not UTF-8", path.display())));
            ReportInput { name, path, text }
        })
        .collect();
    inputs.sort_by(|a, b| a.name.cmp(&b.name));
    if let Some(w) = inputs.windows(2).find(|w| w[0].name == w[1].name) {
        return Err(Failure::usage(format!(
            "two reports share the file name {} ({} and {})",
            w[0].name,
            w[0].path.display(),
            w[1].path.display()
        )));
    }
    Ok(inputs)
}

pub fn read_exam(path: &Path) -> Result<(ExamSuite, Vec<u8>), Failure> {
    let bytes = fs::read(path)
        .with_context(|| format!("cannot read exam {}", path.display()))
        .map_err(Failure::unreadable)?;
    let exam = load_exam(&bytes)
        .with_context(|| format!("invalid exam {}", path.display()))
        .map_err(Failure::invalid)?;
    Ok((exam, bytes))
}

/// Scoring-relevant settings; output location and worker count excluded.
#[derive(Serialize)]
struct Fingerprint<'a> {
    judge: &'a Evaluator,
    metrics: &'a graphaudit_core::MetricConfig,
    section_depth: Option<u8>,
    perturb: &'a crate::config::PerturbSettings,
    evaluators: &'a [Evaluator],
}

pub fn load_inputs(cfg: &RunConfig) -> Result<Inputs, Failure> {
    let (graph, graph_bytes) = read_graph(cfg.graph_path()?)?;
    for w in graph.warnings() {
        log::warn!("graph: {w}");
    }
    let (exam, exam_bytes) = match &cfg.exam {
        Some(p) => {
            let (e, b) = read_exam(p)?;
            (Some(e), b)
        }
        None => (None, Vec::new()),
    };
    let reports = report_inputs(&cfg.reports)?;

    let mut h = Sha256::new();
    let fp = Fingerprint {
        judge: &cfg.judge,
        metrics: &cfg.metrics,
        section_depth: cfg.section_depth,
        perturb: &cfg.perturb,
        evaluators: &cfg.evaluators,
    };
    h.update(serde_json::to_vec(&fp).expect("config serializes"));
    h.update(&graph_bytes);
    h.update(&exam_bytes);
    for r in &reports {
        h.update(r.name.as_bytes());
        if let Ok(t) = &r.text {
            h.update(t.as_bytes());
        }
    }
    let weights = compute_weights(&graph);
    Ok(Inputs {
        graph,
        weights,
        exam,
        reports,
        digest: hex::encode(h.finalize()),
    })
}

pub fn run_id(cfg: &RunConfig, digest: &str) -> String {
    cfg.run_id
        .clone()
        .unwrap_or_else(|| format!("{}-{}", chrono::Utc::now().format("%Y%m%dT%H%M%SZ"), &digest[..12]))
}

pub fn parse_options(cfg: &RunConfig) -> ParseOptions {
    ParseOptions {
        section_depth: cfg.section_depth,
    }
}

pub struct ReportOutcome {
    pub name: String,
    pub report: Option<Report>,
    pub result: Result<ReportEvaluation, String>,
}

pub fn pool(workers: usize) -> rayon::ThreadPool {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .expect("thread pool")
}

/// Evaluate one report; panics are contained so other reports still score.
pub fn evaluate_one(ctx: &AuditContext<'_>, report: &Report, judge: &dyn Judge) -> Result<ReportEvaluation, String> {
    match catch_unwind(AssertUnwindSafe(|| evaluate_report(ctx, report, judge))) {
        Ok(Ok(e)) => Ok(e),
        Ok(Err(e)) => Err(e.to_string()),
        Err(_) => Err("evaluation panicked".into()),
    }
}

pub fn evaluate_all(inputs: &Inputs, cfg: &RunConfig, judge: &dyn Judge) -> Vec<ReportOutcome> {
    let mut ctx = AuditContext::new(&inputs.graph, &inputs.weights).with_config(cfg.metrics);
    if let Some(exam) = &inputs.exam {
        ctx = ctx.with_exam(exam);
    }
    let options = parse_options(cfg);
    pool(cfg.workers).install(|| {
        inputs
            .reports
            .par_iter()
            .map(|input| match &input.text {
                Ok(text) => {
                    let report = parse_report_with(text, options);
                    let result = evaluate_one(&ctx, &report, judge);
                    ReportOutcome {
                        name: input.name.clone(),
                        report: Some(report),
                        result,
                    }
                }
                Err(e) => ReportOutcome {
                    name: input.name.clone(),
                    report: None,
                    result: Err(e.clone()),
                },
            })
            .collect()
    })
}

#[derive(Serialize)]
struct GraphSummary {
    nodes: usize,
    links: usize,
    total_weight: u64,
    warnings: Vec<String>,
}

#[derive(Serialize)]
struct ReportRecord<'a> {
    name: &'a str,
    status: &'static str,
    partial: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    scores: Option<&'a MetricScores>,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<&'a str>,
}

#[derive(Serialize)]
struct ScoresFile<'a> {
    judge: &'a Evaluator,
    metrics: &'a graphaudit_core::MetricConfig,
    section_depth: Option<u8>,
    graph: GraphSummary,
    partial: bool,
    reports: Vec<ReportRecord<'a>>,
}

pub const SCORE_COLUMNS: [&str; 13] = [
    "report",
    "status",
    "partial",
    "r1",
    "r2",
    "r3",
    "r_weighted",
    "c_logic",
    "u_qa",
    "o_bias",
    "d_src",
    "m_mono",
    "overall",
];

fn score_values(s: &MetricScores) -> [Option<f64>; 10] {
    [
        s.r1,
        s.r2,
        s.r3,
        s.r_weighted,
        s.c_logic,
        s.u_qa,
        s.o_bias,
        s.d_src,
        s.m_mono,
        s.overall,
    ]
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<(), Failure> {
    let mut text = serde_json::to_string_pretty(value).expect("serializable");
    text.push('\n');
    fs::write(path, text)
        .with_context(|| format!("cannot write {}", path.display()))
        .map_err(Failure::unreadable)
}

pub fn artifact_name(report: &str) -> String {
    format!("{report}.json")
}

/// Write the run directory and return its path.
pub fn persist(
    cfg: &RunConfig,
    inputs: &Inputs,
    outcomes: &[ReportOutcome],
    judge: &dyn Judge,
    run_id: &str,
) -> Result<PathBuf, Failure> {
    let dir = cfg.out.join(run_id);
    for sub in ["projection", "exam", "judge-log", "meta"] {
        fs::create_dir_all(dir.join(sub))
            .with_context(|| format!("cannot create {}", dir.display()))
            .map_err(Failure::unreadable)?;
    }
    write_json(
        &dir.join("config.json"),
        &serde_json::json!({ "run_id": run_id, "input_digest": inputs.digest, "config": cfg }),
    )?;

    let records: Vec<ReportRecord> = outcomes
        .iter()
        .map(|o| match &o.result {
            Ok(e) => ReportRecord {
                name: &o.name,
                status: "ok",
                partial: e.partial,
                scores: Some(&e.scores),
                error: None,
            },
            Err(msg) => ReportRecord {
                name: &o.name,
                status: "error",
                partial: true,
                scores: None,
                error: Some(msg),
            },
        })
        .collect();
    let scores = ScoresFile {
        judge: &cfg.judge,
        metrics: &cfg.metrics,
        section_depth: cfg.section_depth,
        graph: GraphSummary {
            nodes: inputs.graph.len(),
            links: inputs.graph.edges().len(),
            total_weight: total_weight(&inputs.graph, &inputs.weights),
            warnings: inputs.graph.warnings().iter().map(ToString::to_string).collect(),
        },
        partial: records.iter().any(|r| r.partial),
        reports: records,
    };
    if cfg.wants(Format::Json) {
        write_json(&dir.join("scores.json"), &scores)?;
    }
    if cfg.wants(Format::Csv) {
        fs::write(dir.join("scores.csv"), scores_csv(outcomes))?;
    }
    if cfg.wants(Format::Markdown) {
        fs::write(dir.join("scores.md"), summary_table(outcomes))?;
    }

    for o in outcomes {
        let Ok(e) = &o.result else { continue };
        write_json(
            &dir.join("projection").join(artifact_name(&o.name)),
            &serde_json::json!({
                "verdicts": e.projection.verdicts,
                "hits": e.projection.hits,
                "failed": e.projection.failed,
                "support": e.support,
                "recovered": recovered_subgraph(&inputs.graph, &e.projection),
            }),
        )?;
        if e.exam.is_some() || e.audit.is_some() {
            let by_depth = e.exam.as_ref().map(|x| x.by_depth());
            write_json(
                &dir.join("exam").join(artifact_name(&o.name)),
                &serde_json::json!({ "exam": e.exam, "by_depth": by_depth, "bias_audit": e.audit }),
            )?;
        }
    }
    write_exchanges(&dir, "exchanges.jsonl", judge)?;
    Ok(dir)
}

pub fn write_exchanges(dir: &Path, file: &str, judge: &dyn Judge) -> Result<(), Failure> {
    let log = judge.exchanges();
    if log.is_empty() {
        return Ok(());
    }
    let mut text = String::new();
    for x in &log {
        text.push_str(&serde_json::to_string(x).expect("exchange serializes"));
        text.push('\n');
    }
    fs::write(dir.join("judge-log").join(file), text)?;
    Ok(())
}

pub fn scores_csv(outcomes: &[ReportOutcome]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(SCORE_COLUMNS).expect("in-memory write");
    for o in outcomes {
        let mut row = vec![o.name.clone()];
        match &o.result {
            Ok(e) => {
                row.push("ok".into());
                row.push(e.partial.to_string());
                row.extend(score_values(&e.scores).iter().map(|v| table::csv_cell(*v)));
            }
            Err(_) => {
                row.push("error".into());
                row.push("true".into());
                row.extend(std::iter::repeat_n(String::new(), 10));
            }
        }
        w.write_record(&row).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv is utf-8")
}

pub fn summary_table(outcomes: &[ReportOutcome]) -> String {
    let header = [
        "Report",
        "Overall",
        "Coverage",
        "Consistency",
        "Utility",
        "Objectivity",
        "Dominance",
        "Monopolization",
        "Status",
    ];
    let rows: Vec<Vec<String>> = outcomes
        .iter()
        .map(|o| match &o.result {
            Ok(e) => {
                let s = &e.scores;
                let mut r = vec![o.name.clone()];
                r.extend(
                    [s.overall, s.r_weighted, s.c_logic, s.u_qa, s.o_bias, s.d_src, s.m_mono]
                        .iter()
                        .map(|v| table::cell(*v)),
                );
                r.push(if e.partial { "partial" } else { "ok" }.into());
                r
            }
            Err(msg) => {
                let mut r = vec![o.name.clone()];
                r.extend(std::iter::repeat_n("-".to_string(), 7));
                r.push(format!("error: {msg}"));
                r
            }
        })
        .collect();
    table::markdown(&header, &rows)
}
