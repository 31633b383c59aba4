//! Subcommand bodies. Each returns the process exit code on completion.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use anyhow::Context;
use graphaudit_core::exam::{run_bias_audit, run_exam};
use graphaudit_core::graph::total_weight;
use graphaudit_core::meta::{
    consistency_report, degrade, improve, responsiveness, ConsistencyReport, MetricMatrix, ResponsivenessReport,
    DEFAULT_ALPHA,
};
use graphaudit_core::metrics::{objectivity, utility};
use graphaudit_core::{
    compute_weights, parse_report_with, AuditContext, Judge, JudgeBackend, MetricScores, NodeLevel, PerturbKind,
    PerturbOptions, Perturbation, ScoreTriple,
};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::args::{LeaderboardArgs, MetaArgs, RunArgs};
use crate::config::{parse_weights, Evaluator, Format, PerturbChoice, RunConfig};
use crate::error::Failure;
use crate::leaderboard;
use crate::run::{self, Inputs, ReportOutcome};
use crate::table;

fn build_judge(e: &Evaluator) -> Result<Box<dyn Judge>, Failure> {
    e.backend
        .build()
        .with_context(|| format!("cannot start judge `{}`", e.label))
        .map_err(Failure::usage_err)
}

fn exit_code(outcomes: &[ReportOutcome]) -> i32 {
    i32::from(outcomes.iter().any(|o| o.result.is_err()))
}

pub fn validate(path: &Path) -> Result<i32, Failure> {
    let bytes = fs::read(path)
        .with_context(|| format!("cannot read graph {}", path.display()))
        .map_err(Failure::unreadable)?;
    let graph = match graphaudit_core::load_graph(&bytes) {
        Ok(g) => g,
        Err(e) => {
            // Cycle errors list the offending path in their message.
            println!("error: {e}");
            println!("1 error");
            return Ok(1);
        }
    };
    let weights = compute_weights(&graph);
    println!(
        "{}: {} nodes (atomic facts {}, key insights {}, global insights {}), {} links, total weight {}",
        path.display(),
        graph.len(),
        graph.level_count(NodeLevel::AtomicFact),
        graph.level_count(NodeLevel::KeyInsight),
        graph.level_count(NodeLevel::GlobalInsight),
        graph.edges().len(),
        total_weight(&graph, &weights)
    );
    for w in graph.warnings() {
        println!("warning: {w}");
    }
    println!("0 errors, {} warnings", graph.warnings().len());
    Ok(0)
}

pub fn evaluate(args: &RunArgs) -> Result<i32, Failure> {
    let cfg = RunConfig::resolve(args)?;
    let inputs = run::load_inputs(&cfg)?;
    let judge = build_judge(&cfg.judge)?;
    let outcomes = run::evaluate_all(&inputs, &cfg, judge.as_ref());
    let id = run::run_id(&cfg, &inputs.digest);
    let dir = run::persist(&cfg, &inputs, &outcomes, judge.as_ref(), &id)?;
    print!("{}", run::summary_table(&outcomes));
    eprintln!("run directory: {}", dir.display());
    Ok(exit_code(&outcomes))
}

#[derive(Serialize)]
struct ExamSummary<'a> {
    report: &'a str,
    correct: usize,
    graded: usize,
    ungraded: usize,
    u_qa: Option<f64>,
    o_bias: Option<f64>,
    /// `[correct, attempted]` per depth value 0 through 5.
    by_depth: [(usize, usize); 6],
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
}

/// Exam and bias audit only; no graph is needed.
pub fn exam(args: &RunArgs) -> Result<i32, Failure> {
    let cfg = RunConfig::resolve(args)?;
    let exam_path = cfg
        .exam
        .as_deref()
        .ok_or_else(|| Failure::usage("no exam given (--exam or `exam` in the config file)"))?;
    let (suite, _) = run::read_exam(exam_path)?;
    let paths = run::collect_reports(&cfg.reports)?;
    let judge = build_judge(&cfg.judge)?;
    let options = run::parse_options(&cfg);

    let mut failed = false;
    let mut rows = Vec::new();
    for path in &paths {
        let name = path
            .file_name()
            .map_or_else(String::new, |n| n.to_string_lossy().into_owned());
        let text = match fs::read_to_string(path) {
            Ok(t) => t,
            Err(e) => {
                failed = true;
                rows.push((name, None, Some(format!("cannot read {}: {e}", path.display()))));
                continue;
            }
        };
        let report = parse_report_with(&text, options);
        let exam_run = run_exam(&suite.questions, &report, judge.as_ref());
        let audit = run_bias_audit(&suite.bias_audits, &report, judge.as_ref());
        rows.push((name, Some((exam_run, audit)), None));
    }

    let summaries: Vec<ExamSummary> = rows
        .iter()
        .map(|(name, result, error)| match result {
            Some((e, a)) => ExamSummary {
                report: name,
                correct: e.correct(),
                graded: e.graded.len(),
                ungraded: e.ungraded.len(),
                u_qa: utility(e.correct(), e.graded.len()),
                o_bias: objectivity(&a.pairs(), &cfg.metrics),
                by_depth: e.by_depth(),
                error: None,
            },
            None => ExamSummary {
                report: name,
                correct: 0,
                graded: 0,
                ungraded: 0,
                u_qa: None,
                o_bias: None,
                by_depth: [(0, 0); 6],
                error: error.clone(),
            },
        })
        .collect();

    if cfg.formats == [Format::Json] {
        println!("{}", serde_json::to_string_pretty(&summaries).expect("serializable"));
    } else {
        let header = ["Report", "Correct", "Graded", "Utility", "Objectivity", "By depth"];
        let body: Vec<Vec<String>> = summaries
            .iter()
            .map(|s| {
                let depth: Vec<String> = s
                    .by_depth
                    .iter()
                    .enumerate()
                    .filter(|(_, (_, n))| *n > 0)
                    .map(|(d, (c, n))| format!("{d}:{c}/{n}"))
                    .collect();
                vec![
                    s.report.to_string(),
                    s.correct.to_string(),
                    s.graded.to_string(),
                    table::cell(s.u_qa),
                    table::cell(s.o_bias),
                    s.error.clone().unwrap_or_else(|| depth.join(" ")),
                ]
            })
            .collect();
        print!("{}", table::markdown(&header, &body));
    }
    Ok(i32::from(failed))
}

pub fn leaderboard(args: &LeaderboardArgs) -> Result<i32, Failure> {
    let mut config = graphaudit_core::MetricConfig::default();
    if let Some(w) = &args.weights {
        config.overall_weights = parse_weights(w).map_err(Failure::usage_err)?;
        config.validate().map_err(|e| Failure::usage_err(e.into()))?;
    }
    let mut entries = Vec::new();
    for path in &args.inputs {
        if !path.exists() {
            return Err(Failure::unreadable(anyhow::anyhow!(
                "{} does not exist",
                path.display()
            )));
        }
        entries.extend(leaderboard::read_input(path).map_err(Failure::invalid)?);
    }
    if entries.is_empty() {
        return Err(Failure::invalid(anyhow::anyhow!("no scored systems in the inputs")));
    }
    let ranked = leaderboard::rank(entries, &config);
    let md = leaderboard::to_markdown(&ranked);
    let csv = leaderboard::to_csv(&ranked);
    if let Some(out) = &args.out {
        fs::create_dir_all(out)?;
        fs::write(out.join("leaderboard.md"), &md)?;
        fs::write(out.join("leaderboard.csv"), &csv)?;
    }
    match args.format {
        Format::Csv => print!("{csv}"),
        Format::Json => println!("{}", serde_json::to_string_pretty(&ranked).expect("serializable")),
        Format::Markdown => print!("{md}"),
    }
    Ok(0)
}

/// Metrics whose responsiveness and spread are reported.
pub const META_METRICS: [&str; 5] = ["r_weighted", "c_logic", "u_qa", "o_bias", "overall"];

fn metric(s: &MetricScores, name: &str) -> Option<f64> {
    match name {
        "r_weighted" => s.r_weighted,
        "c_logic" => s.c_logic,
        "u_qa" => s.u_qa,
        "o_bias" => s.o_bias,
        "overall" => s.overall,
        _ => None,
    }
}

/// Per-report seed so adding a report never shifts another's targets.
pub fn report_seed(base: u64, name: &str) -> u64 {
    let digest = Sha256::digest(name.as_bytes());
    base ^ u64::from_be_bytes(digest[..8].try_into().expect("8 bytes"))
}

#[derive(Serialize)]
struct PerturbRecord {
    report: String,
    #[serde(flatten)]
    perturbation: Perturbation,
    scores: MetricScores,
}

#[derive(Serialize)]
struct MetaFailure {
    report: String,
    variant: String,
    error: String,
}

#[derive(Serialize)]
struct MetaSummary<'a> {
    perturb: &'a crate::config::PerturbSettings,
    threshold: f64,
    responsiveness: BTreeMap<&'static str, Option<ResponsivenessReport>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    consistency: Option<ConsistencyReport>,
    perturbations: Vec<PerturbRecord>,
    failures: Vec<MetaFailure>,
}

pub fn meta(args: &MetaArgs) -> Result<i32, Failure> {
    let cfg = RunConfig::resolve_meta(args)?;
    let inputs = run::load_inputs(&cfg)?;
    let judge = build_judge(&cfg.judge)?;
    let outcomes = run::evaluate_all(&inputs, &cfg, judge.as_ref());
    let id = run::run_id(&cfg, &inputs.digest);
    let dir = run::persist(&cfg, &inputs, &outcomes, judge.as_ref(), &id)?;
    let meta_dir = dir.join("meta");
    let perturbed_dir = meta_dir.join("perturbed");
    fs::create_dir_all(&perturbed_dir)?;

    let mut failures: Vec<MetaFailure> = outcomes
        .iter()
        .filter_map(|o| {
            o.result.as_ref().err().map(|e| MetaFailure {
                report: o.name.clone(),
                variant: "original".into(),
                error: e.clone(),
            })
        })
        .collect();

    let kinds: &[PerturbKind] = match cfg.perturb.kind {
        PerturbChoice::Degrade => &[PerturbKind::Degrade],
        PerturbChoice::Improve => &[PerturbKind::Improve],
        PerturbChoice::Both => &[PerturbKind::Degrade, PerturbKind::Improve],
    };
    let witness_threshold = match cfg.judge.backend {
        JudgeBackend::Deterministic { tau } => tau,
        JudgeBackend::Remote(_) => PerturbOptions::default().witness_threshold,
    };
    let mut ctx = AuditContext::new(&inputs.graph, &inputs.weights).with_config(cfg.metrics);
    if let Some(exam) = &inputs.exam {
        ctx = ctx.with_exam(exam);
    }

    let mut records = Vec::new();
    let mut matrix_rows: Vec<[String; 5]> = Vec::new();
    let mut variants: BTreeMap<(String, PerturbKind), MetricScores> = BTreeMap::new();
    for o in &outcomes {
        let (Ok(eval), Some(report)) = (&o.result, &o.report) else {
            continue;
        };
        let options = PerturbOptions {
            count: cfg.perturb.count,
            seed: report_seed(cfg.perturb.seed, &o.name),
            levels: cfg.perturb.levels.into(),
            witness_threshold,
        };
        for &kind in kinds {
            let variant = kind.suffix().to_string();
            let perturbed = match kind {
                PerturbKind::Degrade => degrade(report, &inputs.graph, &eval.projection, &options),
                PerturbKind::Improve => improve(report, &inputs.graph, &eval.projection, &options),
            };
            let (new_report, perturbation) = match perturbed {
                Ok(p) => p,
                Err(e) => {
                    failures.push(MetaFailure {
                        report: o.name.clone(),
                        variant,
                        error: e.to_string(),
                    });
                    continue;
                }
            };
            let stem = o.name.strip_suffix(".md").unwrap_or(&o.name);
            let file = perturbed_dir.join(format!("{stem}.{}.md", kind.suffix()));
            fs::write(&file, new_report.source())?;
            match run::evaluate_one(&ctx, &new_report, judge.as_ref()) {
                Ok(ev) => {
                    fs::write(
                        perturbed_dir.join(format!("{stem}.{}.edits.json", kind.suffix())),
                        serde_json::to_string_pretty(&perturbation).expect("serializable") + "\n",
                    )?;
                    variants.insert((o.name.clone(), kind), ev.scores.clone());
                    records.push(PerturbRecord {
                        report: o.name.clone(),
                        perturbation,
                        scores: ev.scores,
                    });
                }
                Err(e) => failures.push(MetaFailure {
                    report: o.name.clone(),
                    variant,
                    error: e,
                }),
            }
        }
    }

    let threshold = 0.0;
    let mut rr = BTreeMap::new();
    for name in META_METRICS {
        let triples: Vec<ScoreTriple> = outcomes
            .iter()
            .filter_map(|o| {
                let original = metric(&o.result.as_ref().ok()?.scores, name)?;
                let get = |k| variants.get(&(o.name.clone(), k)).and_then(|s| metric(s, name));
                let t = ScoreTriple {
                    original,
                    degraded: get(PerturbKind::Degrade),
                    improved: get(PerturbKind::Improve),
                };
                (t.degraded.is_some() || t.improved.is_some()).then_some(t)
            })
            .collect();
        rr.insert(name, responsiveness(&triples, threshold).ok());
    }

    for o in &outcomes {
        let Ok(eval) = &o.result else { continue };
        let mut push = |variant: &str, s: &MetricScores| {
            for name in META_METRICS {
                matrix_rows.push([
                    o.name.clone(),
                    cfg.judge.label.clone(),
                    variant.to_string(),
                    name.to_string(),
                    table::csv_cell(metric(s, name)),
                ]);
            }
        };
        push("original", &eval.scores);
        for &kind in kinds {
            if let Some(s) = variants.get(&(o.name.clone(), kind)) {
                push(kind.suffix(), s);
            }
        }
    }

    let consistency = if cfg.evaluators.is_empty() {
        None
    } else {
        let (report, extra_failures, rows) = spread(&cfg, &inputs, &outcomes, &dir)?;
        failures.extend(extra_failures);
        matrix_rows.extend(rows);
        report
    };

    let summary = MetaSummary {
        perturb: &cfg.perturb,
        threshold,
        responsiveness: rr,
        consistency,
        perturbations: records,
        failures,
    };
    fs::write(
        meta_dir.join("summary.json"),
        serde_json::to_string_pretty(&summary).expect("serializable") + "\n",
    )?;
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["report", "evaluator", "variant", "metric", "value"])
        .expect("in-memory write");
    for r in &matrix_rows {
        w.write_record(r).expect("in-memory write");
    }
    fs::write(meta_dir.join("matrix.csv"), w.into_inner().expect("in-memory flush"))?;

    let header = ["Metric", "RR_deg", "RR_imp", "sigma_norm"];
    let body: Vec<Vec<String>> = META_METRICS
        .iter()
        .map(|name| {
            let r = summary.responsiveness.get(name).cloned().flatten();
            vec![
                name.to_string(),
                table::cell(r.as_ref().and_then(|r| r.rr_deg)),
                table::cell(r.as_ref().and_then(|r| r.rr_imp)),
                table::cell(
                    summary
                        .consistency
                        .as_ref()
                        .and_then(|c| c.sigma_norm.get(*name).copied()),
                ),
            ]
        })
        .collect();
    print!("{}", table::markdown(&header, &body));
    for f in &summary.failures {
        eprintln!("{} ({}): {}", f.report, f.variant, f.error);
    }
    eprintln!("run directory: {}", dir.display());
    Ok(i32::from(!summary.failures.is_empty()))
}

type SpreadResult = (Option<ConsistencyReport>, Vec<MetaFailure>, Vec<[String; 5]>);

/// Score the original reports with every extra evaluator and compute the
/// cross-evaluator spread per metric over reports all evaluators scored.
fn spread(cfg: &RunConfig, inputs: &Inputs, primary: &[ReportOutcome], dir: &Path) -> Result<SpreadResult, Failure> {
    let mut labels = vec![cfg.judge.label.clone()];
    let mut columns: Vec<Vec<Option<MetricScores>>> = vec![primary
        .iter()
        .map(|o| o.result.as_ref().ok().map(|e| e.scores.clone()))
        .collect()];
    let mut failures = Vec::new();
    let mut rows = Vec::new();
    for (i, ev) in cfg.evaluators.iter().enumerate() {
        let judge = build_judge(ev)?;
        let outcomes = run::evaluate_all(inputs, cfg, judge.as_ref());
        run::write_exchanges(dir, &format!("evaluator-{}.jsonl", i + 2), judge.as_ref())?;
        let mut col = Vec::new();
        for o in &outcomes {
            match &o.result {
                Ok(e) => {
                    for name in META_METRICS {
                        rows.push([
                            o.name.clone(),
                            ev.label.clone(),
                            "original".into(),
                            name.to_string(),
                            table::csv_cell(metric(&e.scores, name)),
                        ]);
                    }
                    col.push(Some(e.scores.clone()));
                }
                Err(msg) => {
                    failures.push(MetaFailure {
                        report: o.name.clone(),
                        variant: format!("original@{}", ev.label),
                        error: msg.clone(),
                    });
                    col.push(None);
                }
            }
        }
        labels.push(ev.label.clone());
        columns.push(col);
    }

    let mut matrices = BTreeMap::new();
    for name in META_METRICS {
        let scores: Vec<Vec<f64>> = (0..primary.len())
            .filter_map(|r| {
                columns
                    .iter()
                    .map(|col| col[r].as_ref().and_then(|s| metric(s, name)))
                    .collect::<Option<Vec<f64>>>()
            })
            .collect();
        if !scores.is_empty() {
            matrices.insert(
                name.to_string(),
                MetricMatrix {
                    scale_min: 0.0,
                    scale_max: 100.0,
                    scores,
                },
            );
        }
    }
    let report = if matrices.is_empty() {
        None
    } else {
        Some(
            consistency_report(labels, &matrices, DEFAULT_ALPHA)
                .context("spread analysis")
                .map_err(Failure::invalid)?,
        )
    };
    Ok((report, failures, rows))
}
