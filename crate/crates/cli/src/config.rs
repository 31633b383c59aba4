//! Run configuration: built-in defaults, overridden by a TOML file,
//! overridden by command-line flags.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::ValueEnum;
use graphaudit_core::judge::DEFAULT_TAU;
use graphaudit_core::meta::MAX_TARGETS;
use graphaudit_core::{JudgeBackend, MetricConfig, RemoteConfig, TargetLevels};
use serde::{Deserialize, Serialize};

use crate::args::{JudgeArgs, MetaArgs, RunArgs};
use crate::error::Failure;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
    Markdown,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum JudgeKind {
    Deterministic,
    Remote,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum PerturbChoice {
    Degrade,
    Improve,
    #[default]
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum LevelsArg {
    #[default]
    Facts,
    FactsAndInsights,
}

impl From<LevelsArg> for TargetLevels {
    fn from(l: LevelsArg) -> Self {
        match l {
            LevelsArg::Facts => TargetLevels::Facts,
            LevelsArg::FactsAndInsights => TargetLevels::FactsAndInsights,
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub graph: Option<PathBuf>,
    pub reports: Option<Vec<PathBuf>>,
    pub exam: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub formats: Option<Vec<Format>>,
    pub section_depth: Option<u8>,
    pub workers: Option<usize>,
    #[serde(default)]
    pub metrics: MetricsFile,
    #[serde(default)]
    pub judge: JudgeFile,
    #[serde(default)]
    pub perturb: PerturbFile,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricsFile {
    pub epsilon: Option<f64>,
    pub lambda: Option<f64>,
    pub weights: Option<[f64; 4]>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JudgeFile {
    pub label: Option<String>,
    pub kind: Option<JudgeKind>,
    pub tau: Option<f64>,
    pub endpoint: Option<String>,
    pub model: Option<String>,
    pub temperature: Option<f64>,
    pub timeout_secs: Option<u64>,
    pub max_parallel: Option<usize>,
    pub api_key_env: Option<String>,
    pub transport_retries: Option<u32>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerturbFile {
    pub kind: Option<PerturbChoice>,
    pub count: Option<usize>,
    pub seed: Option<u64>,
    pub levels: Option<LevelsArg>,
}

/// A TOML file holding only a `[judge]` table, for extra meta-eval evaluators.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct EvaluatorFile {
    #[serde(default)]
    judge: JudgeFile,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Evaluator {
    pub label: String,
    pub backend: JudgeBackend,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PerturbSettings {
    pub kind: PerturbChoice,
    pub count: usize,
    pub seed: u64,
    pub levels: LevelsArg,
}

/// Fully resolved configuration; serialized into the run directory.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub graph: Option<PathBuf>,
    pub reports: Vec<PathBuf>,
    pub exam: Option<PathBuf>,
    pub judge: Evaluator,
    pub metrics: MetricConfig,
    pub out: PathBuf,
    pub formats: Vec<Format>,
    pub section_depth: Option<u8>,
    pub workers: usize,
    pub perturb: PerturbSettings,
    pub evaluators: Vec<Evaluator>,
    #[serde(skip)]
    pub run_id: Option<String>,
}

pub const DEFAULT_OUT: &str = "runs";

fn read_toml<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, Failure> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("cannot read config {}", path.display()))
        .map_err(Failure::unreadable)?;
    toml::from_str(&text)
        .with_context(|| format!("invalid config {}", path.display()))
        .map_err(Failure::invalid)
}

fn anchor(base: Option<&Path>, p: PathBuf) -> PathBuf {
    match base {
        Some(dir) if p.is_relative() => dir.join(p),
        _ => p,
    }
}

pub(crate) fn parse_weights(s: &str) -> anyhow::Result<[f64; 4]> {
    let parts: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>().with_context(|| format!("bad weight `{p}`")))
        .collect::<Result<_, _>>()?;
    match parts.as_slice() {
        [a, b, c, d] => Ok([*a, *b, *c, *d]),
        _ => bail!("--weights needs four comma-separated values, got {}", parts.len()),
    }
}

/// Merge judge settings: flag, then file, then default.
fn resolve_judge(flags: &JudgeArgs, file: &JudgeFile, fallback_label: &str) -> Result<Evaluator, Failure> {
    let kind = flags.judge.or(file.kind).unwrap_or(JudgeKind::Deterministic);
    let backend = match kind {
        JudgeKind::Deterministic => JudgeBackend::Deterministic {
            tau: flags.tau.or(file.tau).unwrap_or(DEFAULT_TAU),
        },
        JudgeKind::Remote => {
            let endpoint = flags
                .endpoint
                .clone()
                .or_else(|| file.endpoint.clone())
                .unwrap_or_default();
            let model = flags.model.clone().or_else(|| file.model.clone()).unwrap_or_default();
            let mut cfg = RemoteConfig::new(endpoint, model);
            if let Some(t) = flags.temperature.or(file.temperature) {
                cfg.temperature = t;
            }
            if let Some(t) = flags.timeout.or(file.timeout_secs) {
                cfg.timeout_secs = t;
            }
            if let Some(p) = flags.max_parallel.or(file.max_parallel) {
                cfg.max_parallel = p;
            }
            cfg.api_key_env = flags.api_key_env.clone().or_else(|| file.api_key_env.clone());
            if let Some(r) = file.transport_retries {
                cfg.transport_retries = r;
            }
            JudgeBackend::Remote(cfg)
        }
    };
    backend.validate().map_err(|e| Failure::invalid(e.into()))?;
    let label = file.label.clone().unwrap_or_else(|| match &backend {
        JudgeBackend::Deterministic { .. } => fallback_label.to_string(),
        JudgeBackend::Remote(c) => c.model.clone(),
    });
    Ok(Evaluator { label, backend })
}

impl RunConfig {
    pub fn resolve(args: &RunArgs) -> Result<Self, Failure> {
        Self::resolve_with(args, None)
    }

    pub fn resolve_meta(args: &MetaArgs) -> Result<Self, Failure> {
        Self::resolve_with(&args.run, Some(args))
    }

    fn resolve_with(args: &RunArgs, meta: Option<&MetaArgs>) -> Result<Self, Failure> {
        let (file, base) = match &args.config {
            Some(path) => (read_toml::<FileConfig>(path)?, path.parent().map(Path::to_path_buf)),
            None => (FileConfig::default(), None),
        };
        let base = base.as_deref();

        let graph = args
            .graph
            .clone()
            .or_else(|| file.graph.clone().map(|p| anchor(base, p)));
        let reports: Vec<PathBuf> = if !args.reports.is_empty() {
            args.reports.clone()
        } else {
            file.reports
                .clone()
                .unwrap_or_default()
                .into_iter()
                .map(|p| anchor(base, p))
                .collect()
        };
        let exam = args.exam.clone().or_else(|| file.exam.clone().map(|p| anchor(base, p)));
        let out = args
            .out
            .clone()
            .or_else(|| file.out.clone().map(|p| anchor(base, p)))
            .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));

        let mut metrics = MetricConfig::default();
        if let Some(e) = args.epsilon.or(file.metrics.epsilon) {
            metrics.epsilon = e;
        }
        if let Some(l) = args.lambda.or(file.metrics.lambda) {
            metrics.lambda_penalty = l;
        }
        let flag_weights = args
            .weights
            .as_deref()
            .map(parse_weights)
            .transpose()
            .map_err(Failure::usage_err)?;
        if let Some(w) = flag_weights.or(file.metrics.weights) {
            metrics.overall_weights = w;
        }
        metrics.validate().map_err(|e| Failure::invalid(e.into()))?;

        let mut formats = if args.formats.is_empty() {
            file.formats
                .clone()
                .unwrap_or_else(|| vec![Format::Json, Format::Csv, Format::Markdown])
        } else {
            args.formats.clone()
        };
        formats.sort();
        formats.dedup();
        if formats.is_empty() {
            return Err(Failure::usage("at least one output format is required"));
        }

        let section_depth = args.section_depth.or(file.section_depth);
        if section_depth == Some(0) {
            return Err(Failure::usage("--section-depth must be at least 1"));
        }
        let workers = args
            .workers
            .or(file.workers)
            .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
            .max(1);

        let judge = resolve_judge(&args.judge, &file.judge, "deterministic")?;

        let mut perturb = PerturbSettings {
            kind: file.perturb.kind.unwrap_or_default(),
            count: file.perturb.count.unwrap_or(1),
            seed: file.perturb.seed.unwrap_or(0),
            levels: file.perturb.levels.unwrap_or_default(),
        };
        let mut evaluators = Vec::new();
        if let Some(m) = meta {
            perturb.kind = m.perturb.unwrap_or(perturb.kind);
            perturb.count = m.count.unwrap_or(perturb.count);
            perturb.seed = m.seed.unwrap_or(perturb.seed);
            perturb.levels = m.levels.unwrap_or(perturb.levels);
            for (i, path) in m.evaluators.iter().enumerate() {
                let f: EvaluatorFile = read_toml(path)?;
                evaluators.push(resolve_judge(
                    &JudgeArgs::default(),
                    &f.judge,
                    &format!("evaluator-{}", i + 2),
                )?);
            }
        }
        if !(1..=MAX_TARGETS).contains(&perturb.count) {
            return Err(Failure::usage(format!("--count must be 1..={MAX_TARGETS}")));
        }

        Ok(Self {
            graph,
            reports,
            exam,
            judge,
            metrics,
            out,
            formats,
            section_depth,
            workers,
            perturb,
            evaluators,
            run_id: args.run_id.clone(),
        })
    }

    pub fn graph_path(&self) -> Result<&Path, Failure> {
        self.graph
            .as_deref()
            .ok_or_else(|| Failure::usage("no graph given (--graph or `graph` in the config file)"))
    }

    pub fn wants(&self, f: Format) -> bool {
        self.formats.contains(&f)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::Parser;

    use crate::args::{Cli, Command};

    fn run_args(argv: &[&str]) -> RunArgs {
        let cli = Cli::try_parse_from(argv).unwrap();
        match cli.command {
            Command::Evaluate(a) => a,
            _ => panic!("expected evaluate"),
        }
    }

    #[test]
    fn flags_override_file_override_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("run.toml");
        fs::write(
            &cfg,
            "graph = \"g.json\"\nreports = [\"r\"]\n[metrics]\nlambda = 2.0\nepsilon = 1e-6\n[judge]\ntau = 0.7\n",
        )
        .unwrap();
        let c = cfg.to_str().unwrap();
        let r = RunConfig::resolve(&run_args(&["graphaudit", "evaluate", "--config", c])).unwrap();
        assert_eq!(r.graph, Some(dir.path().join("g.json")));
        assert_eq!(r.metrics.lambda_penalty, 2.0);
        assert_eq!(r.judge.backend, JudgeBackend::Deterministic { tau: 0.7 });
        assert_eq!(r.metrics.overall_weights, [0.25; 4]);

        let r = RunConfig::resolve(&run_args(&[
            "graphaudit",
            "evaluate",
            "--config",
            c,
            "--lambda",
            "3",
            "--tau",
            "0.5",
            "--graph",
            "other.json",
            "--weights",
            "0.4,0.2,0.2,0.2",
            "--format",
            "json",
        ]))
        .unwrap();
        assert_eq!(r.graph, Some(PathBuf::from("other.json")));
        assert_eq!(r.metrics.lambda_penalty, 3.0);
        assert_eq!(r.metrics.epsilon, 1e-6);
        assert_eq!(r.judge.backend, JudgeBackend::Deterministic { tau: 0.5 });
        assert_eq!(r.metrics.overall_weights, [0.4, 0.2, 0.2, 0.2]);
        assert_eq!(r.formats, vec![Format::Json]);
    }

    #[test]
    fn rejects_bad_values() {
        for argv in [
            &["graphaudit", "evaluate", "--graph", "g", "--weights", "1,2"][..],
            &["graphaudit", "evaluate", "--graph", "g", "--weights", "0.5,0.5,0.5,0.5"],
            &["graphaudit", "evaluate", "--graph", "g", "--tau", "1.5"],
            &["graphaudit", "evaluate", "--graph", "g", "--judge", "remote"],
            &["graphaudit", "evaluate", "--graph", "g", "--section-depth", "0"],
        ] {
            assert!(RunConfig::resolve(&run_args(argv)).is_err(), "{argv:?}");
        }
    }

    #[test]
    fn remote_settings_merge() {
        let r = RunConfig::resolve(&run_args(&[
            "graphaudit",
            "evaluate",
            "--graph",
            "g",
            "--judge",
            "remote",
            "--endpoint",
            "http://localhost:8000/v1",
            "--model",
            "m1",
            "--max-parallel",
            "3",
            "--api-key-env",
            "MY_KEY",
        ]))
        .unwrap();
        let JudgeBackend::Remote(c) = &r.judge.backend else {
            panic!()
        };
        assert_eq!((c.max_parallel, c.api_key_env.as_deref()), (3, Some("MY_KEY")));
        assert_eq!(r.judge.label, "m1");
    }
}
