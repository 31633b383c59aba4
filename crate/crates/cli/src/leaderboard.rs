//! Leaderboard assembly from score CSVs or run `scores.json` files.

use std::fs;
use std::path::Path;

use anyhow::{bail, Context};
use graphaudit_core::metrics::overall;
use graphaudit_core::MetricConfig;
use serde::Serialize;

use crate::table;

pub const COLUMNS: [&str; 8] = [
    "System",
    "Overall",
    "Coverage",
    "Consistency",
    "Utility",
    "Objectivity",
    "Dominance",
    "Monopolization",
];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Entry {
    pub system: String,
    pub overall: Option<f64>,
    /// R_weighted, C_logic, U_qa, O_bias.
    pub core: [Option<f64>; 4],
    pub d_src: Option<f64>,
    pub m_mono: Option<f64>,
}

#[derive(Clone, Copy)]
enum Field {
    System,
    Overall,
    Core(usize),
    Dominance,
    Monopolization,
}

fn field_for(header: &str) -> Option<Field> {
    let h: String = header
        .trim()
        .to_ascii_lowercase()
        .chars()
        .filter(|c| c.is_ascii_alphanumeric())
        .collect();
    Some(match h.as_str() {
        "system" | "name" | "report" | "model" => Field::System,
        "overall" => Field::Overall,
        "coverage" | "rweighted" => Field::Core(0),
        "consistency" | "clogic" => Field::Core(1),
        "utility" | "uqa" => Field::Core(2),
        "objectivity" | "obias" => Field::Core(3),
        "dominance" | "dsrc" => Field::Dominance,
        "monopolization" | "mmono" => Field::Monopolization,
        _ => return None,
    })
}

fn number(raw: &str, row: usize, col: &str) -> anyhow::Result<Option<f64>> {
    let t = raw.trim();
    if t.is_empty() || t == "-" || t.eq_ignore_ascii_case("null") {
        return Ok(None);
    }
    t.parse::<f64>()
        .map(Some)
        .with_context(|| format!("row {row}: `{t}` in column {col} is not a number"))
}

pub fn read_csv(text: &str) -> anyhow::Result<Vec<Entry>> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = reader.headers()?.clone();
    let fields: Vec<Option<Field>> = headers.iter().map(field_for).collect();
    if !fields.iter().any(|f| matches!(f, Some(Field::System))) {
        bail!("score CSV needs a system (or report) column");
    }
    let mut out = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let mut e = Entry {
            system: String::new(),
            overall: None,
            core: [None; 4],
            d_src: None,
            m_mono: None,
        };
        for ((value, field), name) in record.iter().zip(&fields).zip(headers.iter()) {
            match field {
                Some(Field::System) => e.system = value.to_string(),
                Some(Field::Overall) => e.overall = number(value, i + 1, name)?,
                Some(Field::Core(k)) => e.core[*k] = number(value, i + 1, name)?,
                Some(Field::Dominance) => e.d_src = number(value, i + 1, name)?,
                Some(Field::Monopolization) => e.m_mono = number(value, i + 1, name)?,
                None => {}
            }
        }
        out.push(e);
    }
    Ok(out)
}

/// Entries from a run's `scores.json`; failed reports are skipped.
pub fn read_scores_json(text: &str) -> anyhow::Result<Vec<Entry>> {
    let v: serde_json::Value = serde_json::from_str(text)?;
    let reports = v
        .get("reports")
        .and_then(|r| r.as_array())
        .context("scores.json lacks a `reports` array")?;
    let num = |s: &serde_json::Value, k: &str| s.get(k).and_then(serde_json::Value::as_f64);
    Ok(reports
        .iter()
        .filter_map(|r| {
            let s = r.get("scores")?;
            Some(Entry {
                system: r.get("name")?.as_str()?.to_string(),
                overall: num(s, "overall"),
                core: [
                    num(s, "r_weighted"),
                    num(s, "c_logic"),
                    num(s, "u_qa"),
                    num(s, "o_bias"),
                ],
                d_src: num(s, "d_src"),
                m_mono: num(s, "m_mono"),
            })
        })
        .collect())
}

pub fn read_input(path: &Path) -> anyhow::Result<Vec<Entry>> {
    let path = if path.is_dir() {
        path.join("scores.json")
    } else {
        path.to_path_buf()
    };
    let text = fs::read_to_string(&path).with_context(|| format!("cannot read {}", path.display()))?;
    let is_json = path.extension().is_some_and(|e| e == "json") || text.trim_start().starts_with('{');
    if is_json {
        read_scores_json(&text)
    } else {
        read_csv(&text)
    }
    .with_context(|| format!("in {}", path.display()))
}

/// Recompute Overall from the four core scores and sort: Overall
/// descending, nulls last, ties by system name.
pub fn rank(mut entries: Vec<Entry>, config: &MetricConfig) -> Vec<Entry> {
    for e in &mut entries {
        let computed = overall(e.core, config).ok();
        if let (Some(given), Some(new)) = (e.overall, computed) {
            if (given - new).abs() > 0.01 {
                log::warn!("{}: listed overall {given} differs from recomputed {new:.4}", e.system);
            }
        }
        e.overall = computed;
    }
    entries.sort_by(|a, b| match (a.overall, b.overall) {
        (Some(x), Some(y)) => y.total_cmp(&x).then_with(|| a.system.cmp(&b.system)),
        (Some(_), None) => std::cmp::Ordering::Less,
        (None, Some(_)) => std::cmp::Ordering::Greater,
        (None, None) => a.system.cmp(&b.system),
    });
    entries
}

fn row(e: &Entry, fmt: fn(Option<f64>) -> String) -> Vec<String> {
    let mut r = vec![e.system.clone(), fmt(e.overall)];
    r.extend(e.core.iter().map(|v| fmt(*v)));
    r.push(fmt(e.d_src));
    r.push(fmt(e.m_mono));
    r
}

pub fn to_markdown(entries: &[Entry]) -> String {
    let rows: Vec<Vec<String>> = entries.iter().map(|e| row(e, table::cell)).collect();
    table::markdown(&COLUMNS, &rows)
}

pub fn to_csv(entries: &[Entry]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(COLUMNS).expect("in-memory write");
    for e in entries {
        let cells: Vec<String> = row(e, |v| v.map_or_else(|| "-".into(), |x| format!("{x:.2}")));
        w.write_record(&cells).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv is utf-8")
}
