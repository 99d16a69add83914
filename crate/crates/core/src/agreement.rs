//! Bland–Altman agreement between machine and human scores.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::ScoreSheet;

/// Multiplier on the standard deviation for the limits of agreement.
pub const LOA_Z: f64 = 1.96;

/// One rated unit: a subject, optionally narrowed to a task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementPair {
    pub subject_id: String,
    pub task_id: Option<u8>,
    pub machine: f64,
    pub human: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementPoint {
    pub subject_id: String,
    pub task_id: Option<u8>,
    /// Mean of the two ratings.
    pub mean: f64,
    /// Machine minus human.
    pub difference: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementReport {
    pub metric: String,
    pub n: usize,
    pub bias: f64,
    pub sd: f64,
    pub loa_lower: f64,
    pub loa_upper: f64,
    pub points: Vec<AgreementPoint>,
}

/// Computes bias, sample standard deviation (n − 1) and limits of agreement
/// of `machine − human`. Points come out sorted by subject then task, and
/// the statistics are accumulated in that order, so input order never
/// changes the result.
pub fn bland_altman(metric: &str, pairs: &[AgreementPair]) -> Result<AgreementReport> {
    if pairs.len() < 2 {
        return Err(Error::InsufficientPairs(pairs.len()));
    }
    let mut sorted = pairs.to_vec();
    sorted.sort_by(|a, b| {
        (&a.subject_id, a.task_id)
            .cmp(&(&b.subject_id, b.task_id))
            .then(a.machine.total_cmp(&b.machine))
            .then(a.human.total_cmp(&b.human))
    });

    let n = sorted.len() as f64;
    let diffs: Vec<f64> = sorted.iter().map(|p| p.machine - p.human).collect();
    let bias = diffs.iter().sum::<f64>() / n;
    let var = diffs.iter().map(|d| (d - bias).powi(2)).sum::<f64>() / (n - 1.0);
    let sd = var.sqrt();
    let points = sorted
        .iter()
        .zip(&diffs)
        .map(|(p, &d)| AgreementPoint {
            subject_id: p.subject_id.clone(),
            task_id: p.task_id,
            mean: 0.5 * (p.machine + p.human),
            difference: d,
        })
        .collect();
    Ok(AgreementReport {
        metric: metric.to_string(),
        n: sorted.len(),
        bias,
        sd,
        loa_lower: bias - LOA_Z * sd,
        loa_upper: bias + LOA_Z * sd,
        points,
    })
}

/// Which score column to compare.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScoreKind {
    Accuracy,
    Rhythm,
}

impl ScoreKind {
    pub fn name(self) -> &'static str {
        match self {
            ScoreKind::Accuracy => "accuracy",
            ScoreKind::Rhythm => "rhythm",
        }
    }
}

/// Whether to compare per (subject, task) or per subject summed over tasks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PairLevel {
    #[default]
    Task,
    Subject,
}

/// Joins machine and human sheets on their keys. Returns the pairs and the
/// number of keys present in only one sheet.
pub fn pair_sheets(
    machine: &ScoreSheet,
    human: &ScoreSheet,
    kind: ScoreKind,
    level: PairLevel,
) -> (Vec<AgreementPair>, usize) {
    let pick = |r: &crate::ingest::ScoreRow| match kind {
        ScoreKind::Accuracy => r.accuracy,
        ScoreKind::Rhythm => r.rhythm,
    };
    let unmatched = machine.rows.keys().filter(|k| !human.rows.contains_key(*k)).count()
        + human.rows.keys().filter(|k| !machine.rows.contains_key(*k)).count();

    let matched = machine
        .rows
        .iter()
        .filter_map(|(k, m)| human.rows.get(k).map(|h| (k, pick(m), pick(h))));
    let pairs = match level {
        PairLevel::Task => matched
            .map(|((s, t), m, h)| AgreementPair {
                subject_id: s.clone(),
                task_id: Some(t.get()),
                machine: m,
                human: h,
            })
            .collect(),
        PairLevel::Subject => {
            let mut sums: BTreeMap<&str, (f64, f64)> = BTreeMap::new();
            for ((s, _), m, h) in matched {
                let e = sums.entry(s.as_str()).or_default();
                e.0 += m;
                e.1 += h;
            }
            sums.into_iter()
                .map(|(s, (m, h))| AgreementPair {
                    subject_id: s.to_string(),
                    task_id: None,
                    machine: m,
                    human: h,
                })
                .collect()
        }
    };
    (pairs, unmatched)
}

const PLOT_HEADER: &str = "row,subject_id,task_id,mean,difference";

fn fmt_num(v: f64) -> String {
    format!("{v:.12}")
}

/// Plot table: one `point` row per rating unit, then `bias`, `loa_lower`
/// and `loa_upper` rows carrying their value in the `difference` column.
pub fn emit_plot_data(report: &AgreementReport) -> String {
    let mut out = String::from(PLOT_HEADER);
    out.push('\n');
    for p in &report.points {
        let task = p.task_id.map(|t| t.to_string()).unwrap_or_default();
        out.push_str(&format!(
            "point,{},{task},{},{}\n",
            p.subject_id,
            fmt_num(p.mean),
            fmt_num(p.difference)
        ));
    }
    for (name, v) in [("bias", report.bias), ("loa_lower", report.loa_lower), ("loa_upper", report.loa_upper)] {
        out.push_str(&format!("{name},,,,{}\n", fmt_num(v)));
    }
    out
}

/// Reads a plot table back into a report.
pub fn parse_plot_data(metric: &str, text: &str) -> Result<AgreementReport> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h == PLOT_HEADER => {}
        _ => return Err(Error::schema("line 1", format!("expected header {PLOT_HEADER:?}"))),
    }
    let mut points = Vec::new();
    let mut summary: BTreeMap<String, f64> = BTreeMap::new();
    for (i, line) in lines {
        let loc = || format!("line {}", i + 1);
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 5 {
            return Err(Error::schema(loc(), "expected 5 columns"));
        }
        let num = |s: &str| s.parse::<f64>().map_err(|_| Error::schema(loc(), format!("invalid number {s:?}")));
        match cols[0] {
            "point" => points.push(AgreementPoint {
                subject_id: cols[1].to_string(),
                task_id: if cols[2].is_empty() {
                    None
                } else {
                    Some(cols[2].parse().map_err(|_| Error::schema(loc(), "invalid task_id"))?)
                },
                mean: num(cols[3])?,
                difference: num(cols[4])?,
            }),
            k @ ("bias" | "loa_lower" | "loa_upper") => {
                summary.insert(k.to_string(), num(cols[4])?);
            }
            other => return Err(Error::schema(loc(), format!("unknown row kind {other:?}"))),
        }
    }
    let get = |k: &str| {
        summary
            .get(k)
            .copied()
            .ok_or_else(|| Error::schema("plot table", format!("missing {k} row")))
    };
    let (bias, lower, upper) = (get("bias")?, get("loa_lower")?, get("loa_upper")?);
    Ok(AgreementReport {
        metric: metric.to_string(),
        n: points.len(),
        bias,
        sd: (upper - lower) / (2.0 * LOA_Z),
        loa_lower: lower,
        loa_upper: upper,
        points,
    })
}

/// Summary document keyed by metric name.
pub fn summary_json(reports: &[AgreementReport]) -> String {
    #[derive(Serialize)]
    struct Summary {
        n: usize,
        bias: f64,
        sd: f64,
        loa_lower: f64,
        loa_upper: f64,
    }
    let map: BTreeMap<&str, Summary> = reports
        .iter()
        .map(|r| {
            (
                r.metric.as_str(),
                Summary {
                    n: r.n,
                    bias: r.bias,
                    sd: r.sd,
                    loa_lower: r.loa_lower,
                    loa_upper: r.loa_upper,
                },
            )
        })
        .collect();
    let mut s = serde_json::to_string_pretty(&map).expect("summary serializes");
    s.push('\n');
    s
}
