use std::fmt::Write;

use serde::{Deserialize, Serialize};

use super::{BenchError, MetricRecord};

/// Per-metric means over a benchmark run.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricMeans {
    pub clip_i: f64,
    pub dino_i: f64,
    pub l1: f64,
    pub l2: f64,
    pub ic: f64,
    pub bc: f64,
}

impl MetricMeans {
    pub const COLUMNS: [&'static str; 6] = ["clip_i", "dino_i", "l1", "l2", "ic", "bc"];

    pub fn values(&self) -> [f64; 6] {
        [self.clip_i, self.dino_i, self.l1, self.l2, self.ic, self.bc]
    }

    /// Whether a larger value is better for column `i`.
    pub fn higher_is_better(i: usize) -> bool {
        !matches!(Self::COLUMNS[i], "l1" | "l2")
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub method: String,
    pub n: usize,
    pub metrics: MetricMeans,
}

impl Report {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports serialize")
    }
}

pub fn aggregate_report(records: &[MetricRecord], method: &str) -> Result<Report, BenchError> {
    if records.is_empty() {
        return Err(BenchError::Empty);
    }
    let n = records.len() as f64;
    let mean = |f: fn(&MetricRecord) -> f64| records.iter().map(f).sum::<f64>() / n;
    Ok(Report {
        method: method.to_string(),
        n: records.len(),
        metrics: MetricMeans {
            clip_i: mean(|r| r.clip_i),
            dino_i: mean(|r| r.dino_i),
            l1: mean(|r| r.l1),
            l2: mean(|r| r.l2),
            ic: mean(|r| r.ic),
            bc: mean(|r| r.bc),
        },
    })
}

/// Rank marks per report and column: `*` best, `+` second best.
#[allow(clippy::needless_range_loop)]
pub fn rank_marks(reports: &[Report]) -> Vec<[&'static str; 6]> {
    let mut marks = vec![[""; 6]; reports.len()];
    if reports.len() < 2 {
        return marks;
    }
    for col in 0..6 {
        let mut order: Vec<usize> = (0..reports.len()).collect();
        let key = |i: usize| {
            let v = reports[i].metrics.values()[col];
            if MetricMeans::higher_is_better(col) {
                -v
            } else {
                v
            }
        };
        order.sort_by(|&a, &b| key(a).total_cmp(&key(b)));
        marks[order[0]][col] = "*";
        marks[order[1]][col] = "+";
    }
    marks
}

/// Aligned text table with one row per method.
pub fn render_table(reports: &[Report]) -> String {
    let marks = rank_marks(reports);
    let width = reports.iter().map(|r| r.method.len()).max().unwrap_or(0).max("method".len());
    let mut out = format!("{:<width$}  {:>5}", "method", "n");
    for c in MetricMeans::COLUMNS {
        write!(out, "  {c:>8}").expect("writing to a String");
    }
    out.push('\n');
    for (r, m) in reports.iter().zip(&marks) {
        write!(out, "{:<width$}  {:>5}", r.method, r.n).expect("writing to a String");
        for (v, mark) in r.metrics.values().iter().zip(m) {
            write!(out, "  {:>8}", format!("{v:.4}{mark}")).expect("writing to a String");
        }
        out.push('\n');
    }
    if reports.len() > 1 {
        out.push_str("* best, + second best; l1 and l2 lower is better\n");
    }
    out
}
