use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use blurrank::datasets::Split;
use blurrank::evaluation::BenchmarkReport;
use serde::Serialize;

/// File-name suffix marking an evaluation report.
pub const REPORT_SUFFIX: &str = "report.json";

pub fn find_reports(dir: &Path) -> std::io::Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d)? {
            let path = entry?.path();
            if path.is_dir() {
                stack.push(path);
            } else if path
                .file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.ends_with(REPORT_SUFFIX))
            {
                out.push(path);
            }
        }
    }
    out.sort();
    Ok(out)
}

/// Row key: the scorer plus the training settings that distinguish table rows.
pub fn row_label(r: &BenchmarkReport) -> String {
    match (&r.scorer.mode, &r.scorer.label_set) {
        (Some(m), Some(l)) => format!("{m}/{l}"),
        (Some(m), None) => m.clone(),
        _ => r.scorer.name.clone(),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Cell {
    pub n: usize,
    pub mean: f64,
    /// Sample standard deviation; zero for a single run.
    pub spread: f64,
    pub undefined: usize,
}

impl Cell {
    fn from_values(values: &[f64], undefined: usize) -> Self {
        let n = values.len();
        let mean = if n == 0 {
            f64::NAN
        } else {
            values.iter().sum::<f64>() / n as f64
        };
        let spread = if n < 2 {
            0.0
        } else {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        };
        Self {
            n,
            mean,
            spread,
            undefined,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Aggregate {
    pub splits: Vec<Split>,
    pub rows: BTreeMap<String, BTreeMap<Split, Cell>>,
}

pub fn aggregate(reports: &[BenchmarkReport]) -> Aggregate {
    let mut values: BTreeMap<String, BTreeMap<Split, (Vec<f64>, usize)>> = BTreeMap::new();
    let mut splits = Vec::new();
    for r in reports {
        let row = values.entry(row_label(r)).or_default();
        for res in &r.results {
            if !splits.contains(&res.split) {
                splits.push(res.split);
            }
            let slot = row.entry(res.split).or_default();
            match res.srocc {
                Some(v) => slot.0.push(v),
                None => slot.1 += 1,
            }
        }
    }
    splits.sort();
    let rows = values
        .into_iter()
        .map(|(k, cells)| {
            let cells = cells
                .into_iter()
                .map(|(s, (v, undef))| (s, Cell::from_values(&v, undef)))
                .collect();
            (k, cells)
        })
        .collect();
    Aggregate { splits, rows }
}

impl Aggregate {
    pub fn table(&self) -> String {
        let mut out = String::new();
        let _ = write!(out, "{:<20}", "SROCC");
        for s in &self.splits {
            let _ = write!(out, " {:>22}", s.name());
        }
        out.push('\n');
        for (label, cells) in &self.rows {
            let _ = write!(out, "{label:<20}");
            for s in &self.splits {
                let text = match cells.get(s) {
                    Some(c) if c.n > 0 => format!("{:.4} ± {:.4} (n={})", c.mean, c.spread, c.n),
                    _ => "-".to_string(),
                };
                let _ = write!(out, " {text:>22}");
            }
            out.push('\n');
        }
        out
    }
}
