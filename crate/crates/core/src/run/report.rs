//! Run reports as line-delimited JSON records and as plain text.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub name: String,
    pub values: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunReport {
    pub command: String,
    pub config: BTreeMap<String, String>,
    pub corpus: BTreeMap<String, f64>,
    pub losses: Vec<f64>,
    pub metrics: Vec<MetricsRow>,
    pub wall_time_secs: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum Record {
    Command { name: String },
    Config { values: BTreeMap<String, String> },
    Corpus { values: BTreeMap<String, f64> },
    Epoch { epoch: usize, loss: f64 },
    Metrics(MetricsRow),
    WallTime { seconds: f64 },
}

impl RunReport {
    pub fn metric(&self, row: &str, key: &str) -> Option<f64> {
        self.metrics
            .iter()
            .find(|r| r.name == row)
            .and_then(|r| r.values.get(key).copied())
    }

    pub fn to_jsonl(&self) -> Result<String> {
        let mut records = vec![
            Record::Command {
                name: self.command.clone(),
            },
            Record::Config {
                values: self.config.clone(),
            },
        ];
        if !self.corpus.is_empty() {
            records.push(Record::Corpus {
                values: self.corpus.clone(),
            });
        }
        records.extend(
            self.losses
                .iter()
                .enumerate()
                .map(|(i, &loss)| Record::Epoch { epoch: i + 1, loss }),
        );
        records.extend(self.metrics.iter().cloned().map(Record::Metrics));
        records.extend(
            self.wall_time_secs
                .map(|seconds| Record::WallTime { seconds }),
        );
        let mut out = String::new();
        for r in &records {
            out.push_str(&serde_json::to_string(r)?);
            out.push('\n');
        }
        Ok(out)
    }

    pub fn from_jsonl(text: &str) -> Result<Self> {
        let mut report = RunReport::default();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let record: Record = serde_json::from_str(line).map_err(|e| Error::Parse {
                line: i + 1,
                message: e.to_string(),
            })?;
            match record {
                Record::Command { name } => report.command = name,
                Record::Config { values } => report.config = values,
                Record::Corpus { values } => report.corpus = values,
                Record::Epoch { epoch, loss } => {
                    if epoch != report.losses.len() + 1 {
                        return Err(Error::Parse {
                            line: i + 1,
                            message: format!("epoch {epoch} out of order"),
                        });
                    }
                    report.losses.push(loss);
                }
                Record::Metrics(row) => report.metrics.push(row),
                Record::WallTime { seconds } => report.wall_time_secs = Some(seconds),
            }
        }
        Ok(report)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "command: {}", self.command);
        if !self.corpus.is_empty() {
            let _ = writeln!(out, "corpus:");
            for (k, v) in &self.corpus {
                let _ = writeln!(out, "  {k:<28} {v}");
            }
        }
        if !self.losses.is_empty() {
            let _ = writeln!(out, "losses:");
            for (i, l) in self.losses.iter().enumerate() {
                let _ = writeln!(out, "  epoch {:>4}  {l:.6}", i + 1);
            }
        }
        for row in &self.metrics {
            let _ = writeln!(out, "metrics [{}]:", row.name);
            for (k, v) in &row.values {
                let _ = writeln!(out, "  {k:<28} {v:.6}");
            }
        }
        if let Some(s) = self.wall_time_secs {
            let _ = writeln!(out, "wall time: {s:.3}s");
        }
        let _ = writeln!(out, "config:");
        for (k, v) in &self.config {
            let _ = writeln!(out, "  {k} = {v}");
        }
        out
    }
}

/// Mean and sample standard deviation of every key shared by `rows`.
pub fn aggregate(rows: &[MetricsRow]) -> (MetricsRow, MetricsRow) {
    let mut mean = BTreeMap::new();
    let mut std = BTreeMap::new();
    if let Some(first) = rows.first() {
        for key in first.values.keys() {
            let xs: Vec<f64> = rows
                .iter()
                .filter_map(|r| r.values.get(key).copied())
                .collect();
            if xs.len() != rows.len() {
                continue;
            }
            let n = xs.len() as f64;
            let m = xs.iter().sum::<f64>() / n;
            let var = if xs.len() > 1 {
                xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0)
            } else {
                0.0
            };
            mean.insert(key.clone(), m);
            std.insert(key.clone(), var.sqrt());
        }
    }
    (
        MetricsRow {
            name: "mean".into(),
            values: mean,
        },
        MetricsRow {
            name: "std".into(),
            values: std,
        },
    )
}
