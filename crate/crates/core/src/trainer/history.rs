use std::fmt::Write as _;
use std::path::Path;

use crate::controller::Action;
use crate::error::{Error, Result};
use crate::metrics::MetricsReport;

pub const HISTORY_CSV_HEADER: &str = "step,epoch,loss,threshold,best_loss,action";
pub const SNAPSHOT_CSV_HEADER: &str = "epoch,miou,precision,recall,f1,oa";

/// One mini-batch. Controller fields are `None` outside adaptive fine-tuning.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub step: u64,
    pub epoch: usize,
    pub loss: f64,
    pub threshold: Option<f64>,
    pub best_loss: Option<f64>,
    pub action: Option<Action>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochSnapshot {
    pub epoch: usize,
    pub report: MetricsReport,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainHistory {
    pub records: Vec<StepRecord>,
    pub snapshots: Vec<EpochSnapshot>,
    /// Batches whose regenerated labels were entirely clear or entirely cloud.
    pub degenerate_batches: usize,
}

impl TrainHistory {
    pub fn losses(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.loss).collect()
    }

    /// Mean batch loss of each epoch, in epoch order.
    pub fn epoch_mean_losses(&self) -> Vec<f64> {
        let mut out: Vec<(usize, f64, usize)> = Vec::new();
        for r in &self.records {
            match out.last_mut() {
                Some((e, sum, n)) if *e == r.epoch => {
                    *sum += r.loss;
                    *n += 1;
                }
                _ => out.push((r.epoch, r.loss, 1)),
            }
        }
        out.into_iter().map(|(_, sum, n)| sum / n as f64).collect()
    }

    /// 1-based index of the first epoch whose mean loss is below `level`.
    pub fn first_epoch_below(&self, level: f64) -> Option<usize> {
        self.epoch_mean_losses()
            .iter()
            .position(|&l| l < level)
            .map(|i| i + 1)
    }

    pub fn final_threshold(&self) -> Option<f64> {
        self.records.last().and_then(|r| r.threshold)
    }

    pub fn history_csv(&self) -> String {
        let mut out = String::from(HISTORY_CSV_HEADER);
        out.push('\n');
        let opt = |v: Option<f64>| v.map(|v| format!("{v:.6}")).unwrap_or_default();
        for r in &self.records {
            writeln!(
                out,
                "{},{},{:.6},{},{},{}",
                r.step,
                r.epoch,
                r.loss,
                opt(r.threshold),
                opt(r.best_loss),
                r.action.map(Action::as_str).unwrap_or_default()
            )
            .unwrap();
        }
        out
    }

    pub fn snapshot_csv(&self) -> String {
        let mut out = String::from(SNAPSHOT_CSV_HEADER);
        out.push('\n');
        for s in &self.snapshots {
            let r = &s.report;
            writeln!(
                out,
                "{},{:.6},{:.6},{:.6},{:.6},{:.6}",
                s.epoch, r.miou, r.precision, r.recall, r.f1, r.oa
            )
            .unwrap();
        }
        out
    }
}

fn parse_field<T: std::str::FromStr>(path: &Path, row: usize, name: &str, raw: &str) -> Result<T> {
    raw.trim()
        .parse()
        .map_err(|_| Error::format(path, format!("row {row}: bad {name} `{raw}`")))
}

fn parse_opt(path: &Path, row: usize, name: &str, raw: &str) -> Result<Option<f64>> {
    if raw.trim().is_empty() {
        Ok(None)
    } else {
        parse_field(path, row, name, raw).map(Some)
    }
}

fn read_rows(path: &Path, text: &str, header: &str) -> Result<Vec<csv::StringRecord>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(text.as_bytes());
    let found = reader
        .headers()
        .map_err(|e| Error::format(path, e.to_string()))?
        .iter()
        .collect::<Vec<_>>()
        .join(",");
    if found != header {
        return Err(Error::format(
            path,
            format!("expected header `{header}`, found `{found}`"),
        ));
    }
    reader
        .records()
        .map(|r| r.map_err(|e| Error::format(path, e.to_string())))
        .collect()
}

/// Parses a history CSV. `path` is only used in error messages.
pub fn parse_history_csv(path: &Path, text: &str) -> Result<Vec<StepRecord>> {
    let rows = read_rows(path, text, HISTORY_CSV_HEADER)?;
    rows.iter()
        .enumerate()
        .map(|(i, row)| {
            let n = i + 1;
            let action = match row[5].trim() {
                "" => None,
                a => Some(
                    a.parse::<Action>()
                        .map_err(|e| Error::format(path, format!("row {n}: {e}")))?,
                ),
            };
            Ok(StepRecord {
                step: parse_field(path, n, "step", &row[0])?,
                epoch: parse_field(path, n, "epoch", &row[1])?,
                loss: parse_field(path, n, "loss", &row[2])?,
                threshold: parse_opt(path, n, "threshold", &row[3])?,
                best_loss: parse_opt(path, n, "best_loss", &row[4])?,
                action,
            })
        })
        .collect()
}

/// Parses an evaluation-snapshot CSV into `(epoch, [miou, precision, recall, f1, oa])`.
pub fn parse_snapshot_csv(path: &Path, text: &str) -> Result<Vec<(usize, [f64; 5])>> {
    let rows = read_rows(path, text, SNAPSHOT_CSV_HEADER)?;
    rows.iter()
        .enumerate()
        .map(|(i, row)| {
            let n = i + 1;
            let mut vals = [0.0; 5];
            for (k, v) in vals.iter_mut().enumerate() {
                *v = parse_field(path, n, "metric", &row[k + 1])?;
            }
            Ok((parse_field(path, n, "epoch", &row[0])?, vals))
        })
        .collect()
}
