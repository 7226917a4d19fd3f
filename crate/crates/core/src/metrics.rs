//! Pixel confusion counts and the derived segmentation scores.
//!
//! Cloud is the positive class. Scores come from one dataset-wide matrix
//! (micro-averaging). mIoU averages the IoU of the cloud and clear classes.

use crate::error::{Error, Result};
use crate::raster::Mask;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct ConfusionMatrix {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub tn: u64,
}

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }

    /// Adds one prediction/truth pair.
    pub fn accumulate(mut self, pred: &Mask, truth: &Mask) -> Result<Self> {
        self.add(pred, truth)?;
        Ok(self)
    }

    pub fn add(&mut self, pred: &Mask, truth: &Mask) -> Result<()> {
        if pred.width() != truth.width() || pred.height() != truth.height() {
            return Err(Error::Dimension(format!(
                "prediction {}x{} vs truth {}x{}",
                pred.width(),
                pred.height(),
                truth.width(),
                truth.height()
            )));
        }
        // Index tp, fn, fp, tn by (truth, pred).
        let mut counts = [0u64; 4];
        for (&p, &t) in pred.values().iter().zip(truth.values()) {
            counts[usize::from(1 - t) * 2 + usize::from(1 - p)] += 1;
        }
        self.tp += counts[0];
        self.fn_ += counts[1];
        self.fp += counts[2];
        self.tn += counts[3];
        Ok(())
    }

    pub fn merge(self, other: Self) -> Self {
        Self {
            tp: self.tp + other.tp,
            fp: self.fp + other.fp,
            fn_: self.fn_ + other.fn_,
            tn: self.tn + other.tn,
        }
    }

    /// Swaps the roles of the two classes.
    pub fn flipped(self) -> Self {
        Self {
            tp: self.tn,
            tn: self.tp,
            fp: self.fn_,
            fn_: self.fp,
        }
    }

    pub fn report(&self) -> Result<MetricsReport> {
        report(self)
    }
}

/// Which ratios had a zero denominator and were reported as 0.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Degenerate {
    pub precision: bool,
    pub recall: bool,
    pub f1: bool,
    pub cloud_iou: bool,
    pub clear_iou: bool,
}

impl Degenerate {
    pub fn any(&self) -> bool {
        self.precision || self.recall || self.f1 || self.cloud_iou || self.clear_iou
    }
}

/// Scores in `[0, 1]`; multiply by 100 for the usual table rendering.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsReport {
    pub miou: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub oa: f64,
    pub cloud_iou: f64,
    pub clear_iou: f64,
    pub degenerate: Degenerate,
}

impl MetricsReport {
    /// The five headline columns as percentages, 2 decimals, space separated.
    pub fn table_row(&self) -> String {
        format!(
            "{:.2} {:.2} {:.2} {:.2} {:.2}",
            self.miou * 100.0,
            self.precision * 100.0,
            self.recall * 100.0,
            self.f1 * 100.0,
            self.oa * 100.0
        )
    }
}

fn ratio(num: u64, den: u64) -> (f64, bool) {
    if den == 0 {
        (0.0, true)
    } else {
        (num as f64 / den as f64, false)
    }
}

/// Adds one prediction/truth pair to `cm`.
pub fn accumulate(cm: ConfusionMatrix, pred: &Mask, truth: &Mask) -> Result<ConfusionMatrix> {
    cm.accumulate(pred, truth)
}

pub fn report(cm: &ConfusionMatrix) -> Result<MetricsReport> {
    let total = cm.total();
    if total == 0 {
        return Err(Error::EmptyEvaluation);
    }
    let (precision, dp) = ratio(cm.tp, cm.tp + cm.fp);
    let (recall, dr) = ratio(cm.tp, cm.tp + cm.fn_);
    let (f1, df) = if dp || dr || precision + recall == 0.0 {
        (0.0, true)
    } else {
        (2.0 * precision * recall / (precision + recall), false)
    };
    let (cloud_iou, dc) = ratio(cm.tp, cm.tp + cm.fp + cm.fn_);
    let (clear_iou, dn) = ratio(cm.tn, cm.tn + cm.fn_ + cm.fp);
    Ok(MetricsReport {
        miou: 0.5 * (cloud_iou + clear_iou),
        precision,
        recall,
        f1,
        oa: (cm.tp + cm.tn) as f64 / total as f64,
        cloud_iou,
        clear_iou,
        degenerate: Degenerate {
            precision: dp,
            recall: dr,
            f1: df,
            cloud_iou: dc,
            clear_iou: dn,
        },
    })
}

/// Evaluation CSV header.
pub const EVAL_CSV_HEADER: &str = "split,patches,tp,fp,fn,tn,miou,precision,recall,f1,oa";

/// One evaluation CSV row; scores are percentages with 4 decimals.
pub fn eval_csv_row(
    split: &str,
    patches: usize,
    cm: &ConfusionMatrix,
    r: &MetricsReport,
) -> String {
    format!(
        "{split},{patches},{},{},{},{},{:.4},{:.4},{:.4},{:.4},{:.4}",
        cm.tp,
        cm.fp,
        cm.fn_,
        cm.tn,
        r.miou * 100.0,
        r.precision * 100.0,
        r.recall * 100.0,
        r.f1 * 100.0,
        r.oa * 100.0
    )
}
