//! CSV/TSV emitters for training logs and probe results.

use std::fmt::Write as _;
use std::path::Path;

use crate::sim::{EpochMetrics, SweepPoint, VariableReport};
use crate::Result;

/// One row per epoch: objective, per-split metrics, and the ten rule
/// penalties from the fixed probe.
pub fn write_metrics_csv(path: &Path, history: &[EpochMetrics]) -> Result<()> {
    let mut out = String::from(
        "epoch,loss,train_rmse,valid_rmse,test_rmse,train_acc,valid_acc,test_acc,\
         r1,r2,r3,r4,r5,r6,r7,r8,r9,r10\n",
    );
    for row in history {
        write!(
            out,
            "{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6}",
            row.epoch,
            row.loss,
            row.train.rmse,
            row.valid.rmse,
            row.test.rmse,
            row.train.accuracy,
            row.valid.accuracy,
            row.test.accuracy,
        )
        .expect("writing to a String cannot fail");
        for r in row.regularizers {
            write!(out, ",{r:.6}").expect("writing to a String cannot fail");
        }
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Per-variable verdicts: id, similarity to the true anchor, the thresholded
/// prediction, and the hidden truth.
pub fn write_variables_tsv(path: &Path, report: &VariableReport) -> Result<()> {
    let mut out = String::from("id\tsim_to_t\tpredicted\ttruth\n");
    for row in &report.rows {
        writeln!(
            out,
            "{}\t{:.6}\t{}\t{}",
            row.id,
            row.sim_to_true,
            row.predicted as u8,
            row.truth as u8
        )
        .expect("writing to a String cannot fail");
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Test metrics per regularizer-weight grid point.
pub fn write_sweep_csv(path: &Path, points: &[SweepPoint]) -> Result<()> {
    let mut out = String::from("lambda_logic,accuracy,rmse\n");
    for p in points {
        writeln!(out, "{},{:.6},{:.6}", p.lambda_logic, p.accuracy, p.rmse)
            .expect("writing to a String cannot fail");
    }
    std::fs::write(path, out)?;
    Ok(())
}
