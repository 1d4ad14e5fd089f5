//! CSV emitters for ranking logs and the co-occurrence probe.

use std::fmt::Write as _;
use std::path::Path;

use crate::rec::RecEpochMetrics;
use crate::Result;

/// One row per epoch: objective, valid/test ranking metrics, and the ten
/// rule penalties from the fixed probe.
pub fn write_rec_metrics_csv(path: &Path, history: &[RecEpochMetrics]) -> Result<()> {
    let mut out = String::from(
        "epoch,loss,valid_ndcg10,valid_hit1,test_ndcg10,test_hit1,\
         r1,r2,r3,r4,r5,r6,r7,r8,r9,r10\n",
    );
    for row in history {
        write!(
            out,
            "{},{:.6},{:.6},{:.6},{:.6},{:.6}",
            row.epoch, row.loss, row.valid.ndcg10, row.valid.hit1, row.test.ndcg10, row.test.hit1,
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

/// Square similarity matrix with item labels on both axes.
pub fn write_cooccur_csv(path: &Path, labels: &[String], matrix: &[Vec<f64>]) -> Result<()> {
    let mut out = String::from("item");
    for l in labels {
        write!(out, ",{l}").expect("writing to a String cannot fail");
    }
    out.push('\n');
    for (l, row) in labels.iter().zip(matrix) {
        out.push_str(l);
        for v in row {
            write!(out, ",{v:.6}").expect("writing to a String cannot fail");
        }
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rec::TopkMetrics;

    #[test]
    fn rec_metrics_csv_shape() {
        let rows = vec![RecEpochMetrics {
            epoch: 0,
            loss: 2.0,
            valid: TopkMetrics {
                ndcg10: 0.3,
                hit1: 0.1,
            },
            test: TopkMetrics {
                ndcg10: 0.25,
                hit1: 0.05,
            },
            regularizers: [1.0; 10],
        }];
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rec_metrics.csv");
        write_rec_metrics_csv(&path, &rows).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 2);
        assert_eq!(lines[0].split(',').count(), 16);
        assert!(lines[1].starts_with("0,2.000000,0.300000,0.100000,"));
    }

    #[test]
    fn cooccur_csv_is_labeled_both_ways() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cooccur.csv");
        let labels = vec!["a".to_string(), "b".to_string()];
        let matrix = vec![vec![0.9, 0.2], vec![0.3, 0.8]];
        write_cooccur_csv(&path, &labels, &matrix).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(
            text,
            "item,a,b\na,0.900000,0.200000\nb,0.300000,0.800000\n"
        );
    }
}
