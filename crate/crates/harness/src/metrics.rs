//! Per-epoch training metrics.

use std::io::Write;

use serde::Serialize;

use scns_core::format::fmt9;

pub const METRICS_HEADER: &str = "epoch,train_loss,train_acc,eval_acc,wall_ms";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_acc: f64,
    /// Absent when the run has no held-out split.
    pub eval_acc: Option<f64>,
    /// Zero when timing is disabled.
    pub wall_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsLog {
    pub rows: Vec<EpochMetrics>,
    pub threshold: f64,
    /// First epoch whose training accuracy reached `threshold`.
    pub epochs_to_threshold: Option<usize>,
}

impl MetricsLog {
    pub fn new(threshold: f64) -> Self {
        Self {
            rows: Vec::new(),
            threshold,
            epochs_to_threshold: None,
        }
    }

    /// Appends a row and updates the threshold marker. Epochs must increase.
    pub fn push(&mut self, row: EpochMetrics) {
        if let Some(last) = self.rows.last() {
            assert!(row.epoch > last.epoch, "epochs must be strictly increasing");
        }
        debug_assert!((0.0..=1.0).contains(&row.train_acc));
        if self.epochs_to_threshold.is_none() && row.train_acc >= self.threshold {
            self.epochs_to_threshold = Some(row.epoch);
        }
        self.rows.push(row);
    }

    pub fn last(&self) -> Option<&EpochMetrics> {
        self.rows.last()
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "{METRICS_HEADER}")?;
        for r in &self.rows {
            let eval = r.eval_acc.map(fmt9).unwrap_or_default();
            writeln!(
                out,
                "{},{},{},{},{}",
                r.epoch,
                fmt9(r.train_loss),
                fmt9(r.train_acc),
                eval,
                r.wall_ms
            )?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(epoch: usize, acc: f64) -> EpochMetrics {
        EpochMetrics {
            epoch,
            train_loss: 0.5,
            train_acc: acc,
            eval_acc: None,
            wall_ms: 0,
        }
    }

    #[test]
    fn marker_is_first_crossing() {
        let mut log = MetricsLog::new(0.9);
        for (e, a) in [(1, 0.5), (2, 0.95), (3, 0.85), (4, 0.99)] {
            log.push(row(e, a));
        }
        assert_eq!(log.epochs_to_threshold, Some(2));
        let mut zero = MetricsLog::new(0.0);
        zero.push(row(1, 0.0));
        assert_eq!(zero.epochs_to_threshold, Some(1));
    }

    #[test]
    #[should_panic(expected = "strictly increasing")]
    fn epochs_must_increase() {
        let mut log = MetricsLog::new(0.9);
        log.push(row(2, 0.1));
        log.push(row(2, 0.1));
    }

    #[test]
    fn csv_layout() {
        let mut log = MetricsLog::new(0.9);
        log.push(row(1, 0.25));
        log.push(EpochMetrics {
            eval_acc: Some(0.5),
            wall_ms: 12,
            ..row(2, 1.0)
        });
        let mut out = Vec::new();
        log.write_csv(&mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], METRICS_HEADER);
        assert_eq!(lines[1], format!("1,{},{},,0", fmt9(0.5), fmt9(0.25)));
        assert_eq!(
            lines[2],
            format!("2,{},{},{},12", fmt9(0.5), fmt9(1.0), fmt9(0.5))
        );
    }
}
