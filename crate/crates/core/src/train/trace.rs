//! Per-epoch training log.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::Result;

pub const TRACE_HEADER: &str = "epoch,loss,loss_energy,loss_force,val_rmse,max_bond,phase,seconds";

#[derive(Clone, Debug, PartialEq)]
pub struct TraceRecord {
    pub epoch: usize,
    pub loss: f64,
    pub loss_energy: f64,
    pub loss_force: f64,
    /// Energy-only RMSE on the validation split; NaN without validation data.
    pub val_rmse: f64,
    pub bonds: Vec<usize>,
    pub phase: String,
    /// Wall time since the start of the fit (zero when timing is disabled).
    pub seconds: f64,
}

impl TraceRecord {
    pub fn max_bond(&self) -> usize {
        self.bonds.iter().copied().max().unwrap_or(1)
    }
}

/// Append-only list of epoch records.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainTrace {
    records: Vec<TraceRecord>,
}

impl TrainTrace {
    pub fn push(&mut self, record: TraceRecord) {
        self.records.push(record);
    }

    pub fn records(&self) -> &[TraceRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn last(&self) -> Option<&TraceRecord> {
        self.records.last()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(TRACE_HEADER);
        out.push('\n');
        for r in &self.records {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                r.epoch,
                r.loss,
                r.loss_energy,
                r.loss_force,
                r.val_rmse,
                r.max_bond(),
                r.phase,
                r.seconds
            );
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_has_the_fixed_header_and_one_line_per_epoch() {
        let mut t = TrainTrace::default();
        for e in 0..3 {
            t.push(TraceRecord {
                epoch: e,
                loss: 1.0 / (e + 1) as f64,
                loss_energy: 0.5,
                loss_force: 0.25,
                val_rmse: f64::NAN,
                bonds: vec![1, 3, 2, 1],
                phase: "A".into(),
                seconds: 0.0,
            });
        }
        let csv = t.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], TRACE_HEADER);
        assert_eq!(lines.len(), 4);
        assert_eq!(lines[2], "1,0.5,0.5,0.25,NaN,3,A,0");
    }
}
