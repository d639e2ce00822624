use std::fmt::Write as _;

use crate::datasets::format_value;

/// One point of a loss curve: mean squared error per scalar entry.
#[derive(Debug, Clone, PartialEq)]
pub struct LossRecord {
    pub stage: String,
    pub iteration: usize,
    pub loss: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainReport {
    pub records: Vec<LossRecord>,
    /// Projection exponents that had no training pairs and were left as is.
    pub skipped_projections: Vec<u32>,
    pub final_validation_loss: Option<f64>,
    pub wall_clock_seconds: f64,
}

impl TrainReport {
    pub fn push(&mut self, stage: impl Into<String>, iteration: usize, loss: f64) {
        self.records.push(LossRecord {
            stage: stage.into(),
            iteration,
            loss,
        });
    }

    pub fn extend(&mut self, other: TrainReport) {
        self.records.extend(other.records);
        self.skipped_projections.extend(other.skipped_projections);
    }

    /// Records of one stage, in order.
    pub fn stage(&self, stage: &str) -> impl Iterator<Item = &LossRecord> + '_ {
        let stage = stage.to_owned();
        self.records.iter().filter(move |r| r.stage == stage)
    }

    /// `stage,iteration,loss` rows. Timing is left out so that reruns with
    /// the same seed produce identical files.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("stage,iteration,loss\n");
        for r in &self.records {
            writeln!(out, "{},{},{}", r.stage, r.iteration, format_value(r.loss)).unwrap();
        }
        if let Some(v) = self.final_validation_loss {
            writeln!(out, "validation,0,{}", format_value(v)).unwrap();
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_layout() {
        let mut r = TrainReport::default();
        r.push("initialization/t=2", 0, 0.5);
        r.push("mixing", 10, 0.25);
        r.final_validation_loss = Some(1.0);
        r.wall_clock_seconds = 3.0;
        let csv = r.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "stage,iteration,loss");
        assert_eq!(lines[1], "initialization/t=2,0,5.0000000000000000e-1");
        assert_eq!(lines[3], "validation,0,1.0000000000000000e0");
        assert_eq!(r.stage("mixing").count(), 1);
    }
}
