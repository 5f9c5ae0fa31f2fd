use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;

use super::TerminationReason;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RunLogRow {
    pub iteration: usize,
    /// Sum of squared output errors.
    pub loss: f64,
    pub psi_p: f64,
    pub kld: f64,
    pub chv: f64,
    pub objective: f64,
    pub grad_norm: f64,
    pub step: f64,
}

/// One row per accepted optimizer iterate; row 0 is the start point.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct RunLog {
    pub rows: Vec<RunLogRow>,
}

pub const RUNLOG_HEADER: &str = "iteration,J,psi_p,kld,chv,objective,grad_norm,step";

impl RunLog {
    pub fn first(&self) -> Option<&RunLogRow> {
        self.rows.first()
    }

    pub fn last(&self) -> Option<&RunLogRow> {
        self.rows.last()
    }

    /// CSV text; untracked indicators are written as `NaN`.
    pub fn to_csv(&self) -> String {
        let mut s = String::with_capacity(64 * (self.rows.len() + 1));
        s.push_str(RUNLOG_HEADER);
        s.push('\n');
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{}",
                r.iteration, r.loss, r.psi_p, r.kld, r.chv, r.objective, r.grad_norm, r.step
            );
        }
        s
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        match lines.next() {
            Some(h) if h.trim() == RUNLOG_HEADER => {}
            other => {
                return Err(Error::Format(format!("unexpected run log header {other:?}")));
            }
        }
        let mut rows = Vec::new();
        for (n, line) in lines.enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 8 {
                return Err(Error::Format(format!("run log line {} has {} fields", n + 2, f.len())));
            }
            let num = |i: usize| -> Result<f64> {
                f[i].trim()
                    .parse()
                    .map_err(|_| Error::Format(format!("bad number {:?} on line {}", f[i], n + 2)))
            };
            rows.push(RunLogRow {
                iteration: f[0]
                    .trim()
                    .parse()
                    .map_err(|_| Error::Format(format!("bad iteration on line {}", n + 2)))?,
                loss: num(1)?,
                psi_p: num(2)?,
                kld: num(3)?,
                chv: num(4)?,
                objective: num(5)?,
                grad_norm: num(6)?,
                step: num(7)?,
            });
        }
        Ok(Self { rows })
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TerminationReport {
    pub reason: TerminationReason,
    pub iterations: usize,
    pub evaluations: usize,
    pub final_objective: f64,
    pub final_loss: f64,
    pub final_psi_p: f64,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip_keeps_nan_columns() {
        let log = RunLog {
            rows: vec![
                RunLogRow {
                    iteration: 0,
                    loss: 1.5,
                    psi_p: 0.23,
                    kld: 2.0,
                    chv: 0.4,
                    objective: 1.6,
                    grad_norm: 3.0,
                    step: 0.0,
                },
                RunLogRow {
                    iteration: 1,
                    loss: 1e-5,
                    psi_p: 0.25,
                    kld: f64::NAN,
                    chv: f64::NAN,
                    objective: 1.1e-5,
                    grad_norm: 0.1,
                    step: 0.5,
                },
            ],
        };
        let back = RunLog::from_csv(&log.to_csv()).unwrap();
        assert_eq!(back.rows[0], log.rows[0]);
        assert!(back.rows[1].kld.is_nan());
        assert_eq!(back.rows[1].loss, 1e-5);
    }

    #[test]
    fn rejects_wrong_header() {
        assert!(RunLog::from_csv("a,b\n1,2\n").is_err());
    }
}
