//! Per-iteration objective traces for convergence checks and plot export.

use std::io::{self, Write};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub iter: usize,
    /// MM cost or ELBO, depending on the solver that produced the trace.
    pub objective: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct FitTrace {
    rows: Vec<TraceRow>,
}

impl FitTrace {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, iter: usize, objective: f64, seconds: f64) {
        self.rows.push(TraceRow {
            iter,
            objective,
            seconds,
        });
    }

    pub fn rows(&self) -> &[TraceRow] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn objectives(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.objective).collect()
    }

    pub fn last_objective(&self) -> Option<f64> {
        self.rows.last().map(|r| r.objective)
    }

    /// True when each step decreases (or holds) the objective up to a
    /// relative slack, i.e. `obj[t+1] <= obj[t] + slack * |obj[t]|`.
    pub fn is_nonincreasing(&self, rel_slack: f64) -> bool {
        self.rows
            .windows(2)
            .all(|w| w[1].objective <= w[0].objective + rel_slack * w[0].objective.abs())
    }

    /// Mirror of [`FitTrace::is_nonincreasing`] for ascent traces.
    pub fn is_nondecreasing(&self, rel_slack: f64) -> bool {
        self.rows
            .windows(2)
            .all(|w| w[1].objective >= w[0].objective - rel_slack * w[0].objective.abs())
    }

    /// CSV with header `iter,objective,seconds`. Objectives carry 17
    /// significant digits; the timing column is informational only.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "iter,objective,seconds")?;
        for r in &self.rows {
            writeln!(out, "{},{:.16e},{:.6}", r.iter, r.objective, r.seconds)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn monotonicity_checks_respect_slack() {
        let mut t = FitTrace::new();
        t.push(0, 10.0, 0.0);
        t.push(1, 5.0, 0.0);
        t.push(2, 5.0 + 1e-12, 0.0);
        assert!(t.is_nonincreasing(1e-9));
        assert!(!t.is_nonincreasing(0.0));
        t.push(3, 6.0, 0.0);
        assert!(!t.is_nonincreasing(1e-9));
    }

    #[test]
    fn csv_has_expected_shape() {
        let mut t = FitTrace::new();
        t.push(0, 1.5, 0.25);
        t.push(1, -2.0, 0.5);
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "iter,objective,seconds");
        assert_eq!(lines.len(), 3);
        assert!(lines[1].starts_with("0,1.5000000000000000e0,"));
    }
}
