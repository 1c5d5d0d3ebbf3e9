//! Small harness shared by the acceptance checks.

use std::time::{Duration, Instant};

use outbreak_core::Trajectory;

/// Outcome of one criterion.
#[derive(Debug, Clone, PartialEq)]
pub struct Verdict {
    pub ok: bool,
    pub detail: String,
}

impl Verdict {
    pub fn new(ok: bool, detail: impl Into<String>) -> Self {
        Self {
            ok,
            detail: detail.into(),
        }
    }

    pub fn line(&self, name: &str) -> String {
        format!(
            "{} {name}: {}",
            if self.ok { "PASS" } else { "FAIL" },
            self.detail
        )
    }
}

/// Largest conservation error seen across runs.
#[derive(Debug, Default)]
pub struct Drift {
    pub max: f64,
    pub runs: usize,
}

impl Drift {
    pub fn track(&mut self, tr: &Trajectory) {
        self.runs += 1;
        for s in &tr.samples {
            self.max = self.max.max((s.state.total() - 1.0).abs());
        }
    }

    /// Folds in a maximum computed elsewhere over `runs` runs.
    pub fn merge(&mut self, max: f64, runs: usize) {
        self.max = self.max.max(max);
        self.runs += runs;
    }
}

pub fn timed<T>(f: impl FnOnce() -> T) -> (T, Duration) {
    let t0 = Instant::now();
    let v = f();
    (v, t0.elapsed())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn verdict_lines() {
        assert_eq!(Verdict::new(true, "x = 1").line("1 a"), "PASS 1 a: x = 1");
        assert_eq!(Verdict::new(false, "").line("2 b"), "FAIL 2 b: ");
    }
}
