//! Objective-based early termination.
//!
//! Stop once the last `patience` objective values have all been strictly
//! above the lowest value seen before them; the lowest-objective iterate is
//! the answer.

#[derive(Clone, Debug, PartialEq)]
pub struct EarlyStopMonitor {
    patience: usize,
    best_value: f64,
    best_index: Option<usize>,
    above: usize,
    seen: usize,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum StopDecision {
    Continue,
    /// Stop; `best_index` is the 0-based position of the minimum.
    Stop { best_index: usize, best_value: f64 },
}

/// Outcome of observing one value.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Observed {
    NewBest,
    NotBest,
}

impl EarlyStopMonitor {
    pub fn new(patience: usize) -> Self {
        Self {
            patience,
            best_value: f64::INFINITY,
            best_index: None,
            above: 0,
            seen: 0,
        }
    }

    pub fn patience(&self) -> usize {
        self.patience
    }

    pub fn best(&self) -> Option<(usize, f64)> {
        self.best_index.map(|i| (i, self.best_value))
    }

    pub fn observe(&mut self, value: f64) -> (Observed, StopDecision) {
        let index = self.seen;
        self.seen += 1;
        let observed = if value < self.best_value {
            self.best_value = value;
            self.best_index = Some(index);
            self.above = 0;
            Observed::NewBest
        } else {
            if value > self.best_value {
                self.above += 1;
            } else {
                self.above = 0;
            }
            Observed::NotBest
        };
        (observed, self.decision())
    }

    pub fn decision(&self) -> StopDecision {
        match self.best_index {
            Some(best_index) if self.patience > 0 && self.above >= self.patience => StopDecision::Stop {
                best_index,
                best_value: self.best_value,
            },
            _ => StopDecision::Continue,
        }
    }
}

/// Replays `history` through a fresh monitor and reports the first stop, if
/// any. `patience == 0` disables stopping.
pub fn early_stop_monitor(history: &[f64], patience: usize) -> Option<(usize, StopDecision)> {
    let mut monitor = EarlyStopMonitor::new(patience);
    for (k, &v) in history.iter().enumerate() {
        let (_, decision) = monitor.observe(v);
        if matches!(decision, StopDecision::Stop { .. }) {
            return Some((k, decision));
        }
    }
    None
}
