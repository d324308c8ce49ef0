use serde::{Deserialize, Serialize};

/// Binary exponential backoff window.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContentionWindow {
    cw: u32,
    min: u32,
    max: u32,
}

impl ContentionWindow {
    pub fn new(min: u32, max: u32) -> Self {
        assert!(min >= 1 && min <= max, "contention window bounds {min}..{max}");
        ContentionWindow { cw: min, min, max }
    }

    pub fn value(&self) -> u32 {
        self.cw
    }

    pub fn on_failure(&mut self) {
        self.cw = self.cw.saturating_mul(2).min(self.max);
    }

    pub fn reset(&mut self) {
        self.cw = self.min;
    }

    /// Window expected after `failures` consecutive failures.
    pub fn after_failures(min: u32, max: u32, failures: u32) -> u32 {
        (min as u64)
            .checked_shl(failures)
            .map_or(max as u64, |v| v.min(max as u64)) as u32
    }
}
