//! Wall-clock source for latency and elapsed-time fields.
//!
//! Scripted runs use [`Clock::Frozen`] so transcripts and attempt files are
//! byte-identical across repeated runs.

use std::time::{Duration, Instant};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum Clock {
    #[default]
    System,
    Frozen,
}

impl Clock {
    pub fn start(self) -> Stopwatch {
        match self {
            Clock::System => Stopwatch(Some(Instant::now())),
            Clock::Frozen => Stopwatch(None),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Stopwatch(Option<Instant>);

impl Stopwatch {
    pub fn elapsed(&self) -> Duration {
        self.0.map(|t| t.elapsed()).unwrap_or(Duration::ZERO)
    }

    pub fn elapsed_ms(&self) -> u64 {
        self.elapsed().as_millis() as u64
    }
}
