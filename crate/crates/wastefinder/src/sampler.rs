//! Deterministic stand-in for PMU event sampling: a per-thread counter of
//! the subscribed access kind that fires every `period` events, offset by
//! an optional phase.

use crate::trace::AccessKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SamplerConfig {
    /// Subscribed events per sample; must be at least 1.
    pub period: u64,
    /// Which access kind is counted.
    pub subscribed: AccessKind,
    /// Initial counter offset in `[0, period)`.
    pub phase: u64,
}

impl SamplerConfig {
    pub fn new(period: u64, subscribed: AccessKind, phase: u64) -> Self {
        assert!(period >= 1, "period must be at least 1");
        assert!(phase < period, "phase must be below period");
        Self {
            period,
            subscribed,
            phase,
        }
    }
}

/// Per-thread counter state; always in `[0, period)`.
#[derive(Debug, Clone, Copy, Default)]
pub struct SamplerState {
    counter: u64,
}

impl SamplerState {
    pub fn new(cfg: &SamplerConfig) -> Self {
        Self { counter: cfg.phase }
    }

    /// Counts `kind` if subscribed; returns true exactly on overflow, which
    /// resets the counter.
    pub fn observe(&mut self, kind: AccessKind, cfg: &SamplerConfig) -> bool {
        if kind != cfg.subscribed {
            return false;
        }
        self.counter += 1;
        if self.counter >= cfg.period {
            self.counter = 0;
            true
        } else {
            false
        }
    }
}
