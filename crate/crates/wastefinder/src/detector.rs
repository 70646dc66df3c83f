//! The sampled detection pipeline: PMU sampling drives watchpoint arming,
//! traps complete episodes, and completed episodes accumulate into
//! per-thread profiles that merge post-mortem.
//!
//! Per event, in order: a trap first completes any armed episodes the
//! event fires (never its own), then the event is counted by the sampler
//! and, on overflow, offered to the watchpoint bank. Watchpoints armed in
//! an earlier garbage-collection epoch are invalidated lazily: the first
//! event of a new epoch that fires a sample or a trap disarms the whole
//! bank for its thread before anything is recorded, so no pair ever spans
//! an epoch.

use rayon::prelude::*;
use thiserror::Error;

use crate::classify::{classify_trap, EqualityConfig, PairKind};
use crate::profile::{merge, Profile, ProfileOrigin};
use crate::sampler::{SamplerConfig, SamplerState};
use crate::trace::{AccessEvent, Trace};
use crate::watchpoints::{TrapType, WatchpointBank};

/// Registers supported per thread; mirrors the CLI bound.
pub const MAX_REGISTERS: usize = 16;

#[derive(Debug, Error)]
pub enum DetectorError {
    #[error("period must be at least 1")]
    InvalidPeriod,
    #[error("phase {phase} must be below period {period}")]
    InvalidPhase { phase: u64, period: u64 },
    #[error("registers must be in 1..={MAX_REGISTERS}, got {0}")]
    InvalidRegisters(usize),
}

/// Full configuration of one sampled detection run.
#[derive(Debug, Clone, Copy)]
pub struct DetectorConfig {
    pub kind: PairKind,
    pub sampler: SamplerConfig,
    pub registers: usize,
    pub seed: u64,
    pub equality: EqualityConfig,
}

impl DetectorConfig {
    /// Builds a validated configuration. The subscribed PMU event and the
    /// watchpoint trap type follow from the detection kind: stores are
    /// sampled for dead/silent stores, loads for silent loads; silent
    /// stores trap on stores only, the other two on any access.
    pub fn new(
        kind: PairKind,
        period: u64,
        phase: u64,
        registers: usize,
        seed: u64,
        equality: EqualityConfig,
    ) -> Result<Self, DetectorError> {
        if period < 1 {
            return Err(DetectorError::InvalidPeriod);
        }
        if phase >= period {
            return Err(DetectorError::InvalidPhase { phase, period });
        }
        if !(1..=MAX_REGISTERS).contains(&registers) {
            return Err(DetectorError::InvalidRegisters(registers));
        }
        Ok(Self {
            kind,
            sampler: SamplerConfig::new(period, kind.armed_kind(), phase),
            registers,
            seed,
            equality,
        })
    }

    pub fn trap_type(&self) -> TrapType {
        match self.kind {
            PairKind::SilentStore => TrapType::TrapOnStore,
            PairKind::DeadStore | PairKind::SilentLoad => TrapType::TrapOnAccess,
        }
    }
}

fn run_thread(thread_id: u32, events: &[(AccessEvent, u32)], cfg: &DetectorConfig) -> Profile {
    let mut sampler = SamplerState::new(&cfg.sampler);
    let mut bank = WatchpointBank::new(cfg.registers, cfg.seed);
    let mut profile = Profile::new(cfg.kind, ProfileOrigin::Thread(thread_id));
    let trap_type = cfg.trap_type();
    let mut epoch_seen = 0u32;

    for (event, epoch) in events {
        let fired = sampler.observe(event.kind, &cfg.sampler);
        if *epoch > epoch_seen && (fired || bank.would_trap(thread_id, event)) {
            bank.disarm_all(thread_id);
            epoch_seen = *epoch;
        }
        for (_slot, wp) in bank.check_trap(thread_id, event) {
            debug_assert_eq!(wp.armed.thread_id, event.thread_id);
            debug_assert!(wp.armed.seq < event.seq);
            let outcome = classify_trap(cfg.kind, &wp.armed, event, cfg.equality);
            profile.record(wp.armed.context_id, event.context_id, outcome);
        }
        if fired {
            bank.offer(thread_id, *event, trap_type);
        }
    }
    // Watchpoints still armed at the end of the trace never produced a
    // pair and contribute nothing.
    profile
}

/// Runs the sampled pipeline independently for each thread of the trace.
/// Profiles come back in thread-id order; results do not depend on worker
/// parallelism.
pub fn run_sampled_per_thread(trace: &Trace, cfg: &DetectorConfig) -> Vec<Profile> {
    let by_thread: Vec<(u32, Vec<(AccessEvent, u32)>)> =
        trace.events_by_thread().into_iter().collect();
    by_thread
        .par_iter()
        .map(|(thread_id, events)| run_thread(*thread_id, events, cfg))
        .collect()
}

/// Runs the sampled pipeline and merges the per-thread profiles.
pub fn run_sampled(trace: &Trace, cfg: &DetectorConfig) -> Profile {
    let profiles = run_sampled_per_thread(trace, cfg);
    merge(cfg.kind, &profiles).expect("per-thread profiles share the configured kind")
}
