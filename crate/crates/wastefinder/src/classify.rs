//! Pair classification rules for the three redundancy kinds.
//!
//! These functions are pure and shared by the exhaustive oracle and the
//! sampled detector, so both agree on what counts as wasteful by
//! construction.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::trace::{AccessEvent, AccessKind, Value};

/// The redundancy pattern being detected.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PairKind {
    /// A store overwritten by a later store with no intervening load.
    DeadStore,
    /// A store writing the value the location already holds.
    SilentStore,
    /// A load returning the value the previous load already returned.
    SilentLoad,
}

impl PairKind {
    pub const ALL: [PairKind; 3] = [PairKind::DeadStore, PairKind::SilentStore, PairKind::SilentLoad];

    /// Which access kind gets armed (and PMU-sampled) for this detection.
    pub fn armed_kind(self) -> AccessKind {
        match self {
            PairKind::DeadStore | PairKind::SilentStore => AccessKind::Store,
            PairKind::SilentLoad => AccessKind::Load,
        }
    }

    /// Whether an access of `kind` fires the watchpoint used for this
    /// detection. Silent-store watchpoints trap on stores only; the other
    /// two trap on any access.
    pub fn traps_on(self, kind: AccessKind) -> bool {
        match self {
            PairKind::SilentStore => kind == AccessKind::Store,
            PairKind::DeadStore | PairKind::SilentLoad => true,
        }
    }
}

impl fmt::Display for PairKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PairKind::DeadStore => write!(f, "dead-store"),
            PairKind::SilentStore => write!(f, "silent-store"),
            PairKind::SilentLoad => write!(f, "silent-load"),
        }
    }
}

#[derive(Debug, Error)]
pub enum ClassifyError {
    #[error("fp threshold must be in [0, 1), got {0}")]
    InvalidThreshold(f64),
}

/// Value-equality settings. Integers compare exactly; floats compare
/// within a relative threshold of difference.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EqualityConfig {
    fp_threshold: f64,
}

impl EqualityConfig {
    pub fn new(fp_threshold: f64) -> Result<Self, ClassifyError> {
        if !(0.0..1.0).contains(&fp_threshold) {
            return Err(ClassifyError::InvalidThreshold(fp_threshold));
        }
        Ok(Self { fp_threshold })
    }

    pub fn fp_threshold(&self) -> f64 {
        self.fp_threshold
    }
}

impl Default for EqualityConfig {
    fn default() -> Self {
        Self { fp_threshold: 0.01 }
    }
}

/// What a completed episode contributed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EpisodeOutcome {
    /// Redundant bytes: counted in both numerator and denominator.
    Wasteful(u64),
    /// Monitored but not redundant: counted in the denominator only.
    NotWasteful(u64),
    /// No verdict either way; contributes nothing.
    Inconclusive,
}

fn floats_equal(a: f64, b: f64, threshold: f64) -> bool {
    if a.is_nan() || b.is_nan() {
        return false;
    }
    if a == 0.0 && b == 0.0 {
        return true;
    }
    (a - b).abs() <= threshold * a.abs().max(b.abs())
}

/// Exact equality for integers; relative-threshold equality for floats of
/// the same tag; mismatched tags and NaNs are never equal.
pub fn values_equal(v1: Value, v2: Value, cfg: EqualityConfig) -> bool {
    match (v1, v2) {
        (Value::Int(a), Value::Int(b)) => a == b,
        (Value::F32(a), Value::F32(b)) => floats_equal(a as f64, b as f64, cfg.fp_threshold),
        (Value::F64(a), Value::F64(b)) => floats_equal(a, b, cfg.fp_threshold),
        _ => false,
    }
}

/// Classifies a watchpoint trap against the access that armed it.
///
/// Preconditions (programming errors if violated): both events belong to
/// the same thread, the trap overlaps the armed byte range, and the trap
/// comes later in that thread's stream.
pub fn classify_trap(
    kind: PairKind,
    armed: &AccessEvent,
    trap: &AccessEvent,
    cfg: EqualityConfig,
) -> EpisodeOutcome {
    debug_assert_eq!(armed.thread_id, trap.thread_id);
    debug_assert!(armed.overlaps(trap));
    debug_assert!(trap.seq > armed.seq);
    debug_assert_eq!(armed.kind, kind.armed_kind());

    let same_location = armed.address == trap.address && armed.width == trap.width;
    match kind {
        PairKind::DeadStore => match trap.kind {
            AccessKind::Store => EpisodeOutcome::Wasteful(armed.overlap_bytes(trap)),
            AccessKind::Load => EpisodeOutcome::NotWasteful(armed.width as u64),
        },
        PairKind::SilentStore => {
            debug_assert_eq!(trap.kind, AccessKind::Store);
            if same_location && values_equal(armed.value, trap.value, cfg) {
                EpisodeOutcome::Wasteful(armed.width as u64)
            } else {
                EpisodeOutcome::NotWasteful(armed.width as u64)
            }
        }
        PairKind::SilentLoad => match trap.kind {
            AccessKind::Store => EpisodeOutcome::Inconclusive,
            AccessKind::Load => {
                if same_location && values_equal(armed.value, trap.value, cfg) {
                    EpisodeOutcome::Wasteful(armed.width as u64)
                } else {
                    EpisodeOutcome::NotWasteful(armed.width as u64)
                }
            }
        },
    }
}
