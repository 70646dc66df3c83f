//! Trace-driven detection of wasteful memory operations.
//!
//! A faithful simulation of PMU-sampled memory accesses and a small bank
//! of hardware watchpoints replays recorded traces to find dead stores,
//! silent stores, and silent loads, attributing each redundancy to the
//! pair of calling contexts involved. An exhaustive oracle computes the
//! same metrics without sampling so the sampled estimates can be
//! validated.

pub mod classify;
pub mod detector;
pub mod gen;
pub mod manifest;
pub mod oracle;
pub mod profile;
pub mod report;
pub mod sampler;
pub mod trace;
pub mod watchpoints;

pub use classify::{EqualityConfig, PairKind};
pub use detector::{run_sampled, run_sampled_per_thread, DetectorConfig};
pub use oracle::detect_exact;
pub use profile::{compute_metrics, confidence_interval, merge, Profile};
pub use trace::{parse_trace, serialize_trace, Trace};
