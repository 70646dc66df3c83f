//! Exhaustive ground truth for the sampled detector.
//!
//! The oracle treats every eligible access as if it had been sampled and
//! armed, completes each episode at the first same-thread, same-epoch
//! access that would fire its watchpoint, and classifies the pair exactly
//! as the sampled path would. The sampled detector therefore estimates the
//! oracle's fractions by construction.

use std::collections::BTreeMap;

use crate::classify::{classify_trap, EpisodeOutcome, EqualityConfig, PairKind};
use crate::profile::{Profile, ProfileOrigin};
use crate::trace::{AccessEvent, ContextId, Trace, TraceRecord};

/// One completed episode.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PairObservation {
    pub armed_ctx: ContextId,
    pub trap_ctx: ContextId,
    pub kind: PairKind,
    pub wasteful: bool,
    pub bytes: u64,
}

/// Exact pair population and waste totals for one detection kind.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleResult {
    pub kind: PairKind,
    pub pairs: Vec<PairObservation>,
    pub wasteful_bytes: u64,
    pub total_bytes: u64,
}

impl OracleResult {
    /// Wasteful bytes over all monitored bytes; 0 when nothing completed.
    pub fn fraction(&self) -> f64 {
        if self.total_bytes == 0 {
            0.0
        } else {
            self.wasteful_bytes as f64 / self.total_bytes as f64
        }
    }

    pub fn wasteful_pair_count(&self) -> usize {
        self.pairs.iter().filter(|p| p.wasteful).count()
    }

    /// Aggregates the observation list into the same shape the sampled
    /// detector produces.
    pub fn to_profile(&self) -> Profile {
        let mut profile = Profile::new(self.kind, ProfileOrigin::Merged);
        for obs in &self.pairs {
            let outcome = if obs.wasteful {
                EpisodeOutcome::Wasteful(obs.bytes)
            } else {
                EpisodeOutcome::NotWasteful(obs.bytes)
            };
            profile.record(obs.armed_ctx, obs.trap_ctx, outcome);
        }
        profile
    }
}

/// Live armed episodes of one thread, indexed by range start so each
/// incoming access only inspects ranges that can overlap it.
#[derive(Default)]
struct LiveEpisodes {
    by_start: BTreeMap<u64, Vec<AccessEvent>>,
}

impl LiveEpisodes {
    fn arm(&mut self, event: AccessEvent) {
        self.by_start.entry(event.address).or_default().push(event);
    }

    /// Removes and returns every live episode overlapping `event`, in
    /// arming order.
    fn take_overlapping(&mut self, event: &AccessEvent) -> Vec<AccessEvent> {
        // Armed widths are at most 8 bytes, so only starts within 7 bytes
        // below the event can reach into it.
        let lo = event.address.saturating_sub(7);
        let hi = event.range_end();
        let mut hits = Vec::new();
        let mut emptied = Vec::new();
        for (&start, bucket) in self.by_start.range_mut(lo..hi) {
            let mut kept = Vec::new();
            for armed in bucket.drain(..) {
                if armed.overlaps(event) {
                    hits.push(armed);
                } else {
                    kept.push(armed);
                }
            }
            *bucket = kept;
            if bucket.is_empty() {
                emptied.push(start);
            }
        }
        for start in emptied {
            self.by_start.remove(&start);
        }
        hits.sort_by_key(|armed| armed.seq);
        hits
    }

    fn clear(&mut self) {
        self.by_start.clear();
    }
}

/// Computes the exact waste profile of `trace` for `kind`, arming every
/// eligible access. Episodes cut short by an epoch marker or by the end of
/// the trace contribute nothing.
pub fn detect_exact(trace: &Trace, kind: PairKind, cfg: EqualityConfig) -> OracleResult {
    let mut live: BTreeMap<u32, LiveEpisodes> = BTreeMap::new();
    let mut result = OracleResult {
        kind,
        pairs: Vec::new(),
        wasteful_bytes: 0,
        total_bytes: 0,
    };

    for record in &trace.records {
        let event = match record {
            TraceRecord::Epoch(_) => {
                // Episodes never span epochs.
                for episodes in live.values_mut() {
                    episodes.clear();
                }
                continue;
            }
            TraceRecord::Event(e) => e,
        };
        let episodes = live.entry(event.thread_id).or_default();
        if kind.traps_on(event.kind) {
            for armed in episodes.take_overlapping(event) {
                match classify_trap(kind, &armed, event, cfg) {
                    EpisodeOutcome::Wasteful(bytes) => {
                        result.pairs.push(PairObservation {
                            armed_ctx: armed.context_id,
                            trap_ctx: event.context_id,
                            kind,
                            wasteful: true,
                            bytes,
                        });
                        result.wasteful_bytes += bytes;
                        result.total_bytes += bytes;
                    }
                    EpisodeOutcome::NotWasteful(bytes) => {
                        result.pairs.push(PairObservation {
                            armed_ctx: armed.context_id,
                            trap_ctx: event.context_id,
                            kind,
                            wasteful: false,
                            bytes,
                        });
                        result.total_bytes += bytes;
                    }
                    EpisodeOutcome::Inconclusive => {}
                }
            }
        }
        if event.kind == kind.armed_kind() {
            episodes.arm(*event);
        }
    }
    result
}
