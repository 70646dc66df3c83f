//! Shared helpers for integration tests: a randomized trace builder with
//! epoch-tagged contexts and a deliberately naive replace-the-oldest
//! watchpoint policy used as a baseline.

#![allow(dead_code)]

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use wastefinder::classify::{classify_trap, EpisodeOutcome, EqualityConfig, PairKind};
use wastefinder::trace::{
    AccessEvent, AccessKind, CallingContext, ContextId, EpochMarker, Frame, Trace, TraceRecord,
    Value,
};

pub struct TraceSpec {
    pub seed: u64,
    pub threads: u32,
    pub events: usize,
    /// Number of distinct address ranges accesses draw from.
    pub pool: usize,
    /// Per-step chance of inserting an epoch marker.
    pub epoch_probability: f64,
}

/// Context ids encode the epoch the event was generated in, so tests can
/// verify that no emitted pair straddles an epoch.
pub fn ctx_epoch(ctx: ContextId) -> u32 {
    ctx / 1000
}

/// Builds a random trace: accesses over a small pool of (possibly
/// overlapping) byte ranges, a couple of threads, colliding values, and
/// optional epoch markers. Context ids are `epoch * 1000 + site`.
pub fn random_trace(spec: &TraceSpec) -> Trace {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let base = 0x4000u64;
    let widths = [1u8, 2, 4, 8];
    let ranges: Vec<(u64, u8)> = (0..spec.pool)
        .map(|_| {
            (
                base + rng.random_range(0..48u64),
                *widths.choose(&mut rng).unwrap(),
            )
        })
        .collect();
    let f64_values = [1.0f64, 1.004, 2.0];

    let mut trace = Trace::default();
    let mut seqs = std::collections::HashMap::new();
    let mut epoch = 0u32;
    for i in 0..spec.events {
        if i > 0 && rng.random_bool(spec.epoch_probability) {
            epoch += 1;
            let position = trace.records.len();
            trace.records.push(TraceRecord::Epoch(EpochMarker {
                epoch_id: epoch,
                position,
            }));
        }
        let thread_id = rng.random_range(0..spec.threads);
        let (address, width) = ranges[rng.random_range(0..ranges.len())];
        let kind = if rng.random_bool(0.5) {
            AccessKind::Store
        } else {
            AccessKind::Load
        };
        let value = if width == 8 && rng.random_bool(0.3) {
            Value::F64(*f64_values.choose(&mut rng).unwrap())
        } else {
            Value::Int(rng.random_range(0..3i64))
        };
        let site = rng.random_range(1..=6u32);
        let context_id = epoch * 1000 + site;
        if !trace.contexts.contains(context_id) {
            trace
                .contexts
                .insert(CallingContext {
                    id: context_id,
                    frames: vec![Frame {
                        function: format!("Gen.site{site}"),
                        line: site,
                        instruction: "mov".to_string(),
                    }],
                })
                .unwrap();
        }
        let seq = seqs
            .entry(thread_id)
            .and_modify(|s| *s += rng.random_range(1..=3u64))
            .or_insert(1);
        trace.records.push(TraceRecord::Event(AccessEvent {
            thread_id,
            seq: *seq,
            kind,
            address,
            width,
            value,
            context_id,
        }));
    }
    trace
}

/// Silent-load detection with the naive replace-the-oldest watchpoint
/// policy, single thread, no epochs. Returns the number of wasteful pair
/// episodes it finds.
pub fn run_naive_oldest(trace: &Trace, period: u64, registers: usize, eq: EqualityConfig) -> u64 {
    let mut slots: Vec<Option<(AccessEvent, u64)>> = vec![None; registers];
    let mut counter = 0u64;
    let mut arm_order = 0u64;
    let mut wasteful_pairs = 0u64;
    for e in trace.events() {
        for slot in slots.iter_mut() {
            if let Some((armed, _)) = slot {
                if armed.overlaps(e) {
                    if matches!(
                        classify_trap(PairKind::SilentLoad, armed, e, eq),
                        EpisodeOutcome::Wasteful(_)
                    ) {
                        wasteful_pairs += 1;
                    }
                    *slot = None;
                }
            }
        }
        if e.kind == AccessKind::Load {
            counter += 1;
            if counter == period {
                counter = 0;
                arm_order += 1;
                let target = slots.iter().position(Option::is_none).unwrap_or_else(|| {
                    slots
                        .iter()
                        .enumerate()
                        .min_by_key(|(_, s)| s.as_ref().unwrap().1)
                        .map(|(i, _)| i)
                        .unwrap()
                });
                slots[target] = Some((*e, arm_order));
            }
        }
    }
    wasteful_pairs
}
