//! Calling-context-pair profiles, waste-fraction metrics, cross-thread
//! merging, and the confidence-interval helper used by multi-run benches.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classify::{EpisodeOutcome, PairKind};
use crate::trace::ContextId;

#[derive(Debug, Error)]
pub enum ProfileError {
    #[error("cannot merge {found} profile into {expected} profile")]
    KindMismatch { expected: PairKind, found: PairKind },
    #[error("confidence interval needs at least 2 samples, got {0}")]
    TooFewSamples(usize),
    #[error("malformed profile: {0}")]
    Malformed(String),
}

/// Where a profile's counts came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProfileOrigin {
    Thread(u32),
    Merged,
}

/// Byte and episode counters for one context pair.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairCounts {
    pub wasteful_bytes: u64,
    pub total_bytes: u64,
    pub pair_count: u64,
}

fn add_counter(counter: &mut u64, amount: u64) {
    *counter = counter
        .checked_add(amount)
        .expect("byte counter overflow");
}

/// Aggregated completed episodes keyed by (armed context, trap context).
#[derive(Debug, Clone, PartialEq)]
pub struct Profile {
    pub kind: PairKind,
    pub origin: ProfileOrigin,
    pairs: BTreeMap<(ContextId, ContextId), PairCounts>,
}

impl Profile {
    pub fn new(kind: PairKind, origin: ProfileOrigin) -> Self {
        Self {
            kind,
            origin,
            pairs: BTreeMap::new(),
        }
    }

    /// Folds one completed episode into the pair table. Wasteful bytes
    /// count toward both numerator and denominator, non-wasteful bytes
    /// toward the denominator only, inconclusive episodes toward neither.
    pub fn record(&mut self, armed_ctx: ContextId, trap_ctx: ContextId, outcome: EpisodeOutcome) {
        let entry = match outcome {
            EpisodeOutcome::Inconclusive => return,
            _ => self.pairs.entry((armed_ctx, trap_ctx)).or_default(),
        };
        match outcome {
            EpisodeOutcome::Wasteful(bytes) => {
                add_counter(&mut entry.wasteful_bytes, bytes);
                add_counter(&mut entry.total_bytes, bytes);
                entry.pair_count += 1;
            }
            EpisodeOutcome::NotWasteful(bytes) => {
                add_counter(&mut entry.total_bytes, bytes);
                entry.pair_count += 1;
            }
            EpisodeOutcome::Inconclusive => unreachable!(),
        }
    }

    pub fn pairs(&self) -> &BTreeMap<(ContextId, ContextId), PairCounts> {
        &self.pairs
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn wasteful_bytes(&self) -> u64 {
        self.pairs.values().map(|c| c.wasteful_bytes).sum()
    }

    pub fn total_bytes(&self) -> u64 {
        self.pairs.values().map(|c| c.total_bytes).sum()
    }

    pub fn fraction(&self) -> f64 {
        let total = self.total_bytes();
        if total == 0 {
            0.0
        } else {
            self.wasteful_bytes() as f64 / total as f64
        }
    }
}

// Stable on-disk shape: the pair table as an array sorted by key.

#[derive(Serialize, Deserialize)]
struct PairEntryDoc {
    armed_ctx: ContextId,
    trap_ctx: ContextId,
    wasteful_bytes: u64,
    total_bytes: u64,
    pair_count: u64,
}

#[derive(Serialize, Deserialize)]
struct ProfileDoc {
    kind: PairKind,
    origin: ProfileOrigin,
    pairs: Vec<PairEntryDoc>,
}

impl Serialize for Profile {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        ProfileDoc {
            kind: self.kind,
            origin: self.origin,
            pairs: self
                .pairs
                .iter()
                .map(|(&(armed_ctx, trap_ctx), counts)| PairEntryDoc {
                    armed_ctx,
                    trap_ctx,
                    wasteful_bytes: counts.wasteful_bytes,
                    total_bytes: counts.total_bytes,
                    pair_count: counts.pair_count,
                })
                .collect(),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Profile {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let doc = ProfileDoc::deserialize(deserializer)?;
        let mut pairs = BTreeMap::new();
        for entry in doc.pairs {
            if entry.wasteful_bytes > entry.total_bytes {
                return Err(serde::de::Error::custom(format!(
                    "pair ({}, {}) has wasteful_bytes > total_bytes",
                    entry.armed_ctx, entry.trap_ctx
                )));
            }
            let key = (entry.armed_ctx, entry.trap_ctx);
            if pairs
                .insert(
                    key,
                    PairCounts {
                        wasteful_bytes: entry.wasteful_bytes,
                        total_bytes: entry.total_bytes,
                        pair_count: entry.pair_count,
                    },
                )
                .is_some()
            {
                return Err(serde::de::Error::custom(format!(
                    "duplicate pair ({}, {})",
                    entry.armed_ctx, entry.trap_ctx
                )));
            }
        }
        Ok(Profile {
            kind: doc.kind,
            origin: doc.origin,
            pairs,
        })
    }
}

/// Sums per-thread profiles entry-wise. Pairs from different threads
/// coalesce iff they have identical (armed, trap) calling contexts.
/// Merging nothing yields the empty profile of `kind`.
pub fn merge(kind: PairKind, profiles: &[Profile]) -> Result<Profile, ProfileError> {
    let mut merged = Profile::new(kind, ProfileOrigin::Merged);
    for profile in profiles {
        if profile.kind != kind {
            return Err(ProfileError::KindMismatch {
                expected: kind,
                found: profile.kind,
            });
        }
        for (&key, counts) in &profile.pairs {
            let entry = merged.pairs.entry(key).or_default();
            add_counter(&mut entry.wasteful_bytes, counts.wasteful_bytes);
            add_counter(&mut entry.total_bytes, counts.total_bytes);
            add_counter(&mut entry.pair_count, counts.pair_count);
        }
    }
    Ok(merged)
}

/// One entry of a ranked metric summary.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankedPair {
    pub armed_ctx: ContextId,
    pub trap_ctx: ContextId,
    pub counts: PairCounts,
    /// Wasteful bytes of this pair over the profile-wide denominator.
    pub fraction: f64,
}

/// Program-wide fraction plus pairs ranked by wasteful bytes.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricSummary {
    pub kind: PairKind,
    pub program_fraction: f64,
    pub wasteful_bytes: u64,
    pub total_bytes: u64,
    pub ranked: Vec<RankedPair>,
}

/// Computes program and per-pair fractions. Every pair fraction shares the
/// profile-wide denominator. Ranking is by descending wasteful bytes with
/// (armed, trap) context ids breaking ties.
pub fn compute_metrics(profile: &Profile) -> MetricSummary {
    let total = profile.total_bytes();
    let wasteful = profile.wasteful_bytes();
    let denom = total as f64;
    let mut ranked: Vec<RankedPair> = profile
        .pairs
        .iter()
        .map(|(&(armed_ctx, trap_ctx), &counts)| RankedPair {
            armed_ctx,
            trap_ctx,
            counts,
            fraction: if total == 0 {
                0.0
            } else {
                counts.wasteful_bytes as f64 / denom
            },
        })
        .collect();
    ranked.sort_by(|a, b| {
        b.counts
            .wasteful_bytes
            .cmp(&a.counts.wasteful_bytes)
            .then_with(|| (a.armed_ctx, a.trap_ctx).cmp(&(b.armed_ctx, b.trap_ctx)))
    });
    MetricSummary {
        kind: profile.kind,
        program_fraction: if total == 0 {
            0.0
        } else {
            wasteful as f64 / total as f64
        },
        wasteful_bytes: wasteful,
        total_bytes: total,
        ranked,
    }
}

/// Mean and `z * s / sqrt(n)` half-width over repeated-run fractions,
/// with `s` the sample standard deviation (n-1 divisor).
pub fn confidence_interval(samples: &[f64], z: f64) -> Result<(f64, f64), ProfileError> {
    let n = samples.len();
    if n < 2 {
        return Err(ProfileError::TooFewSamples(n));
    }
    let mean = samples.iter().sum::<f64>() / n as f64;
    let variance =
        samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0);
    Ok((mean, z * variance.sqrt() / (n as f64).sqrt()))
}
