//! Human-readable and JSON rendering of ranked redundancy pairs with
//! their full calling contexts.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classify::PairKind;
use crate::profile::{MetricSummary, PairCounts, RankedPair};
use crate::trace::{ContextId, ContextTable, Frame};

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("context {0} not present in the trace's context table")]
    UnresolvedContext(ContextId),
    #[error("malformed report: {0}")]
    Malformed(String),
}

pub const REDUNDANT_SEPARATOR: &str = "******** REDUNDANT WITH ********";

/// Percentage with two decimals; Rust's float formatting rounds ties to
/// even, matching the JSON full-precision values.
fn format_pct(fraction: f64) -> String {
    format!("{:.2}%", fraction * 100.0)
}

fn push_stack(out: &mut String, frames: &[Frame]) {
    for (depth, frame) in frames.iter().enumerate() {
        for _ in 0..=depth {
            out.push(' ');
        }
        out.push_str(&format!(
            "{}:{} [{}]\n",
            frame.function, frame.line, frame.instruction
        ));
    }
}

fn resolve(contexts: &ContextTable, id: ContextId) -> Result<&[Frame], ReportError> {
    contexts
        .get(id)
        .map(|ctx| ctx.frames.as_slice())
        .ok_or(ReportError::UnresolvedContext(id))
}

/// Renders the top `top_k` pairs as text: armed stack, separator, trap
/// stack, pair fraction. Deterministic for a given input.
pub fn render_text(
    summary: &MetricSummary,
    contexts: &ContextTable,
    top_k: usize,
) -> Result<String, ReportError> {
    debug_assert!(top_k >= 1);
    let mut out = String::new();
    out.push_str(&format!(
        "{} waste: program fraction {} ({} of {} bytes)\n",
        summary.kind,
        format_pct(summary.program_fraction),
        summary.wasteful_bytes,
        summary.total_bytes,
    ));
    if summary.ranked.is_empty() {
        out.push_str("no pairs\n");
        return Ok(out);
    }
    out.push_str(&format!(
        "pairs: {} (showing top {})\n",
        summary.ranked.len(),
        top_k.min(summary.ranked.len()),
    ));
    for (rank, pair) in summary.ranked.iter().take(top_k).enumerate() {
        out.push_str(&format!(
            "\n#{} pair fraction {} ({} wasteful of {} bytes over {} episodes)\n",
            rank + 1,
            format_pct(pair.fraction),
            pair.counts.wasteful_bytes,
            pair.counts.total_bytes,
            pair.counts.pair_count,
        ));
        push_stack(&mut out, resolve(contexts, pair.armed_ctx)?);
        out.push_str(REDUNDANT_SEPARATOR);
        out.push('\n');
        push_stack(&mut out, resolve(contexts, pair.trap_ctx)?);
    }
    Ok(out)
}

#[derive(Serialize, Deserialize)]
struct ReportPairDoc {
    rank: usize,
    fraction: f64,
    wasteful_bytes: u64,
    total_bytes: u64,
    pair_count: u64,
    armed_ctx: ContextId,
    trap_ctx: ContextId,
    armed_frames: Vec<Frame>,
    trap_frames: Vec<Frame>,
}

#[derive(Serialize, Deserialize)]
struct ReportDoc {
    kind: PairKind,
    program_fraction: f64,
    wasteful_bytes: u64,
    total_bytes: u64,
    pairs: Vec<ReportPairDoc>,
}

/// Lossless JSON dump of the whole summary with resolved stacks; fractions
/// keep full precision.
pub fn render_json(summary: &MetricSummary, contexts: &ContextTable) -> Result<String, ReportError> {
    let mut pairs = Vec::with_capacity(summary.ranked.len());
    for (rank, pair) in summary.ranked.iter().enumerate() {
        pairs.push(ReportPairDoc {
            rank: rank + 1,
            fraction: pair.fraction,
            wasteful_bytes: pair.counts.wasteful_bytes,
            total_bytes: pair.counts.total_bytes,
            pair_count: pair.counts.pair_count,
            armed_ctx: pair.armed_ctx,
            trap_ctx: pair.trap_ctx,
            armed_frames: resolve(contexts, pair.armed_ctx)?.to_vec(),
            trap_frames: resolve(contexts, pair.trap_ctx)?.to_vec(),
        });
    }
    let doc = ReportDoc {
        kind: summary.kind,
        program_fraction: summary.program_fraction,
        wasteful_bytes: summary.wasteful_bytes,
        total_bytes: summary.total_bytes,
        pairs,
    };
    Ok(serde_json::to_string(&doc).expect("report serializes"))
}

/// Parses a JSON report back into the summary it was rendered from.
pub fn parse_json(text: &str) -> Result<MetricSummary, ReportError> {
    let doc: ReportDoc =
        serde_json::from_str(text).map_err(|e| ReportError::Malformed(e.to_string()))?;
    Ok(MetricSummary {
        kind: doc.kind,
        program_fraction: doc.program_fraction,
        wasteful_bytes: doc.wasteful_bytes,
        total_bytes: doc.total_bytes,
        ranked: doc
            .pairs
            .into_iter()
            .map(|p| RankedPair {
                armed_ctx: p.armed_ctx,
                trap_ctx: p.trap_ctx,
                counts: PairCounts {
                    wasteful_bytes: p.wasteful_bytes,
                    total_bytes: p.total_bytes,
                    pair_count: p.pair_count,
                },
                fraction: p.fraction,
            })
            .collect(),
    })
}
