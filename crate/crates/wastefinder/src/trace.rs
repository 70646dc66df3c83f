//! Memory-access trace model and its JSON Lines on-disk format.
//!
//! A trace is an ordered stream of per-thread load/store events and global
//! epoch markers, plus a table of calling contexts the events refer to.
//! Traces are immutable after parsing and safe to share across analysis
//! workers.
//!
//! Record kinds on disk (one JSON object per line, LF-terminated):
//!
//! ```text
//! {"t":"ctx","id":7,"frames":[{"fn":"FFT.inverse","line":52,"ins":"vmovsd"}]}
//! {"t":"ev","tid":0,"seq":12,"k":"S","addr":4096,"w":8,"vt":"i","v":5,"ctx":7}
//! {"t":"epoch","id":1}
//! ```
//!
//! Context records must precede their first use. A leading `{"t":"meta",...}`
//! record (the run manifest echoed by the generator) is accepted and skipped.
//! Canonical serialization writes all contexts first in id order, then the
//! event/epoch records in stream order.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Identifier of a calling context in the trace's context table.
pub type ContextId = u32;

/// Whether an access reads or writes memory.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AccessKind {
    Load,
    Store,
}

impl fmt::Display for AccessKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AccessKind::Load => write!(f, "load"),
            AccessKind::Store => write!(f, "store"),
        }
    }
}

/// The typed value moved by an access.
///
/// Floating-point payloads are finite or NaN; NaN compares unequal to
/// everything, including itself.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Value {
    Int(i64),
    F32(f32),
    F64(f64),
}

impl Value {
    pub fn tag(&self) -> &'static str {
        match self {
            Value::Int(_) => "i",
            Value::F32(_) => "f32",
            Value::F64(_) => "f64",
        }
    }
}

/// One load or store performed by one thread.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AccessEvent {
    pub thread_id: u32,
    /// Per-thread monotone ordinal.
    pub seq: u64,
    pub kind: AccessKind,
    /// Byte address of the first byte touched.
    pub address: u64,
    /// Access width in bytes: 1, 2, 4 or 8.
    pub width: u8,
    pub value: Value,
    pub context_id: ContextId,
}

impl AccessEvent {
    /// Exclusive end of the touched byte range, saturating at the top of
    /// the address space.
    pub fn range_end(&self) -> u64 {
        self.address.saturating_add(self.width as u64)
    }

    pub fn overlaps(&self, other: &AccessEvent) -> bool {
        self.address < other.range_end() && other.address < self.range_end()
    }

    /// Number of bytes shared by the two accesses' ranges.
    pub fn overlap_bytes(&self, other: &AccessEvent) -> u64 {
        let lo = self.address.max(other.address);
        let hi = self.range_end().min(other.range_end());
        hi.saturating_sub(lo)
    }
}

/// One stack frame of a calling context.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Frame {
    #[serde(rename = "fn")]
    pub function: String,
    pub line: u32,
    #[serde(rename = "ins")]
    pub instruction: String,
}

/// A full calling context: outermost frame first.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CallingContext {
    pub id: ContextId,
    pub frames: Vec<Frame>,
}

/// Context table keyed by id.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ContextTable {
    contexts: BTreeMap<ContextId, CallingContext>,
}

impl ContextTable {
    pub fn new() -> Self {
        Self::default()
    }

    /// Inserts a context; fails on duplicate ids.
    pub fn insert(&mut self, ctx: CallingContext) -> Result<(), ContextId> {
        let id = ctx.id;
        if self.contexts.contains_key(&id) {
            return Err(id);
        }
        self.contexts.insert(id, ctx);
        Ok(())
    }

    pub fn get(&self, id: ContextId) -> Option<&CallingContext> {
        self.contexts.get(&id)
    }

    pub fn contains(&self, id: ContextId) -> bool {
        self.contexts.contains_key(&id)
    }

    pub fn len(&self) -> usize {
        self.contexts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.contexts.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &CallingContext> {
        self.contexts.values()
    }
}

/// Garbage-collection boundary. Events between two markers belong to the
/// epoch started by the earlier marker; the trace starts in epoch 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EpochMarker {
    pub epoch_id: u32,
    /// Index of this marker in the record stream.
    pub position: usize,
}

/// One entry of the interleaved record stream.
#[derive(Debug, Clone, PartialEq)]
pub enum TraceRecord {
    Event(AccessEvent),
    Epoch(EpochMarker),
}

/// A validated trace: interleaved records plus the context table.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trace {
    pub records: Vec<TraceRecord>,
    pub contexts: ContextTable,
}

impl Trace {
    pub fn events(&self) -> impl Iterator<Item = &AccessEvent> {
        self.records.iter().filter_map(|r| match r {
            TraceRecord::Event(e) => Some(e),
            TraceRecord::Epoch(_) => None,
        })
    }

    pub fn event_count(&self) -> usize {
        self.events().count()
    }

    /// Number of epochs spanned by the trace (markers plus the implicit
    /// epoch 0).
    pub fn epoch_count(&self) -> usize {
        1 + self
            .records
            .iter()
            .filter(|r| matches!(r, TraceRecord::Epoch(_)))
            .count()
    }

    /// Events of each thread paired with the epoch they fall in, keyed by
    /// thread id. Per-thread order equals stream order.
    pub fn events_by_thread(&self) -> BTreeMap<u32, Vec<(AccessEvent, u32)>> {
        let mut by_thread: BTreeMap<u32, Vec<(AccessEvent, u32)>> = BTreeMap::new();
        let mut epoch = 0u32;
        for record in &self.records {
            match record {
                TraceRecord::Epoch(m) => epoch = m.epoch_id,
                TraceRecord::Event(e) => {
                    by_thread.entry(e.thread_id).or_default().push((*e, epoch));
                }
            }
        }
        by_thread
    }
}

/// Errors produced while parsing or validating a trace.
#[derive(Debug, Error)]
pub enum TraceError {
    #[error("line {line}: malformed record: {msg}")]
    Malformed { line: usize, msg: String },
    #[error("line {line}: invalid width {width} (must be 1, 2, 4 or 8)")]
    InvalidWidth { line: usize, width: u64 },
    #[error("line {line}: width {width} does not match {tag} value")]
    WidthValueMismatch {
        line: usize,
        width: u8,
        tag: &'static str,
    },
    #[error("line {line}: non-finite {tag} value (only finite or NaN allowed)")]
    NonFiniteValue { line: usize, tag: &'static str },
    #[error("line {line}: unknown context {context_id}")]
    UnknownContext { line: usize, context_id: ContextId },
    #[error("line {line}: duplicate context {context_id}")]
    DuplicateContext { line: usize, context_id: ContextId },
    #[error("line {line}: context {context_id} has no frames")]
    EmptyContext { line: usize, context_id: ContextId },
    #[error("line {line}: non-monotone seq {seq} for thread {thread_id}")]
    NonMonotoneSeq { line: usize, thread_id: u32, seq: u64 },
    #[error("line {line}: epoch id {found} out of order (expected {expected})")]
    EpochOutOfOrder { line: usize, found: u32, expected: u32 },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

// Wire-format structs. Field order here defines the canonical byte layout.

#[derive(Serialize, Deserialize)]
struct RawCtx {
    id: ContextId,
    frames: Vec<Frame>,
}

#[derive(Serialize, Deserialize)]
struct RawEv {
    tid: u32,
    seq: u64,
    k: String,
    addr: u64,
    w: u64,
    vt: String,
    v: serde_json::Value,
    ctx: ContextId,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "t")]
enum RawRecord {
    #[serde(rename = "ctx")]
    Ctx(RawCtx),
    #[serde(rename = "ev")]
    Ev(RawEv),
    #[serde(rename = "epoch")]
    Epoch { id: u32 },
    #[serde(rename = "meta")]
    Meta(serde_json::Value),
}

fn wire_value(value: &Value) -> serde_json::Value {
    match value {
        Value::Int(i) => serde_json::json!(i),
        Value::F32(x) if x.is_nan() => serde_json::json!("NaN"),
        Value::F32(x) => {
            // Go through the f32 serializer so the shortest f32-exact
            // decimal is written, not the widened f64 form.
            serde_json::to_value(x).expect("finite f32 serializes")
        }
        Value::F64(x) if x.is_nan() => serde_json::json!("NaN"),
        Value::F64(x) => serde_json::to_value(x).expect("finite f64 serializes"),
    }
}

fn parse_value(
    vt: &str,
    v: &serde_json::Value,
    line: usize,
) -> Result<Value, TraceError> {
    let malformed = |msg: String| TraceError::Malformed { line, msg };
    match vt {
        "i" => {
            let i = v
                .as_i64()
                .ok_or_else(|| malformed(format!("expected integer value, got {v}")))?;
            Ok(Value::Int(i))
        }
        "f32" | "f64" => {
            let x = if v.as_str() == Some("NaN") {
                f64::NAN
            } else {
                v.as_f64()
                    .ok_or_else(|| malformed(format!("expected float value, got {v}")))?
            };
            if vt == "f32" {
                let x = x as f32;
                if x.is_infinite() {
                    return Err(TraceError::NonFiniteValue { line, tag: "f32" });
                }
                Ok(Value::F32(x))
            } else {
                if x.is_infinite() {
                    return Err(TraceError::NonFiniteValue { line, tag: "f64" });
                }
                Ok(Value::F64(x))
            }
        }
        other => Err(malformed(format!("unknown value tag {other:?}"))),
    }
}

/// Parses and validates a JSONL trace.
pub fn parse_trace(input: &[u8]) -> Result<Trace, TraceError> {
    let text = std::str::from_utf8(input).map_err(|e| TraceError::Malformed {
        line: 0,
        msg: format!("not valid UTF-8: {e}"),
    })?;

    let mut trace = Trace::default();
    let mut last_seq: BTreeMap<u32, u64> = BTreeMap::new();
    let mut epochs_seen = 0u32;

    for (idx, raw_line) in text.lines().enumerate() {
        let line = idx + 1;
        if raw_line.trim().is_empty() {
            continue;
        }
        let record: RawRecord =
            serde_json::from_str(raw_line).map_err(|e| TraceError::Malformed {
                line,
                msg: e.to_string(),
            })?;
        match record {
            RawRecord::Meta(_) => {}
            RawRecord::Ctx(raw) => {
                if raw.frames.is_empty() {
                    return Err(TraceError::EmptyContext {
                        line,
                        context_id: raw.id,
                    });
                }
                trace
                    .contexts
                    .insert(CallingContext {
                        id: raw.id,
                        frames: raw.frames,
                    })
                    .map_err(|context_id| TraceError::DuplicateContext { line, context_id })?;
            }
            RawRecord::Epoch { id } => {
                let expected = epochs_seen + 1;
                if id != expected {
                    return Err(TraceError::EpochOutOfOrder {
                        line,
                        found: id,
                        expected,
                    });
                }
                epochs_seen = id;
                let position = trace.records.len();
                trace
                    .records
                    .push(TraceRecord::Epoch(EpochMarker {
                        epoch_id: id,
                        position,
                    }));
            }
            RawRecord::Ev(raw) => {
                if !matches!(raw.w, 1 | 2 | 4 | 8) {
                    return Err(TraceError::InvalidWidth { line, width: raw.w });
                }
                let width = raw.w as u8;
                let kind = match raw.k.as_str() {
                    "L" => AccessKind::Load,
                    "S" => AccessKind::Store,
                    other => {
                        return Err(TraceError::Malformed {
                            line,
                            msg: format!("unknown access kind {other:?}"),
                        })
                    }
                };
                let value = parse_value(&raw.vt, &raw.v, line)?;
                match value {
                    Value::F32(_) if width != 4 => {
                        return Err(TraceError::WidthValueMismatch {
                            line,
                            width,
                            tag: "f32",
                        })
                    }
                    Value::F64(_) if width != 8 => {
                        return Err(TraceError::WidthValueMismatch {
                            line,
                            width,
                            tag: "f64",
                        })
                    }
                    _ => {}
                }
                if !trace.contexts.contains(raw.ctx) {
                    return Err(TraceError::UnknownContext {
                        line,
                        context_id: raw.ctx,
                    });
                }
                if let Some(&prev) = last_seq.get(&raw.tid) {
                    if raw.seq <= prev {
                        return Err(TraceError::NonMonotoneSeq {
                            line,
                            thread_id: raw.tid,
                            seq: raw.seq,
                        });
                    }
                }
                last_seq.insert(raw.tid, raw.seq);
                trace.records.push(TraceRecord::Event(AccessEvent {
                    thread_id: raw.tid,
                    seq: raw.seq,
                    kind,
                    address: raw.addr,
                    width,
                    value,
                    context_id: raw.ctx,
                }));
            }
        }
    }
    Ok(trace)
}

fn serialize_record(out: &mut String, record: &RawRecord) {
    out.push_str(&serde_json::to_string(record).expect("trace records serialize"));
    out.push('\n');
}

/// Canonical serialization: contexts first in id order, then event and
/// epoch records in stream order. `serialize(parse(x))` is the canonical
/// form of `x` and is a fixed point of parse-then-serialize.
pub fn serialize_trace(trace: &Trace) -> String {
    let mut out = String::new();
    for ctx in trace.contexts.iter() {
        serialize_record(
            &mut out,
            &RawRecord::Ctx(RawCtx {
                id: ctx.id,
                frames: ctx.frames.clone(),
            }),
        );
    }
    for record in &trace.records {
        match record {
            TraceRecord::Epoch(m) => {
                serialize_record(&mut out, &RawRecord::Epoch { id: m.epoch_id })
            }
            TraceRecord::Event(e) => serialize_record(
                &mut out,
                &RawRecord::Ev(RawEv {
                    tid: e.thread_id,
                    seq: e.seq,
                    k: match e.kind {
                        AccessKind::Load => "L".to_string(),
                        AccessKind::Store => "S".to_string(),
                    },
                    addr: e.address,
                    w: e.width as u64,
                    vt: e.value.tag().to_string(),
                    v: wire_value(&e.value),
                    ctx: e.context_id,
                }),
            ),
        }
    }
    out
}
