//! Synthetic trace generators reproducing the classic wasteful-access
//! shapes: long-distance silent loads, dead stores in a loop body, and
//! silent argument-pushing stores.
//!
//! Generators are deterministic for a fixed (parameters, seed) and always
//! produce traces that pass [`crate::trace::parse_trace`] validation. The
//! loaded values are consistent with the stores that precede them, as a
//! real execution's would be.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::trace::{
    AccessEvent, AccessKind, CallingContext, ContextId, Frame, Trace, TraceRecord, Value,
};

#[derive(Debug, Error)]
pub enum GenError {
    #[error("size must be at least 1")]
    ZeroSize,
}

struct TraceBuilder {
    trace: Trace,
    next_seq: u64,
}

impl TraceBuilder {
    fn new() -> Self {
        Self {
            trace: Trace::default(),
            next_seq: 1,
        }
    }

    fn context(&mut self, id: ContextId, frames: &[(&str, u32, &str)]) -> ContextId {
        let frames = frames
            .iter()
            .map(|(function, line, instruction)| Frame {
                function: (*function).to_string(),
                line: *line,
                instruction: (*instruction).to_string(),
            })
            .collect();
        self.trace
            .contexts
            .insert(CallingContext { id, frames })
            .expect("generator context ids are unique");
        id
    }

    fn access(&mut self, kind: AccessKind, address: u64, width: u8, value: Value, ctx: ContextId) {
        let seq = self.next_seq;
        self.next_seq += 1;
        self.trace.records.push(TraceRecord::Event(AccessEvent {
            thread_id: 0,
            seq,
            kind,
            address,
            width,
            value,
            context_id: ctx,
        }));
    }

    fn store(&mut self, address: u64, value: Value, ctx: ContextId) {
        self.access(AccessKind::Store, address, 8, value, ctx);
    }

    fn load(&mut self, address: u64, value: Value, ctx: ContextId) {
        self.access(AccessKind::Load, address, 8, value, ctx);
    }
}

fn seeded_base(rng: &mut ChaCha8Rng) -> u64 {
    0x10_0000 + 8 * rng.random_range(0..4096u64)
}

/// An array is initialized by `n` stores and then read twice, front to
/// back, with nothing modifying it in between: every second-pass load
/// repeats the first-pass load of the same element.
pub fn gen_two_pass_scan(n: u64, seed: u64) -> Result<Trace, GenError> {
    if n == 0 {
        return Err(GenError::ZeroSize);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let base = seeded_base(&mut rng);
    let values: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();

    let mut b = TraceBuilder::new();
    let run = ("TwoPassScan.run", 40, "call");
    let init = b.context(1, &[run, ("TwoPassScan.init", 12, "vmovsd")]);
    let first = b.context(2, &[run, ("TwoPassScan.sumFirst", 21, "vaddsd")]);
    let second = b.context(3, &[run, ("TwoPassScan.sumSecond", 29, "vaddsd")]);

    for (i, &v) in values.iter().enumerate() {
        b.store(base + 8 * i as u64, Value::F64(v), init);
    }
    for pass_ctx in [first, second] {
        for (i, &v) in values.iter().enumerate() {
            b.load(base + 8 * i as u64, Value::F64(v), pass_ctx);
        }
    }
    Ok(b.trace)
}

/// Each iteration writes a scratch field, reads an unrelated input, writes
/// the scratch field again, and only then reads it back: the first write
/// of every iteration is dead, the second is not. Exactly half of the
/// completed store episodes are wasteful.
pub fn gen_dead_store_loop(iters: u64, seed: u64) -> Result<Trace, GenError> {
    if iters == 0 {
        return Err(GenError::ZeroSize);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scratch = seeded_base(&mut rng);
    let input = scratch + 64;
    let input_value = Value::F64(rng.random::<f64>());

    let mut b = TraceBuilder::new();
    let caller = ("Solver.step", 88, "call");
    let first_write = b.context(1, &[caller, ("Solver.calculateDamping", 5, "vmovsd")]);
    let read_input = b.context(2, &[caller, ("Solver.calculateDamping", 7, "vmovsd")]);
    let second_write = b.context(3, &[caller, ("Solver.calculateDamping", 12, "vmovsd")]);
    let read_back = b.context(4, &[caller, ("Solver.calculateDamping", 14, "vaddsd")]);

    for _ in 0..iters {
        let overwritten = Value::F64(rng.random::<f64>());
        let kept = Value::F64(rng.random::<f64>());
        b.store(scratch, overwritten, first_write);
        b.load(input, input_value, read_input);
        b.store(scratch, kept, second_write);
        b.load(scratch, kept, read_back);
    }
    Ok(b.trace)
}

/// A helper taking constant arguments is called once per iteration, so the
/// same four values are pushed to the same four stack slots every time:
/// from iteration 2 onward every argument store is silent.
pub fn gen_silent_call_args(iters: u64, seed: u64) -> Result<Trace, GenError> {
    if iters == 0 {
        return Err(GenError::ZeroSize);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let stack = seeded_base(&mut rng);
    let args: Vec<f64> = (0..4).map(|_| rng.random::<f64>()).collect();

    let mut b = TraceBuilder::new();
    let caller = ("Rank.generate", 17, "call");
    let slots: Vec<ContextId> = (0..4)
        .map(|j| {
            b.context(
                j as ContextId + 1,
                &[caller, ("Rank.power", 3 + j as u32, "vmovsd")],
            )
        })
        .collect();

    for _ in 0..iters {
        for (j, &v) in args.iter().enumerate() {
            b.store(stack + 8 * j as u64, Value::F64(v), slots[j]);
        }
    }
    Ok(b.trace)
}
