//! The evaluator role and output authentication.
//!
//! [`evaluate`] sees only public material: the circuit topology, the
//! garbled tables and the wire values it was handed. Nothing in this module
//! takes a seed, delta or mask except [`decode_outputs`], which runs on the
//! input owner's side.

mod tamper;

use std::time::{Duration, Instant};

use thiserror::Error;

use crate::circuit::{Circuit, Gate};
use crate::exec::Exec;
use crate::garbling::{
    gc_hash, row_index, GarbledCircuit, GarbledWireValue, OutputDecoding, WireLabel, LABEL_BYTES,
    ROW_BYTES,
};

pub use tamper::{
    run_tamper_trials, tamper_trial, Mutation, TamperOutcome, TamperSummary, VALUE_BITS,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EvalError {
    #[error("garbled circuit digest does not match the circuit")]
    DigestMismatch,
    #[error("garbled circuit has {got} tables, circuit has {expected} AND gates")]
    TableCountMismatch { expected: usize, got: usize },
    #[error("expected {expected} input values, got {got}")]
    InputCountMismatch { expected: usize, got: usize },
    #[error("expected {expected} output values, got {got}")]
    OutputCountMismatch { expected: usize, got: usize },
}

/// Result of output authentication.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AuthResult {
    Decoded(Vec<bool>),
    /// The first output whose label matched neither valid label.
    Abort {
        output_index: usize,
    },
}

impl AuthResult {
    pub fn is_abort(&self) -> bool {
        matches!(self, AuthResult::Abort { .. })
    }

    pub fn decoded(&self) -> Option<&[bool]> {
        match self {
            AuthResult::Decoded(bits) => Some(bits),
            AuthResult::Abort { .. } => None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct EvaluationTrace {
    /// Value of every wire, indexed by wire id.
    pub wires: Vec<GarbledWireValue>,
    pub outputs: Vec<GarbledWireValue>,
    pub gates_evaluated: usize,
    pub hash_calls: usize,
    pub elapsed: Duration,
}

/// Observation points used by the tamper harness.
pub(crate) trait EvalHook {
    /// Called with the row about to be decrypted for the `and_index`-th AND gate.
    fn on_row(&mut self, _and_index: usize, _row: &mut [u8; ROW_BYTES]) {}
    /// Called after the `gate_index`-th gate produced its output value.
    fn on_wire(&mut self, _gate_index: usize, _value: &mut GarbledWireValue) {}
}

struct NoHook;
impl EvalHook for NoHook {}

fn check(
    circuit: &Circuit,
    gc: &GarbledCircuit,
    inputs: &[GarbledWireValue],
) -> Result<(), EvalError> {
    if gc.circuit_digest != circuit.digest() {
        return Err(EvalError::DigestMismatch);
    }
    let expected = circuit.and_gates().count();
    if gc.tables.len() != expected {
        return Err(EvalError::TableCountMismatch {
            expected,
            got: gc.tables.len(),
        });
    }
    if inputs.len() != circuit.num_inputs() {
        return Err(EvalError::InputCountMismatch {
            expected: circuit.num_inputs(),
            got: inputs.len(),
        });
    }
    Ok(())
}

#[inline]
fn decrypt(row: &[u8; ROW_BYTES], mask: &[u8; ROW_BYTES]) -> GarbledWireValue {
    let mut label = [0u8; LABEL_BYTES];
    for (i, l) in label.iter_mut().enumerate() {
        *l = row[i] ^ mask[i];
    }
    GarbledWireValue {
        masked_bit: (row[LABEL_BYTES] ^ mask[LABEL_BYTES]) & 1 == 1,
        label: WireLabel::from_bytes(label),
    }
}

/// Forward pass; returns all wire values and the number of hash calls.
fn run<H: EvalHook>(
    circuit: &Circuit,
    gc: &GarbledCircuit,
    inputs: &[GarbledWireValue],
    hook: &mut H,
) -> (Vec<GarbledWireValue>, usize) {
    let blank = GarbledWireValue {
        masked_bit: false,
        label: WireLabel::default(),
    };
    let mut wires = vec![blank; circuit.num_wires()];
    wires[..inputs.len()].copy_from_slice(inputs);
    let mut and_index = 0;
    let mut hash_calls = 0;
    for (i, gate) in circuit.gates().iter().enumerate() {
        let mut value = match *gate {
            Gate::Xor { a, b, .. } => {
                let (a, b) = (wires[a.index()], wires[b.index()]);
                GarbledWireValue {
                    masked_bit: a.masked_bit ^ b.masked_bit,
                    label: a.label ^ b.label,
                }
            }
            // the generator flipped the mask, so the pair passes through
            Gate::Inv { a, .. } => wires[a.index()],
            Gate::And { a, b, out } => {
                let (a, b) = (wires[a.index()], wires[b.index()]);
                let r = row_index(a.masked_bit, b.masked_bit);
                let mut row = gc.tables[and_index].rows[r as usize];
                hook.on_row(and_index, &mut row);
                let mask = gc_hash(a.label, b.label, out.0 as u64, r);
                hash_calls += 1;
                and_index += 1;
                decrypt(&row, &mask)
            }
        };
        hook.on_wire(i, &mut value);
        wires[gate.output().index()] = value;
    }
    (wires, hash_calls)
}

/// Evaluates `gc` on the given input wire values and returns the output
/// wire values in output order.
pub fn evaluate(
    circuit: &Circuit,
    gc: &GarbledCircuit,
    inputs: &[GarbledWireValue],
) -> Result<Vec<GarbledWireValue>, EvalError> {
    check(circuit, gc, inputs)?;
    let (wires, _) = run(circuit, gc, inputs, &mut NoHook);
    Ok(circuit.output_wires().map(|w| wires[w.index()]).collect())
}

/// [`evaluate`] that also reports every wire value, the gate and hash
/// counts and the elapsed time.
pub fn evaluate_traced(
    circuit: &Circuit,
    gc: &GarbledCircuit,
    inputs: &[GarbledWireValue],
) -> Result<EvaluationTrace, EvalError> {
    check(circuit, gc, inputs)?;
    let start = Instant::now();
    let (wires, hash_calls) = run(circuit, gc, inputs, &mut NoHook);
    let elapsed = start.elapsed();
    let outputs = circuit.output_wires().map(|w| wires[w.index()]).collect();
    Ok(EvaluationTrace {
        wires,
        outputs,
        gates_evaluated: circuit.gates().len(),
        hash_calls,
        elapsed,
    })
}

pub(crate) fn evaluate_hooked<H: EvalHook>(
    circuit: &Circuit,
    gc: &GarbledCircuit,
    inputs: &[GarbledWireValue],
    hook: &mut H,
) -> Result<Vec<GarbledWireValue>, EvalError> {
    check(circuit, gc, inputs)?;
    let (wires, _) = run(circuit, gc, inputs, hook);
    Ok(circuit.output_wires().map(|w| wires[w.index()]).collect())
}

/// Evaluates one garbling against many input encodings.
///
/// A garbling must never be reused across inputs in a real session; this is
/// for verification sweeps and throughput measurement.
pub fn evaluate_batch(
    circuit: &Circuit,
    gc: &GarbledCircuit,
    batch: &[Vec<GarbledWireValue>],
    exec: Exec,
) -> Result<Vec<Vec<GarbledWireValue>>, EvalError> {
    exec.map(batch, |inputs| evaluate(circuit, gc, inputs))
        .into_iter()
        .collect()
}

/// Authenticates output values and recovers the plaintext.
///
/// Each received label must equal `label(w, ẑ)` for the masked bit it
/// arrived with; the plaintext is `ẑ ^ λ_w`.
pub fn decode_outputs(
    dec: &OutputDecoding,
    outputs: &[GarbledWireValue],
) -> Result<AuthResult, EvalError> {
    if outputs.len() != dec.wires.len() {
        return Err(EvalError::OutputCountMismatch {
            expected: dec.wires.len(),
            got: outputs.len(),
        });
    }
    let mut bits = Vec::with_capacity(outputs.len());
    for (i, (d, v)) in dec.wires.iter().zip(outputs).enumerate() {
        if v.label != d.label(v.masked_bit) {
            return Ok(AuthResult::Abort { output_index: i });
        }
        bits.push(v.masked_bit ^ d.mask);
    }
    Ok(AuthResult::Decoded(bits))
}
