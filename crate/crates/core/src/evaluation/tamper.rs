//! Single-bit tamper harness for output authentication.
//!
//! A trial garbles, encodes and evaluates honestly except for one injected
//! bit flip, then reports whether the input owner's decoder aborted.
//! Table flips target the row the evaluator actually reads; the other three
//! rows of a gate never influence the result, nor do the seven padding bits
//! above `ẑ` in a row.

use rand::Rng;

use super::{decode_outputs, evaluate_hooked, AuthResult, EvalError, EvalHook};
use crate::circuit::{Circuit, GateKind};
use crate::exec::Exec;
use crate::garbling::{
    derive_delta, encode_inputs, garble, GarbledWireValue, Seed, LABEL_BYTES, ROW_BYTES,
};

/// Number of meaningful bits in a row or wire value (128 label bits + `ẑ`).
pub const VALUE_BITS: u32 = 129;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mutation {
    None,
    /// Flip bit `bit` (`0..129`, 128 being `ẑ`) of the row read at the
    /// `and_index`-th AND gate.
    TableBit {
        and_index: usize,
        bit: u32,
    },
    /// Flip a label bit of an input value before evaluation.
    InputLabelBit {
        input: usize,
        bit: u32,
    },
    InputMaskedBit {
        input: usize,
    },
    /// Flip a bit (`0..129`) of the value produced by the `gate`-th gate.
    IntermediateBit {
        gate: usize,
        bit: u32,
    },
    /// Flip a bit (`0..129`) of an output value after evaluation.
    OutputBit {
        output: usize,
        bit: u32,
    },
}

impl Mutation {
    /// A uniformly chosen single-bit mutation applicable to `circuit`.
    pub fn random<R: Rng + ?Sized>(rng: &mut R, circuit: &Circuit) -> Mutation {
        let and_count = circuit
            .gates()
            .iter()
            .filter(|g| g.kind() == GateKind::And)
            .count();
        loop {
            let bit = rng.random_range(0..VALUE_BITS);
            let m = match rng.random_range(0..4) {
                0 if and_count > 0 => Mutation::TableBit {
                    and_index: rng.random_range(0..and_count),
                    bit,
                },
                1 if circuit.num_inputs() > 0 => {
                    let input = rng.random_range(0..circuit.num_inputs());
                    if bit == 128 {
                        Mutation::InputMaskedBit { input }
                    } else {
                        Mutation::InputLabelBit { input, bit }
                    }
                }
                2 if !circuit.gates().is_empty() => Mutation::IntermediateBit {
                    gate: rng.random_range(0..circuit.gates().len()),
                    bit,
                },
                3 if circuit.num_outputs() > 0 => Mutation::OutputBit {
                    output: rng.random_range(0..circuit.num_outputs()),
                    bit,
                },
                _ => continue,
            };
            return m;
        }
    }
}

fn flip_value(v: &mut GarbledWireValue, bit: u32) {
    if bit >= 128 {
        v.masked_bit ^= true;
    } else {
        v.label = v.label.flip_bit(bit);
    }
}

fn flip_row(row: &mut [u8; ROW_BYTES], bit: u32) {
    if bit >= 128 {
        row[LABEL_BYTES] ^= 1;
    } else {
        row[(bit / 8) as usize] ^= 1 << (bit % 8);
    }
}

struct Injector(Mutation);

impl EvalHook for Injector {
    fn on_row(&mut self, and_index: usize, row: &mut [u8; ROW_BYTES]) {
        if let Mutation::TableBit {
            and_index: target,
            bit,
        } = self.0
        {
            if target == and_index {
                flip_row(row, bit);
            }
        }
    }

    fn on_wire(&mut self, gate_index: usize, value: &mut GarbledWireValue) {
        if let Mutation::IntermediateBit { gate, bit } = self.0 {
            if gate == gate_index {
                flip_value(value, bit);
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TamperOutcome {
    pub mutation: Mutation,
    pub result: AuthResult,
    /// Plaintext oracle output for the same inputs.
    pub expected: Vec<bool>,
}

impl TamperOutcome {
    pub fn aborted(&self) -> bool {
        self.result.is_abort()
    }

    /// Accepted with an output that differs from the oracle.
    pub fn forged(&self) -> bool {
        matches!(&self.result, AuthResult::Decoded(bits) if *bits != self.expected)
    }
}

/// Runs garble, encode, evaluate and decode with `mutation` injected.
pub fn tamper_trial(
    circuit: &Circuit,
    seed: &Seed,
    inputs: &[bool],
    mutation: Mutation,
) -> Result<TamperOutcome, EvalError> {
    let expected = circuit
        .eval_plaintext(inputs)
        .map_err(|_| EvalError::InputCountMismatch {
            expected: circuit.num_inputs(),
            got: inputs.len(),
        })?;
    let g = garble(circuit, seed);
    let mut values = encode_inputs(&g.encoding, inputs, derive_delta(seed)).map_err(|_| {
        EvalError::InputCountMismatch {
            expected: circuit.num_inputs(),
            got: inputs.len(),
        }
    })?;
    match mutation {
        Mutation::InputLabelBit { input, bit } => flip_value(&mut values[input], bit % 128),
        Mutation::InputMaskedBit { input } => flip_value(&mut values[input], 128),
        _ => {}
    }
    let mut outputs = evaluate_hooked(circuit, &g.garbled, &values, &mut Injector(mutation))?;
    if let Mutation::OutputBit { output, bit } = mutation {
        flip_value(&mut outputs[output], bit);
    }
    let result = decode_outputs(&g.decoding, &outputs)?;
    Ok(TamperOutcome {
        mutation,
        result,
        expected,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct TamperSummary {
    pub trials: usize,
    pub aborts: usize,
    pub forged_accepts: usize,
    /// Accepted with the correct output despite the mutation.
    pub benign_accepts: usize,
}

/// Runs independent trials, in parallel when `exec` allows.
pub fn run_tamper_trials(
    circuit: &Circuit,
    trials: &[(Seed, Vec<bool>, Mutation)],
    exec: Exec,
) -> Result<TamperSummary, EvalError> {
    let outcomes = exec.map(trials, |(seed, inputs, m)| {
        tamper_trial(circuit, seed, inputs, *m)
    });
    let mut s = TamperSummary::default();
    for o in outcomes {
        let o = o?;
        s.trials += 1;
        if o.aborted() {
            s.aborts += 1;
        } else if o.forged() {
            s.forged_accepts += 1;
        } else {
            s.benign_accepts += 1;
        }
    }
    Ok(s)
}
