//! Boolean circuits over AND/XOR/INV gates.
//!
//! A [`Circuit`] is always stored in canonical Bristol layout: the input
//! wires are `0..n_inputs`, the output wires are the last `n_outputs` wires,
//! and every non-input wire is produced by exactly one gate. The gate list is
//! in topological order, so every consumer can run a single forward pass.

mod bristol;
mod builder;
pub mod random;

use std::fmt;
use std::sync::OnceLock;

use sha2::{Digest, Sha256};
use thiserror::Error;

pub use bristol::{parse_bristol, serialize_bristol, ParseError, ParseErrorKind};
pub use builder::{
    build_adder, build_and_chain, build_checkout, build_comparator, checkout_sum_width,
    CircuitBuilder,
};

/// Index of a wire, dense in `0..num_wires`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct WireId(pub u32);

impl WireId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for WireId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum GateKind {
    And,
    Xor,
    Inv,
}

impl GateKind {
    pub fn arity(self) -> usize {
        match self {
            GateKind::And | GateKind::Xor => 2,
            GateKind::Inv => 1,
        }
    }

    pub fn mnemonic(self) -> &'static str {
        match self {
            GateKind::And => "AND",
            GateKind::Xor => "XOR",
            GateKind::Inv => "INV",
        }
    }
}

impl fmt::Display for GateKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.mnemonic())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Gate {
    And { a: WireId, b: WireId, out: WireId },
    Xor { a: WireId, b: WireId, out: WireId },
    Inv { a: WireId, out: WireId },
}

impl Gate {
    pub fn kind(&self) -> GateKind {
        match self {
            Gate::And { .. } => GateKind::And,
            Gate::Xor { .. } => GateKind::Xor,
            Gate::Inv { .. } => GateKind::Inv,
        }
    }

    pub fn output(&self) -> WireId {
        match *self {
            Gate::And { out, .. } | Gate::Xor { out, .. } | Gate::Inv { out, .. } => out,
        }
    }

    /// Input wires, in declaration order.
    pub fn inputs(&self) -> impl Iterator<Item = WireId> {
        let (a, b) = match *self {
            Gate::And { a, b, .. } | Gate::Xor { a, b, .. } => (a, Some(b)),
            Gate::Inv { a, .. } => (a, None),
        };
        std::iter::once(a).chain(b)
    }

    fn map_wires(&self, f: impl Fn(WireId) -> WireId) -> Gate {
        match *self {
            Gate::And { a, b, out } => Gate::And {
                a: f(a),
                b: f(b),
                out: f(out),
            },
            Gate::Xor { a, b, out } => Gate::Xor {
                a: f(a),
                b: f(b),
                out: f(out),
            },
            Gate::Inv { a, out } => Gate::Inv {
                a: f(a),
                out: f(out),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CircuitError {
    #[error("wire count mismatch: {inputs} inputs + {gates} gates != {num_wires} wires")]
    WireCountMismatch {
        num_wires: usize,
        inputs: usize,
        gates: usize,
    },
    #[error("circuit declares {outputs} output bits but has only {num_wires} wires")]
    TooManyOutputs { outputs: usize, num_wires: usize },
    #[error("gate {gate}: wire {wire} out of range (num_wires = {num_wires})")]
    WireOutOfRange {
        gate: usize,
        wire: WireId,
        num_wires: usize,
    },
    #[error("gate {gate}: input wire {wire} is read before it is assigned")]
    NotTopological { gate: usize, wire: WireId },
    #[error("gate {gate}: wire {wire} is already assigned")]
    Reassigned { gate: usize, wire: WireId },
    #[error("input group of zero bits")]
    EmptyGroup,
    #[error("expected {expected} input bits, got {got}")]
    InputLengthMismatch { expected: usize, got: usize },
    #[error("invalid builder parameter: {0}")]
    InvalidParameter(&'static str),
}

/// Gate counts and depth of a circuit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct CircuitStats {
    pub and_count: usize,
    pub xor_count: usize,
    pub inv_count: usize,
    pub input_bits: usize,
    pub output_bits: usize,
    /// Longest input-to-output path, counted in gates.
    pub depth: usize,
}

impl CircuitStats {
    pub fn total_gates(&self) -> usize {
        self.and_count + self.xor_count + self.inv_count
    }

    /// Bytes of garbled tables: four 17-byte rows per AND gate, nothing else.
    pub fn garbled_table_bytes(&self) -> usize {
        crate::garbling::TABLE_BYTES * self.and_count
    }
}

#[derive(Debug, Clone)]
pub struct Circuit {
    name: String,
    num_wires: usize,
    gates: Vec<Gate>,
    input_groups: Vec<usize>,
    output_groups: Vec<usize>,
    digest: OnceLock<[u8; 32]>,
}

impl PartialEq for Circuit {
    fn eq(&self, other: &Self) -> bool {
        self.name == other.name && self.same_structure(other)
    }
}

impl Eq for Circuit {}

impl Circuit {
    /// Validates and builds a circuit in canonical layout.
    ///
    /// `input_groups` / `output_groups` are the bit widths of each declared
    /// input and output value, as in a Bristol header.
    pub fn new(
        name: impl Into<String>,
        num_wires: usize,
        gates: Vec<Gate>,
        input_groups: Vec<usize>,
        output_groups: Vec<usize>,
    ) -> Result<Self, CircuitError> {
        if input_groups.iter().chain(&output_groups).any(|&g| g == 0) {
            return Err(CircuitError::EmptyGroup);
        }
        let n_in: usize = input_groups.iter().sum();
        let n_out: usize = output_groups.iter().sum();
        if n_in + gates.len() != num_wires {
            return Err(CircuitError::WireCountMismatch {
                num_wires,
                inputs: n_in,
                gates: gates.len(),
            });
        }
        if n_out > num_wires {
            return Err(CircuitError::TooManyOutputs {
                outputs: n_out,
                num_wires,
            });
        }

        let mut assigned = vec![false; num_wires];
        assigned[..n_in].iter_mut().for_each(|w| *w = true);
        for (i, gate) in gates.iter().enumerate() {
            for wire in gate.inputs().chain(std::iter::once(gate.output())) {
                if wire.index() >= num_wires {
                    return Err(CircuitError::WireOutOfRange {
                        gate: i,
                        wire,
                        num_wires,
                    });
                }
            }
            if let Some(wire) = gate.inputs().find(|w| !assigned[w.index()]) {
                return Err(CircuitError::NotTopological { gate: i, wire });
            }
            let out = gate.output();
            if assigned[out.index()] {
                return Err(CircuitError::Reassigned { gate: i, wire: out });
            }
            assigned[out.index()] = true;
        }

        Ok(Circuit {
            name: name.into(),
            num_wires,
            gates,
            input_groups,
            output_groups,
            digest: OnceLock::new(),
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn num_wires(&self) -> usize {
        self.num_wires
    }

    pub fn gates(&self) -> &[Gate] {
        &self.gates
    }

    pub fn input_groups(&self) -> &[usize] {
        &self.input_groups
    }

    pub fn output_groups(&self) -> &[usize] {
        &self.output_groups
    }

    pub fn num_inputs(&self) -> usize {
        self.input_groups.iter().sum()
    }

    pub fn num_outputs(&self) -> usize {
        self.output_groups.iter().sum()
    }

    pub fn input_wires(&self) -> impl ExactSizeIterator<Item = WireId> + Clone {
        (0..self.num_inputs() as u32).map(WireId)
    }

    pub fn output_wires(&self) -> impl ExactSizeIterator<Item = WireId> + Clone {
        let start = (self.num_wires - self.num_outputs()) as u32;
        (start..self.num_wires as u32).map(WireId)
    }

    /// Equality of everything except the name, which Bristol text does not carry.
    pub fn same_structure(&self, other: &Circuit) -> bool {
        self.num_wires == other.num_wires
            && self.gates == other.gates
            && self.input_groups == other.input_groups
            && self.output_groups == other.output_groups
    }

    /// SHA-256 of the canonical Bristol serialization.
    pub fn digest(&self) -> [u8; 32] {
        *self.digest.get_or_init(|| {
            let text = serialize_bristol(self);
            Sha256::digest(text.as_bytes()).into()
        })
    }

    pub fn and_gates(&self) -> impl Iterator<Item = (usize, &Gate)> {
        self.gates
            .iter()
            .enumerate()
            .filter(|(_, g)| g.kind() == GateKind::And)
    }

    pub fn stats(&self) -> CircuitStats {
        let mut stats = CircuitStats {
            input_bits: self.num_inputs(),
            output_bits: self.num_outputs(),
            ..Default::default()
        };
        let mut level = vec![0usize; self.num_wires];
        for gate in &self.gates {
            match gate.kind() {
                GateKind::And => stats.and_count += 1,
                GateKind::Xor => stats.xor_count += 1,
                GateKind::Inv => stats.inv_count += 1,
            }
            let l = gate.inputs().map(|w| level[w.index()]).max().unwrap_or(0) + 1;
            level[gate.output().index()] = l;
        }
        stats.depth = self
            .output_wires()
            .map(|w| level[w.index()])
            .max()
            .unwrap_or(0);
        stats
    }

    /// Non-output wires that no gate reads.
    pub fn dead_wires(&self) -> Vec<WireId> {
        let mut read = vec![false; self.num_wires];
        for gate in &self.gates {
            gate.inputs().for_each(|w| read[w.index()] = true);
        }
        for w in self.output_wires() {
            read[w.index()] = true;
        }
        read.iter()
            .enumerate()
            .filter(|(_, r)| !**r)
            .map(|(i, _)| WireId(i as u32))
            .collect()
    }

    /// Plaintext evaluation by direct gate semantics.
    pub fn eval_plaintext(&self, inputs: &[bool]) -> Result<Vec<bool>, CircuitError> {
        self.check_input_len(inputs.len())?;
        let mut wires = vec![false; self.num_wires];
        wires[..inputs.len()].copy_from_slice(inputs);
        for gate in &self.gates {
            let v = match *gate {
                Gate::And { a, b, .. } => wires[a.index()] & wires[b.index()],
                Gate::Xor { a, b, .. } => wires[a.index()] ^ wires[b.index()],
                Gate::Inv { a, .. } => !wires[a.index()],
            };
            wires[gate.output().index()] = v;
        }
        Ok(self.output_wires().map(|w| wires[w.index()]).collect())
    }

    /// Plaintext evaluation that tracks assignment and fails on any read of
    /// an unassigned wire.
    pub fn eval_plaintext_checked(&self, inputs: &[bool]) -> Result<Vec<bool>, CircuitError> {
        self.check_input_len(inputs.len())?;
        let mut wires: Vec<Option<bool>> = vec![None; self.num_wires];
        for (w, &bit) in wires.iter_mut().zip(inputs) {
            *w = Some(bit);
        }
        for (i, gate) in self.gates.iter().enumerate() {
            let read = |w: WireId| {
                wires[w.index()].ok_or(CircuitError::NotTopological { gate: i, wire: w })
            };
            let v = match *gate {
                Gate::And { a, b, .. } => read(a)? & read(b)?,
                Gate::Xor { a, b, .. } => read(a)? ^ read(b)?,
                Gate::Inv { a, .. } => !read(a)?,
            };
            wires[gate.output().index()] = Some(v);
        }
        self.output_wires()
            .enumerate()
            .map(|(i, w)| {
                wires[w.index()].ok_or(CircuitError::NotTopological {
                    gate: self.gates.len() + i,
                    wire: w,
                })
            })
            .collect()
    }

    pub(crate) fn check_input_len(&self, got: usize) -> Result<(), CircuitError> {
        let expected = self.num_inputs();
        if got != expected {
            return Err(CircuitError::InputLengthMismatch { expected, got });
        }
        Ok(())
    }
}

/// Little-endian bit helpers for multi-bit values.
pub mod bits {
    /// `width` bits of `value`, least significant first.
    pub fn from_u64(value: u64, width: usize) -> Vec<bool> {
        (0..width)
            .map(|i| i < 64 && (value >> i) & 1 == 1)
            .collect()
    }

    /// Inverse of [`from_u64`]; bits above 63 are ignored.
    pub fn to_u64(bits: &[bool]) -> u64 {
        bits.iter()
            .take(64)
            .enumerate()
            .fold(0, |acc, (i, &b)| acc | ((b as u64) << i))
    }

    /// Concatenates several values, each at its own width.
    pub fn pack(values: &[(u64, usize)]) -> Vec<bool> {
        values.iter().flat_map(|&(v, w)| from_u64(v, w)).collect()
    }

    /// Splits a bit vector into values by group widths.
    pub fn unpack(bits: &[bool], widths: &[usize]) -> Vec<u64> {
        let mut offset = 0;
        widths
            .iter()
            .map(|&w| {
                let v = to_u64(&bits[offset..offset + w]);
                offset += w;
                v
            })
            .collect()
    }
}
