//! The generator role: seeded derivation of masks, labels and garbled tables.
//!
//! Everything here is a deterministic function of `(Seed, Circuit)`:
//!
//! * `PRF(seed, purpose, index) = SHA-256(seed || purpose || LE64(index))`
//!   with purpose bytes `DELTA = 0x00`, `MASK = 0x01`, `LABEL0 = 0x02`.
//! * `Delta` is the first 16 PRF bytes for `(DELTA, 0)`; an all-zero result
//!   is replaced by `0x01` repeated.
//! * Input wires and AND outputs take their mask from bit 0 of the first
//!   `MASK` byte and `label0` from the first 16 `LABEL0` bytes. XOR and INV
//!   outputs are derived structurally and cost no PRF calls.
//! * Each AND gate with output wire `γ` and inputs `a`, `b` gets four
//!   17-byte rows, indexed by the masked input bits `(x̂, ŷ)`:
//!   `row = H(L_a(x̂), L_b(ŷ), γ, 2x̂+ŷ) ^ (L_γ(ẑ) || ẑ)` where
//!   `ẑ = ((x̂^λ_a) & (ŷ^λ_b)) ^ λ_γ`.

use std::fmt;
use std::ops::BitXor;

use rand::Rng;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::circuit::{Circuit, Gate, WireId};
use crate::exec::Exec;

pub const LABEL_BYTES: usize = 16;
/// One garbled row: 16 label bytes, then one byte whose bit 0 is `ẑ`.
pub const ROW_BYTES: usize = LABEL_BYTES + 1;
pub const TABLE_BYTES: usize = 4 * ROW_BYTES;
/// Wire value encoding used on the wire: masked-bit byte, then label.
pub const WIRE_VALUE_BYTES: usize = 1 + LABEL_BYTES;
pub const GARBLED_FORMAT_VERSION: u8 = 1;

const PURPOSE_DELTA: u8 = 0x00;
const PURPOSE_MASK: u8 = 0x01;
const PURPOSE_LABEL0: u8 = 0x02;
const ZERO_DELTA_REPLACEMENT: [u8; LABEL_BYTES] = [0x01; LABEL_BYTES];

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GarbleError {
    #[error("expected {expected} input bits, got {got}")]
    InputLengthMismatch { expected: usize, got: usize },
}

/// 32-byte PRF seed shared by the generator and the input owner.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct Seed(pub [u8; 32]);

impl Seed {
    pub fn random() -> Self {
        Seed(rand::rng().random())
    }

    pub fn from_rng<R: Rng + ?Sized>(rng: &mut R) -> Self {
        Seed(rng.random())
    }

    pub fn as_bytes(&self) -> &[u8; 32] {
        &self.0
    }

    /// Fingerprint safe to use as a lookup key.
    pub fn fingerprint(&self) -> [u8; 32] {
        Sha256::digest(self.0).into()
    }
}

impl fmt::Debug for Seed {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("Seed(..)")
    }
}

/// A 128-bit wire label. Bytes are stored little-endian in the `u128`, so
/// `to_bytes` returns exactly the derived byte string.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct WireLabel(u128);

impl WireLabel {
    pub fn from_bytes(bytes: [u8; LABEL_BYTES]) -> Self {
        WireLabel(u128::from_le_bytes(bytes))
    }

    pub fn to_bytes(self) -> [u8; LABEL_BYTES] {
        self.0.to_le_bytes()
    }

    pub fn flip_bit(self, bit: u32) -> Self {
        WireLabel(self.0 ^ (1u128 << (bit % 128)))
    }

    fn from_slice(bytes: &[u8]) -> Self {
        let mut b = [0u8; LABEL_BYTES];
        b.copy_from_slice(&bytes[..LABEL_BYTES]);
        Self::from_bytes(b)
    }
}

impl fmt::Debug for WireLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "WireLabel({:032x})",
            u128::from_be_bytes(self.to_bytes())
        )
    }
}

impl BitXor for WireLabel {
    type Output = WireLabel;
    fn bitxor(self, rhs: WireLabel) -> WireLabel {
        WireLabel(self.0 ^ rhs.0)
    }
}

/// Global free-XOR offset. Never zero.
#[derive(Clone, Copy, PartialEq, Eq)]
pub struct Delta(WireLabel);

impl Delta {
    /// Maps raw derived bytes to a delta, replacing the all-zero string.
    pub fn from_derived(bytes: [u8; LABEL_BYTES]) -> Self {
        if bytes == [0u8; LABEL_BYTES] {
            Delta(WireLabel::from_bytes(ZERO_DELTA_REPLACEMENT))
        } else {
            Delta(WireLabel::from_bytes(bytes))
        }
    }

    pub fn as_label(self) -> WireLabel {
        self.0
    }

    pub fn is_zero(self) -> bool {
        self.0 .0 == 0
    }
}

impl fmt::Debug for Delta {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("Delta(..)")
    }
}

impl BitXor<Delta> for WireLabel {
    type Output = WireLabel;
    fn bitxor(self, rhs: Delta) -> WireLabel {
        self ^ rhs.0
    }
}

/// Secret material for one wire: its mask bit and zero-label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct WireMaterial {
    pub mask: bool,
    pub label0: WireLabel,
}

impl WireMaterial {
    /// `label(w, bit)`.
    #[inline]
    pub fn label(&self, bit: bool, delta: Delta) -> WireLabel {
        if bit {
            self.label0 ^ delta
        } else {
            self.label0
        }
    }
}

/// What travels on an active wire: the masked bit and the matching label.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GarbledWireValue {
    pub masked_bit: bool,
    pub label: WireLabel,
}

impl GarbledWireValue {
    pub fn to_bytes(&self) -> [u8; WIRE_VALUE_BYTES] {
        let mut out = [0u8; WIRE_VALUE_BYTES];
        out[0] = self.masked_bit as u8;
        out[1..].copy_from_slice(&self.label.to_bytes());
        out
    }

    /// `None` if the masked-bit byte is not 0 or 1.
    pub fn from_bytes(bytes: &[u8; WIRE_VALUE_BYTES]) -> Option<Self> {
        let masked_bit = match bytes[0] {
            0 => false,
            1 => true,
            _ => return None,
        };
        Some(GarbledWireValue {
            masked_bit,
            label: WireLabel::from_slice(&bytes[1..]),
        })
    }
}

/// The four rows of one AND gate, in row order 00, 01, 10, 11.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GarbledGate {
    /// Position of the gate among the circuit's AND gates.
    pub gate_index: u32,
    pub rows: [[u8; ROW_BYTES]; 4],
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GarbledCircuit {
    pub circuit_digest: [u8; 32],
    pub format_version: u8,
    /// One entry per AND gate, in circuit order.
    pub tables: Vec<GarbledGate>,
}

impl GarbledCircuit {
    pub fn and_count(&self) -> usize {
        self.tables.len()
    }

    pub fn table_bytes(&self) -> usize {
        self.tables.len() * TABLE_BYTES
    }
}

/// Per input wire: mask bit and zero-label.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InputEncoding {
    pub wires: Vec<WireMaterial>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OutputWireDecoding {
    pub mask: bool,
    pub label0: WireLabel,
    pub label1: WireLabel,
}

impl OutputWireDecoding {
    pub fn label(&self, masked_bit: bool) -> WireLabel {
        if masked_bit {
            self.label1
        } else {
            self.label0
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OutputDecoding {
    pub wires: Vec<OutputWireDecoding>,
}

/// Everything the generator produces for one `(circuit, seed)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Garbling {
    pub garbled: GarbledCircuit,
    pub encoding: InputEncoding,
    pub decoding: OutputDecoding,
}

fn prf(seed: &Seed, purpose: u8, index: u64) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(seed.0);
    h.update([purpose]);
    h.update(index.to_le_bytes());
    h.finalize().into()
}

pub fn derive_delta(seed: &Seed) -> Delta {
    let out = prf(seed, PURPOSE_DELTA, 0);
    let mut bytes = [0u8; LABEL_BYTES];
    bytes.copy_from_slice(&out[..LABEL_BYTES]);
    Delta::from_derived(bytes)
}

/// PRF-derived material for an input wire or AND-gate output.
pub fn derive_wire(seed: &Seed, wire: WireId) -> WireMaterial {
    let mask = prf(seed, PURPOSE_MASK, wire.0 as u64)[0] & 1 == 1;
    let label0 = WireLabel::from_slice(&prf(seed, PURPOSE_LABEL0, wire.0 as u64));
    WireMaterial { mask, label0 }
}

/// `SHA-256(label_a || label_b || LE64(gate_index) || row)`, first 17 bytes.
pub fn gc_hash(
    label_a: WireLabel,
    label_b: WireLabel,
    gate_index: u64,
    row: u8,
) -> [u8; ROW_BYTES] {
    let mut h = Sha256::new();
    h.update(label_a.to_bytes());
    h.update(label_b.to_bytes());
    h.update(gate_index.to_le_bytes());
    h.update([row]);
    let d: [u8; 32] = h.finalize().into();
    let mut out = [0u8; ROW_BYTES];
    out.copy_from_slice(&d[..ROW_BYTES]);
    out
}

/// Row index for masked input bits.
#[inline]
pub fn row_index(x_hat: bool, y_hat: bool) -> u8 {
    ((x_hat as u8) << 1) | y_hat as u8
}

/// Masks and zero-labels for every wire of `circuit`.
///
/// Fresh wires (inputs and AND outputs) are derived in parallel; XOR and
/// INV outputs then follow in one ordered pass.
pub fn wire_material(circuit: &Circuit, seed: &Seed, exec: Exec) -> (Delta, Vec<WireMaterial>) {
    let delta = derive_delta(seed);
    let fresh: Vec<WireId> = circuit
        .input_wires()
        .chain(circuit.and_gates().map(|(_, g)| g.output()))
        .collect();
    let derived = exec.map(&fresh, |&w| derive_wire(seed, w));

    let mut wires = vec![WireMaterial::default(); circuit.num_wires()];
    for (w, m) in fresh.iter().zip(derived) {
        wires[w.index()] = m;
    }
    for gate in circuit.gates() {
        match *gate {
            Gate::Xor { a, b, out } => {
                let (a, b) = (wires[a.index()], wires[b.index()]);
                wires[out.index()] = WireMaterial {
                    mask: a.mask ^ b.mask,
                    label0: a.label0 ^ b.label0,
                };
            }
            Gate::Inv { a, out } => {
                let a = wires[a.index()];
                wires[out.index()] = WireMaterial {
                    mask: !a.mask,
                    label0: a.label0,
                };
            }
            Gate::And { .. } => {}
        }
    }
    (delta, wires)
}

fn garble_gate(and_index: usize, gate: &Gate, wires: &[WireMaterial], delta: Delta) -> GarbledGate {
    let Gate::And { a, b, out } = *gate else {
        unreachable!("only AND gates are garbled");
    };
    let (ma, mb, mo) = (wires[a.index()], wires[b.index()], wires[out.index()]);
    let mut rows = [[0u8; ROW_BYTES]; 4];
    for x_hat in [false, true] {
        for y_hat in [false, true] {
            let r = row_index(x_hat, y_hat);
            let z_hat = ((x_hat ^ ma.mask) & (y_hat ^ mb.mask)) ^ mo.mask;
            let mut row = gc_hash(
                ma.label(x_hat, delta),
                mb.label(y_hat, delta),
                out.0 as u64,
                r,
            );
            for (dst, src) in row.iter_mut().zip(mo.label(z_hat, delta).to_bytes()) {
                *dst ^= src;
            }
            row[LABEL_BYTES] ^= z_hat as u8;
            rows[r as usize] = row;
        }
    }
    GarbledGate {
        gate_index: and_index as u32,
        rows,
    }
}

pub fn garble(circuit: &Circuit, seed: &Seed) -> Garbling {
    garble_with(circuit, seed, Exec::default())
}

/// [`garble`] with an explicit execution mode. Output is identical in
/// every mode.
pub fn garble_with(circuit: &Circuit, seed: &Seed, exec: Exec) -> Garbling {
    let (delta, wires) = wire_material(circuit, seed, exec);
    let and_gates: Vec<&Gate> = circuit.and_gates().map(|(_, g)| g).collect();
    let tables = exec.map_range(and_gates.len(), |i| {
        garble_gate(i, and_gates[i], &wires, delta)
    });

    let encoding = InputEncoding {
        wires: circuit.input_wires().map(|w| wires[w.index()]).collect(),
    };
    let decoding = output_decoding_from(circuit, &wires, delta);
    Garbling {
        garbled: GarbledCircuit {
            circuit_digest: circuit.digest(),
            format_version: GARBLED_FORMAT_VERSION,
            tables,
        },
        encoding,
        decoding,
    }
}

pub(crate) fn output_decoding_from(
    circuit: &Circuit,
    wires: &[WireMaterial],
    delta: Delta,
) -> OutputDecoding {
    OutputDecoding {
        wires: circuit
            .output_wires()
            .map(|w| {
                let m = wires[w.index()];
                OutputWireDecoding {
                    mask: m.mask,
                    label0: m.label0,
                    label1: m.label0 ^ delta,
                }
            })
            .collect(),
    }
}

/// Encodes plaintext input bits as `(x ^ λ, label(w, x ^ λ))`.
pub fn encode_inputs(
    enc: &InputEncoding,
    bits: &[bool],
    delta: Delta,
) -> Result<Vec<GarbledWireValue>, GarbleError> {
    if bits.len() != enc.wires.len() {
        return Err(GarbleError::InputLengthMismatch {
            expected: enc.wires.len(),
            got: bits.len(),
        });
    }
    Ok(enc
        .wires
        .iter()
        .zip(bits)
        .map(|(m, &x)| {
            let masked_bit = x ^ m.mask;
            GarbledWireValue {
                masked_bit,
                label: m.label(masked_bit, delta),
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::{build_adder, parse_bristol};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::collections::HashSet;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(0x7467_6831)
    }

    #[test]
    fn delta_is_deterministic_nonzero_and_distinct() {
        let mut rng = rng();
        let s = Seed::from_rng(&mut rng);
        assert_eq!(derive_delta(&s), derive_delta(&s));
        let mut seen = HashSet::new();
        for _ in 0..10_000 {
            let d = derive_delta(&Seed::from_rng(&mut rng));
            assert!(!d.is_zero());
            if seen.len() < 1000 {
                assert!(seen.insert(d.as_label().to_bytes()));
            }
        }
    }

    #[test]
    fn zero_delta_is_remapped() {
        let d = Delta::from_derived([0u8; 16]);
        assert_eq!(d.as_label().to_bytes(), [0x01; 16]);
        let raw = [7u8; 16];
        assert_eq!(Delta::from_derived(raw).as_label().to_bytes(), raw);
    }

    #[test]
    fn derive_wire_matches_prf_definition() {
        let s = Seed([9u8; 32]);
        let m = derive_wire(&s, WireId(5));
        assert_eq!(m, derive_wire(&s, WireId(5)));
        let mut input = Vec::from(s.0);
        input.push(0x02);
        input.extend_from_slice(&5u64.to_le_bytes());
        let d = Sha256::digest(&input);
        assert_eq!(m.label0.to_bytes(), d[..16]);
        assert_ne!(
            derive_wire(&s, WireId(0)).label0,
            derive_wire(&s, WireId(1)).label0
        );
        let delta = derive_delta(&s);
        assert_eq!(
            m.label(true, delta) ^ m.label(false, delta),
            delta.as_label()
        );
    }

    #[test]
    fn gc_hash_zero_vector() {
        let h = gc_hash(WireLabel::default(), WireLabel::default(), 0, 0);
        // sha256 of 41 zero bytes, computed with coreutils sha256sum
        let expected = "9e1736c43d19118e6ce4302118af337109491ecc52757dfb949bad6a7940b0c2";
        assert_eq!(hex_of(&h), &expected[..34]);
        assert_ne!(h, gc_hash(WireLabel::default(), WireLabel::default(), 0, 1));
        assert_eq!(h, gc_hash(WireLabel::default(), WireLabel::default(), 0, 0));
    }

    fn hex_of(bytes: &[u8]) -> String {
        bytes.iter().map(|b| format!("{b:02x}")).collect()
    }

    #[test]
    fn and_rows_decrypt_to_and_semantics() {
        let c = parse_bristol("1 3\n2 1 1\n1 1\n2 1 0 1 2 AND\n").unwrap();
        for s in 0..16u8 {
            let seed = Seed([s; 32]);
            let g = garble(&c, &seed);
            let (delta, w) = wire_material(&c, &seed, Exec::Sequential);
            let table = &g.garbled.tables[0];
            assert_eq!(table.gate_index, 0);
            for x_hat in [false, true] {
                for y_hat in [false, true] {
                    let r = row_index(x_hat, y_hat);
                    let h = gc_hash(w[0].label(x_hat, delta), w[1].label(y_hat, delta), 2, r);
                    let row = table.rows[r as usize];
                    let z_hat = (row[16] ^ h[16]) & 1 == 1;
                    assert_eq!((row[16] ^ h[16]) >> 1, 0);
                    let label = WireLabel::from_slice(&row) ^ WireLabel::from_slice(&h);
                    let x = x_hat ^ w[0].mask;
                    let y = y_hat ^ w[1].mask;
                    assert_eq!(z_hat ^ w[2].mask, x & y);
                    assert_eq!(label, w[2].label(z_hat, delta));
                }
            }
        }
    }

    #[test]
    fn xor_only_circuit_has_no_tables() {
        let c = parse_bristol("2 4\n2 1 1\n1 1\n2 1 0 1 2 XOR\n2 1 2 1 3 XOR\n").unwrap();
        let g = garble(&c, &Seed([1; 32]));
        assert!(g.garbled.tables.is_empty());
        assert_eq!(g.garbled.table_bytes(), 0);
    }

    #[test]
    fn garbling_is_deterministic_across_modes() {
        let c = build_adder(32).unwrap();
        let s = Seed([3; 32]);
        let a = garble_with(&c, &s, Exec::Sequential);
        let b = garble_with(&c, &s, Exec::Parallel);
        assert_eq!(a, b);
        assert_eq!(a.garbled.tables.len(), 31);
        assert_eq!(a.garbled.table_bytes(), 31 * 68);
        assert_ne!(a, garble(&c, &Seed([4; 32])));
    }

    #[test]
    fn structural_mask_and_label_relations() {
        let c = parse_bristol("2 4\n2 1 1\n2 1 1\n2 1 0 1 2 XOR\n1 1 0 3 INV\n").unwrap();
        let s = Seed([5; 32]);
        let (delta, w) = wire_material(&c, &s, Exec::Sequential);
        assert_eq!(w[2].mask, w[0].mask ^ w[1].mask);
        assert_eq!(w[2].label0, w[0].label0 ^ w[1].label0);
        assert_eq!(w[3].mask, !w[0].mask);
        assert_eq!(w[3].label0, w[0].label0);
        let dec = garble(&c, &s).decoding;
        for o in &dec.wires {
            assert_eq!(o.label0 ^ o.label1, delta.as_label());
        }
    }

    #[test]
    fn encode_inputs_masks_bits() {
        let delta = Delta::from_derived([0xAA; 16]);
        let l0 = WireLabel::from_bytes([3; 16]);
        let enc = |mask| InputEncoding {
            wires: vec![WireMaterial { mask, label0: l0 }],
        };
        let v = encode_inputs(&enc(false), &[false], delta).unwrap()[0];
        assert_eq!((v.masked_bit, v.label), (false, l0));
        let v = encode_inputs(&enc(true), &[true], delta).unwrap()[0];
        assert_eq!((v.masked_bit, v.label), (false, l0));
        let v = encode_inputs(&enc(true), &[false], delta).unwrap()[0];
        assert_eq!((v.masked_bit, v.label), (true, l0 ^ delta));
        assert!(encode_inputs(&enc(true), &[], delta).is_err());
    }

    #[test]
    fn wire_value_bytes_round_trip() {
        let v = GarbledWireValue {
            masked_bit: true,
            label: WireLabel::from_bytes([0x5A; 16]),
        };
        let b = v.to_bytes();
        assert_eq!(b[0], 1);
        assert_eq!(GarbledWireValue::from_bytes(&b), Some(v));
        let mut bad = b;
        bad[0] = 2;
        assert_eq!(GarbledWireValue::from_bytes(&bad), None);
    }
}
