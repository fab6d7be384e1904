//! Random well-formed circuits for property tests and benchmarks.

use rand::Rng;

use super::{Circuit, Gate, WireId};

/// A random topologically ordered circuit in canonical layout.
///
/// Gate kinds are drawn with weights AND:XOR:INV = 2:2:1. Gate inputs are
/// drawn from all wires assigned so far, so the formula depth varies.
pub fn random_circuit<R: Rng + ?Sized>(
    rng: &mut R,
    num_inputs: usize,
    num_gates: usize,
    num_outputs: usize,
) -> Circuit {
    assert!(num_inputs > 0, "random circuits need at least one input");
    assert!(
        num_outputs <= num_gates,
        "outputs are drawn from gate outputs"
    );
    let num_wires = num_inputs + num_gates;
    let mut gates = Vec::with_capacity(num_gates);
    for i in 0..num_gates {
        let avail = (num_inputs + i) as u32;
        let out = WireId(avail);
        let a = WireId(rng.random_range(0..avail));
        let b = WireId(rng.random_range(0..avail));
        gates.push(match rng.random_range(0..5) {
            0 | 1 => Gate::And { a, b, out },
            2 | 3 => Gate::Xor { a, b, out },
            _ => Gate::Inv { a, out },
        });
    }
    let input_groups = split_groups(rng, num_inputs);
    let output_groups = split_groups(rng, num_outputs);
    Circuit::new("random", num_wires, gates, input_groups, output_groups)
        .expect("generator only emits valid circuits")
}

fn split_groups<R: Rng + ?Sized>(rng: &mut R, mut total: usize) -> Vec<usize> {
    let mut groups = Vec::new();
    while total > 0 {
        let g = rng.random_range(1..=total.min(32));
        groups.push(g);
        total -= g;
    }
    groups
}
