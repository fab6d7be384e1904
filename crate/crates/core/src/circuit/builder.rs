//! Gadget builders for test and benchmark circuits.
//!
//! All multi-bit values are little-endian.

use super::{Circuit, CircuitError, Gate, WireId};

/// A bit that is either a wire or the constant zero.
///
/// Circuits have no constant wires, so zero bits are folded away while
/// building instead of being materialized.
pub type Bit = Option<WireId>;

/// Incremental circuit construction with wire renumbering on finish.
///
/// Gates may be added in any order that respects data dependencies; wire
/// ids handed out here are provisional. [`CircuitBuilder::finish`] maps the
/// inputs onto `0..n` and the requested outputs onto the last wires.
#[derive(Debug, Default)]
pub struct CircuitBuilder {
    name: String,
    next_wire: u32,
    inputs: Vec<Vec<WireId>>,
    gates: Vec<Gate>,
}

impl CircuitBuilder {
    pub fn new(name: impl Into<String>) -> Self {
        CircuitBuilder {
            name: name.into(),
            ..Default::default()
        }
    }

    fn fresh(&mut self) -> WireId {
        let w = WireId(self.next_wire);
        self.next_wire += 1;
        w
    }

    /// Declares a `width`-bit input value.
    pub fn input(&mut self, width: usize) -> Vec<WireId> {
        let wires: Vec<_> = (0..width).map(|_| self.fresh()).collect();
        self.inputs.push(wires.clone());
        wires
    }

    pub fn and(&mut self, a: WireId, b: WireId) -> WireId {
        let out = self.fresh();
        self.gates.push(Gate::And { a, b, out });
        out
    }

    pub fn xor(&mut self, a: WireId, b: WireId) -> WireId {
        let out = self.fresh();
        self.gates.push(Gate::Xor { a, b, out });
        out
    }

    pub fn inv(&mut self, a: WireId) -> WireId {
        let out = self.fresh();
        self.gates.push(Gate::Inv { a, out });
        out
    }

    pub fn xor_bit(&mut self, a: Bit, b: Bit) -> Bit {
        match (a, b) {
            (Some(a), Some(b)) => Some(self.xor(a, b)),
            (x, None) | (None, x) => x,
        }
    }

    pub fn and_bit(&mut self, a: Bit, b: Bit) -> Bit {
        match (a, b) {
            (Some(a), Some(b)) => Some(self.and(a, b)),
            _ => None,
        }
    }

    /// Majority of three bits with a single AND: `c ^ ((x ^ c) & (y ^ c))`.
    pub fn majority(&mut self, x: Bit, y: Bit, c: Bit) -> Bit {
        if c.is_none() {
            return self.and_bit(x, y);
        }
        let xc = self.xor_bit(x, c);
        let yc = self.xor_bit(y, c);
        let t = self.and_bit(xc, yc);
        self.xor_bit(c, t)
    }

    /// Ripple-carry sum `a + b`, truncated to `width` bits. Missing high bits
    /// of either operand are zero.
    pub fn add(&mut self, a: &[Bit], b: &[Bit], width: usize) -> Vec<Bit> {
        let bit = |v: &[Bit], i: usize| v.get(i).copied().flatten();
        let mut carry: Bit = None;
        let mut sum = Vec::with_capacity(width);
        for i in 0..width {
            let (x, y) = (bit(a, i), bit(b, i));
            let xy = self.xor_bit(x, y);
            sum.push(self.xor_bit(xy, carry));
            if i + 1 < width {
                carry = self.majority(x, y, carry);
            }
        }
        sum
    }

    /// Unsigned `a < b` as the final borrow of `a - b`.
    ///
    /// Each stage uses `borrow' = b ^ ((a ^ borrow) & (b ^ borrow))`, which
    /// is `maj(!a, b, borrow)` without an inverter.
    pub fn less_than(&mut self, a: &[Bit], b: &[Bit]) -> Bit {
        let width = a.len().max(b.len());
        let bit = |v: &[Bit], i: usize| v.get(i).copied().flatten();
        let mut borrow: Bit = None;
        for i in 0..width {
            let (x, y) = (bit(a, i), bit(b, i));
            let xc = self.xor_bit(x, borrow);
            let yc = self.xor_bit(y, borrow);
            let t = self.and_bit(xc, yc);
            borrow = self.xor_bit(y, t);
        }
        borrow
    }

    /// Finalizes with the given output values, in order.
    ///
    /// An output that is a circuit input, or appears more than once, is routed
    /// through a pair of inverters so every output wire is a distinct gate
    /// output.
    pub fn finish(mut self, outputs: &[Vec<WireId>]) -> Result<Circuit, CircuitError> {
        let n_in = self.inputs.iter().map(Vec::len).sum::<usize>();
        let mut is_input = vec![false; self.next_wire as usize];
        for w in self.inputs.iter().flatten() {
            is_input[w.index()] = true;
        }

        let mut claimed = vec![false; self.next_wire as usize];
        let mut out_wires = Vec::new();
        for &w in outputs.iter().flatten() {
            let w = if is_input[w.index()] || claimed[w.index()] {
                let t = self.inv(w);
                self.inv(t)
            } else {
                w
            };
            if claimed.len() <= w.index() {
                claimed.resize(w.index() + 1, false);
            }
            claimed[w.index()] = true;
            out_wires.push(w);
        }

        let num_wires = n_in + self.gates.len();
        let n_out = out_wires.len();
        let mut map = vec![u32::MAX; self.next_wire as usize];
        for (i, w) in self.inputs.iter().flatten().enumerate() {
            map[w.index()] = i as u32;
        }
        for (k, w) in out_wires.iter().enumerate() {
            map[w.index()] = (num_wires - n_out + k) as u32;
        }
        let mut next = n_in as u32;
        for g in &self.gates {
            let o = g.output().index();
            if map[o] == u32::MAX {
                map[o] = next;
                next += 1;
            }
        }

        let gates = self
            .gates
            .iter()
            .map(|g| g.map_wires(|w| WireId(map[w.index()])))
            .collect();
        let input_groups = self.inputs.iter().map(Vec::len).collect();
        let output_groups = outputs.iter().map(Vec::len).filter(|&n| n > 0).collect();
        Circuit::new(self.name, num_wires, gates, input_groups, output_groups)
    }
}

fn some(wires: &[WireId]) -> Vec<Bit> {
    wires.iter().copied().map(Some).collect()
}

fn require_wires(bits: Vec<Bit>) -> Result<Vec<WireId>, CircuitError> {
    bits.into_iter()
        .map(|b| b.ok_or(CircuitError::InvalidParameter("output bit is constant")))
        .collect()
}

/// `(a + b) mod 2^width`, with `width - 1` AND gates.
pub fn build_adder(width: usize) -> Result<Circuit, CircuitError> {
    if width == 0 {
        return Err(CircuitError::InvalidParameter(
            "adder width must be at least 1",
        ));
    }
    let mut b = CircuitBuilder::new(format!("adder{width}"));
    let x = b.input(width);
    let y = b.input(width);
    let sum = b.add(&some(&x), &some(&y), width);
    b.finish(&[require_wires(sum)?])
}

/// One output bit: `a < b` unsigned, with `width` AND gates.
pub fn build_comparator(width: usize) -> Result<Circuit, CircuitError> {
    if width == 0 {
        return Err(CircuitError::InvalidParameter(
            "comparator width must be at least 1",
        ));
    }
    let mut b = CircuitBuilder::new(format!("lt{width}"));
    let x = b.input(width);
    let y = b.input(width);
    let lt = b.less_than(&some(&x), &some(&y));
    b.finish(&[require_wires(vec![lt])?])
}

/// Width of the running total in [`build_checkout`]: wide enough that the
/// sum of `items` prices never overflows.
pub fn checkout_sum_width(items: usize, price_width: usize) -> usize {
    price_width + (usize::BITS - (items.max(1) - 1).leading_zeros()) as usize
}

/// Synthetic checkout: sums `items` prices and tests the total against a
/// budget.
///
/// Inputs are the prices (`price_width` bits each) followed by the budget
/// ([`checkout_sum_width`] bits). The single output is `total <= budget`.
pub fn build_checkout(items: usize, price_width: usize) -> Result<Circuit, CircuitError> {
    if items == 0 {
        return Err(CircuitError::InvalidParameter(
            "checkout needs at least one item",
        ));
    }
    if price_width == 0 {
        return Err(CircuitError::InvalidParameter(
            "price width must be at least 1",
        ));
    }
    let width = checkout_sum_width(items, price_width);
    let mut b = CircuitBuilder::new(format!("checkout{items}x{price_width}"));
    let prices: Vec<_> = (0..items).map(|_| b.input(price_width)).collect();
    let budget = b.input(width);

    let mut total = some(&prices[0]);
    for p in &prices[1..] {
        total = b.add(&total, &some(p), width);
    }
    let over = b.less_than(&some(&budget), &total);
    let over = over.ok_or(CircuitError::InvalidParameter("output bit is constant"))?;
    let within = b.inv(over);
    b.finish(&[vec![within]])
}

/// Linear chain of `gates` AND gates for throughput measurement.
///
/// Inputs are a 1-bit start value and a pool of up to 64 bits; gate `i`
/// computes `prev & pool[i % pool_len]`.
pub fn build_and_chain(gates: usize) -> Result<Circuit, CircuitError> {
    if gates == 0 {
        return Err(CircuitError::InvalidParameter(
            "chain needs at least one gate",
        ));
    }
    let mut b = CircuitBuilder::new(format!("and_chain{gates}"));
    let start = b.input(1)[0];
    let pool = b.input(gates.min(64));
    let mut prev = start;
    for i in 0..gates {
        prev = b.and(prev, pool[i % pool.len()]);
    }
    b.finish(&[vec![prev]])
}

#[cfg(test)]
mod tests {
    use super::super::bits;
    use super::*;

    fn eval2(c: &Circuit, x: u64, y: u64, w: usize) -> u64 {
        bits::to_u64(&c.eval_plaintext(&bits::pack(&[(x, w), (y, w)])).unwrap())
    }

    #[test]
    fn adder_gate_counts() {
        assert_eq!(build_adder(1).unwrap().stats().and_count, 0);
        assert_eq!(build_adder(32).unwrap().stats().and_count, 31);
        assert_eq!(build_adder(64).unwrap().stats().and_count, 63);
        assert!(build_adder(0).is_err());
    }

    #[test]
    fn adder_arithmetic() {
        let c = build_adder(8).unwrap();
        assert_eq!(eval2(&c, 200, 100, 8), 44);
        assert_eq!(eval2(&c, 255, 1, 8), 0);
    }

    #[test]
    fn adder_exhaustive_small_widths() {
        for w in 1..=5 {
            let c = build_adder(w).unwrap();
            let m = 1u64 << w;
            for x in 0..m {
                for y in 0..m {
                    assert_eq!(eval2(&c, x, y, w), (x + y) % m, "w={w} {x}+{y}");
                }
            }
        }
    }

    #[test]
    fn comparator_small_cases() {
        let c = build_comparator(1).unwrap();
        assert_eq!(eval2(&c, 0, 1, 1), 1);
        assert_eq!(eval2(&c, 1, 1, 1), 0);
        assert_eq!(eval2(&c, 1, 0, 1), 0);
        let c = build_comparator(8).unwrap();
        assert_eq!(eval2(&c, 5, 5, 8), 0);
        assert_eq!(c.stats().and_count, 8);
        assert!(build_comparator(0).is_err());
    }

    #[test]
    fn comparator_exhaustive_width4() {
        let c = build_comparator(4).unwrap();
        for x in 0..16 {
            for y in 0..16 {
                assert_eq!(eval2(&c, x, y, 4), (x < y) as u64);
            }
        }
    }

    #[test]
    fn checkout_layout() {
        assert_eq!(checkout_sum_width(1, 8), 8);
        assert_eq!(checkout_sum_width(2, 8), 9);
        assert_eq!(checkout_sum_width(4, 16), 18);
        assert_eq!(checkout_sum_width(5, 16), 19);
        let c = build_checkout(4, 16).unwrap();
        assert_eq!(c.input_groups(), &[16, 16, 16, 16, 18]);
        assert_eq!(c.output_groups(), &[1]);
        assert!(build_checkout(0, 8).is_err());
    }

    #[test]
    fn and_chain_counts() {
        for n in [1, 2, 63, 64, 65, 1000] {
            let c = build_and_chain(n).unwrap();
            assert_eq!(c.stats().and_count, n);
            assert_eq!(c.stats().depth, n);
            assert!(c.dead_wires().is_empty());
        }
    }

    #[test]
    fn pass_through_outputs_get_buffered() {
        let mut b = CircuitBuilder::new("id");
        let x = b.input(2);
        let c = b.finish(&[x.clone(), vec![x[0]]]).unwrap();
        assert_eq!(
            c.eval_plaintext(&[true, false]).unwrap(),
            vec![true, false, true]
        );
        assert_eq!(c.stats().inv_count, 6);
    }

    #[test]
    fn builders_emit_no_dead_wires() {
        for c in [build_adder(16), build_comparator(16), build_checkout(4, 16)] {
            assert!(c.unwrap().dead_wires().is_empty());
        }
    }
}
