use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use tgh_core::circuit::random::random_circuit;
use tgh_core::circuit::{parse_bristol, serialize_bristol, Circuit};
use tgh_core::evaluation::{
    decode_outputs, evaluate, evaluate_traced, tamper_trial, AuthResult, Mutation,
};
use tgh_core::exec::Exec;
use tgh_core::garbling::{derive_delta, encode_inputs, garble, garble_with, Seed, TABLE_BYTES};
use tgh_core::protocol::{
    client_encode_inputs, decode_wire_values, deserialize_garbled_circuit, encode_wire_values,
    serialize_garbled_circuit, Frame, MessageType,
};

/// A random circuit together with an input vector and a seed.
fn case() -> impl Strategy<Value = (Circuit, Vec<bool>, Seed)> {
    (any::<u64>(), 1usize..12, 1usize..80, any::<[u8; 32]>()).prop_flat_map(
        |(shape, n_in, n_gates, seed)| {
            let n_out = 1 + (shape as usize % n_gates.min(8));
            let c = random_circuit(&mut ChaCha8Rng::seed_from_u64(shape), n_in, n_gates, n_out);
            (
                Just(c),
                proptest::collection::vec(any::<bool>(), n_in),
                Just(Seed(seed)),
            )
        },
    )
}

fn xor_only() -> impl Strategy<Value = (Circuit, Vec<bool>)> {
    (1usize..10, 1usize..40, any::<u64>()).prop_flat_map(|(n_in, n_gates, s)| {
        let mut rng = ChaCha8Rng::seed_from_u64(s);
        let gates: Vec<_> = (0..n_gates)
            .map(|i| {
                let avail = (n_in + i) as u32;
                tgh_core::circuit::Gate::Xor {
                    a: tgh_core::circuit::WireId(rng.random_range(0..avail)),
                    b: tgh_core::circuit::WireId(rng.random_range(0..avail)),
                    out: tgh_core::circuit::WireId(avail),
                }
            })
            .collect();
        let c = Circuit::new("xor", n_in + n_gates, gates, vec![n_in], vec![1]).unwrap();
        (Just(c), proptest::collection::vec(any::<bool>(), n_in))
    })
}

fn run_pipeline(c: &Circuit, inputs: &[bool], seed: &Seed) -> AuthResult {
    let g = garble(c, seed);
    let values = encode_inputs(&g.encoding, inputs, derive_delta(seed)).unwrap();
    let out = evaluate(c, &g.garbled, &values).unwrap();
    decode_outputs(&g.decoding, &out).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn garbled_pipeline_matches_plaintext((c, inputs, seed) in case()) {
        let expected = c.eval_plaintext(&inputs).unwrap();
        prop_assert_eq!(run_pipeline(&c, &inputs, &seed), AuthResult::Decoded(expected));
    }

    #[test]
    fn garbling_is_deterministic_in_every_mode((c, _inputs, seed) in case()) {
        let a = garble_with(&c, &seed, Exec::Sequential);
        let b = garble_with(&c, &seed, Exec::Parallel);
        prop_assert_eq!(&a, &b);
        prop_assert_eq!(a, garble(&c, &seed));
    }

    #[test]
    fn table_size_and_hash_calls_track_and_count((c, inputs, seed) in case()) {
        let g = garble(&c, &seed);
        let ands = c.stats().and_count;
        prop_assert_eq!(g.garbled.and_count(), ands);
        prop_assert_eq!(serialize_garbled_circuit(&g.garbled).len(), 36 + TABLE_BYTES * ands);
        let values = encode_inputs(&g.encoding, &inputs, derive_delta(&seed)).unwrap();
        let trace = evaluate_traced(&c, &g.garbled, &values).unwrap();
        prop_assert_eq!(trace.hash_calls, ands);
        prop_assert_eq!(trace.gates_evaluated, c.gates().len());
    }

    #[test]
    fn xor_only_circuits_need_no_tables((c, inputs) in xor_only(), seed in any::<[u8; 32]>()) {
        let seed = Seed(seed);
        let g = garble(&c, &seed);
        prop_assert_eq!(g.garbled.table_bytes(), 0);
        let values = encode_inputs(&g.encoding, &inputs, derive_delta(&seed)).unwrap();
        let trace = evaluate_traced(&c, &g.garbled, &values).unwrap();
        prop_assert_eq!(trace.hash_calls, 0);
        let decoded = decode_outputs(&g.decoding, &trace.outputs).unwrap();
        prop_assert_eq!(decoded, AuthResult::Decoded(c.eval_plaintext(&inputs).unwrap()));
    }

    #[test]
    fn client_encoding_equals_generator_encoding((c, inputs, seed) in case()) {
        let g = garble(&c, &seed);
        let generator = encode_inputs(&g.encoding, &inputs, derive_delta(&seed)).unwrap();
        let client = client_encode_inputs(&seed, &c, &inputs).unwrap();
        prop_assert_eq!(encode_wire_values(&generator), encode_wire_values(&client));
    }

    #[test]
    fn garbled_circuit_serialization_round_trips((c, _inputs, seed) in case()) {
        let gc = garble(&c, &seed).garbled;
        let bytes = serialize_garbled_circuit(&gc);
        prop_assert_eq!(deserialize_garbled_circuit(&bytes).unwrap(), gc);
        if !bytes.is_empty() {
            prop_assert!(deserialize_garbled_circuit(&bytes[..bytes.len() - 1]).is_err());
        }
    }

    #[test]
    fn wire_values_round_trip((c, inputs, seed) in case()) {
        let values = client_encode_inputs(&seed, &c, &inputs).unwrap();
        let bytes = encode_wire_values(&values);
        prop_assert_eq!(decode_wire_values(&bytes, values.len()).unwrap(), values);
    }

    #[test]
    fn frames_round_trip(kind in 1u8..=4, payload in proptest::collection::vec(any::<u8>(), 0..600)) {
        let f = Frame::new(MessageType::from_byte(kind).unwrap(), payload);
        let bytes = f.encode();
        prop_assert_eq!(bytes.len(), f.encoded_len());
        let (back, used) = Frame::decode(&bytes).unwrap();
        prop_assert_eq!(used, bytes.len());
        prop_assert_eq!(back, f);
        prop_assert!(Frame::decode(&bytes[..bytes.len() - 1]).is_err());
    }

    #[test]
    fn bristol_round_trip((c, _inputs, _seed) in case()) {
        let text = serialize_bristol(&c);
        let back = parse_bristol(&text).unwrap();
        prop_assert!(back.same_structure(&c));
        prop_assert_eq!(serialize_bristol(&back), text);
        prop_assert_eq!(back.digest(), c.digest());
    }

    #[test]
    fn single_bit_tampering_is_never_accepted_with_a_wrong_output(
        (c, inputs, seed) in case(),
        pick in any::<u64>(),
    ) {
        let m = Mutation::random(&mut ChaCha8Rng::seed_from_u64(pick), &c);
        let o = tamper_trial(&c, &seed, &inputs, m).unwrap();
        prop_assert!(!o.forged(), "{:?} forged {:?}", m, o.result);
    }

    #[test]
    fn distinct_seeds_give_distinct_tables((c, _inputs, seed) in case(), other in any::<[u8; 32]>()) {
        prop_assume!(c.stats().and_count > 0 && other != seed.0);
        prop_assert_ne!(garble(&c, &seed).garbled, garble(&c, &Seed(other)).garbled);
    }
}

/// Masked input bits are uniform across seeds whatever the plaintext.
#[test]
fn masked_bits_hide_plaintext() {
    let c = tgh_core::circuit::build_adder(8).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0x6d61736b);
    const TRIALS: usize = 4000;
    for plaintext in [false, true] {
        let inputs = vec![plaintext; 16];
        // per input wire: count of masked bit == 1
        let mut ones = [0usize; 16];
        for _ in 0..TRIALS {
            let seed = Seed::from_rng(&mut rng);
            for (k, v) in client_encode_inputs(&seed, &c, &inputs)
                .unwrap()
                .iter()
                .enumerate()
            {
                ones[k] += v.masked_bit as usize;
            }
        }
        // chi-square with one degree of freedom per wire, p = 0.001 cut-off
        for (k, &n1) in ones.iter().enumerate() {
            let e = TRIALS as f64 / 2.0;
            let chi2 = ((n1 as f64 - e).powi(2) + ((TRIALS - n1) as f64 - e).powi(2)) / e;
            assert!(
                chi2 < 10.83,
                "wire {k}, plaintext {plaintext}: {n1}/{TRIALS} ones, chi2 {chi2:.2}"
            );
        }
    }
}
