use std::fs;
use std::path::Path;
use std::sync::{Arc, Mutex};
use std::thread;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use tgh_core::circuit::{
    bits, build_adder, build_comparator, parse_bristol, serialize_bristol, Circuit,
};
use tgh_core::evaluation::AuthResult;
use tgh_core::garbling::Seed;
use tgh_core::protocol::{
    connect_pair, run_local, AbortReason, Client, Evaluator, EvaluatorPhase, EvaluatorTamper,
    Frame, Generator, GeneratorPhase, MessageType, ProtocolError, Role, RunOptions, SessionConfig,
    SharedBuffer, Transport, TransportConfig, TransportError, TransportKind,
};

fn corpus() -> Vec<(String, Circuit)> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data");
    let mut files: Vec<_> = fs::read_dir(&dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .collect();
    files.sort();
    files
        .into_iter()
        .map(|p| {
            let name = p.file_stem().unwrap().to_string_lossy().into_owned();
            let c = parse_bristol(&fs::read_to_string(&p).unwrap()).unwrap();
            (name, c)
        })
        .collect()
}

fn random_inputs(rng: &mut impl Rng, c: &Circuit) -> Vec<bool> {
    (0..c.num_inputs()).map(|_| rng.random()).collect()
}

fn opts(kind: TransportKind) -> RunOptions {
    RunOptions {
        transport: TransportConfig::new(kind),
        ..RunOptions::default()
    }
}

#[test]
fn corpus_round_trips_and_runs_end_to_end() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let all = corpus();
    assert!(all.len() >= 10);
    for (name, c) in all {
        let text = serialize_bristol(&c);
        assert!(parse_bristol(&text).unwrap().same_structure(&c), "{name}");
        let c = Arc::new(c);
        for _ in 0..4 {
            let inputs = random_inputs(&mut rng, &c);
            let out = run_local(
                c.clone(),
                Seed::from_rng(&mut rng),
                &inputs,
                RunOptions::default(),
            )
            .unwrap();
            assert_eq!(
                out.result,
                AuthResult::Decoded(c.eval_plaintext(&inputs).unwrap()),
                "{name}"
            );
        }
    }
}

#[test]
fn full_adder_corpus_file_is_a_full_adder() {
    let (_, c) = corpus()
        .into_iter()
        .find(|(n, _)| n == "full_adder_nots")
        .unwrap();
    for x in 0..8u64 {
        let out = c.eval_plaintext(&bits::from_u64(x, 3)).unwrap();
        let sum = (x & 1) + (x >> 1 & 1) + (x >> 2);
        assert_eq!(out, vec![sum & 1 == 1, sum >> 1 == 1], "{x:03b}");
    }
}

#[test]
fn transports_give_identical_sessions() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for c in [build_adder(32).unwrap(), build_comparator(16).unwrap()] {
        let c = Arc::new(c);
        for owner in [Role::Generator, Role::Client] {
            let inputs = random_inputs(&mut rng, &c);
            let seed = Seed::from_rng(&mut rng);
            let runs: Vec<_> = [TransportKind::SharedBuffer, TransportKind::Loopback]
                .into_iter()
                .map(|k| {
                    run_local(c.clone(), seed, &inputs, RunOptions { owner, ..opts(k) }).unwrap()
                })
                .collect();
            assert_eq!(runs[0].result, runs[1].result);
            assert_eq!(
                runs[0].setup,
                runs[1].setup.clone_with_times(&runs[0].setup)
            );
            assert_eq!(runs[0].setup.tables_digest, runs[1].setup.tables_digest);
        }
    }
}

trait SameBytes {
    fn clone_with_times(&self, other: &Self) -> Self;
}

impl SameBytes for tgh_core::protocol::SetupReport {
    fn clone_with_times(&self, other: &Self) -> Self {
        Self {
            garble_time: other.garble_time,
            send_time: other.send_time,
            ..self.clone()
        }
    }
}

#[test]
fn one_generator_serves_concurrent_sessions() {
    let generator = Arc::new(Generator::new());
    let circuit = Arc::new(build_adder(16).unwrap());
    let handles: Vec<_> = (0..8u64)
        .map(|id| {
            let generator = generator.clone();
            let circuit = circuit.clone();
            thread::spawn(move || {
                let (mut mine, mut theirs) = SharedBuffer::pair(1 << 12);
                let eval_cfg =
                    SessionConfig::evaluator(circuit.clone(), TransportKind::SharedBuffer);
                let eval =
                    thread::spawn(move || Evaluator::new(&eval_cfg).unwrap().serve(&mut theirs));
                let seed = Seed([id as u8; 32]);
                let cfg = SessionConfig::generator(circuit, seed, TransportKind::SharedBuffer)
                    .with_client_id(id);
                generator.run_setup_phase(&cfg, &mut mine).unwrap();
                let (a, b) = (1000 + id * 77, 3 * id);
                let r = generator
                    .run_online_phase(&cfg, &bits::pack(&[(a, 16), (b, 16)]), &mut mine)
                    .unwrap();
                eval.join().unwrap().unwrap();
                (r, (a + b) % 65536)
            })
        })
        .collect();
    for h in handles {
        let (r, expected) = h.join().unwrap();
        assert_eq!(r, AuthResult::Decoded(bits::from_u64(expected, 16)));
    }
    assert_eq!(generator.active_sessions(), 0, "garblings are single use");
}

#[test]
fn same_seed_different_clients_are_separate_sessions() {
    let g = Generator::new();
    let c = Arc::new(build_adder(4).unwrap());
    let (mut a, _b) = SharedBuffer::pair(1 << 16);
    for id in 0..3 {
        let cfg = SessionConfig::generator(c.clone(), Seed([5; 32]), TransportKind::SharedBuffer)
            .with_client_id(id);
        g.run_setup_phase(&cfg, &mut a).unwrap();
        assert_eq!(g.phase(&cfg), Some(GeneratorPhase::TablesSent));
    }
    assert_eq!(g.active_sessions(), 3);
}

#[test]
fn evaluator_surface_holds_no_secrets() {
    let c = Arc::new(build_adder(8).unwrap());
    let cfg = SessionConfig::evaluator(c.clone(), TransportKind::Loopback);
    assert_eq!(cfg.role, Role::Evaluator);
    assert!(cfg.seed().is_none());
    let e = Evaluator::new(&cfg).unwrap();
    assert_eq!(e.phase(), EvaluatorPhase::AwaitingTables);
    assert!(e.circuit().same_structure(&c));
    for seeded in [
        SessionConfig::generator(c.clone(), Seed([1; 32]), TransportKind::Loopback),
        SessionConfig::client(c.clone(), Seed([1; 32]), TransportKind::Loopback),
    ] {
        assert!(seeded.seed().is_some());
        assert!(matches!(
            Evaluator::new(&seeded),
            Err(ProtocolError::WrongRole { .. })
        ));
        assert!(Client::new(&seeded).is_ok() == (seeded.role == Role::Client));
    }
}

/// Records the frame types a party sends, and the moment the input bits are
/// first handed to the session.
struct Recorder<T> {
    inner: T,
    log: Arc<Mutex<Vec<String>>>,
    pending: Vec<u8>,
}

impl<T: Transport> Transport for Recorder<T> {
    fn send_bytes(&mut self, bytes: &[u8]) -> Result<(), TransportError> {
        self.pending.extend_from_slice(bytes);
        while self.pending.len() >= 10 {
            let len = u32::from_le_bytes(self.pending[6..10].try_into().unwrap()) as usize;
            if self.pending.len() < 10 + len {
                break;
            }
            let kind = MessageType::from_byte(self.pending[5]).unwrap();
            self.log.lock().unwrap().push(format!("{kind} {len}"));
            self.pending.drain(..10 + len);
        }
        self.inner.send_bytes(bytes)
    }
    fn recv_exact(&mut self, buf: &mut [u8]) -> Result<(), TransportError> {
        self.inner.recv_exact(buf)
    }
    fn flush(&mut self) -> Result<(), TransportError> {
        self.inner.flush()
    }
}

#[test]
fn all_table_bytes_cross_before_any_input() {
    let c = Arc::new(build_adder(8).unwrap());
    let (mine, mut theirs) = connect_pair(&TransportConfig::new(TransportKind::Loopback)).unwrap();
    let log = Arc::new(Mutex::new(Vec::new()));
    let mut t = Recorder {
        inner: mine,
        log: log.clone(),
        pending: Vec::new(),
    };
    let eval_cfg = SessionConfig::evaluator(c.clone(), TransportKind::Loopback);
    let eval = thread::spawn(move || Evaluator::new(&eval_cfg).unwrap().serve(&mut *theirs));

    let g = Generator::new();
    let cfg = SessionConfig::generator(c, Seed([3; 32]), TransportKind::Loopback);
    let setup = g.run_setup_phase(&cfg, &mut t).unwrap();
    log.lock().unwrap().push("inputs known".into());
    let r = g
        .run_online_phase(&cfg, &bits::pack(&[(7, 8), (8, 8)]), &mut t)
        .unwrap();
    eval.join().unwrap().unwrap();

    assert_eq!(r, AuthResult::Decoded(bits::from_u64(15, 8)));
    assert_eq!(
        *log.lock().unwrap(),
        vec![
            format!("GARBLED_TABLES {}", setup.payload_len),
            "inputs known".into(),
            "INPUT_VALUES 272".into()
        ]
    );
}

#[test]
fn second_online_phase_on_one_garbling_is_refused() {
    let c = Arc::new(build_adder(4).unwrap());
    let (mut a, mut b) = SharedBuffer::pair(1 << 16);
    let eval_cfg = SessionConfig::evaluator(c.clone(), TransportKind::SharedBuffer);
    let eval = thread::spawn(move || {
        let mut e = Evaluator::new(&eval_cfg).unwrap();
        let first = e.serve(&mut b);
        // a replayed input frame finds no tables
        let second = e.serve_online(&mut b);
        (first, second)
    });
    let g = Generator::new();
    let cfg = SessionConfig::generator(c, Seed([9; 32]), TransportKind::SharedBuffer);
    g.run_setup_phase(&cfg, &mut a).unwrap();
    g.run_online_phase(&cfg, &[false; 8], &mut a).unwrap();
    assert!(matches!(
        g.run_online_phase(&cfg, &[false; 8], &mut a),
        Err(ProtocolError::PhaseViolation(_))
    ));
    a.send_frame(&Frame::new(MessageType::InputValues, vec![0; 8 * 17]))
        .unwrap();
    let (first, second) = eval.join().unwrap();
    assert!(first.is_ok());
    assert!(matches!(second, Err(ProtocolError::PhaseViolation(_))));
    assert_eq!(
        a.recv_frame().unwrap(),
        Frame::abort(AbortReason::ProtocolViolation)
    );
}

#[test]
fn malicious_evaluator_is_detected_at_the_client() {
    let c = Arc::new(build_comparator(8).unwrap());
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for kind in [TransportKind::SharedBuffer, TransportKind::Loopback] {
        for _ in 0..20 {
            let tamper = if rng.random() {
                EvaluatorTamper::TableBit {
                    and_index: rng.random_range(0..8),
                    bit: rng.random_range(0..129),
                }
            } else {
                EvaluatorTamper::OutputBit {
                    output: 0,
                    bit: rng.random_range(0..129),
                }
            };
            let o = RunOptions {
                owner: Role::Client,
                tamper: Some(tamper),
                ..opts(kind)
            };
            let inputs = random_inputs(&mut rng, &c);
            let r = run_local(c.clone(), Seed::from_rng(&mut rng), &inputs, o).unwrap();
            assert!(r.result.is_abort(), "{tamper:?}");
        }
    }
}

#[test]
fn evaluator_learns_of_authentication_failure() {
    let c = Arc::new(build_adder(4).unwrap());
    let (mut a, mut b) = SharedBuffer::pair(1 << 16);
    let eval_cfg = SessionConfig::evaluator(c.clone(), TransportKind::SharedBuffer);
    let eval = thread::spawn(move || {
        let mut e = Evaluator::new(&eval_cfg)
            .unwrap()
            .with_tamper(EvaluatorTamper::OutputBit { output: 1, bit: 3 });
        e.serve(&mut b).unwrap();
        b.recv_frame().unwrap()
    });
    let g = Generator::new();
    let cfg = SessionConfig::generator(c, Seed([6; 32]), TransportKind::SharedBuffer);
    g.run_setup_phase(&cfg, &mut a).unwrap();
    assert_eq!(
        g.run_online_phase(&cfg, &[true; 8], &mut a).unwrap(),
        AuthResult::Abort { output_index: 1 }
    );
    assert_eq!(
        eval.join().unwrap(),
        Frame::abort(AbortReason::Authentication)
    );
}

#[test]
fn client_online_phase_over_loopback_port() {
    let listener = tgh_core::protocol::Loopback::listen(0).unwrap();
    let addr = listener.local_addr().unwrap();
    let c = Arc::new(build_adder(8).unwrap());
    let seed = Seed([0x42; 32]);

    let c2 = c.clone();
    let server = thread::spawn(move || {
        let (stream, _) = listener.accept().unwrap();
        let mut t = tgh_core::protocol::Loopback::from_stream(stream).unwrap();
        let mut e = Evaluator::new(&SessionConfig::evaluator(c2, TransportKind::Loopback)).unwrap();
        e.serve(&mut t).unwrap()
    });

    // generator and client share only the seed; the client never talks to the generator
    let mut t = tgh_core::protocol::Loopback::connect(addr).unwrap();
    Generator::new()
        .run_setup_phase(
            &SessionConfig::generator(c.clone(), seed, TransportKind::Loopback),
            &mut t,
        )
        .unwrap();
    let client = Client::new(&SessionConfig::client(c, seed, TransportKind::Loopback)).unwrap();
    let r = client
        .run_online_phase(&bits::pack(&[(250, 8), (10, 8)]), &mut t)
        .unwrap();
    assert_eq!(r, AuthResult::Decoded(bits::from_u64(4, 8)));
    assert_eq!(server.join().unwrap().hash_calls, 7);
}
