//! Generator, evaluator and client roles over a [`Transport`].
//!
//! Setup: the generator garbles from its seed and ships `GARBLED_TABLES`.
//! Online: the input owner (generator or a client holding the same seed)
//! sends `INPUT_VALUES`, the evaluator answers with `OUTPUT_VALUES`, and the
//! owner authenticates them. Either side may send `ABORT` instead.

pub mod frame;
pub mod transport;

use std::collections::HashMap;
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use sha2::{Digest, Sha256};
use thiserror::Error;

pub use frame::{
    decode_wire_values, deserialize_garbled_circuit, encode_wire_values, serialize_garbled_circuit,
    AbortReason, CodecError, Frame, FrameError, MessageType,
};
pub use transport::{
    connect_pair, Loopback, SharedBuffer, Transport, TransportConfig, TransportError,
    TransportKind, TransportPair, DEFAULT_SHM_CAPACITY,
};

use crate::circuit::Circuit;
use crate::evaluation::{decode_outputs, evaluate_traced, AuthResult, EvalError};
use crate::exec::Exec;
use crate::garbling::{
    derive_delta, derive_wire, encode_inputs, garble, output_decoding_from, wire_material, Delta,
    GarbleError, GarbledCircuit, GarbledWireValue, Garbling, InputEncoding, OutputDecoding, Seed,
    LABEL_BYTES,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Role {
    Generator,
    Evaluator,
    Client,
}

#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error(transparent)]
    Transport(#[from] TransportError),
    #[error("malformed payload: {0}")]
    Codec(#[from] CodecError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Input(#[from] GarbleError),
    #[error("operation requires role {expected:?}, config has {got:?}")]
    WrongRole { expected: Role, got: Role },
    #[error("{0:?} config carries no seed")]
    MissingSeed(Role),
    #[error("evaluator config must not carry a seed")]
    SeedOnEvaluator,
    #[error("phase violation: {0}")]
    PhaseViolation(&'static str),
    #[error("expected {expected} frame, got {got}")]
    UnexpectedMessage {
        expected: MessageType,
        got: MessageType,
    },
    #[error("peer aborted ({0:?})")]
    PeerAborted(AbortReason),
    #[error("garbled tables were produced for a different circuit")]
    DigestMismatch,
}

/// Per-party session parameters. Only generator and client configs hold a
/// seed.
#[derive(Clone)]
pub struct SessionConfig {
    pub circuit: Arc<Circuit>,
    pub role: Role,
    pub transport: TransportKind,
    pub client_id: u64,
    seed: Option<Seed>,
}

impl SessionConfig {
    pub fn generator(circuit: Arc<Circuit>, seed: Seed, transport: TransportKind) -> Self {
        SessionConfig {
            circuit,
            role: Role::Generator,
            transport,
            client_id: 0,
            seed: Some(seed),
        }
    }

    pub fn client(circuit: Arc<Circuit>, seed: Seed, transport: TransportKind) -> Self {
        SessionConfig {
            circuit,
            role: Role::Client,
            transport,
            client_id: 0,
            seed: Some(seed),
        }
    }

    pub fn evaluator(circuit: Arc<Circuit>, transport: TransportKind) -> Self {
        SessionConfig {
            circuit,
            role: Role::Evaluator,
            transport,
            client_id: 0,
            seed: None,
        }
    }

    pub fn with_client_id(mut self, id: u64) -> Self {
        self.client_id = id;
        self
    }

    pub fn seed(&self) -> Option<&Seed> {
        self.seed.as_ref()
    }

    fn require(&self, role: Role) -> Result<&Seed, ProtocolError> {
        if self.role != role {
            return Err(ProtocolError::WrongRole {
                expected: role,
                got: self.role,
            });
        }
        self.seed.as_ref().ok_or(ProtocolError::MissingSeed(role))
    }
}

impl std::fmt::Debug for SessionConfig {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SessionConfig")
            .field("circuit", &self.circuit.name())
            .field("role", &self.role)
            .field("transport", &self.transport)
            .field("client_id", &self.client_id)
            .field("seed", &self.seed)
            .finish()
    }
}

/// Sends `frame`; if the peer already hung up, picks up its pending ABORT.
fn send_or_abort(t: &mut dyn Transport, frame: &Frame) -> Result<usize, ProtocolError> {
    match t.send_frame(frame) {
        Ok(n) => Ok(n),
        Err(e) => match t.recv_frame() {
            Ok(f) if f.kind == MessageType::Abort => {
                Err(ProtocolError::PeerAborted(f.abort_reason()?))
            }
            _ => Err(e.into()),
        },
    }
}

fn expect(frame: Frame, kind: MessageType) -> Result<Vec<u8>, ProtocolError> {
    if frame.kind == kind {
        return Ok(frame.payload);
    }
    if frame.kind == MessageType::Abort {
        return Err(ProtocolError::PeerAborted(frame.abort_reason()?));
    }
    Err(ProtocolError::UnexpectedMessage {
        expected: kind,
        got: frame.kind,
    })
}

/// Online exchange shared by both input owners.
fn owner_exchange(
    values: &[GarbledWireValue],
    decoding: &OutputDecoding,
    t: &mut dyn Transport,
) -> Result<AuthResult, ProtocolError> {
    send_or_abort(
        t,
        &Frame::new(MessageType::InputValues, encode_wire_values(values)),
    )?;
    let payload = expect(t.recv_frame()?, MessageType::OutputValues)?;
    let outputs = decode_wire_values(&payload, decoding.wires.len())?;
    let result = decode_outputs(decoding, &outputs)?;
    if result.is_abort() {
        // the peer learns only that authentication failed
        let _ = t.send_frame(&Frame::abort(AbortReason::Authentication));
    }
    Ok(result)
}

/// SHA-256 of the serialized garbled circuit; equal digests mean
/// byte-identical tables.
pub fn garbled_digest(gc: &GarbledCircuit) -> [u8; 32] {
    Sha256::digest(serialize_garbled_circuit(gc)).into()
}

// ---- generator ----

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SessionKey {
    pub client_id: u64,
    pub circuit_digest: [u8; 32],
    pub seed_fingerprint: [u8; 32],
}

impl SessionKey {
    fn of(cfg: &SessionConfig, seed: &Seed) -> Self {
        SessionKey {
            client_id: cfg.client_id,
            circuit_digest: cfg.circuit.digest(),
            seed_fingerprint: seed.fingerprint(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GeneratorPhase {
    TablesSent,
    Online,
}

struct GeneratorSession {
    phase: GeneratorPhase,
    delta: Delta,
    encoding: InputEncoding,
    decoding: OutputDecoding,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SetupReport {
    /// Frame bytes written, header included.
    pub bytes_sent: usize,
    pub payload_len: usize,
    pub and_count: usize,
    /// SHA-256 of the serialized garbled circuit.
    pub tables_digest: [u8; 32],
    pub garble_time: Duration,
    pub send_time: Duration,
}

/// The trusted role. One generator can serve many concurrent sessions; each
/// garbling is used for exactly one online phase.
#[derive(Default)]
pub struct Generator {
    sessions: Mutex<HashMap<SessionKey, GeneratorSession>>,
}

impl Generator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn active_sessions(&self) -> usize {
        self.sessions.lock().unwrap().len()
    }

    pub fn phase(&self, cfg: &SessionConfig) -> Option<GeneratorPhase> {
        let seed = cfg.seed()?;
        self.sessions
            .lock()
            .unwrap()
            .get(&SessionKey::of(cfg, seed))
            .map(|s| s.phase)
    }

    /// Garbles and sends `GARBLED_TABLES`. No input is involved.
    pub fn run_setup_phase(
        &self,
        cfg: &SessionConfig,
        t: &mut dyn Transport,
    ) -> Result<SetupReport, ProtocolError> {
        let seed = cfg.require(Role::Generator)?;
        let key = SessionKey::of(cfg, seed);
        if self.sessions.lock().unwrap().contains_key(&key) {
            return Err(ProtocolError::PhaseViolation(
                "setup already ran for this session",
            ));
        }

        let start = Instant::now();
        let Garbling {
            garbled,
            encoding,
            decoding,
        } = garble(&cfg.circuit, seed);
        let payload = serialize_garbled_circuit(&garbled);
        let garble_time = start.elapsed();
        let tables_digest: [u8; 32] = Sha256::digest(&payload).into();
        let payload_len = payload.len();

        let start = Instant::now();
        let bytes_sent = t.send_frame(&Frame::new(MessageType::GarbledTables, payload))?;
        let send_time = start.elapsed();

        let session = GeneratorSession {
            phase: GeneratorPhase::TablesSent,
            delta: derive_delta(seed),
            encoding,
            decoding,
        };
        self.sessions.lock().unwrap().insert(key, session);
        Ok(SetupReport {
            bytes_sent,
            payload_len,
            and_count: garbled.and_count(),
            tables_digest,
            garble_time,
            send_time,
        })
    }

    /// Online phase with the generator as input owner. Consumes the session.
    pub fn run_online_phase(
        &self,
        cfg: &SessionConfig,
        inputs: &[bool],
        t: &mut dyn Transport,
    ) -> Result<AuthResult, ProtocolError> {
        let seed = cfg.require(Role::Generator)?;
        let key = SessionKey::of(cfg, seed);
        let (values, decoding) = {
            let mut sessions = self.sessions.lock().unwrap();
            let s = sessions
                .get_mut(&key)
                .ok_or(ProtocolError::PhaseViolation("online phase before setup"))?;
            if s.phase != GeneratorPhase::TablesSent {
                return Err(ProtocolError::PhaseViolation("garbling already used"));
            }
            let values = encode_inputs(&s.encoding, inputs, s.delta)?;
            s.phase = GeneratorPhase::Online;
            (values, s.decoding.clone())
        };
        let result = owner_exchange(&values, &decoding, t);
        self.sessions.lock().unwrap().remove(&key);
        result
    }
}

// ---- client ----

/// Input encoding computed from the seed alone, without the generator.
pub fn client_encode_inputs(
    seed: &Seed,
    circuit: &Circuit,
    bits: &[bool],
) -> Result<Vec<GarbledWireValue>, GarbleError> {
    let enc = InputEncoding {
        wires: circuit
            .input_wires()
            .map(|w| derive_wire(seed, w))
            .collect(),
    };
    encode_inputs(&enc, bits, derive_delta(seed))
}

/// Output decoding data recomputed from the seed.
pub fn client_output_decoding(seed: &Seed, circuit: &Circuit) -> OutputDecoding {
    let (delta, wires) = wire_material(circuit, seed, Exec::default());
    output_decoding_from(circuit, &wires, delta)
}

/// Remote input owner sharing the generator's seed.
pub struct Client {
    circuit: Arc<Circuit>,
    seed: Seed,
    decoding: OutputDecoding,
}

impl Client {
    pub fn new(cfg: &SessionConfig) -> Result<Self, ProtocolError> {
        let seed = *cfg.require(Role::Client)?;
        let decoding = client_output_decoding(&seed, &cfg.circuit);
        Ok(Client {
            circuit: cfg.circuit.clone(),
            seed,
            decoding,
        })
    }

    pub fn encode_inputs(&self, bits: &[bool]) -> Result<Vec<GarbledWireValue>, GarbleError> {
        client_encode_inputs(&self.seed, &self.circuit, bits)
    }

    pub fn run_online_phase(
        &self,
        inputs: &[bool],
        t: &mut dyn Transport,
    ) -> Result<AuthResult, ProtocolError> {
        let values = self.encode_inputs(inputs)?;
        owner_exchange(&values, &self.decoding, t)
    }
}

/// Online phase for either input owner.
pub fn run_online_phase(
    generator: &Generator,
    cfg: &SessionConfig,
    inputs: &[bool],
    t: &mut dyn Transport,
) -> Result<AuthResult, ProtocolError> {
    match cfg.role {
        Role::Generator => generator.run_online_phase(cfg, inputs, t),
        Role::Client => Client::new(cfg)?.run_online_phase(inputs, t),
        Role::Evaluator => Err(ProtocolError::WrongRole {
            expected: Role::Client,
            got: Role::Evaluator,
        }),
    }
}

// ---- evaluator ----

/// A deliberate single-bit deviation by a malicious evaluator. Bits
/// `0..128` address the label, 128 the masked bit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvaluatorTamper {
    /// Flip a bit in all four rows of the `and_index`-th table.
    TableBit { and_index: usize, bit: u32 },
    /// Flip a bit of an output value before returning it.
    OutputBit { output: usize, bit: u32 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvaluatorPhase {
    AwaitingTables,
    Ready,
    Done,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EvaluatorReport {
    pub table_bytes: usize,
    pub gates_evaluated: usize,
    pub hash_calls: usize,
    pub eval_time: Duration,
}

/// The untrusted role. Holds the circuit and, after setup, the garbled
/// tables; never a seed, mask, Delta or decoding data.
pub struct Evaluator {
    circuit: Arc<Circuit>,
    phase: EvaluatorPhase,
    garbled: Option<GarbledCircuit>,
    tamper: Option<EvaluatorTamper>,
}

fn flip(bytes: &mut [u8], bit: u32) {
    let bit = bit % (8 * LABEL_BYTES as u32 + 1);
    if bit as usize == 8 * LABEL_BYTES {
        bytes[LABEL_BYTES] ^= 1;
    } else {
        bytes[bit as usize / 8] ^= 1 << (bit % 8);
    }
}

impl Evaluator {
    pub fn new(cfg: &SessionConfig) -> Result<Self, ProtocolError> {
        if cfg.role != Role::Evaluator {
            return Err(ProtocolError::WrongRole {
                expected: Role::Evaluator,
                got: cfg.role,
            });
        }
        if cfg.seed.is_some() {
            return Err(ProtocolError::SeedOnEvaluator);
        }
        Ok(Evaluator {
            circuit: cfg.circuit.clone(),
            phase: EvaluatorPhase::AwaitingTables,
            garbled: None,
            tamper: None,
        })
    }

    pub fn with_tamper(mut self, tamper: EvaluatorTamper) -> Self {
        self.tamper = Some(tamper);
        self
    }

    pub fn phase(&self) -> EvaluatorPhase {
        self.phase
    }

    pub fn circuit(&self) -> &Circuit {
        &self.circuit
    }

    fn reject(
        &self,
        t: &mut dyn Transport,
        reason: AbortReason,
        err: ProtocolError,
    ) -> ProtocolError {
        let _ = t.send_frame(&Frame::abort(reason));
        err
    }

    pub fn receive_tables(&mut self, t: &mut dyn Transport) -> Result<usize, ProtocolError> {
        if self.phase != EvaluatorPhase::AwaitingTables {
            return Err(ProtocolError::PhaseViolation("tables already received"));
        }
        let frame = t.recv_frame()?;
        let payload = match expect(frame, MessageType::GarbledTables) {
            Ok(p) => p,
            Err(e @ ProtocolError::UnexpectedMessage { .. }) => {
                return Err(self.reject(t, AbortReason::ProtocolViolation, e))
            }
            Err(e) => return Err(e),
        };
        let mut gc = match deserialize_garbled_circuit(&payload) {
            Ok(gc) => gc,
            Err(e) => return Err(self.reject(t, AbortReason::ProtocolViolation, e.into())),
        };
        if gc.circuit_digest != self.circuit.digest() {
            return Err(self.reject(
                t,
                AbortReason::DigestMismatch,
                ProtocolError::DigestMismatch,
            ));
        }
        if gc.and_count() != self.circuit.and_gates().count() {
            let e = EvalError::TableCountMismatch {
                expected: self.circuit.and_gates().count(),
                got: gc.and_count(),
            };
            return Err(self.reject(t, AbortReason::ProtocolViolation, e.into()));
        }
        if let Some(EvaluatorTamper::TableBit { and_index, bit }) = self.tamper {
            if let Some(table) = gc.tables.get_mut(and_index) {
                for row in &mut table.rows {
                    flip(row, bit);
                }
            }
        }
        self.garbled = Some(gc);
        self.phase = EvaluatorPhase::Ready;
        Ok(payload.len())
    }

    /// Answers one `INPUT_VALUES` frame. The tables are discarded afterwards.
    pub fn serve_online(
        &mut self,
        t: &mut dyn Transport,
    ) -> Result<EvaluatorReport, ProtocolError> {
        let frame = t.recv_frame()?;
        if self.phase != EvaluatorPhase::Ready {
            let e = ProtocolError::PhaseViolation("input values before garbled tables");
            if frame.kind == MessageType::Abort {
                return Err(ProtocolError::PeerAborted(frame.abort_reason()?));
            }
            return Err(self.reject(t, AbortReason::ProtocolViolation, e));
        }
        let payload = match expect(frame, MessageType::InputValues) {
            Ok(p) => p,
            Err(e @ ProtocolError::UnexpectedMessage { .. }) => {
                return Err(self.reject(t, AbortReason::ProtocolViolation, e))
            }
            Err(e) => return Err(e),
        };
        let inputs = match decode_wire_values(&payload, self.circuit.num_inputs()) {
            Ok(v) => v,
            Err(e) => return Err(self.reject(t, AbortReason::ProtocolViolation, e.into())),
        };
        let gc = self.garbled.take().expect("ready phase holds tables");
        self.phase = EvaluatorPhase::Done;
        let trace = evaluate_traced(&self.circuit, &gc, &inputs)?;
        let mut outputs = trace.outputs;
        if let Some(EvaluatorTamper::OutputBit { output, bit }) = self.tamper {
            if let Some(v) = outputs.get_mut(output) {
                let mut bytes = v.to_bytes();
                // wire encoding puts the masked bit first; `flip` wants it last
                bytes.rotate_left(1);
                flip(&mut bytes, bit);
                bytes.rotate_right(1);
                *v = GarbledWireValue::from_bytes(&bytes).expect("masked bit stays 0 or 1");
            }
        }
        t.send_frame(&Frame::new(
            MessageType::OutputValues,
            encode_wire_values(&outputs),
        ))?;
        Ok(EvaluatorReport {
            table_bytes: gc.table_bytes(),
            gates_evaluated: trace.gates_evaluated,
            hash_calls: trace.hash_calls,
            eval_time: trace.elapsed,
        })
    }

    /// Setup then online. On a rejected setup, waits for the owner's next
    /// frame so the ABORT is delivered before the channel closes.
    pub fn serve(&mut self, t: &mut dyn Transport) -> Result<EvaluatorReport, ProtocolError> {
        if let Err(e) = self.receive_tables(t) {
            if !matches!(
                e,
                ProtocolError::Transport(_) | ProtocolError::PeerAborted(_)
            ) {
                let _ = t.recv_frame();
            }
            return Err(e);
        }
        self.serve_online(t)
    }
}

// ---- local end-to-end runs ----

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunOptions {
    pub transport: TransportConfig,
    /// `Generator` or `Client`.
    pub owner: Role,
    pub tamper: Option<EvaluatorTamper>,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            transport: TransportConfig::new(TransportKind::SharedBuffer),
            owner: Role::Generator,
            tamper: None,
        }
    }
}

#[derive(Debug)]
pub struct RunReport {
    pub result: AuthResult,
    pub setup: SetupReport,
    pub online_time: Duration,
    /// `None` when the evaluator failed after answering (e.g. it saw the
    /// owner's authentication ABORT).
    pub evaluator: Option<EvaluatorReport>,
}

impl RunReport {
    /// Table transfer plus online phase; excludes garbling.
    pub fn transfer_and_online(&self) -> Duration {
        self.setup.send_time + self.online_time
    }
}

/// Runs one full session in-process, with the evaluator on its own thread.
pub fn run_local(
    circuit: Arc<Circuit>,
    seed: Seed,
    inputs: &[bool],
    opts: RunOptions,
) -> Result<RunReport, ProtocolError> {
    let (mut owner_end, mut eval_end) = connect_pair(&opts.transport)?;
    let eval_cfg = SessionConfig::evaluator(circuit.clone(), opts.transport.kind);
    let mut evaluator = Evaluator::new(&eval_cfg)?;
    if let Some(t) = opts.tamper {
        evaluator = evaluator.with_tamper(t);
    }
    let eval_thread = thread::spawn(move || evaluator.serve(&mut *eval_end));

    let generator = Generator::new();
    let gen_cfg = SessionConfig::generator(circuit.clone(), seed, opts.transport.kind);
    let owner_cfg = match opts.owner {
        Role::Client => SessionConfig::client(circuit, seed, opts.transport.kind),
        _ => gen_cfg.clone(),
    };
    let outcome = generator
        .run_setup_phase(&gen_cfg, &mut *owner_end)
        .and_then(|setup| {
            let start = Instant::now();
            let result = run_online_phase(&generator, &owner_cfg, inputs, &mut *owner_end)?;
            Ok((setup, result, start.elapsed()))
        });
    drop(owner_end);
    let eval = eval_thread.join().expect("evaluator thread panicked");
    let (setup, result, online_time) = outcome?;
    Ok(RunReport {
        result,
        setup,
        online_time,
        evaluator: eval.ok(),
    })
}
