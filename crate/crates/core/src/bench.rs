//! End-to-end throughput measurement over an AND chain.
//!
//! Each repetition garbles a fresh chain, ships it and runs the online
//! phase. Throughput counts AND gates over table transfer plus online time;
//! garbling happens before the clock starts.

use std::sync::Arc;
use std::time::Duration;

use rand::Rng;
use thiserror::Error;

use crate::circuit::{build_and_chain, Circuit, CircuitError};
use crate::evaluation::AuthResult;
use crate::garbling::Seed;
use crate::protocol::{run_local, ProtocolError, RunOptions, TransportConfig, TransportKind};

#[derive(Debug, Error)]
pub enum BenchError {
    #[error(transparent)]
    Circuit(#[from] CircuitError),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error("run {0}: output authentication failed")]
    Aborted(usize),
    #[error("run {0}: decoded output disagrees with the plaintext result")]
    WrongOutput(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BenchSample {
    pub garble: Duration,
    pub transfer: Duration,
    pub online: Duration,
}

impl BenchSample {
    /// Measured time: transfer plus online.
    pub fn wall(&self) -> Duration {
        self.transfer + self.online
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchResult {
    pub transport: TransportKind,
    pub and_gates: usize,
    pub table_bytes: usize,
    pub samples: Vec<BenchSample>,
}

fn median(mut xs: Vec<Duration>) -> Duration {
    xs.sort();
    let n = xs.len();
    if n == 0 {
        Duration::ZERO
    } else if n % 2 == 1 {
        xs[n / 2]
    } else {
        (xs[n / 2 - 1] + xs[n / 2]) / 2
    }
}

impl BenchResult {
    fn walls(&self) -> Vec<Duration> {
        self.samples.iter().map(BenchSample::wall).collect()
    }

    pub fn min(&self) -> Duration {
        self.walls().into_iter().min().unwrap_or_default()
    }

    pub fn max(&self) -> Duration {
        self.walls().into_iter().max().unwrap_or_default()
    }

    pub fn median(&self) -> Duration {
        median(self.walls())
    }

    pub fn median_transfer(&self) -> Duration {
        median(self.samples.iter().map(|s| s.transfer).collect())
    }

    pub fn median_online(&self) -> Duration {
        median(self.samples.iter().map(|s| s.online).collect())
    }

    pub fn median_garble(&self) -> Duration {
        median(self.samples.iter().map(|s| s.garble).collect())
    }

    /// AND gates per second of `wall`; a zero duration is clamped to 1 ns.
    pub fn rate(&self, wall: Duration) -> f64 {
        self.and_gates as f64 / wall.as_secs_f64().max(1e-9)
    }

    pub fn gates_per_second(&self) -> f64 {
        self.rate(self.median())
    }
}

fn run_once(
    circuit: &Arc<Circuit>,
    transport: TransportConfig,
    seed: Seed,
    inputs: &[bool],
    expected: &[bool],
    run: usize,
) -> Result<(BenchSample, usize), BenchError> {
    let opts = RunOptions {
        transport,
        ..RunOptions::default()
    };
    let report = run_local(circuit.clone(), seed, inputs, opts)?;
    match report.result {
        AuthResult::Abort { .. } => return Err(BenchError::Aborted(run)),
        AuthResult::Decoded(bits) if bits != expected => return Err(BenchError::WrongOutput(run)),
        AuthResult::Decoded(_) => {}
    }
    let sample = BenchSample {
        garble: report.setup.garble_time,
        transfer: report.setup.send_time,
        online: report.online_time,
    };
    Ok((sample, report.setup.payload_len))
}

/// Runs `reps` complete sessions of a `gates`-long AND chain.
pub fn run_bench(
    gates: usize,
    transport: TransportConfig,
    reps: usize,
) -> Result<BenchResult, BenchError> {
    Ok(compare_transports(gates, &[transport], reps, false)?.remove(0))
}

/// Benchmarks several transports on the same AND chain.
///
/// Repetitions are interleaved and each uses one seed and input vector for
/// every transport, so drift affects all of them alike. With `warm_up`, one
/// untimed session per transport runs first.
pub fn compare_transports(
    gates: usize,
    transports: &[TransportConfig],
    reps: usize,
    warm_up: bool,
) -> Result<Vec<BenchResult>, BenchError> {
    let circuit = Arc::new(build_and_chain(gates)?);
    let and_gates = circuit.and_gates().count();
    let mut rng = rand::rng();
    let mut results: Vec<BenchResult> = transports
        .iter()
        .map(|t| BenchResult {
            transport: t.kind,
            and_gates,
            table_bytes: 0,
            samples: Vec::with_capacity(reps),
        })
        .collect();
    let rounds = reps.max(1) + warm_up as usize;
    for round in 0..rounds {
        let inputs: Vec<bool> = (0..circuit.num_inputs()).map(|_| rng.random()).collect();
        let expected = circuit.eval_plaintext(&inputs)?;
        let seed = Seed::from_rng(&mut rng);
        for (t, r) in transports.iter().zip(&mut results) {
            let (sample, payload_len) = run_once(&circuit, *t, seed, &inputs, &expected, round)?;
            r.table_bytes = payload_len;
            if !(warm_up && round == 0) {
                r.samples.push(sample);
            }
        }
    }
    Ok(results)
}
