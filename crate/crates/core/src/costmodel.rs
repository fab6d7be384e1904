//! Enclave-management overhead versus garbled-gate cost.
//!
//! An instruction stream in which a fraction `p` of instructions are
//! management operations costing `c` cycles (the rest cost 1) averages
//! `1 + p(c - 1)` cycles per instruction. Offloading wins once that exceeds
//! the cost of one garbled AND gate.

use std::fmt;
use std::io;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CostError {
    #[error("{name} = {value} is out of range ({expected})")]
    OutOfRange {
        name: &'static str,
        value: f64,
        expected: &'static str,
    },
    #[error("line {line}: {msg}")]
    Config { line: usize, msg: String },
    #[error("unknown parameter `{0}`")]
    UnknownKey(String),
    #[error("csv: {0}")]
    Csv(String),
}

fn positive(name: &'static str, value: f64) -> Result<(), CostError> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(CostError::OutOfRange {
            name,
            value,
            expected: "> 0",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostParams {
    pub ecall_cycles_hi: f64,
    pub ecall_cycles_lo: f64,
    pub epc_eviction_cycles: f64,
    pub enclave_creation_ms: f64,
    pub libos_noop_ms: f64,
    pub gate_rate_shm: f64,
    pub gate_rate_loopback: f64,
    pub gate_rate_lan: f64,
    /// Rate implied by 111000 gates per 3 ms enclave creation.
    pub gate_rate_implied: f64,
    /// Cycles per AND gate for the constant GC line.
    pub gate_cycles: f64,
    /// Cycles per AND gate behind the ecall crossover.
    pub gate_cycles_ecall: f64,
    /// Cycles per AND gate behind the EPC-eviction crossover.
    pub gate_cycles_epc: f64,
    pub clock_hz: f64,
    pub aes_and_gates: f64,
    pub checkout_and_gates: f64,
}

impl Default for CostParams {
    fn default() -> Self {
        CostParams {
            ecall_cycles_hi: 17_000.0,
            ecall_cycles_lo: 8_600.0,
            epc_eviction_cycles: 12_000.0,
            enclave_creation_ms: 3.0,
            libos_noop_ms: 370.0,
            gate_rate_shm: 35e6,
            gate_rate_loopback: 22e6,
            gate_rate_lan: 5e6,
            gate_rate_implied: 37e6,
            gate_cycles: 110.0,
            gate_cycles_ecall: 120.0,
            gate_cycles_epc: 97.0,
            clock_hz: 4e9,
            aes_and_gates: 6_400.0,
            checkout_and_gates: 2_488.0,
        }
    }
}

const KEYS: &[&str] = &[
    "ecall_cycles_hi",
    "ecall_cycles_lo",
    "epc_eviction_cycles",
    "enclave_creation_ms",
    "libos_noop_ms",
    "gate_rate_shm",
    "gate_rate_loopback",
    "gate_rate_lan",
    "gate_rate_implied",
    "gate_cycles",
    "gate_cycles_ecall",
    "gate_cycles_epc",
    "clock_hz",
    "aes_and_gates",
    "checkout_and_gates",
];

impl CostParams {
    pub fn keys() -> &'static [&'static str] {
        KEYS
    }

    fn field(&mut self, key: &str) -> Option<&mut f64> {
        Some(match key {
            "ecall_cycles_hi" => &mut self.ecall_cycles_hi,
            "ecall_cycles_lo" => &mut self.ecall_cycles_lo,
            "epc_eviction_cycles" => &mut self.epc_eviction_cycles,
            "enclave_creation_ms" => &mut self.enclave_creation_ms,
            "libos_noop_ms" => &mut self.libos_noop_ms,
            "gate_rate_shm" => &mut self.gate_rate_shm,
            "gate_rate_loopback" => &mut self.gate_rate_loopback,
            "gate_rate_lan" => &mut self.gate_rate_lan,
            "gate_rate_implied" => &mut self.gate_rate_implied,
            "gate_cycles" => &mut self.gate_cycles,
            "gate_cycles_ecall" => &mut self.gate_cycles_ecall,
            "gate_cycles_epc" => &mut self.gate_cycles_epc,
            "clock_hz" => &mut self.clock_hz,
            "aes_and_gates" => &mut self.aes_and_gates,
            "checkout_and_gates" => &mut self.checkout_and_gates,
            _ => return None,
        })
    }

    /// Sets one parameter by name. Does not validate; call [`validate`](Self::validate).
    pub fn set(&mut self, key: &str, value: f64) -> Result<(), CostError> {
        *self
            .field(key)
            .ok_or_else(|| CostError::UnknownKey(key.to_string()))? = value;
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<f64> {
        let mut copy = *self;
        copy.field(key).copied()
    }

    /// Uses one per-gate cost for the constant line and both crossovers.
    pub fn with_uniform_gate_cycles(mut self, cycles: f64) -> Self {
        self.gate_cycles = cycles;
        self.gate_cycles_ecall = cycles;
        self.gate_cycles_epc = cycles;
        self
    }

    /// Applies `key = value` lines on top of `self`. `#` starts a comment.
    pub fn apply_config(mut self, text: &str) -> Result<Self, CostError> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |msg: String| CostError::Config { line: i + 1, msg };
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| err("expected `key = value`".into()))?;
            let (k, v) = (k.trim(), v.trim());
            let value: f64 = v
                .parse()
                .map_err(|_| err(format!("`{v}` is not a number")))?;
            self.set(k, value).map_err(|e| err(e.to_string()))?;
        }
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<(), CostError> {
        for &k in KEYS {
            positive(k, self.get(k).unwrap())?;
        }
        for (name, c) in [
            ("ecall_cycles_hi", self.ecall_cycles_hi),
            ("ecall_cycles_lo", self.ecall_cycles_lo),
            ("epc_eviction_cycles", self.epc_eviction_cycles),
        ] {
            if c <= 1.0 {
                return Err(CostError::OutOfRange {
                    name,
                    value: c,
                    expected: "> 1",
                });
            }
        }
        for (name, c) in [
            ("gate_cycles", self.gate_cycles),
            ("gate_cycles_ecall", self.gate_cycles_ecall),
            ("gate_cycles_epc", self.gate_cycles_epc),
        ] {
            if c < 1.0 {
                return Err(CostError::OutOfRange {
                    name,
                    value: c,
                    expected: ">= 1",
                });
            }
        }
        if self.ecall_cycles_lo > self.ecall_cycles_hi {
            return Err(CostError::OutOfRange {
                name: "ecall_cycles_lo",
                value: self.ecall_cycles_lo,
                expected: "<= ecall_cycles_hi",
            });
        }
        Ok(())
    }

    pub fn cycles_to_seconds(&self, cycles: f64) -> f64 {
        cycles / self.clock_hz
    }

    pub fn seconds_to_cycles(&self, seconds: f64) -> f64 {
        seconds * self.clock_hz
    }
}

/// Expected cycles per instruction when a fraction `p` are management ops.
pub fn tee_cycles_per_instruction(p: f64, c_mgmt: f64) -> Result<f64, CostError> {
    if !(0.0..=1.0).contains(&p) {
        return Err(CostError::OutOfRange {
            name: "p",
            value: p,
            expected: "0 <= p <= 1",
        });
    }
    if c_mgmt.is_nan() || c_mgmt < 1.0 {
        return Err(CostError::OutOfRange {
            name: "c_mgmt",
            value: c_mgmt,
            expected: ">= 1",
        });
    }
    Ok(1.0 + p * (c_mgmt - 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Inflection {
    pub fraction: f64,
    /// The fraction is at least 1: no instruction mix makes offloading cheaper.
    pub gc_never_wins: bool,
}

/// Smallest management-op fraction at which one garbled gate costs no more
/// than the average instruction: `(gate_cycles - 1) / (c_mgmt - 1)`.
pub fn inflection_fraction(c_mgmt: f64, gate_cycles: f64) -> Result<Inflection, CostError> {
    if c_mgmt.is_nan() || c_mgmt <= 1.0 {
        return Err(CostError::OutOfRange {
            name: "c_mgmt",
            value: c_mgmt,
            expected: "> 1",
        });
    }
    if gate_cycles.is_nan() || gate_cycles < 1.0 {
        return Err(CostError::OutOfRange {
            name: "gate_cycles",
            value: gate_cycles,
            expected: ">= 1",
        });
    }
    let fraction = (gate_cycles - 1.0) / (c_mgmt - 1.0);
    Ok(Inflection {
        fraction,
        gc_never_wins: fraction >= 1.0,
    })
}

/// Seconds to evaluate `and_gates` gates at `rate` gates per second.
pub fn project_gc_runtime(and_gates: f64, rate: f64) -> Result<f64, CostError> {
    positive("rate", rate)?;
    if and_gates.is_nan() || and_gates < 0.0 {
        return Err(CostError::OutOfRange {
            name: "and_gates",
            value: and_gates,
            expected: ">= 0",
        });
    }
    Ok(and_gates / rate)
}

/// Gates evaluable in `seconds`, and how many whole AES circuits that is.
pub fn creation_equivalents(seconds: f64, rate: f64, aes_and_gates: f64) -> (f64, u64) {
    let gates = seconds * rate;
    // absorb representation error so 3 ms * 37e6 counts as exactly 111000
    let aes = (gates / aes_and_gates * (1.0 + 1e-12)).floor();
    (gates, aes.max(0.0) as u64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurveRow {
    pub p: f64,
    pub tee_cycles_hi: f64,
    pub tee_cycles_lo: f64,
    pub gc_gate_cycles: f64,
    pub tee_cycles_epc: f64,
    pub gc_gate_cycles_ecall: f64,
    pub gc_gate_cycles_epc: f64,
}

pub const CURVE_MAX_P: f64 = 0.02;

pub const CURVE_HEADER: [&str; 7] = [
    "p",
    "tee_cycles_hi",
    "tee_cycles_lo",
    "gc_gate_cycles",
    "tee_cycles_epc",
    "gc_gate_cycles_ecall",
    "gc_gate_cycles_epc",
];

/// `samples` evenly spaced points over `p` in `[0, 0.02]`.
pub fn emit_curves(params: &CostParams, samples: usize) -> Result<Vec<CurveRow>, CostError> {
    if samples < 2 {
        return Err(CostError::OutOfRange {
            name: "samples",
            value: samples as f64,
            expected: ">= 2",
        });
    }
    params.validate()?;
    (0..samples)
        .map(|i| {
            let p = CURVE_MAX_P * i as f64 / (samples - 1) as f64;
            Ok(CurveRow {
                p,
                tee_cycles_hi: tee_cycles_per_instruction(p, params.ecall_cycles_hi)?,
                tee_cycles_lo: tee_cycles_per_instruction(p, params.ecall_cycles_lo)?,
                gc_gate_cycles: params.gate_cycles,
                tee_cycles_epc: tee_cycles_per_instruction(p, params.epc_eviction_cycles)?,
                gc_gate_cycles_ecall: params.gate_cycles_ecall,
                gc_gate_cycles_epc: params.gate_cycles_epc,
            })
        })
        .collect()
}

pub fn write_curves_csv<W: io::Write>(rows: &[CurveRow], out: W) -> Result<(), CostError> {
    let csv_err = |e: csv::Error| CostError::Csv(e.to_string());
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CURVE_HEADER).map_err(csv_err)?;
    for r in rows {
        w.write_record(
            [
                r.p,
                r.tee_cycles_hi,
                r.tee_cycles_lo,
                r.gc_gate_cycles,
                r.tee_cycles_epc,
                r.gc_gate_cycles_ecall,
                r.gc_gate_cycles_epc,
            ]
            .map(|v| v.to_string()),
        )
        .map_err(csv_err)?;
    }
    w.flush().map_err(|e| CostError::Csv(e.to_string()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct CostReport {
    pub params: CostParams,
    pub ecall_hi: Inflection,
    pub ecall_lo: Inflection,
    pub epc: Inflection,
    pub gates_per_creation: f64,
    pub aes_per_creation: u64,
    pub gates_per_libos: f64,
    pub aes_per_libos: u64,
    pub checkout_shm_s: f64,
    pub checkout_loopback_s: f64,
    pub checkout_lan_s: f64,
    /// `clock_hz / gate_rate_shm`, for comparison with the calibrated costs.
    pub gate_cycles_at_shm_rate: f64,
}

impl CostReport {
    pub fn new(params: &CostParams) -> Result<Self, CostError> {
        params.validate()?;
        let p = *params;
        let (gates_per_creation, aes_per_creation) = creation_equivalents(
            p.enclave_creation_ms / 1e3,
            p.gate_rate_implied,
            p.aes_and_gates,
        );
        let (gates_per_libos, aes_per_libos) =
            creation_equivalents(p.libos_noop_ms / 1e3, p.gate_rate_implied, p.aes_and_gates);
        Ok(CostReport {
            params: p,
            ecall_hi: inflection_fraction(p.ecall_cycles_hi, p.gate_cycles_ecall)?,
            ecall_lo: inflection_fraction(p.ecall_cycles_lo, p.gate_cycles_ecall)?,
            epc: inflection_fraction(p.epc_eviction_cycles, p.gate_cycles_epc)?,
            gates_per_creation,
            aes_per_creation,
            gates_per_libos,
            aes_per_libos,
            checkout_shm_s: project_gc_runtime(p.checkout_and_gates, p.gate_rate_shm)?,
            checkout_loopback_s: project_gc_runtime(p.checkout_and_gates, p.gate_rate_loopback)?,
            checkout_lan_s: project_gc_runtime(p.checkout_and_gates, p.gate_rate_lan)?,
            gate_cycles_at_shm_rate: p.clock_hz / p.gate_rate_shm,
        })
    }
}

fn pct(i: &Inflection) -> String {
    let s = format!("{:.3}%", i.fraction * 100.0);
    if i.gc_never_wins {
        s + " (GC never wins)"
    } else {
        s
    }
}

impl fmt::Display for CostReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let p = &self.params;
        writeln!(f, "crossover fractions")?;
        writeln!(
            f,
            "  ecall {:>6} cycles, gate {:>5} cycles: {}",
            p.ecall_cycles_hi,
            p.gate_cycles_ecall,
            pct(&self.ecall_hi)
        )?;
        writeln!(
            f,
            "  ecall {:>6} cycles, gate {:>5} cycles: {}",
            p.ecall_cycles_lo,
            p.gate_cycles_ecall,
            pct(&self.ecall_lo)
        )?;
        writeln!(
            f,
            "  EPC   {:>6} cycles, gate {:>5} cycles: {}",
            p.epc_eviction_cycles,
            p.gate_cycles_epc,
            pct(&self.epc)
        )?;
        writeln!(
            f,
            "  (gate cost implied by shm rate at {:.1} GHz: {:.1} cycles)",
            p.clock_hz / 1e9,
            self.gate_cycles_at_shm_rate
        )?;
        writeln!(
            f,
            "creation equivalents at {:.1}M gates/s",
            p.gate_rate_implied / 1e6
        )?;
        writeln!(
            f,
            "  enclave creation {} ms: {:.0} AND gates, {} AES",
            p.enclave_creation_ms, self.gates_per_creation, self.aes_per_creation
        )?;
        writeln!(
            f,
            "  libOS no-op {} ms: {:.0} AND gates, {} AES",
            p.libos_noop_ms, self.gates_per_libos, self.aes_per_libos
        )?;
        writeln!(
            f,
            "checkout projection ({} AND gates)",
            p.checkout_and_gates
        )?;
        writeln!(
            f,
            "  shm      {:>5.1}M gates/s: {:.1} us",
            p.gate_rate_shm / 1e6,
            self.checkout_shm_s * 1e6
        )?;
        writeln!(
            f,
            "  loopback {:>5.1}M gates/s: {:.1} us",
            p.gate_rate_loopback / 1e6,
            self.checkout_loopback_s * 1e6
        )?;
        write!(
            f,
            "  lan      {:>5.1}M gates/s: {:.1} us",
            p.gate_rate_lan / 1e6,
            self.checkout_lan_s * 1e6
        )
    }
}
