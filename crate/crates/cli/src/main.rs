//! `tgh`: inspect circuits, garble, run sessions, benchmark transports and
//! print the cost model.
//!
//! Exit codes: 0 success, 1 other failure, 2 usage error, 3 circuit or
//! input parse error, 4 protocol abort, 5 transport failure.

mod bits;

/// `println!` that exits quietly when stdout is a closed pipe.
macro_rules! out {
    ($($arg:tt)*) => {{
        use std::io::Write as _;
        if let Err(e) = writeln!(std::io::stdout(), $($arg)*) {
            if e.kind() == std::io::ErrorKind::BrokenPipe {
                std::process::exit(0);
            }
            panic!("writing to stdout: {e}");
        }
    }};
}

use std::fs;
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use tgh_core::bench::{compare_transports, BenchError};
use tgh_core::circuit::{
    build_adder, build_and_chain, build_checkout, build_comparator, parse_bristol,
    serialize_bristol, Circuit,
};
use tgh_core::costmodel::{
    emit_curves, project_gc_runtime, write_curves_csv, CostParams, CostReport,
};
use tgh_core::evaluation::AuthResult;
use tgh_core::garbling::{garble, Seed};
use tgh_core::protocol::{
    garbled_digest, run_local, serialize_garbled_circuit, EvaluatorTamper, Frame, MessageType,
    ProtocolError, Role, RunOptions, TransportConfig, TransportKind,
};

#[derive(Debug)]
struct Failure {
    code: u8,
    err: anyhow::Error,
}

impl Failure {
    fn parse(err: impl Into<anyhow::Error>) -> Self {
        Failure {
            code: 3,
            err: err.into(),
        }
    }
}

impl<E: Into<anyhow::Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure {
            code: 1,
            err: e.into(),
        }
    }
}

fn protocol_failure(e: ProtocolError) -> Failure {
    let code = match e {
        ProtocolError::Transport(_) => 5,
        ProtocolError::PeerAborted(_) | ProtocolError::DigestMismatch => 4,
        ProtocolError::Input(_) => 3,
        _ => 1,
    };
    Failure {
        code,
        err: e.into(),
    }
}

type CmdResult = Result<(), Failure>;

#[derive(Parser)]
#[command(name = "tgh", version, about = "Garbled-circuit offload engine")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Gate counts, depth, garbled size and projected runtime of a Bristol file.
    Stats(StatsArgs),
    /// Emit a generated circuit in Bristol Fashion.
    Build(BuildArgs),
    /// Garble a circuit offline and write the GARBLED_TABLES frame.
    Garble(GarbleArgs),
    /// Run setup and online phases between local generator and evaluator roles.
    Run(RunArgs),
    /// Throughput of table transfer plus online phase over an AND chain.
    Bench(BenchArgs),
    /// Crossover fractions, creation equivalents and runtime projections.
    Costmodel(CostArgs),
}

#[derive(Args)]
struct StatsArgs {
    /// Bristol file, or `-` for stdin.
    circuit: String,
}

#[derive(Args)]
struct BuildArgs {
    #[command(subcommand)]
    kind: BuildKind,
    /// Output file (stdout when omitted).
    #[arg(short, long, global = true)]
    output: Option<PathBuf>,
}

#[derive(Subcommand)]
enum BuildKind {
    /// Ripple-carry adder modulo 2^width.
    Adder {
        #[arg(long, default_value_t = 32)]
        width: usize,
    },
    /// Unsigned a < b.
    Comparator {
        #[arg(long, default_value_t = 32)]
        width: usize,
    },
    /// Sum of item prices compared against a budget.
    Checkout {
        #[arg(long, default_value_t = 16)]
        items: usize,
        #[arg(long, default_value_t = 32)]
        price_width: usize,
    },
    /// Linear chain of AND gates.
    Chain {
        #[arg(long)]
        gates: usize,
    },
}

#[derive(Args)]
struct SeedArgs {
    /// 32-byte seed as 64 hex characters.
    #[arg(long, conflicts_with = "random_seed")]
    seed: Option<String>,
    /// Draw a fresh seed and print it.
    #[arg(long)]
    random_seed: bool,
}

impl SeedArgs {
    fn resolve(&self) -> Result<Seed, Failure> {
        match (&self.seed, self.random_seed) {
            (Some(hex_seed), _) => parse_seed(hex_seed),
            (None, true) => {
                let seed = Seed::random();
                out!("seed: {}", hex::encode(seed.as_bytes()));
                Ok(seed)
            }
            (None, false) => Err(Failure::parse(anyhow!(
                "pass --seed <64 hex chars> or --random-seed"
            ))),
        }
    }
}

fn parse_seed(s: &str) -> Result<Seed, Failure> {
    let bytes = hex::decode(s.trim()).map_err(|e| Failure::parse(anyhow!("seed: {e}")))?;
    let arr: [u8; 32] = bytes.try_into().map_err(|b: Vec<u8>| {
        Failure::parse(anyhow!(
            "seed must be 32 bytes (64 hex chars), got {}",
            b.len()
        ))
    })?;
    Ok(Seed(arr))
}

#[derive(Args)]
struct GarbleArgs {
    circuit: String,
    #[command(flatten)]
    seed: SeedArgs,
    /// Where to write the frame (nothing is written when omitted).
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum TransportArg {
    Shm,
    Loopback,
}

impl TransportArg {
    fn kind(self) -> TransportKind {
        match self {
            TransportArg::Shm => TransportKind::SharedBuffer,
            TransportArg::Loopback => TransportKind::Loopback,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum TamperArg {
    /// Flip a bit in the first AND table.
    Table,
    /// Flip a label bit of the first output value.
    Output,
}

#[derive(Args)]
struct RunArgs {
    circuit: String,
    /// All input bits as one 0x or 0b literal; bit i drives input wire i.
    #[arg(long, conflicts_with = "values")]
    inputs: Option<String>,
    /// One number per input group, comma separated.
    #[arg(long)]
    values: Option<String>,
    #[command(flatten)]
    seed: SeedArgs,
    #[arg(long, value_enum, default_value = "shm")]
    transport: TransportArg,
    /// Loopback listen port (0 picks a free one).
    #[arg(long, default_value_t = 0)]
    port: u16,
    /// Let a remote client encode inputs from the seed instead of the generator.
    #[arg(long)]
    client: bool,
    /// Make the evaluator misbehave.
    #[arg(long, value_enum, num_args = 0..=1, default_missing_value = "table")]
    tamper: Option<TamperArg>,
}

#[derive(Clone, Copy, ValueEnum)]
enum BenchTransport {
    Shm,
    Loopback,
    Both,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long, default_value_t = 100_000)]
    gates: usize,
    #[arg(long, value_enum, default_value = "both")]
    transport: BenchTransport,
    #[arg(long, default_value_t = 5)]
    reps: usize,
}

#[derive(Args)]
struct CostArgs {
    /// key = value file applied over the defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override any parameter, e.g. --set clock_hz=3.5e9 (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
    /// Upper ecall cost in cycles.
    #[arg(long)]
    ecall_cycles: Option<f64>,
    /// Lower ecall cost in cycles.
    #[arg(long)]
    ecall_cycles_lo: Option<f64>,
    #[arg(long)]
    epc_cycles: Option<f64>,
    /// Cycles per AND gate, used for every crossover.
    #[arg(long)]
    gate_cycles: Option<f64>,
    /// Write curve samples as CSV.
    #[arg(long)]
    csv: Option<PathBuf>,
    #[arg(long, default_value_t = 201)]
    samples: usize,
}

fn load_circuit(path: &str) -> Result<Circuit, Failure> {
    let (text, name) = if path == "-" {
        let mut s = String::new();
        io::stdin()
            .read_to_string(&mut s)
            .context("reading stdin")?;
        (s, "stdin".to_string())
    } else {
        let text = fs::read_to_string(path).with_context(|| format!("reading {path}"))?;
        let stem = Path::new(path)
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        (text, stem)
    };
    let circuit = parse_bristol(&text).map_err(|e| Failure::parse(anyhow!("{path}: {e}")))?;
    Ok(circuit.with_name(name))
}

fn cmd_stats(args: &StatsArgs) -> CmdResult {
    let c = load_circuit(&args.circuit)?;
    let s = c.stats();
    let params = CostParams::default();
    out!("circuit: {}", c.name());
    out!("digest: {}", hex::encode(c.digest()));
    out!(
        "inputs: {} bits in groups {:?}",
        s.input_bits,
        c.input_groups()
    );
    out!(
        "outputs: {} bits in groups {:?}",
        s.output_bits,
        c.output_groups()
    );
    out!(
        "gates: {} (AND:{} XOR:{} INV:{})",
        s.total_gates(),
        s.and_count,
        s.xor_count,
        s.inv_count
    );
    out!("depth: {}", s.depth);
    out!("garbled bytes: {}", s.garbled_table_bytes());
    out!(
        "AND gates vs checkout reference: {} / {} ({:.2}x)",
        s.and_count,
        params.checkout_and_gates,
        s.and_count as f64 / params.checkout_and_gates
    );
    for (label, rate) in [
        ("shm", params.gate_rate_shm),
        ("loopback", params.gate_rate_loopback),
        ("lan", params.gate_rate_lan),
    ] {
        let t = project_gc_runtime(s.and_count as f64, rate)?;
        out!(
            "projected GC runtime ({label}, {:.0}M gates/s): {:.2} us",
            rate / 1e6,
            t * 1e6
        );
    }
    Ok(())
}

fn cmd_build(args: &BuildArgs) -> CmdResult {
    let c = match args.kind {
        BuildKind::Adder { width } => build_adder(width),
        BuildKind::Comparator { width } => build_comparator(width),
        BuildKind::Checkout { items, price_width } => build_checkout(items, price_width),
        BuildKind::Chain { gates } => build_and_chain(gates),
    }
    .map_err(Failure::parse)?;
    let text = serialize_bristol(&c);
    match &args.output {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display()))?,
        None => io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn cmd_garble(args: &GarbleArgs) -> CmdResult {
    let c = load_circuit(&args.circuit)?;
    let seed = args.seed.resolve()?;
    let g = garble(&c, &seed);
    let payload = serialize_garbled_circuit(&g.garbled);
    let digest = garbled_digest(&g.garbled);
    let frame = Frame::new(MessageType::GarbledTables, payload);
    out!("AND tables: {}", g.garbled.and_count());
    out!("frame bytes: {}", frame.encoded_len());
    out!("garbled digest: {}", hex::encode(digest));
    if let Some(p) = &args.output {
        fs::write(p, frame.encode()).with_context(|| format!("writing {}", p.display()))?;
    }
    Ok(())
}

fn cmd_run(args: &RunArgs) -> CmdResult {
    let c = Arc::new(load_circuit(&args.circuit)?);
    let inputs = match (&args.inputs, &args.values) {
        (Some(lit), _) => bits::parse_literal(lit, c.num_inputs()),
        (None, Some(v)) => bits::parse_values(v, c.input_groups()),
        (None, None) if c.num_inputs() == 0 => Ok(vec![]),
        (None, None) => Err(anyhow!("pass --inputs or --values")),
    }
    .map_err(Failure::parse)?;
    let seed = args.seed.resolve()?;
    let tamper = args.tamper.map(|t| match t {
        TamperArg::Table if c.and_gates().next().is_some() => EvaluatorTamper::TableBit {
            and_index: 0,
            bit: 0,
        },
        _ => EvaluatorTamper::OutputBit { output: 0, bit: 0 },
    });
    let mut transport = TransportConfig::new(args.transport.kind());
    transport.loopback_port = args.port;
    let opts = RunOptions {
        transport,
        owner: if args.client {
            Role::Client
        } else {
            Role::Generator
        },
        tamper,
    };

    let report = run_local(c.clone(), seed, &inputs, opts).map_err(protocol_failure)?;
    out!("transport: {}", transport.kind.name());
    out!(
        "garbled digest: {}",
        hex::encode(report.setup.tables_digest)
    );
    out!("table bytes sent: {}", report.setup.bytes_sent);
    out!(
        "timing: garble {:.3} ms, transfer {:.3} ms, online {:.3} ms",
        report.setup.garble_time.as_secs_f64() * 1e3,
        report.setup.send_time.as_secs_f64() * 1e3,
        report.online_time.as_secs_f64() * 1e3
    );
    match report.result {
        AuthResult::Decoded(out) => {
            out!(
                "outputs: {}",
                bits::format_groups(&out, c.output_groups()).join(" ")
            );
            out!("output bits: {}", bits::format_binary(&out));
            Ok(())
        }
        AuthResult::Abort { .. } => {
            out!("ABORT: output labels failed authentication");
            Err(Failure {
                code: 4,
                err: anyhow!("evaluator returned unrecognized output labels"),
            })
        }
    }
}

fn cmd_bench(args: &BenchArgs) -> CmdResult {
    let kinds: &[TransportKind] = match args.transport {
        BenchTransport::Shm => &[TransportKind::SharedBuffer],
        BenchTransport::Loopback => &[TransportKind::Loopback],
        BenchTransport::Both => &[TransportKind::SharedBuffer, TransportKind::Loopback],
    };
    let ms = |d: std::time::Duration| d.as_secs_f64() * 1e3;
    out!(
        "AND chain of {} gates, {} runs per transport",
        args.gates,
        args.reps.max(1)
    );
    out!(
        "{:<9} {:>10} {:>10} {:>10} {:>12} {:>10} {:>14}",
        "transport",
        "min ms",
        "median ms",
        "max ms",
        "transfer ms",
        "online ms",
        "gates/s"
    );
    let configs: Vec<TransportConfig> = kinds.iter().map(|&k| TransportConfig::new(k)).collect();
    let results =
        compare_transports(args.gates, &configs, args.reps, true).map_err(|e| match e {
            BenchError::Protocol(p) => protocol_failure(p),
            BenchError::Circuit(c) => Failure::parse(c),
            other => Failure::from(other),
        })?;
    let mut rates = Vec::new();
    for r in &results {
        out!(
            "{:<9} {:>10.3} {:>10.3} {:>10.3} {:>12.3} {:>10.3} {:>14.0}",
            r.transport.name(),
            ms(r.min()),
            ms(r.median()),
            ms(r.max()),
            ms(r.median_transfer()),
            ms(r.median_online()),
            r.gates_per_second()
        );
        rates.push(r.gates_per_second());
    }
    if let [shm, lo] = rates[..] {
        out!("shm:loopback ratio: {:.3}", shm / lo);
    }
    out!("reference rates: shm 35M gates/s, loopback 22M gates/s (single-threaded, different hardware)");
    Ok(())
}

fn cost_params(args: &CostArgs) -> Result<CostParams, Failure> {
    let mut p = CostParams::default();
    if let Some(path) = &args.config {
        let text =
            fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        p = p
            .apply_config(&text)
            .map_err(|e| Failure::parse(anyhow!("{}: {e}", path.display())))?;
    }
    for kv in &args.sets {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Failure::parse(anyhow!("--set expects KEY=VALUE, got `{kv}`")))?;
        let v: f64 = v
            .trim()
            .parse()
            .map_err(|_| Failure::parse(anyhow!("--set {k}: `{v}` is not a number")))?;
        p.set(k.trim(), v).map_err(Failure::parse)?;
    }
    if let Some(v) = args.ecall_cycles {
        p.ecall_cycles_hi = v;
    }
    if let Some(v) = args.ecall_cycles_lo {
        p.ecall_cycles_lo = v;
    }
    if let Some(v) = args.epc_cycles {
        p.epc_eviction_cycles = v;
    }
    if let Some(v) = args.gate_cycles {
        p = p.with_uniform_gate_cycles(v);
    }
    p.validate().map_err(Failure::parse)?;
    Ok(p)
}

fn cmd_costmodel(args: &CostArgs) -> CmdResult {
    let p = cost_params(args)?;
    out!("{}", CostReport::new(&p)?);
    if let Some(path) = &args.csv {
        let rows = emit_curves(&p, args.samples).map_err(Failure::parse)?;
        let file =
            fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
        write_curves_csv(&rows, io::BufWriter::new(file))?;
        out!("curves: {} rows written to {}", rows.len(), path.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Stats(a) => cmd_stats(a),
        Command::Build(a) => cmd_build(a),
        Command::Garble(a) => cmd_garble(a),
        Command::Run(a) => cmd_run(a),
        Command::Bench(a) => cmd_bench(a),
        Command::Costmodel(a) => cmd_costmodel(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.err);
            ExitCode::from(f.code)
        }
    }
}
