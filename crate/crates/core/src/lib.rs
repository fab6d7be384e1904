//! Garbled-circuit offload engine.
//!
//! A trusted generator derives a whole garbled circuit from a 32-byte seed
//! (free-XOR, point-and-permute, four-row AND tables), an untrusted
//! evaluator runs it, and the input owner authenticates the returned output
//! labels. [`costmodel`] compares enclave-management overhead with the cost
//! of a garbled gate.
//!
//! ```
//! use std::sync::Arc;
//! use tgh_core::circuit::{bits, build_adder};
//! use tgh_core::garbling::Seed;
//! use tgh_core::protocol::{run_local, RunOptions};
//!
//! let adder = Arc::new(build_adder(8).unwrap());
//! let inputs = bits::pack(&[(200, 8), (100, 8)]);
//! let report = run_local(adder, Seed([1; 32]), &inputs, RunOptions::default()).unwrap();
//! assert_eq!(bits::to_u64(report.result.decoded().unwrap()), 44);
//! ```

pub mod bench;
pub mod circuit;
pub mod costmodel;
pub mod evaluation;
pub mod exec;
pub mod garbling;
pub mod protocol;
