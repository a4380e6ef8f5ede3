//! Entangled-state coin flipping games.
//!
//! The crate simulates coin flipping games in which every player's result is
//! copied onto qubits held by the other players (or by a witness) before
//! anyone measures. Modules, bottom up:
//!
//! - [`qstate`]: dense statevector engine (big-endian qubit order).
//! - [`coins`]: coin tensors and fairness predicates.
//! - [`circuits`]: preparation circuits and qubit layouts for each design.
//! - [`protocol`]: the staged game engine and its transcripts.
//! - [`consensus`]: peer review ratios, thresholds and witness/peer arbitration.
//! - [`harness`]: classical baseline, batch runs and statistical checks.
//! - [`config`]: experiment configuration files.

pub mod circuits;
pub mod coins;
pub mod config;
pub mod consensus;
pub mod error;
pub mod harness;
pub mod protocol;
pub mod qstate;

pub use error::{Error, Result};
