// SPDX-License-Identifier: Apache-2.0

//! Core library for building and scoring Verilog bug-localization data.
//!
//! The pipeline runs from raw modules to training sets and evaluation:
//! [`verilog`] loads and tokenizes modules, [`mutation`] injects single-line
//! bugs, [`dedup`] removes near-duplicate corpus entries, [`dataset`] writes
//! pretraining/SFT/preference samples, [`preference`] evaluates the SimPO
//! objective, and [`eval`] scores model answers. [`gateway`] is the chat
//! client used by the model-in-the-loop stages.

pub mod dataset;
pub mod dedup;
pub mod eval;
pub mod gateway;
pub mod jsonl;
pub mod mutation;
pub mod par;
pub mod preference;
pub mod rng;
pub mod text;
pub mod verilog;

pub use mutation::{BugPattern, MutationRecord};
pub use par::Exec;
