//! Layered likely-invariant mining over smart-contract execution traces.
//!
//! The pipeline runs in four stages:
//!
//! - [`meta`] parses the contract ABI and storage layout and decodes
//!   calldata, events and raw storage slots.
//! - [`trace`] rebuilds call-flow trees from raw step records and extracts
//!   per-call execution traces with snapshots at each record point.
//! - [`property`] and [`miner`] construct candidate properties per trace,
//!   abstract concrete mapping keys, and keep those holding on a threshold
//!   fraction of each contract, function and branch group.
//! - [`checker`] selects the most specific mined set for a new trace and
//!   reports violations.
//!
//! [`sim`] generates deterministic corpora for the bundled toy contracts and
//! [`persist`] handles versioned, digest-checked artifacts.

pub mod checker;
pub mod config;
pub mod error;
pub mod meta;
pub mod miner;
pub mod persist;
pub mod property;
pub mod sim;
pub mod trace;
pub mod word;

pub use checker::{
    check_record, check_stream, check_trace, select_invariant_set, StreamEntry, StreamOutcome,
    Violation, ViolationReport,
};
pub use config::{Fraction, MinerConfig};
pub use error::*;
pub use meta::{ContractMeta, MetaSource, TypedValue};
pub use miner::{mine_contract, Invariant, InvariantSet, InvariantStore, Layer, Support};
pub use persist::{load, save, Artifact, RunManifest};
pub use property::{evaluate, Outcome, Pattern, Property, Provenance, VarRef};
pub use sim::{gen_corpus, inject_attack, AttackScript, Corpus, MachineKind, ScenarioSpec};
pub use trace::{extract_transaction, ExecutionTrace, RawTxRecord, RecordPoint};
pub use word::{keccak256, mapping_slot, Address, Bytes, Selector, Word};
