//! Shared fixtures for the benchmarks.

use txoracle_core::{extract_transaction, gen_corpus, ExecutionTrace, MachineKind, RawTxRecord, ScenarioSpec};

/// A benign corpus of `txs` transactions for `machine`.
pub fn records(machine: MachineKind, txs: usize) -> Vec<RawTxRecord> {
    gen_corpus(&ScenarioSpec::new(machine, txs, 1))
        .expect("valid scenario")
        .records
}

pub fn traces(machine: MachineKind, records: &[RawTxRecord]) -> Vec<ExecutionTrace> {
    let meta = machine.meta();
    records
        .iter()
        .flat_map(|r| extract_transaction(r, &meta).expect("simulated records are well formed"))
        .collect()
}
