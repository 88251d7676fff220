//! Run-time checking of new traces against a mined store.

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::CheckError;
use crate::meta::ContractMeta;
use crate::miner::{InvariantSet, InvariantStore, Layer};
use crate::property::eval::{evaluate_in, observed};
use crate::property::{Outcome, Property, TraceView};
use crate::trace::{extract_transaction, ExecutionTrace, RawTxRecord};
use crate::word::{Selector, Word};

pub const REPORT_SCHEMA: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub property: Property,
    /// Variable text to observed value.
    pub observed: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ViolationReport {
    pub tx_hash: Word,
    pub subtree: u32,
    pub function: String,
    pub layer: String,
    pub violations: Vec<Violation>,
    pub checked_count: usize,
    pub inapplicable_count: usize,
}

impl ViolationReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }
}

/// One line of a report stream: a report for one relevant call, or the error
/// that stopped a transaction from being checked.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum StreamEntry {
    Report {
        schema: u32,
        position: usize,
        #[serde(flatten)]
        report: ViolationReport,
    },
    Error {
        schema: u32,
        position: usize,
        message: String,
    },
}

impl StreamEntry {
    pub fn position(&self) -> usize {
        match self {
            StreamEntry::Report { position, .. } | StreamEntry::Error { position, .. } => *position,
        }
    }

    pub fn report(&self) -> Option<&ViolationReport> {
        match self {
            StreamEntry::Report { report, .. } => Some(report),
            StreamEntry::Error { .. } => None,
        }
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("reports always serialize")
    }
}

fn usable(store: &InvariantStore, layer: Layer) -> Option<(&str, &InvariantSet)> {
    let (k, set) = store.sets.get_key_value(&layer.key())?;
    (!set.invariants.is_empty()).then_some((k.as_str(), set))
}

/// The most specific non-empty set for `trace`: branch, then function, then
/// the contract set, which is returned even when empty.
pub fn select_invariant_set<'s>(
    store: &'s InvariantStore,
    trace: &ExecutionTrace,
) -> Result<(&'s str, &'s InvariantSet), CheckError> {
    if trace.contract != store.contract {
        return Err(CheckError::NoStore(trace.contract.to_hex()));
    }
    let sel: Option<Selector> = trace.selector;
    if let Some(hit) = usable(store, Layer::Branch(sel, trace.branch))
        .or_else(|| usable(store, Layer::Function(sel)))
    {
        return Ok(hit);
    }
    store
        .sets
        .get_key_value(&Layer::Contract.key())
        .map(|(k, s)| (k.as_str(), s))
        .ok_or_else(|| CheckError::NoStore(trace.contract.to_hex()))
}

pub fn check_trace(trace: &ExecutionTrace, layer: &str, set: &InvariantSet) -> ViolationReport {
    let view = TraceView::new(trace);
    let mut violations = Vec::new();
    let mut inapplicable = 0;
    for inv in &set.invariants {
        match evaluate_in(&inv.property, &view) {
            Outcome::Satisfied => {}
            Outcome::Inapplicable => inapplicable += 1,
            Outcome::Violated => violations.push(Violation {
                property: inv.property.clone(),
                observed: observed(&inv.property, &view).into_iter().collect(),
            }),
        }
    }
    ViolationReport {
        tx_hash: trace.tx_hash,
        subtree: trace.subtree,
        function: trace.function.clone(),
        layer: layer.to_string(),
        violations,
        checked_count: set.invariants.len(),
        inapplicable_count: inapplicable,
    }
}

/// Extracts and checks one raw record. Reverted calls are skipped unless
/// the store was mined with them, since their effects never persist.
pub fn check_record(
    store: &InvariantStore,
    meta: &ContractMeta,
    record: &RawTxRecord,
) -> Result<Vec<ViolationReport>, String> {
    let traces = extract_transaction(record, meta).map_err(|e| e.to_string())?;
    traces
        .iter()
        .filter(|t| store.config.include_reverted || !t.reverted)
        .map(|t| {
            let (layer, set) = select_invariant_set(store, t).map_err(|e| e.to_string())?;
            Ok(check_trace(t, layer, set))
        })
        .collect()
}

/// Result of checking a newline-delimited stream of raw records.
#[derive(Debug, Clone)]
pub struct StreamOutcome {
    pub entries: Vec<StreamEntry>,
    /// Parse plus check wall time of each non-blank input line.
    pub timings: Vec<Duration>,
}

impl StreamOutcome {
    pub fn violating_transactions(&self) -> Vec<Word> {
        let mut out: Vec<Word> = self
            .entries
            .iter()
            .filter_map(|e| e.report())
            .filter(|r| !r.is_clean())
            .map(|r| r.tx_hash)
            .collect();
        out.dedup();
        out
    }

    pub fn error_count(&self) -> usize {
        self.entries
            .iter()
            .filter(|e| matches!(e, StreamEntry::Error { .. }))
            .count()
    }
}

/// Parses, extracts, selects and checks each line independently; a bad line
/// yields an error entry at its position and the stream continues. Positions
/// count non-blank lines from 1.
pub fn check_stream(
    store: &InvariantStore,
    meta: &ContractMeta,
    raw_ndjson: &str,
) -> StreamOutcome {
    let lines: Vec<&str> = raw_ndjson
        .lines()
        .filter(|l| !l.trim().is_empty())
        .collect();
    let results: Vec<(Vec<StreamEntry>, Duration)> = lines
        .par_iter()
        .enumerate()
        .map(|(i, line)| {
            let position = i + 1;
            let start = Instant::now();
            let outcome = serde_json::from_str::<RawTxRecord>(line)
                .map_err(|e| format!("invalid record: {e}"))
                .and_then(|rec| check_record(store, meta, &rec));
            let elapsed = start.elapsed();
            let entries = match outcome {
                Ok(reports) => reports
                    .into_iter()
                    .map(|report| StreamEntry::Report {
                        schema: REPORT_SCHEMA,
                        position,
                        report,
                    })
                    .collect(),
                Err(message) => vec![StreamEntry::Error {
                    schema: REPORT_SCHEMA,
                    position,
                    message,
                }],
            };
            (entries, elapsed)
        })
        .collect();
    let mut entries = Vec::new();
    let mut timings = Vec::with_capacity(results.len());
    for (e, d) in results {
        entries.extend(e);
        timings.push(d);
    }
    StreamOutcome { entries, timings }
}
