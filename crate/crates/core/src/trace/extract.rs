//! Turns selected call nodes into execution traces: decoded entry, logs and
//! state/token snapshots at every record point.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::TraceError;
use crate::meta::layout::{decode_slot_value, type_at, PathSeg, SlotIndex, TypeDescriptor};
use crate::meta::{ContractMeta, TypedValue};
use crate::trace::cft::{branch_fingerprint, build_cft, select_relevant_subtrees, TxNode};
use crate::trace::raw::{RawTxRecord, TxHeader};
use crate::trace::RecordPoint;
use crate::word::{Address, Selector, Word};

pub const TRACE_SCHEMA: u32 = 1;
/// Root label of slots no layout entry explains.
pub const ANON_SLOT_LABEL: &str = "slot";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NamedValue {
    pub name: String,
    pub value: TypedValue,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Entry {
    pub sender: Address,
    pub receiver: Address,
    pub block: u64,
    pub timestamp: u64,
    pub value: Word,
    pub params: Vec<NamedValue>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogEntry {
    pub event: String,
    /// Index among events of the same name within this call.
    pub occurrence: u32,
    pub params: Vec<NamedValue>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateEntry {
    pub label: String,
    pub path: Vec<PathSeg>,
    pub value: TypedValue,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenEntry {
    pub token: Address,
    pub holder: Address,
    pub amount: Word,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Snapshot {
    pub point: RecordPoint,
    pub state: Vec<StateEntry>,
    pub tokens: Vec<TokenEntry>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExecutionTrace {
    pub schema: u32,
    pub tx_hash: Word,
    /// Index of this call among the transaction's relevant subtrees.
    pub subtree: u32,
    pub contract: Address,
    pub function: String,
    pub selector: Option<Selector>,
    pub branch: Word,
    pub entry: Entry,
    pub logs: Vec<LogEntry>,
    pub snapshots: Vec<Snapshot>,
    pub reverted: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl ExecutionTrace {
    pub fn snapshot(&self, point: RecordPoint) -> Option<&Snapshot> {
        self.snapshots.iter().find(|s| s.point == point)
    }

    /// Chronological sort key used wherever trace order matters.
    pub fn order_key(&self) -> (u64, u64, Word, u32) {
        (
            self.entry.block,
            self.entry.timestamp,
            self.tx_hash,
            self.subtree,
        )
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("traces always serialize")
    }
}

/// Values usable as mapping keys when resolving hashed storage slots.
pub fn candidate_keys(
    node: &TxNode,
    target: Address,
    entry: &Entry,
    logs: &[LogEntry],
) -> Vec<Word> {
    let mut keys = BTreeSet::new();
    keys.insert(Word::ZERO);
    keys.insert(Word::from_address(entry.sender));
    keys.insert(Word::from_address(entry.receiver));
    keys.insert(Word::from_address(target));
    for p in &entry.params {
        if matches!(
            p.value,
            TypedValue::Address(_) | TypedValue::Unsigned { .. }
        ) {
            keys.insert(p.value.as_key_word().expect("scalar"));
        }
    }
    for log in logs {
        for p in &log.params {
            if let TypedValue::Address(a) = p.value {
                keys.insert(Word::from_address(a));
            }
        }
    }
    for child in node.sub_calls() {
        keys.insert(Word::from_address(child.receiver));
    }
    for obs in &node.observations {
        keys.insert(Word::from_address(obs.holder));
        keys.insert(Word::from_address(obs.token));
    }
    keys.into_iter().collect()
}

/// Slot value at a moment between steps: the post-value of the last access
/// before `at`, or the pre-value of the first access after it.
fn value_at(timeline: &[(usize, Word, Word)], at: Option<usize>) -> Word {
    match at {
        None => timeline[0].1,
        Some(t) => match timeline.iter().rev().find(|(seq, _, _)| *seq <= t) {
            Some((_, _, post)) => *post,
            None => timeline[0].1,
        },
    }
}

struct PendingArray {
    elems: BTreeMap<u64, BTreeMap<String, TypedValue>>,
}

pub fn extract_trace(
    node: &TxNode,
    header: &TxHeader,
    subtree: u32,
    meta: &ContractMeta,
) -> ExecutionTrace {
    let target = meta.address;
    let mut warnings = Vec::new();

    let selector = (node.calldata.0.len() >= 4).then(|| {
        let c = &node.calldata.0;
        Selector([c[0], c[1], c[2], c[3]])
    });
    let (function, params) = if node.calldata.0.is_empty() {
        ("<receive>".to_string(), Vec::new())
    } else {
        match meta.abi.decode_calldata(&node.calldata.0) {
            Ok(call) => (
                call.name,
                call.params
                    .into_iter()
                    .map(|(name, value)| NamedValue { name, value })
                    .collect(),
            ),
            Err(e) => {
                warnings.push(format!("calldata: {e}"));
                ("<unknown>".to_string(), Vec::new())
            }
        }
    };

    let entry = Entry {
        sender: node.sender,
        receiver: node.receiver,
        block: header.block,
        timestamp: header.timestamp,
        value: node.value,
        params,
    };

    let mut logs = Vec::new();
    let mut occurrences: BTreeMap<String, u32> = BTreeMap::new();
    for ev in node.events().filter(|e| e.emitter == target) {
        match meta.abi.decode_event(&ev.topics, &ev.data.0) {
            Ok(d) => {
                let n = occurrences.entry(d.name.clone()).or_insert(0);
                logs.push(LogEntry {
                    event: d.name,
                    occurrence: *n,
                    params: d
                        .params
                        .into_iter()
                        .map(|(name, value)| NamedValue { name, value })
                        .collect(),
                });
                *n += 1;
            }
            Err(e) => warnings.push(format!("event at step {}: {e}", ev.seq)),
        }
    }

    // record points: whole call plus each call out to another contract
    let mut points: Vec<(RecordPoint, Option<usize>)> = vec![
        (RecordPoint::PreCall, None),
        (RecordPoint::PostCall, Some(usize::MAX)),
    ];
    let mut sub_count = 0u32;
    for child in node.sub_calls().filter(|c| c.receiver != target) {
        points.push((RecordPoint::PreSubCall(sub_count), Some(child.enter_seq)));
        points.push((RecordPoint::PostSubCall(sub_count), Some(child.exit_seq)));
        sub_count += 1;
    }

    let keys = candidate_keys(node, target, &entry, &logs);
    let slots = SlotIndex::new(&meta.layout, &keys);
    let mut timelines: BTreeMap<Word, Vec<(usize, Word, Word)>> = BTreeMap::new();
    for t in node.subtree_storage(target) {
        timelines
            .entry(t.slot)
            .or_default()
            .push((t.seq, t.pre, t.post));
    }
    let located: Vec<(Word, Vec<_>)> = timelines
        .keys()
        .map(|slot| (*slot, slots.lookup(slot)))
        .collect();

    let mut snapshots = Vec::with_capacity(points.len());
    for (point, at) in &points {
        let mut state: BTreeMap<(String, Vec<PathSeg>), TypedValue> = BTreeMap::new();
        let mut arrays: BTreeMap<(String, Vec<PathSeg>), PendingArray> = BTreeMap::new();
        for (slot, locs) in &located {
            let raw = value_at(&timelines[slot], *at);
            let mut explained = false;
            for loc in locs {
                let Ok(v) = decode_slot_value(&loc.ty, &raw, loc.offset) else {
                    continue;
                };
                explained = true;
                if let Some(i) = loc.path.iter().position(|s| matches!(s, PathSeg::Index(_))) {
                    let PathSeg::Index(idx) = loc.path[i] else {
                        unreachable!()
                    };
                    let member = match loc.path.get(i + 1) {
                        Some(PathSeg::Field(f)) => f.clone(),
                        _ => String::new(),
                    };
                    arrays
                        .entry((loc.label.clone(), loc.path[..i].to_vec()))
                        .or_insert_with(|| PendingArray {
                            elems: BTreeMap::new(),
                        })
                        .elems
                        .entry(idx)
                        .or_default()
                        .insert(member, v);
                } else {
                    state.insert((loc.label.clone(), loc.path.clone()), v);
                }
            }
            if !explained {
                state.insert(
                    (ANON_SLOT_LABEL.to_string(), vec![PathSeg::Key(*slot)]),
                    TypedValue::uint_word(raw),
                );
            }
        }
        for ((label, prefix), pending) in arrays {
            let mut len_path = prefix.clone();
            len_path.push(PathSeg::Field("length".into()));
            let Some(len) = state
                .get(&(label.clone(), len_path))
                .and_then(|v| v.as_integer())
                .and_then(|n| u64::try_from(n).ok())
            else {
                continue;
            };
            match assemble_array(meta, &label, &prefix, len, &pending) {
                Some(arr) => {
                    state.insert((label, prefix), arr);
                }
                None => {
                    if *point == RecordPoint::PreCall {
                        warnings.push(format!("array {label} only partially observed"));
                    }
                }
            }
        }

        let tokens: Vec<TokenEntry> = node
            .observations
            .iter()
            .filter(|o| o.point == *point)
            .map(|o| TokenEntry {
                token: o.token,
                holder: o.holder,
                amount: o.amount,
            })
            .collect();
        snapshots.push(Snapshot {
            point: *point,
            state: state
                .into_iter()
                .map(|((label, path), value)| StateEntry { label, path, value })
                .collect(),
            tokens,
        });
    }
    for o in &node.observations {
        if !points.iter().any(|(p, _)| *p == o.point) {
            warnings.push(format!(
                "observation at step {} names missing point {}",
                o.seq, o.point
            ));
        }
    }
    snapshots.sort_by_key(|s| s.point);

    ExecutionTrace {
        schema: TRACE_SCHEMA,
        tx_hash: header.tx_hash,
        subtree,
        contract: target,
        function,
        selector,
        branch: branch_fingerprint(node).0,
        entry,
        logs,
        snapshots,
        reverted: !node.success,
        warnings,
    }
}

fn assemble_array(
    meta: &ContractMeta,
    label: &str,
    prefix: &[PathSeg],
    len: u64,
    pending: &PendingArray,
) -> Option<TypedValue> {
    let mut elem_path = prefix.to_vec();
    elem_path.push(PathSeg::Index(0));
    let elem_ty = type_at(&meta.layout, label, &elem_path)?;
    let mut items = Vec::with_capacity(len as usize);
    for i in 0..len {
        let got = pending.elems.get(&i)?;
        let v = match elem_ty {
            TypeDescriptor::Struct { members, .. } => TypedValue::Struct(
                members
                    .iter()
                    .map(|m| Some((m.label.clone(), got.get(&m.label)?.clone())))
                    .collect::<Option<Vec<_>>>()?,
            ),
            _ => got.get("")?.clone(),
        };
        items.push(v);
    }
    Some(TypedValue::Array(items))
}

/// Builds the call-flow tree and extracts one trace per call into the target.
pub fn extract_transaction(
    record: &RawTxRecord,
    meta: &ContractMeta,
) -> Result<Vec<ExecutionTrace>, TraceError> {
    let cft = build_cft(record)?;
    Ok(select_relevant_subtrees(&cft, meta.address)
        .into_iter()
        .enumerate()
        .map(|(i, node)| extract_trace(node, &cft.header, i as u32, meta))
        .collect())
}
