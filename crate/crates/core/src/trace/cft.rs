use std::collections::BTreeMap;

use crate::error::TraceError;
use crate::trace::raw::{AccessKind, RawTxRecord, Step, TxHeader};
use crate::trace::RecordPoint;
use crate::word::{keccak256, Address, Bytes, Word};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StorageTouch {
    /// Position of the step in the raw record.
    pub seq: usize,
    pub contract: Address,
    pub slot: Word,
    pub pre: Word,
    pub post: Word,
    pub kind: AccessKind,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Observation {
    pub seq: usize,
    pub token: Address,
    pub holder: Address,
    pub point: RecordPoint,
    pub amount: Word,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EventNode {
    pub seq: usize,
    pub emitter: Address,
    pub topics: Vec<Word>,
    pub data: Bytes,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Child {
    Tx(TxNode),
    Event(EventNode),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TxNode {
    pub sender: Address,
    pub receiver: Address,
    pub calldata: Bytes,
    pub value: Word,
    pub success: bool,
    pub jumpi_destinations: Vec<u64>,
    pub storage: Vec<StorageTouch>,
    pub observations: Vec<Observation>,
    pub children: Vec<Child>,
    pub enter_seq: usize,
    pub exit_seq: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CallFlowTree {
    pub header: TxHeader,
    pub root: TxNode,
}

/// Digest of one call's own ordered JUMPI destinations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BranchId(pub Word);

impl TxNode {
    fn open(sender: Address, receiver: Address, calldata: Bytes, value: Word, seq: usize) -> Self {
        TxNode {
            sender,
            receiver,
            calldata,
            value,
            success: false,
            jumpi_destinations: Vec::new(),
            storage: Vec::new(),
            observations: Vec::new(),
            children: Vec::new(),
            enter_seq: seq,
            exit_seq: seq,
        }
    }

    pub fn sub_calls(&self) -> impl Iterator<Item = &TxNode> {
        self.children.iter().filter_map(|c| match c {
            Child::Tx(t) => Some(t),
            Child::Event(_) => None,
        })
    }

    pub fn events(&self) -> impl Iterator<Item = &EventNode> {
        self.children.iter().filter_map(|c| match c {
            Child::Event(e) => Some(e),
            Child::Tx(_) => None,
        })
    }

    /// First pre-value and last post-value of each slot this call touched itself.
    pub fn storage_diff(&self) -> BTreeMap<(Address, Word), (Word, Word)> {
        let mut out: BTreeMap<(Address, Word), (Word, Word)> = BTreeMap::new();
        for t in &self.storage {
            out.entry((t.contract, t.slot))
                .and_modify(|e| e.1 = t.post)
                .or_insert((t.pre, t.post));
        }
        out
    }

    /// Calls in this subtree, pre-order, starting with `self`.
    pub fn preorder(&self) -> Vec<&TxNode> {
        let mut out = Vec::new();
        let mut stack = vec![self];
        while let Some(n) = stack.pop() {
            out.push(n);
            for c in n.sub_calls().collect::<Vec<_>>().into_iter().rev() {
                stack.push(c);
            }
        }
        out
    }

    /// Storage touches of `contract` anywhere in this subtree, in execution order.
    pub fn subtree_storage(&self, contract: Address) -> Vec<&StorageTouch> {
        let mut out: Vec<&StorageTouch> = self
            .preorder()
            .into_iter()
            .flat_map(|n| n.storage.iter())
            .filter(|t| t.contract == contract)
            .collect();
        out.sort_by_key(|t| t.seq);
        out
    }
}

/// Rebuilds the call-flow tree from the Enter/Exit nesting of a raw record.
pub fn build_cft(record: &RawTxRecord) -> Result<CallFlowTree, TraceError> {
    let malformed =
        |msg: String| TraceError::MalformedRecord(format!("{}: {msg}", record.header.tx_hash));
    let mut stack: Vec<TxNode> = Vec::new();
    let mut root: Option<TxNode> = None;

    for (seq, step) in record.steps.iter().enumerate() {
        if root.is_some() {
            return Err(malformed(format!(
                "step {seq} follows the root call's exit"
            )));
        }
        match step {
            Step::CallEnter {
                sender,
                receiver,
                calldata,
                value,
            } => stack.push(TxNode::open(
                *sender,
                *receiver,
                calldata.clone(),
                *value,
                seq,
            )),
            Step::CallExit { success } => {
                let mut node = stack
                    .pop()
                    .ok_or_else(|| malformed(format!("exit at step {seq} without an open call")))?;
                node.success = *success;
                node.exit_seq = seq;
                match stack.last_mut() {
                    Some(parent) => parent.children.push(Child::Tx(node)),
                    None => root = Some(node),
                }
            }
            Step::Jumpi { dest } => stack
                .last_mut()
                .ok_or_else(|| malformed(format!("jumpi at step {seq} outside a call")))?
                .jumpi_destinations
                .push(*dest),
            Step::EventEmit {
                emitter,
                topics,
                data,
            } => stack
                .last_mut()
                .ok_or_else(|| malformed(format!("event at step {seq} outside a call")))?
                .children
                .push(Child::Event(EventNode {
                    seq,
                    emitter: *emitter,
                    topics: topics.clone(),
                    data: data.clone(),
                })),
            Step::StorageAccess {
                contract,
                slot,
                pre,
                post,
                kind,
            } => {
                if !stack.iter().any(|n| n.receiver == *contract) {
                    return Err(malformed(format!(
                        "storage access at step {seq} to {contract} which is not executing"
                    )));
                }
                if *kind == AccessKind::Read && pre != post {
                    return Err(malformed(format!("read at step {seq} changes the slot")));
                }
                stack
                    .last_mut()
                    .expect("non-empty")
                    .storage
                    .push(StorageTouch {
                        seq,
                        contract: *contract,
                        slot: *slot,
                        pre: *pre,
                        post: *post,
                        kind: *kind,
                    });
            }
            Step::BalanceObservation {
                token,
                holder,
                point,
                amount,
            } => stack
                .last_mut()
                .ok_or_else(|| malformed(format!("observation at step {seq} outside a call")))?
                .observations
                .push(Observation {
                    seq,
                    token: *token,
                    holder: *holder,
                    point: *point,
                    amount: *amount,
                }),
        }
    }
    if !stack.is_empty() {
        return Err(malformed(format!("{} calls never exit", stack.len())));
    }
    let root = root.ok_or_else(|| malformed("no calls".into()))?;
    Ok(CallFlowTree {
        header: record.header.clone(),
        root,
    })
}

/// Every call whose receiver is `target`, in pre-order; reentrant calls
/// nested inside another selected call are returned as well.
pub fn select_relevant_subtrees(cft: &CallFlowTree, target: Address) -> Vec<&TxNode> {
    cft.root
        .preorder()
        .into_iter()
        .filter(|n| n.receiver == target)
        .collect()
}

pub fn branch_fingerprint(node: &TxNode) -> BranchId {
    let mut buf = Vec::with_capacity(node.jumpi_destinations.len() * 8);
    for d in &node.jumpi_destinations {
        buf.extend_from_slice(&d.to_be_bytes());
    }
    BranchId(keccak256(&buf))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn addr(b: u8) -> Address {
        Address([b; 20])
    }

    fn header() -> TxHeader {
        TxHeader {
            tx_hash: Word::from_u64(1),
            block: 1,
            timestamp: 12,
            origin: addr(1),
        }
    }

    fn enter(from: u8, to: u8) -> Step {
        Step::CallEnter {
            sender: addr(from),
            receiver: addr(to),
            calldata: Bytes(vec![]),
            value: Word::ZERO,
        }
    }

    fn exit() -> Step {
        Step::CallExit { success: true }
    }

    fn event(from: u8) -> Step {
        Step::EventEmit {
            emitter: addr(from),
            topics: vec![Word::from_u64(9)],
            data: Bytes(vec![]),
        }
    }

    #[test]
    fn single_call_two_events() {
        let rec = RawTxRecord {
            header: header(),
            steps: vec![enter(1, 2), event(2), event(2), exit()],
        };
        let cft = build_cft(&rec).unwrap();
        assert_eq!(cft.root.children.len(), 2);
        assert!(cft
            .root
            .children
            .iter()
            .all(|c| matches!(c, Child::Event(_))));
    }

    #[test]
    fn child_order_is_preserved() {
        let rec = RawTxRecord {
            header: header(),
            steps: vec![enter(1, 2), enter(2, 3), exit(), event(2), exit()],
        };
        let cft = build_cft(&rec).unwrap();
        assert!(matches!(cft.root.children[0], Child::Tx(_)));
        assert!(matches!(cft.root.children[1], Child::Event(_)));
    }

    #[test]
    fn unbalanced_records_rejected() {
        for steps in [
            vec![enter(1, 2)],
            vec![exit()],
            vec![enter(1, 2), exit(), exit()],
            vec![enter(1, 2), exit(), enter(1, 2), exit()],
            vec![],
        ] {
            let rec = RawTxRecord {
                header: header(),
                steps,
            };
            assert!(matches!(
                build_cft(&rec),
                Err(TraceError::MalformedRecord(_))
            ));
        }
    }

    #[test]
    fn target_never_called() {
        let rec = RawTxRecord {
            header: header(),
            steps: vec![enter(1, 2), exit()],
        };
        let cft = build_cft(&rec).unwrap();
        assert!(select_relevant_subtrees(&cft, addr(9)).is_empty());
    }

    #[test]
    fn third_internal_call_selected() {
        let rec = RawTxRecord {
            header: header(),
            steps: vec![
                enter(1, 2),
                enter(2, 3),
                exit(),
                enter(2, 4),
                exit(),
                enter(2, 9),
                exit(),
                exit(),
            ],
        };
        let cft = build_cft(&rec).unwrap();
        let sel = select_relevant_subtrees(&cft, addr(9));
        assert_eq!(sel.len(), 1);
        assert_eq!(sel[0].sender, addr(2));
    }

    #[test]
    fn straight_line_branch_is_hash_of_nothing() {
        let rec = RawTxRecord {
            header: header(),
            steps: vec![enter(1, 2), exit()],
        };
        let cft = build_cft(&rec).unwrap();
        assert_eq!(branch_fingerprint(&cft.root).0, keccak256(&[]));
    }

    #[test]
    fn child_jumps_do_not_leak_into_parent_branch() {
        let with_child = RawTxRecord {
            header: header(),
            steps: vec![
                enter(1, 2),
                Step::Jumpi { dest: 5 },
                enter(2, 3),
                Step::Jumpi { dest: 77 },
                exit(),
                exit(),
            ],
        };
        let plain = RawTxRecord {
            header: header(),
            steps: vec![enter(1, 2), Step::Jumpi { dest: 5 }, exit()],
        };
        let a = build_cft(&with_child).unwrap();
        let b = build_cft(&plain).unwrap();
        assert_eq!(branch_fingerprint(&a.root), branch_fingerprint(&b.root));
    }
}
