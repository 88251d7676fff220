#![allow(dead_code)]

use std::fs;
use std::path::PathBuf;

use txoracle_core::sim::{gen_corpus, Corpus, MachineKind, ScenarioSpec};
use txoracle_core::{extract_transaction, ExecutionTrace, RawTxRecord};

pub mod oracle;
pub mod reference;

pub fn fixtures_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

/// Set `TXORACLE_BLESS=1` to rewrite golden files instead of comparing.
pub fn blessing() -> bool {
    std::env::var_os("TXORACLE_BLESS").is_some()
}

pub fn assert_golden(name: &str, actual: &str) {
    let path = fixtures_dir().join(name);
    if blessing() {
        fs::write(&path, actual).unwrap();
        return;
    }
    let expected = fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    assert!(
        expected == actual,
        "{} is out of date (rerun with TXORACLE_BLESS=1)",
        path.display()
    );
}

pub fn corpus(machine: MachineKind, txs: usize, seed: u64) -> Corpus {
    gen_corpus(&ScenarioSpec::new(machine, txs, seed)).unwrap()
}

pub fn traces_of(machine: MachineKind, records: &[RawTxRecord]) -> Vec<ExecutionTrace> {
    let meta = machine.meta();
    records
        .iter()
        .flat_map(|r| extract_transaction(r, &meta).unwrap())
        .collect()
}

pub mod synth {
    use txoracle_core::meta::{PathSeg, TypedValue};
    use txoracle_core::trace::extract::{Entry, LogEntry, NamedValue, StateEntry, TokenEntry};
    use txoracle_core::trace::{ExecutionTrace, RecordPoint, Snapshot};
    use txoracle_core::{Address, Word};

    pub fn addr(b: u8) -> Address {
        Address([b; 20])
    }

    /// Hand-built trace with PreCall and PostCall snapshots.
    #[derive(Clone)]
    pub struct Synth {
        pub trace: ExecutionTrace,
    }

    impl Synth {
        pub fn new(sender: Address, receiver: Address) -> Self {
            let snap = |point| Snapshot {
                point,
                state: Vec::new(),
                tokens: Vec::new(),
            };
            Synth {
                trace: ExecutionTrace {
                    schema: 1,
                    tx_hash: Word::from_u64(1),
                    subtree: 0,
                    contract: receiver,
                    function: "f".into(),
                    selector: None,
                    branch: Word::ZERO,
                    entry: Entry {
                        sender,
                        receiver,
                        block: 10,
                        timestamp: 120,
                        value: Word::ZERO,
                        params: Vec::new(),
                    },
                    logs: Vec::new(),
                    snapshots: vec![snap(RecordPoint::PreCall), snap(RecordPoint::PostCall)],
                    reverted: false,
                    warnings: Vec::new(),
                },
            }
        }

        pub fn at(mut self, tx: u64, block: u64, value: u64) -> Self {
            self.trace.tx_hash = Word::from_u64(tx);
            self.trace.entry.block = block;
            self.trace.entry.timestamp = block * 12;
            self.trace.entry.value = Word::from_u64(value);
            self
        }

        pub fn param(mut self, name: &str, value: TypedValue) -> Self {
            self.trace.entry.params.push(NamedValue {
                name: name.into(),
                value,
            });
            self
        }

        pub fn event(mut self, name: &str, params: Vec<(&str, TypedValue)>) -> Self {
            let occurrence = self.trace.logs.iter().filter(|l| l.event == name).count() as u32;
            self.trace.logs.push(LogEntry {
                event: name.into(),
                occurrence,
                params: params
                    .into_iter()
                    .map(|(n, value)| NamedValue {
                        name: n.into(),
                        value,
                    })
                    .collect(),
            });
            self
        }

        fn snap(&mut self, point: RecordPoint) -> &mut Snapshot {
            if self.trace.snapshot(point).is_none() {
                self.trace.snapshots.push(Snapshot {
                    point,
                    state: Vec::new(),
                    tokens: Vec::new(),
                });
            }
            self.trace
                .snapshots
                .iter_mut()
                .find(|s| s.point == point)
                .unwrap()
        }

        pub fn state(
            mut self,
            label: &str,
            path: Vec<PathSeg>,
            pre: TypedValue,
            post: TypedValue,
        ) -> Self {
            for (point, value) in [(RecordPoint::PreCall, pre), (RecordPoint::PostCall, post)] {
                self.snap(point).state.push(StateEntry {
                    label: label.into(),
                    path: path.clone(),
                    value,
                });
            }
            self
        }

        pub fn token(mut self, token: Address, holder: Address, pre: u64, post: u64) -> Self {
            for (point, amount) in [(RecordPoint::PreCall, pre), (RecordPoint::PostCall, post)] {
                self.snap(point).tokens.push(TokenEntry {
                    token,
                    holder,
                    amount: Word::from_u64(amount),
                });
            }
            self
        }

        pub fn build(self) -> ExecutionTrace {
            self.trace
        }
    }
}
