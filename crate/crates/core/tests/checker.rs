mod common;

use num_bigint::BigInt;
use txoracle_core::miner::Layer;
use txoracle_core::sim::{gen_corpus, AttackScript, MachineKind, ScenarioSpec};
use txoracle_core::{
    check_stream, check_trace, evaluate, extract_transaction, mine_contract, select_invariant_set, Address,
    CheckError, Invariant, InvariantStore, MinerConfig, Outcome, Property, RawTxRecord, Selector, StreamEntry,
    Support, VarRef, Word,
};

use common::{corpus, traces_of};

fn ndjson(records: &[RawTxRecord]) -> String {
    records.iter().map(|r| r.to_json_line() + "\n").collect()
}

fn mined(m: MachineKind, txs: usize, seed: u64, threshold: &str) -> (InvariantStore, Vec<RawTxRecord>) {
    let records = corpus(m, txs, seed).records;
    let cfg = MinerConfig {
        threshold: threshold.parse().unwrap(),
        ..MinerConfig::default()
    };
    (mine_contract(&traces_of(m, &records), &m.meta(), &cfg), records)
}

#[test]
fn selection_falls_back_from_branch_to_function_to_contract() {
    let m = MachineKind::Erc20;
    let (store, records) = mined(m, 120, 9, "1");
    let traces = traces_of(m, &records);
    let t = traces
        .iter()
        .find(|t| {
            store
                .sets
                .get(&Layer::Branch(t.selector, t.branch).key())
                .is_some_and(|s| !s.invariants.is_empty())
        })
        .expect("some branch set is populated");
    let (layer, _) = select_invariant_set(&store, t).unwrap();
    assert!(layer.starts_with("branch:"));

    let mut unseen_branch = t.clone();
    unseen_branch.branch = Word::from_u64(0xdead);
    let (layer, _) = select_invariant_set(&store, &unseen_branch).unwrap();
    assert_eq!(layer, Layer::Function(t.selector).key());

    let mut unseen_fn = t.clone();
    unseen_fn.selector = Some(Selector([0xde, 0xad, 0xbe, 0xef]));
    let (layer, _) = select_invariant_set(&store, &unseen_fn).unwrap();
    assert_eq!(layer, "contract");

    // an empty branch set counts as absent
    let mut emptied = store.clone();
    emptied
        .sets
        .get_mut(&Layer::Branch(t.selector, t.branch).key())
        .unwrap()
        .invariants
        .clear();
    let (layer, _) = select_invariant_set(&emptied, t).unwrap();
    assert_eq!(layer, Layer::Function(t.selector).key());

    let mut foreign = t.clone();
    foreign.contract = Address([0x42; 20]);
    assert!(matches!(select_invariant_set(&store, &foreign), Err(CheckError::NoStore(_))));
}

#[test]
fn all_inapplicable_set_gives_an_empty_report() {
    let m = MachineKind::Erc20;
    let (store, records) = mined(m, 20, 1, "1");
    let trace = &traces_of(m, &records[..1])[0];
    let mut set = store.sets["contract"].clone();
    set.invariants = (0..3)
        .map(|i| {
            let p = Property::const_eq(
                VarRef::Event {
                    event: "NeverEmitted".into(),
                    occurrence: 0,
                    param: format!("p{i}"),
                },
                BigInt::from(i),
            );
            Invariant {
                pattern: p.pattern(),
                provenance: p.provenance(),
                property: p,
                support: Support {
                    satisfied: 5,
                    applicable: 5,
                    total: 5,
                },
            }
        })
        .collect();
    let report = check_trace(trace, "contract", &set);
    assert!(report.is_clean());
    assert_eq!(report.checked_count, 3);
    assert_eq!(report.inapplicable_count, 3);
}

#[test]
fn empty_stream_yields_nothing() {
    let (store, _) = mined(MachineKind::Whitelist, 20, 1, "1");
    let out = check_stream(&store, &MachineKind::Whitelist.meta(), "");
    assert!(out.entries.is_empty() && out.timings.is_empty());
    let out = check_stream(&store, &MachineKind::Whitelist.meta(), "\n  \n");
    assert!(out.entries.is_empty());
}

#[test]
fn malformed_record_is_reported_in_place() {
    let m = MachineKind::Whitelist;
    let (store, records) = mined(m, 20, 1, "1");
    let mut lines: Vec<String> = records[..5].iter().map(|r| r.to_json_line()).collect();
    lines[2] = "{\"header\": 17".into();
    let out = check_stream(&store, &m.meta(), &lines.join("\n"));
    let errors: Vec<usize> = out
        .entries
        .iter()
        .filter(|e| matches!(e, StreamEntry::Error { .. }))
        .map(StreamEntry::position)
        .collect();
    assert_eq!(errors, vec![3]);
    for pos in [1, 2, 4, 5] {
        assert!(out.entries.iter().any(|e| e.position() == pos && e.report().is_some()), "{pos}");
    }
    let positions: Vec<usize> = out.entries.iter().map(StreamEntry::position).collect();
    assert!(positions.windows(2).all(|w| w[0] <= w[1]));
    assert_eq!(out.timings.len(), 5);
}

#[test]
fn mining_corpus_is_clean_at_full_threshold() {
    for m in MachineKind::ALL {
        let (store, records) = mined(m, 60, 21, "1");
        let out = check_stream(&store, &m.meta(), &ndjson(&records));
        assert_eq!(out.error_count(), 0);
        assert!(out.violating_transactions().is_empty(), "{}", m.name());
    }
}

#[test]
fn reported_violations_reproduce_and_single_out_the_attack() {
    for script in AttackScript::ALL {
        let m = script.machine();
        let mut spec = ScenarioSpec::new(m, 160, 4);
        spec.attack_script = Some(script);
        let c = gen_corpus(&spec).unwrap();
        let (train, held) = c.records.split_at(110);
        let store = mine_contract(&traces_of(m, train), &m.meta(), &MinerConfig::default());
        let out = check_stream(&store, &m.meta(), &ndjson(held));
        assert_eq!(out.violating_transactions(), vec![c.manifest.attack.unwrap()], "{}", script.name());

        let meta = m.meta();
        let attack = held.last().unwrap();
        let traces = extract_transaction(attack, &meta).unwrap();
        for report in out.entries.iter().filter_map(StreamEntry::report).filter(|r| !r.is_clean()) {
            let t = traces.iter().find(|t| t.subtree == report.subtree).unwrap();
            for v in &report.violations {
                assert_eq!(evaluate(&v.property, t), Outcome::Violated, "{}", v.property);
                assert!(!v.observed.is_empty());
            }
        }
    }
}

#[test]
fn reverted_calls_are_checked_only_when_mined() {
    let m = MachineKind::Erc20;
    let (mut store, records) = mined(m, 60, 21, "1");
    let meta = m.meta();
    let reverted = records
        .iter()
        .find(|r| extract_transaction(r, &meta).unwrap().iter().any(|t| t.reverted))
        .expect("corpus contains a reverted call");
    let line = reverted.to_json_line();
    let out = check_stream(&store, &meta, &line);
    assert!(out.entries.iter().all(|e| e.report().is_none()));
    assert_eq!(out.timings.len(), 1);

    store.config.include_reverted = true;
    let out = check_stream(&store, &meta, &line);
    assert!(out.entries.iter().any(|e| e.report().is_some()));
}
