//! End-to-end acceptance criteria. Each criterion prints one PASS/FAIL line;
//! the process exits nonzero when any fails.

#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode, Output};
use std::time::{Duration, Instant};

use anyhow::{bail, ensure, Context, Result};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tempfile::TempDir;
use txoracle_core::miner::{candidate_cache, filter_with_cache, group_traces};
use txoracle_core::property::{
    detect_comparison, detect_membership, infer_advanced, infer_fixpoint, CmpOp, DetectConfig, Key, Loc,
    TxField,
};
use txoracle_core::sim::{gen_corpus, inject_attack, AttackScript, MachineKind, ScenarioSpec};
use txoracle_core::trace::{parse_raw_ndjson, RecordPoint};
use txoracle_core::{
    check_record, load, mapping_slot, mine_contract, InvariantStore, MinerConfig, Pattern, Property, RawTxRecord,
    StreamEntry, TypedValue, VarRef, Word,
};

use common::oracle::Small;
use common::reference::{oracle_slot, round_trip_records};
use common::synth::{addr, Synth};
use common::{assert_golden, fixtures_dir, traces_of};

const ERC20_RECOVERY_TXS: usize = 500;
const RECOVERY_BUDGET: Duration = Duration::from_secs(30);
const MIN_THROUGHPUT: f64 = 20.0;

fn txoracle(args: &[&str]) -> Result<Output> {
    Command::new(env!("CARGO_BIN_EXE_txoracle"))
        .args(args)
        .output()
        .context("cannot run txoracle")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().expect("utf-8 path")
}

fn fixture(name: &str) -> PathBuf {
    fixtures_dir().join(name)
}

fn exit_code(out: &Output) -> Result<i32> {
    out.status.code().context("killed by a signal")
}

fn mine_files(traces: &Path, prefix: &str, out: &Path, extra: &[&str]) -> Result<Output> {
    let abi = fixture(&format!("{prefix}.abi.json"));
    let layout = fixture(&format!("{prefix}.layout.json"));
    let mut args = vec!["mine", "--traces", s(traces), "--abi", s(&abi), "--layout", s(&layout), "--out", s(out)];
    args.extend_from_slice(extra);
    let o = txoracle(&args)?;
    ensure!(exit_code(&o)? == 0, "mine failed: {}", String::from_utf8_lossy(&o.stderr));
    Ok(o)
}

fn load_store(prefix: &Path) -> Result<InvariantStore> {
    let bytes = fs::read(format!("{}.store.json", prefix.display()))?;
    Ok(load(&bytes)?)
}

fn fixture_lines(n: usize) -> Result<Vec<String>> {
    let text = fs::read_to_string(fixture("erc20.traces.ndjson"))?;
    Ok(text.lines().take(n).map(str::to_string).collect())
}

fn write_lines(path: &Path, lines: &[String]) -> Result<()> {
    fs::write(path, lines.join("\n") + "\n")?;
    Ok(())
}

fn golden_text(store: &InvariantStore) -> String {
    let mut out = String::new();
    for (key, set) in &store.sets {
        for inv in &set.invariants {
            out.push_str(&format!("{key}\t{}\n", inv.property));
        }
    }
    out
}

fn parse(text: &str) -> Result<Property> {
    text.parse().map_err(|e| anyhow::anyhow!("{text}: {e}"))
}

/// Layer keys whose set holds `p`.
fn layers_with(store: &InvariantStore, p: &Property) -> Vec<String> {
    store
        .sets
        .iter()
        .filter(|(_, set)| set.invariants.iter().any(|i| &i.property == p))
        .map(|(k, _)| k.clone())
        .collect()
}

fn function_of<'s>(store: &'s InvariantStore, key: &str) -> Option<&'s str> {
    store.sets.get(key)?.function.as_deref()
}

fn erc20_recovery(dir: &Path) -> Result<String> {
    let traces = dir.join("erc20-500.traces.ndjson");
    write_lines(&traces, &fixture_lines(ERC20_RECOVERY_TXS)?)?;
    let prefix = dir.join("erc20-500");
    let start = Instant::now();
    mine_files(&traces, "erc20", &prefix, &["--threshold", "1"])?;
    let elapsed = start.elapsed();
    ensure!(elapsed < RECOVERY_BUDGET, "mining took {elapsed:?}");
    let store = load_store(&prefix)?;
    assert_golden("erc20.golden.txt", &golden_text(&store));

    let c = MachineKind::Erc20.address();
    let delta = "@[PreCall,PostCall]";
    // (shape, layer kind, function)
    let shapes = [
        (format!("state.totalSupply@PreCall == SUM(token[{c}])@PreCall"), "contract", None),
        (format!("fn.amt == -Δstate.balances[tx.sender]{delta}"), "branch", Some("transfer")),
        (format!("fn.amt == Δstate.balances[fn.to]{delta}"), "branch", Some("transfer")),
        ("fn.amt == state.allowance[tx.sender][fn.spender]@PostCall".to_string(), "", Some("approve")),
        (format!("fn.amt == -Δstate.allowance[fn.from][tx.sender]{delta}"), "", Some("transferFrom")),
        (format!("fn.amt == -Δstate.balances[fn.from]{delta}"), "", Some("transferFrom")),
        (format!("fn.amt == Δstate.balances[fn.to]{delta}"), "", Some("transferFrom")),
    ];
    for (text, kind, function) in &shapes {
        let p = parse(text)?;
        let found = layers_with(&store, &p).into_iter().any(|k| {
            k.starts_with(kind) && function.is_none_or(|f| function_of(&store, &k) == Some(f))
        });
        ensure!(found, "{text} missing at {kind} layer of {function:?}");
    }
    // both transfer shapes sit in one branch
    let sent = layers_with(&store, &parse(&shapes[1].0)?);
    let received = layers_with(&store, &parse(&shapes[2].0)?);
    ensure!(
        sent.iter().any(|k| k.starts_with("branch") && received.contains(k)),
        "transfer sender and receiver deltas in different branches"
    );
    Ok(format!(
        "{} invariants, 7/7 shapes, golden match, mined in {:.1}s",
        store.invariant_count(),
        elapsed.as_secs_f64()
    ))
}

fn branch_layering() -> Result<String> {
    let m = MachineKind::DepositVault;
    let mut spec = ScenarioSpec::new(m, 200, 11);
    spec.rune_share = 100;
    let meta = m.meta();
    let traces = traces_of(m, &gen_corpus(&spec)?.records);
    let store = mine_contract(&traces, &meta, &MinerConfig::default());
    let deposit: Vec<(&String, &txoracle_core::InvariantSet)> = store
        .sets
        .iter()
        .filter(|(_, set)| set.function.as_deref() == Some("deposit"))
        .collect();
    let branches: Vec<&String> = deposit.iter().map(|(k, _)| *k).filter(|k| k.starts_with("branch:")).collect();
    ensure!(branches.len() == 1, "expected only the first deposit branch, found {}", branches.len());
    let (fn_key, fn_set) = deposit
        .iter()
        .find(|(k, _)| k.starts_with("function:"))
        .context("no function set for deposit")?;
    let analogue = fn_set.invariants.iter().find(|i| {
        let t = i.property.to_string();
        t.starts_with("fn.amount == -Δtoken[") && t.ends_with("][tx.sender]@[PreCall,PostCall]")
    });
    let analogue = analogue.context("deposit function set lacks amount == -Δtoken[asset][sender]")?;

    let attack = inject_attack(&spec, AttackScript::FakeDeposit)?;
    let reports = check_record(&store, &meta, &attack).map_err(anyhow::Error::msg)?;
    let r = reports.first().context("no report for the unmined-branch deposit")?;
    ensure!(&r.layer == *fn_key, "checked at {} instead of {fn_key}", r.layer);
    ensure!(!r.is_clean(), "unmined-branch deposit not flagged");
    Ok(format!("one deposit branch mined; fallback to {}; holds {}", r.layer, analogue.property))
}

fn entries(path: &Path) -> Result<Vec<StreamEntry>> {
    fs::read_to_string(path)?
        .lines()
        .map(|l| serde_json::from_str(l).context("bad report line"))
        .collect()
}

fn attack_detection(dir: &Path) -> Result<String> {
    let mut notes = Vec::new();
    for script in AttackScript::ALL {
        let m = script.machine();
        let mut spec = ScenarioSpec::new(m, 300, 21);
        spec.attack_script = Some(script);
        let corpus = gen_corpus(&spec)?;
        let attack = corpus.manifest.attack.context("no attack recorded")?;
        let lines: Vec<String> = corpus.records.iter().map(RawTxRecord::to_json_line).collect();
        let train = dir.join(format!("{}-train.traces.ndjson", script.name()));
        let held = dir.join(format!("{}-held.traces.ndjson", script.name()));
        write_lines(&train, &lines[..200])?;
        write_lines(&held, &lines[200..])?;
        ensure!(lines.len() == 301);
        let prefix = dir.join(format!("{}-train", script.name()));
        mine_files(&train, m.name(), &prefix, &[])?;
        let out_prefix = dir.join(format!("{}-held", script.name()));
        let store = format!("{}.store.json", prefix.display());
        let o = txoracle(&["check", "--store", &store, "--traces", s(&held), "--out", s(&out_prefix)])?;
        ensure!(exit_code(&o)? == 1, "{}: check exit {:?}", script.name(), o.status.code());

        let reports = entries(&PathBuf::from(format!("{}.reports.ndjson", out_prefix.display())))?;
        let flagged: BTreeSet<Word> = reports
            .iter()
            .filter_map(StreamEntry::report)
            .filter(|r| !r.is_clean())
            .map(|r| r.tx_hash)
            .collect();
        let tp = usize::from(flagged.contains(&attack));
        let precision = tp as f64 / flagged.len().max(1) as f64;
        let recall = tp as f64;
        ensure!(
            flagged == BTreeSet::from([attack]),
            "{}: flagged {} tx, precision {precision:.2}, recall {recall:.2}",
            script.name(),
            flagged.len()
        );
        let violated: Vec<&Property> = reports
            .iter()
            .filter_map(StreamEntry::report)
            .flat_map(|r| r.violations.iter().map(|v| &v.property))
            .collect();
        let expected = match script {
            AttackScript::FakeDeposit => violated.iter().any(|p| {
                let t = p.to_string();
                t.starts_with("fn.amount == Δtoken[") || t.starts_with("fn.amount == -Δtoken[")
            }),
            AttackScript::UnauthorizedCall => violated.iter().any(|p| p.pattern() == Pattern::Membership),
            AttackScript::ReentrantDrain => violated.iter().any(|p| p.to_string().contains("SubCall#")),
        };
        ensure!(expected, "{}: expected violation kind absent", script.name());
        notes.push(format!("{} 1/1 ({} violated)", script.name(), violated.len()));
    }
    Ok(format!("precision 1.00 recall 1.00: {}", notes.join(", ")))
}

fn property_sets(store: &InvariantStore) -> BTreeMap<String, BTreeSet<Property>> {
    store
        .sets
        .iter()
        .map(|(k, s)| (k.clone(), s.invariants.iter().map(|i| i.property.clone()).collect()))
        .collect()
}

fn with_threshold(t: &str) -> MinerConfig {
    MinerConfig {
        threshold: t.parse().expect("literal"),
        ..MinerConfig::default()
    }
}

fn threshold_robustness() -> Result<String> {
    let m = MachineKind::Erc20;
    let clean_spec = ScenarioSpec::new(m, 400, 5);
    let mut noisy_spec = clean_spec.clone();
    noisy_spec.anomaly_rate = "0.02".parse()?;
    let clean = gen_corpus(&clean_spec)?;
    let noisy = gen_corpus(&noisy_spec)?;
    let perturbed = noisy.manifest.perturbed.clone().context("no perturbed variable")?;
    ensure!(!noisy.manifest.anomalous.is_empty(), "no anomalies injected");
    let meta = m.meta();
    let clean_store = mine_contract(&traces_of(m, &clean.records), &meta, &with_threshold("0.98"));
    let noisy_traces = traces_of(m, &noisy.records);
    let at_98 = mine_contract(&noisy_traces, &meta, &with_threshold("0.98"));
    let at_100 = mine_contract(&noisy_traces, &meta, &with_threshold("1"));
    let expected = property_sets(&clean_store);
    ensure!(property_sets(&at_98) == expected, "0.98 store differs from the clean store");
    let strict = property_sets(&at_100);
    let lost: Vec<String> = expected
        .iter()
        .flat_map(|(k, ps)| {
            let kept = strict.get(k);
            ps.iter().filter(move |p| !kept.is_some_and(|s| s.contains(*p)))
        })
        .map(ToString::to_string)
        .filter(|t| t.contains(&perturbed))
        .collect();
    ensure!(!lost.is_empty(), "threshold 1.0 kept every invariant over {perturbed}");

    let mut groups = 0;
    for i in 0..20u64 {
        let machine = MachineKind::ALL[i as usize % MachineKind::ALL.len()];
        let mut spec = ScenarioSpec::new(machine, 24 + (i as usize % 3) * 8, 5000 + i);
        if machine.supports_anomalies() {
            spec.anomaly_rate = ["0", "0.05", "0.1"][i as usize % 3].parse()?;
        }
        let traces = traces_of(machine, &gen_corpus(&spec)?.records);
        let cache = candidate_cache(&traces, &MinerConfig::default());
        for g in group_traces(&traces) {
            let mut previous: Option<BTreeSet<Property>> = None;
            for t in ["0.8", "0.9", "0.98", "1"] {
                let now: BTreeSet<Property> = filter_with_cache(&g, &cache, &with_threshold(t))
                    .into_iter()
                    .map(|i| i.property)
                    .collect();
                if let Some(prev) = &previous {
                    ensure!(now.is_subset(prev), "corpus {i}, {}: not monotone at {t}", g.layer.key());
                }
                previous = Some(now);
            }
            groups += 1;
        }
    }
    Ok(format!(
        "{} anomalies; 0.98 equals clean store; 1.0 loses {} invariant(s) over {perturbed}; monotone on 20 corpora ({groups} groups)",
        noisy.manifest.anomalous.len(),
        lost.len()
    ))
}

fn determinism(dir: &Path) -> Result<String> {
    let lines = fixture_lines(200)?;
    let mut rng = ChaCha8Rng::seed_from_u64(0xd373);
    let mut stores = Vec::new();
    for run in 0..3 {
        let mut permuted = lines.clone();
        if run > 0 {
            permuted.shuffle(&mut rng);
        }
        let traces = dir.join(format!("perm{run}.traces.ndjson"));
        write_lines(&traces, &permuted)?;
        let prefix = dir.join(format!("perm{run}"));
        mine_files(&traces, "erc20", &prefix, &[])?;
        stores.push(fs::read(format!("{}.store.json", prefix.display()))?);
    }
    ensure!(stores.windows(2).all(|w| w[0] == w[1]), "stores differ across permutations");
    Ok(format!("3 runs, {} byte store identical", stores[0].len()))
}

fn param(name: &str) -> VarRef {
    VarRef::Param(name.into())
}

fn token_delta(token: Key, holder: Key) -> VarRef {
    VarRef::Delta {
        loc: Loc::Token { token, holder },
        from: RecordPoint::PreCall,
        to: RecordPoint::PostCall,
    }
}

fn brute_force_oracle() -> Result<String> {
    let cfg = DetectConfig {
        include_ordering: true,
        ..DetectConfig::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(0x0e1a);
    let mut relations = 0;
    for case in 0..50 {
        let small = Small::random(&mut rng);
        let trace = small.trace();
        let expected = small.expected_comparisons();
        ensure!(detect_comparison(&trace, &cfg) == expected, "comparisons differ on case {case}");
        ensure!(detect_membership(&trace) == small.expected_memberships(), "memberships differ on case {case}");
        relations += expected.len();
    }

    let (a, b) = (0xaa, 0xbb);
    let trace = Synth::new(addr(b), addr(0xcc))
        .param("ast", TypedValue::Address(addr(a)))
        .param("amt", TypedValue::uint(7))
        .token(addr(a), addr(b), 10, 17)
        .build();
    let concrete = |x: u8| Key::Concrete(Word::from_address(addr(x)));
    let symbolic = |v: VarRef| Key::Symbolic(Box::new(v));
    let eq = |t, h| Property::compare(param("amt"), CmpOp::Eq, token_delta(t, h)).expect("distinct sides");
    let sender = VarRef::Tx(TxField::Sender);
    let p = eq(concrete(a), concrete(b));
    let hand: BTreeSet<Property> = [
        p.clone(),
        eq(symbolic(param("ast")), concrete(b)),
        eq(concrete(a), symbolic(sender.clone())),
        eq(symbolic(param("ast")), symbolic(sender)),
    ]
    .into();
    ensure!(infer_fixpoint(&BTreeSet::from([p.clone()]), &trace) == hand, "closure differs from hand enumeration");
    ensure!(infer_advanced(&p, &trace).len() == 2, "one-step inference should give 2");
    Ok(format!("50 traces, {relations} relations matched; 2-key closure = 4"))
}

fn conformance() -> Result<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(0xc0f3);
    for _ in 0..1000 {
        let key = Word(rng.random());
        let base = Word(rng.random());
        ensure!(mapping_slot(&key, &base) == oracle_slot(&key, &base), "slot mismatch");
    }
    let text = fs::read_to_string(fixture("erc20.traces.ndjson"))?;
    let records: Vec<RawTxRecord> = parse_raw_ndjson(&text).into_iter().collect::<Result<_, _>>()?;
    let (mut calls, mut events) = round_trip_records(MachineKind::Erc20, &records);
    for m in MachineKind::ALL.into_iter().filter(|m| *m != MachineKind::Erc20) {
        let abi_fixture = fs::read_to_string(fixture(&format!("{}.abi.json", m.name())))?;
        ensure!(abi_fixture == m.abi_json(), "{} ABI fixture out of date", m.name());
        let (c, e) = round_trip_records(m, &common::corpus(m, 200, 3).records);
        calls += c;
        events += e;
    }
    Ok(format!("1000 slots; {calls} calls and {events} events round-trip"))
}

fn throughput(dir: &Path) -> Result<String> {
    let train = dir.join("tp-train.traces.ndjson");
    write_lines(&train, &fixture_lines(ERC20_RECOVERY_TXS)?)?;
    let prefix = dir.join("tp-train");
    mine_files(&train, "erc20", &prefix, &[])?;
    let store = format!("{}.store.json", prefix.display());
    let all = fixture("erc20.traces.ndjson");
    let out = dir.join("tp-check");
    let start = Instant::now();
    let o = txoracle(&["check", "--store", &store, "--traces", s(&all), "--out", s(&out)])?;
    let wall = start.elapsed();
    let code = exit_code(&o)?;
    ensure!(code == 0 || code == 1, "check exit {code}");
    let text = stdout(&o);
    let line = text
        .lines()
        .find(|l| l.starts_with("checked "))
        .context("no timing line")?;
    let rate: f64 = line
        .rsplit(", ")
        .next()
        .and_then(|t| t.strip_suffix(" tx/s"))
        .context("no rate")?
        .parse()?;
    let n: usize = line.split_whitespace().nth(1).context("no count")?.parse()?;
    ensure!(n == 1000, "checked {n} transactions");
    let end_to_end = n as f64 / wall.as_secs_f64();
    if rate < MIN_THROUGHPUT || end_to_end < MIN_THROUGHPUT {
        bail!("{rate:.1} tx/s in check, {end_to_end:.1} tx/s end to end");
    }
    Ok(format!("{line}; {end_to_end:.1} tx/s including process start and store load"))
}

type Criterion = (&'static str, Box<dyn Fn(&Path) -> Result<String>>);

fn main() -> ExitCode {
    let criteria: Vec<Criterion> = vec![
        ("erc20-recovery", Box::new(erc20_recovery)),
        ("branch-layering", Box::new(|_| branch_layering())),
        ("attack-detection", Box::new(attack_detection)),
        ("threshold-robustness", Box::new(|_| threshold_robustness())),
        ("determinism", Box::new(determinism)),
        ("brute-force-oracle", Box::new(|_| brute_force_oracle())),
        ("keccak-abi-conformance", Box::new(|_| conformance())),
        ("throughput", Box::new(throughput)),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (name, run) in &criteria {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let dir = TempDir::new().expect("temp dir");
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(|| run(dir.path())));
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(Ok(detail)) => println!("PASS {name} ({secs:.1}s): {detail}"),
            Ok(Err(e)) => {
                failed += 1;
                println!("FAIL {name} ({secs:.1}s): {e:#}");
            }
            Err(panic) => {
                failed += 1;
                let msg = panic
                    .downcast_ref::<String>()
                    .cloned()
                    .or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_default();
                println!("FAIL {name} ({secs:.1}s): panicked: {msg}");
            }
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
