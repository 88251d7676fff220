//! `txoracle`: generate corpora, mine layered invariants, check transactions.

use std::collections::BTreeMap;
use std::fs;
use std::io::{self, Write as _};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use txoracle_core::persist::{self, MANIFEST_EXT, REPORTS_EXT, STORE_EXT, TRACES_EXT};
use txoracle_core::trace::parse_raw_ndjson;
use txoracle_core::{
    check_stream, extract_transaction, keccak256, mine_contract, Address, AttackScript, ContractMeta, Fraction,
    InvariantStore, MachineKind, MinerConfig, Pattern, Provenance, RunManifest, ScenarioSpec, Word,
};

/// `println!` that reports a closed stdout instead of panicking.
macro_rules! out {
    ($($arg:tt)*) => {
        writeln!(io::stdout().lock(), $($arg)*)
    };
}

#[derive(Parser)]
#[command(name = "txoracle", version, about = "Layered likely-invariant mining and checking for contract transactions")]
struct Cli {
    /// JSON miner configuration; flags override its fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a simulated corpus with its ABI and storage layout.
    Gen(GenArgs),
    /// Mine an invariant store from raw transaction records.
    Mine(MineArgs),
    /// Check raw transaction records against a store.
    Check(CheckArgs),
    /// List the invariants of a store.
    Show(ShowArgs),
}

#[derive(Args)]
struct GenArgs {
    #[arg(long, value_parser = parse_machine)]
    scenario: MachineKind,
    #[arg(long)]
    txs: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    accounts: Option<usize>,
    #[arg(long)]
    anomaly_rate: Option<Fraction>,
    #[arg(long, value_parser = parse_attack)]
    attack: Option<AttackScript>,
    /// Share of DepositVault deposits that use the privileged asset, in percent.
    #[arg(long)]
    rune_share: Option<u8>,
    /// Output path prefix (default: the scenario name).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct MineArgs {
    #[arg(long)]
    traces: PathBuf,
    #[arg(long)]
    abi: PathBuf,
    #[arg(long)]
    layout: PathBuf,
    /// Analysed contract (default: the most frequent top-level receiver).
    #[arg(long)]
    contract: Option<Address>,
    #[arg(long)]
    threshold: Option<Fraction>,
    #[arg(long)]
    min_support: Option<usize>,
    #[arg(long)]
    min_applicable_fraction: Option<Fraction>,
    #[arg(long)]
    include_ordering: bool,
    #[arg(long)]
    include_reverted: bool,
    /// Output path prefix (default: the traces path without its extension).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CheckArgs {
    #[arg(long)]
    store: PathBuf,
    #[arg(long)]
    traces: PathBuf,
    /// Output path prefix (default: the traces path without its extension).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum LayerKind {
    Contract,
    Function,
    Branch,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum PatternFilter {
    Comparison,
    Membership,
    Arithmetic,
    /// Properties over keys rewritten by inference.
    Inference,
    Basic,
}

#[derive(Args)]
struct ShowArgs {
    #[arg(long)]
    store: PathBuf,
    #[arg(long, value_enum)]
    layer: Option<LayerKind>,
    /// Function name.
    #[arg(long = "fn")]
    function: Option<String>,
    #[arg(long, value_enum)]
    pattern: Option<PatternFilter>,
}

fn parse_machine(s: &str) -> Result<MachineKind, String> {
    MachineKind::parse(s).ok_or_else(|| {
        let names: Vec<&str> = MachineKind::ALL.iter().map(|m| m.name()).collect();
        format!("unknown scenario {s:?}; expected one of {}", names.join(", "))
    })
}

fn parse_attack(s: &str) -> Result<AttackScript, String> {
    AttackScript::parse(s).ok_or_else(|| {
        let names: Vec<&str> = AttackScript::ALL.iter().map(|a| a.name()).collect();
        format!("unknown attack {s:?}; expected one of {}", names.join(", "))
    })
}

/// Appends `suffix` to the prefix's file name.
fn with_suffix(prefix: &Path, suffix: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

/// `dir/name.traces.ndjson` -> `dir/name`.
fn strip_artifact_ext(path: &Path) -> PathBuf {
    let s = path.to_string_lossy();
    for ext in [TRACES_EXT, STORE_EXT, ".ndjson", ".json"] {
        if let Some(stem) = s.strip_suffix(ext) {
            return PathBuf::from(stem);
        }
    }
    path.to_path_buf()
}

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).with_context(|| format!("cannot read {}", path.display()))
}

fn write(path: &Path, bytes: &[u8]) -> Result<Word> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    }
    fs::write(path, bytes).with_context(|| format!("cannot write {}", path.display()))?;
    Ok(keccak256(bytes))
}

fn micros(d: Duration) -> u64 {
    d.as_micros().try_into().unwrap_or(u64::MAX)
}

/// Builds and writes the run manifest next to the other outputs.
struct Run {
    manifest: RunManifest,
}

impl Run {
    fn new(command: &str, config: serde_json::Value) -> Self {
        Run {
            manifest: RunManifest {
                command: command.into(),
                tool_version: env!("CARGO_PKG_VERSION").into(),
                config,
                inputs: BTreeMap::new(),
                outputs: BTreeMap::new(),
                corpus_digest: None,
                timings_us: BTreeMap::new(),
            },
        }
    }

    fn input(&mut self, path: &Path) -> Result<Vec<u8>> {
        let bytes = read(path)?;
        self.manifest.inputs.insert(path.display().to_string(), keccak256(&bytes));
        Ok(bytes)
    }

    fn output(&mut self, path: &Path, bytes: &[u8]) -> Result<()> {
        let digest = write(path, bytes)?;
        self.manifest.outputs.insert(path.display().to_string(), digest);
        Ok(())
    }

    fn time(&mut self, phase: &str, d: Duration) {
        self.manifest.timings_us.insert(phase.into(), micros(d));
    }

    fn finish(self, prefix: &Path) -> Result<()> {
        let bytes = persist::save(&self.manifest)?;
        write(&with_suffix(prefix, MANIFEST_EXT), &bytes)?;
        Ok(())
    }
}

fn load_config(path: Option<&Path>) -> Result<MinerConfig> {
    match path {
        None => Ok(MinerConfig::default()),
        Some(p) => {
            let text = read(p)?;
            serde_json::from_slice(&text).with_context(|| format!("invalid config {}", p.display()))
        }
    }
}

fn cmd_gen(args: GenArgs) -> Result<ExitCode> {
    let mut spec = ScenarioSpec::new(args.scenario, args.txs, args.seed);
    if let Some(n) = args.accounts {
        spec.accounts = n;
    }
    if let Some(r) = args.anomaly_rate {
        spec.anomaly_rate = r;
    }
    if let Some(s) = args.rune_share {
        spec.rune_share = s;
    }
    spec.attack_script = args.attack;
    let prefix = args.out.unwrap_or_else(|| PathBuf::from(args.scenario.name()));
    let mut run = Run::new("gen", serde_json::to_value(&spec)?);

    let start = Instant::now();
    let corpus = txoracle_core::gen_corpus(&spec)?;
    run.time("generate", start.elapsed());
    let traces = corpus.to_ndjson();
    run.manifest.corpus_digest = Some(keccak256(traces.as_bytes()));
    run.output(&with_suffix(&prefix, TRACES_EXT), traces.as_bytes())?;
    run.output(&with_suffix(&prefix, ".abi.json"), args.scenario.abi_json().as_bytes())?;
    run.output(&with_suffix(&prefix, ".layout.json"), args.scenario.layout_json().as_bytes())?;
    if !corpus.manifest.anomalous.is_empty() || corpus.manifest.attack.is_some() {
        let text = serde_json::to_string_pretty(&corpus.manifest)? + "\n";
        run.output(&with_suffix(&prefix, ".anomalies.json"), text.as_bytes())?;
    }
    out!(
        "generated {} transactions for {} at {}",
        corpus.records.len(),
        args.scenario.name(),
        args.scenario.address()
    )?;
    run.finish(&prefix)?;
    Ok(ExitCode::SUCCESS)
}

/// The receiver seen most often at the top of a record, lowest address on ties.
fn default_contract(records: &[txoracle_core::RawTxRecord]) -> Option<Address> {
    let mut counts: BTreeMap<Address, usize> = BTreeMap::new();
    for r in records {
        if let Some(a) = r.root_receiver() {
            *counts.entry(a).or_default() += 1;
        }
    }
    let best = counts.values().copied().max()?;
    counts.into_iter().find(|(_, n)| *n == best).map(|(a, _)| a)
}

fn cmd_mine(args: MineArgs, config_path: Option<&Path>) -> Result<ExitCode> {
    let mut config = load_config(config_path)?;
    if let Some(t) = args.threshold {
        config.threshold = t;
    }
    if let Some(n) = args.min_support {
        config.min_support = n;
    }
    if let Some(f) = args.min_applicable_fraction {
        config.min_applicable_fraction = f;
    }
    config.include_ordering |= args.include_ordering;
    config.include_reverted |= args.include_reverted;
    config.validate()?;

    let mut run = Run::new("mine", serde_json::to_value(&config)?);
    let raw = run.input(&args.traces)?;
    let abi = run.input(&args.abi)?;
    let layout = run.input(&args.layout)?;
    let raw = String::from_utf8(raw).context("traces are not UTF-8")?;
    let abi = String::from_utf8(abi).context("ABI is not UTF-8")?;
    let layout = String::from_utf8(layout).context("layout is not UTF-8")?;

    let start = Instant::now();
    let records = parse_raw_ndjson(&raw)
        .into_iter()
        .enumerate()
        .map(|(i, r)| r.with_context(|| format!("record {} of {}", i + 1, args.traces.display())))
        .collect::<Result<Vec<_>>>()?;
    run.time("parse", start.elapsed());
    let contract = args.contract.or_else(|| default_contract(&records)).unwrap_or(Address::ZERO);
    let meta = ContractMeta::from_json(contract, &abi, &layout)?;

    let start = Instant::now();
    let mut traces = Vec::new();
    for (i, r) in records.iter().enumerate() {
        let extracted = extract_transaction(r, &meta).with_context(|| format!("record {}", i + 1))?;
        traces.extend(extracted);
    }
    run.time("extract", start.elapsed());
    if traces.is_empty() {
        eprintln!("warning: no traces of {contract} in {}", args.traces.display());
    }

    let start = Instant::now();
    let store = mine_contract(&traces, &meta, &config);
    run.time("mine", start.elapsed());
    run.manifest.corpus_digest = Some(store.corpus_digest);

    let prefix = args.out.unwrap_or_else(|| strip_artifact_ext(&args.traces));
    run.output(&with_suffix(&prefix, STORE_EXT), &persist::save(&store)?)?;
    out!("{} traces of {contract}", store.trace_count)?;
    for (key, set) in &store.sets {
        let name = set.function.as_deref().unwrap_or("-");
        let note = if set.too_small { " (too few traces)" } else { "" };
        out!("{key}\t{name}\t{} traces\t{} invariants{note}", set.trace_count, set.invariants.len())?;
    }
    out!("{} invariants", store.invariant_count())?;
    run.finish(&prefix)?;
    Ok(ExitCode::SUCCESS)
}

fn median_ms(sorted: &[Duration]) -> f64 {
    let n = sorted.len();
    let ms = |d: Duration| d.as_secs_f64() * 1e3;
    if n % 2 == 1 {
        ms(sorted[n / 2])
    } else {
        (ms(sorted[n / 2 - 1]) + ms(sorted[n / 2])) / 2.0
    }
}

fn cmd_check(args: CheckArgs) -> Result<ExitCode> {
    let mut run = Run::new("check", serde_json::Value::Null);
    let store: InvariantStore = persist::load(&run.input(&args.store)?)
        .with_context(|| format!("cannot load store {}", args.store.display()))?;
    run.manifest.config = serde_json::to_value(&store.config)?;
    let raw = run.input(&args.traces)?;
    let raw = String::from_utf8(raw).context("traces are not UTF-8")?;
    let meta = ContractMeta::from_source(store.contract, &store.meta)?;

    let start = Instant::now();
    let outcome = check_stream(&store, &meta, &raw);
    let wall = start.elapsed();
    run.time("check", wall);

    let prefix = args.out.unwrap_or_else(|| strip_artifact_ext(&args.traces));
    // clean reports stay out of the file, so a benign stream leaves it empty
    let flagged: Vec<_> = outcome
        .entries
        .iter()
        .filter(|e| e.report().is_none_or(|r| !r.is_clean()))
        .cloned()
        .collect();
    run.output(&with_suffix(&prefix, REPORTS_EXT), persist::reports_to_ndjson(&flagged).as_bytes())?;

    let violating = outcome.violating_transactions();
    for e in &outcome.entries {
        match e.report() {
            Some(r) if !r.is_clean() => {
                out!("#{} {} [{}] {} violation(s)", e.position(), r.tx_hash, r.layer, r.violations.len())?;
                for v in &r.violations {
                    out!("    {}", v.property)?;
                }
            }
            Some(_) => {}
            None => out!("#{} error: {}", e.position(), serde_json::to_value(e)?["message"].as_str().unwrap_or(""))?,
        }
    }
    let n = outcome.timings.len();
    if n > 0 {
        let mut sorted = outcome.timings.clone();
        sorted.sort();
        let total: Duration = sorted.iter().sum();
        let mean = total.as_secs_f64() * 1e3 / n as f64;
        let rate = n as f64 / wall.as_secs_f64().max(f64::EPSILON);
        out!(
            "checked {n} transactions: mean {mean:.3} ms/tx, median {:.3} ms/tx, {rate:.1} tx/s",
            median_ms(&sorted)
        )?;
        run.time("checkPerTxMean", Duration::from_secs_f64(mean / 1e3));
    } else {
        out!("checked 0 transactions")?;
    }
    out!("{} violating transaction(s), {} error(s)", violating.len(), outcome.error_count())?;
    run.finish(&prefix)?;
    Ok(if violating.is_empty() { ExitCode::SUCCESS } else { ExitCode::from(1) })
}

fn cmd_show(args: ShowArgs) -> Result<ExitCode> {
    let store: InvariantStore = persist::load(&read(&args.store)?)
        .with_context(|| format!("cannot load store {}", args.store.display()))?;
    let mut shown = 0usize;
    for (key, set) in &store.sets {
        let kind = key.split(':').next().unwrap_or(key);
        let layer_ok = match args.layer {
            None => true,
            Some(LayerKind::Contract) => kind == "contract",
            Some(LayerKind::Function) => kind == "function",
            Some(LayerKind::Branch) => kind == "branch",
        };
        let fn_ok = args.function.as_ref().is_none_or(|f| set.function.as_deref() == Some(f.as_str()));
        if !layer_ok || !fn_ok {
            continue;
        }
        for inv in &set.invariants {
            let keep = match args.pattern {
                None => true,
                Some(PatternFilter::Comparison) => inv.pattern == Pattern::Comparison,
                Some(PatternFilter::Membership) => inv.pattern == Pattern::Membership,
                Some(PatternFilter::Arithmetic) => inv.pattern == Pattern::Arithmetic,
                Some(PatternFilter::Inference) => inv.provenance == Provenance::Inferred,
                Some(PatternFilter::Basic) => inv.provenance == Provenance::Basic,
            };
            if !keep {
                continue;
            }
            let provenance = match inv.provenance {
                Provenance::Basic => "basic",
                Provenance::Inferred => "inferred",
            };
            out!(
                "{key}\t{}\t{}\t{}/{}\t{provenance}",
                set.function.as_deref().unwrap_or("-"),
                inv.property,
                inv.support.satisfied,
                inv.support.applicable
            )?;
            shown += 1;
        }
    }
    out!("{shown} invariants")?;
    Ok(ExitCode::SUCCESS)
}

fn run(cli: Cli) -> Result<ExitCode> {
    if let Some(n) = cli.threads {
        if n == 0 {
            bail!("--threads must be positive");
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    match cli.command {
        Command::Gen(a) => cmd_gen(a),
        Command::Mine(a) => cmd_mine(a, cli.config.as_deref()),
        Command::Check(a) => cmd_check(a),
        Command::Show(a) => cmd_show(a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) if e.downcast_ref::<io::Error>().is_some_and(|e| e.kind() == io::ErrorKind::BrokenPipe) => {
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
