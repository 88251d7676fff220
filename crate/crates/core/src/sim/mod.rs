//! Deterministic toy contracts that emit raw step records.
//!
//! Each machine keeps its state in a [`World`] at the slots real Solidity
//! would use, so the extractor decodes simulated traces exactly as it would
//! decode an instrumented node's output.

mod bank;
mod erc20;
pub mod recorder;
mod vault;
mod whitelist;

use num_rational::BigRational;
use num_traits::{One, Zero};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::config::Fraction;
use crate::error::SimError;
use crate::meta::{parse_abi, AbiIndex, ContractMeta, TypedValue};
use crate::trace::{RawTxRecord, TxHeader};
use crate::word::{keccak256, Address, Word};

pub use recorder::{Recorder, World, TOKEN_BALANCES_SLOT};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MachineKind {
    Erc20,
    DepositVault,
    Whitelist,
    Bank,
}

impl MachineKind {
    pub const ALL: [MachineKind; 4] = [
        MachineKind::Erc20,
        MachineKind::DepositVault,
        MachineKind::Whitelist,
        MachineKind::Bank,
    ];

    pub fn name(self) -> &'static str {
        match self {
            MachineKind::Erc20 => "erc20",
            MachineKind::DepositVault => "deposit-vault",
            MachineKind::Whitelist => "whitelist",
            MachineKind::Bank => "bank",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.name() == s)
    }

    /// Address the machine's contract is deployed at.
    pub fn address(self) -> Address {
        Address::from_label(&format!("txoracle/sim/{}", self.name()))
    }

    pub fn abi_json(self) -> String {
        match self {
            MachineKind::Erc20 => erc20::abi(),
            MachineKind::DepositVault => vault::abi(),
            MachineKind::Whitelist => whitelist::abi(),
            MachineKind::Bank => bank::abi(),
        }
        .to_string()
    }

    pub fn layout_json(self) -> String {
        match self {
            MachineKind::Erc20 => erc20::layout(),
            MachineKind::DepositVault => vault::layout(),
            MachineKind::Whitelist => whitelist::layout(),
            MachineKind::Bank => bank::layout(),
        }
        .to_string()
    }

    pub fn meta(self) -> ContractMeta {
        ContractMeta::from_json(self.address(), &self.abi_json(), &self.layout_json())
            .expect("bundled metadata parses")
    }

    /// Whether amount anomalies can be injected into this machine's corpus.
    pub fn supports_anomalies(self) -> bool {
        matches!(self, MachineKind::Erc20 | MachineKind::DepositVault)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AttackScript {
    FakeDeposit,
    UnauthorizedCall,
    ReentrantDrain,
}

impl AttackScript {
    pub const ALL: [AttackScript; 3] = [
        AttackScript::FakeDeposit,
        AttackScript::UnauthorizedCall,
        AttackScript::ReentrantDrain,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AttackScript::FakeDeposit => "fake-deposit",
            AttackScript::UnauthorizedCall => "unauthorized-call",
            AttackScript::ReentrantDrain => "reentrant-drain",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|a| a.name() == s)
    }

    pub fn machine(self) -> MachineKind {
        match self {
            AttackScript::FakeDeposit => MachineKind::DepositVault,
            AttackScript::UnauthorizedCall => MachineKind::Whitelist,
            AttackScript::ReentrantDrain => MachineKind::Bank,
        }
    }
}

fn default_accounts() -> usize {
    8
}

fn default_initial_balance() -> String {
    "10000000000000000000000".into()
}

fn default_rune_share() -> u8 {
    50
}

fn zero_rate() -> Fraction {
    "0".parse().expect("literal")
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct ScenarioSpec {
    pub machine: MachineKind,
    /// Size of the user population.
    #[serde(default = "default_accounts")]
    pub accounts: usize,
    /// Starting token (or ether) balance of each user, in decimal.
    #[serde(default = "default_initial_balance")]
    pub initial_balance: String,
    pub tx_count: usize,
    pub seed: u64,
    /// Fraction of eligible transactions whose emitted amount is perturbed.
    #[serde(default = "zero_rate")]
    pub anomaly_rate: Fraction,
    /// Attack appended after the benign transactions.
    #[serde(default)]
    pub attack_script: Option<AttackScript>,
    /// Percentage of vault deposits made in the privileged asset.
    #[serde(default = "default_rune_share")]
    pub rune_share: u8,
}

impl ScenarioSpec {
    pub fn new(machine: MachineKind, tx_count: usize, seed: u64) -> Self {
        ScenarioSpec {
            machine,
            accounts: default_accounts(),
            initial_balance: default_initial_balance(),
            tx_count,
            seed,
            anomaly_rate: zero_rate(),
            attack_script: None,
            rune_share: default_rune_share(),
        }
    }

    pub fn initial_balance(&self) -> Result<u128, SimError> {
        self.initial_balance.parse().map_err(|_| {
            SimError::InvalidSpec(format!(
                "initialBalance {:?} is not a u128",
                self.initial_balance
            ))
        })
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::InvalidSpec(m));
        if self.accounts < 4 {
            return bad(format!("need at least 4 accounts, got {}", self.accounts));
        }
        if self.accounts > 1000 {
            return bad(format!("at most 1000 accounts, got {}", self.accounts));
        }
        let bal = self.initial_balance()?;
        if !(1_000_000..=u128::MAX >> 16).contains(&bal) {
            return bad(format!("initialBalance {bal} out of range"));
        }
        if *self.anomaly_rate.value() > BigRational::one() {
            return bad(format!("anomalyRate {} exceeds 1", self.anomaly_rate));
        }
        if !self.anomaly_rate.value().is_zero() && !self.machine.supports_anomalies() {
            return bad(format!(
                "{} does not support anomaly injection",
                self.machine.name()
            ));
        }
        if self.rune_share > 100 {
            return bad(format!("runeShare {} exceeds 100", self.rune_share));
        }
        if let Some(script) = self.attack_script {
            check_script(self.machine, script)?;
        }
        Ok(())
    }
}

fn check_script(machine: MachineKind, script: AttackScript) -> Result<(), SimError> {
    if script.machine() != machine {
        return Err(SimError::UnsupportedScript {
            script: script.name().to_string(),
            machine: machine.name().into(),
        });
    }
    Ok(())
}

/// Which transactions were perturbed, and how.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct AnomalyManifest {
    /// Canonical text of the variable whose value was perturbed.
    pub perturbed: Option<String>,
    pub anomalous: Vec<Word>,
    pub attack: Option<Word>,
}

#[derive(Debug, Clone)]
pub struct Corpus {
    pub spec: ScenarioSpec,
    pub records: Vec<RawTxRecord>,
    pub manifest: AnomalyManifest,
}

impl Corpus {
    pub fn to_ndjson(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&r.to_json_line());
            out.push('\n');
        }
        out
    }
}

/// Spreads `rate` of eligible events evenly; exact, so a rate of 1/50 marks
/// every fiftieth eligible transaction and never more.
struct Bresenham {
    rate: BigRational,
    acc: BigRational,
}

impl Bresenham {
    fn new(rate: &Fraction) -> Self {
        Bresenham {
            rate: rate.value().clone(),
            acc: BigRational::zero(),
        }
    }

    fn fire(&mut self) -> bool {
        self.acc += &self.rate;
        if self.acc >= BigRational::one() {
            self.acc -= BigRational::one();
            true
        } else {
            false
        }
    }
}

/// Context shared by every machine's transaction generator.
pub(crate) struct Ctx {
    pub rng: ChaCha8Rng,
    pub world: World,
    seed: u64,
    index: u64,
    anomalies: Bresenham,
}

pub(crate) const GENESIS_BLOCK: u64 = 18_000_000;
pub(crate) const GENESIS_TIME: u64 = 1_700_000_000;

impl Ctx {
    fn new(spec: &ScenarioSpec) -> Self {
        Ctx {
            rng: ChaCha8Rng::seed_from_u64(spec.seed),
            world: World::default(),
            seed: spec.seed,
            index: 0,
            anomalies: Bresenham::new(&spec.anomaly_rate),
        }
    }

    /// Header of the next transaction; one transaction per block.
    pub fn header(&mut self, origin: Address, tag: &str) -> TxHeader {
        let i = self.index;
        self.index += 1;
        let mut pre = format!("{tag}:").into_bytes();
        pre.extend_from_slice(&self.seed.to_be_bytes());
        pre.extend_from_slice(&i.to_be_bytes());
        TxHeader {
            tx_hash: keccak256(&pre),
            block: GENESIS_BLOCK + i,
            timestamp: GENESIS_TIME + 12 * i,
            origin,
        }
    }

    /// Called once per eligible transaction; true when it should be perturbed.
    pub fn anomaly(&mut self) -> bool {
        self.anomalies.fire()
    }
}

pub(crate) fn accounts(machine: MachineKind, n: usize, offset: usize) -> Vec<Address> {
    (offset..offset + n)
        .map(|i| Address::from_label(&format!("txoracle/sim/{}/user/{i}", machine.name())))
        .collect()
}

pub(crate) fn addr(a: Address) -> TypedValue {
    TypedValue::Address(a)
}

pub(crate) fn uint(v: u128) -> TypedValue {
    TypedValue::uint_word(Word::from_u128(v))
}

pub(crate) fn uint_bits(v: u128, bits: u16) -> TypedValue {
    TypedValue::Unsigned {
        bits,
        word: Word::from_u128(v),
    }
}

pub(crate) fn index(abi_json: &serde_json::Value) -> AbiIndex {
    parse_abi(&abi_json.to_string()).expect("bundled ABI parses")
}

pub(crate) fn func(name: &str, inputs: &[(&str, &str)], payable: bool) -> serde_json::Value {
    json!({
        "type": "function",
        "name": name,
        "inputs": inputs.iter().map(|(n, t)| json!({"name": n, "type": t, "internalType": t})).collect::<Vec<_>>(),
        "outputs": [],
        "stateMutability": if payable { "payable" } else { "nonpayable" },
    })
}

pub(crate) fn event(name: &str, inputs: &[(&str, &str, bool)]) -> serde_json::Value {
    json!({
        "type": "event",
        "name": name,
        "anonymous": false,
        "inputs": inputs
            .iter()
            .map(|(n, t, ix)| json!({"name": n, "type": t, "indexed": ix, "internalType": t}))
            .collect::<Vec<_>>(),
    })
}

pub(crate) fn storage_entry(
    contract: &str,
    ast: u64,
    label: &str,
    slot: u64,
    offset: u64,
    ty: &str,
) -> serde_json::Value {
    json!({
        "astId": ast,
        "contract": contract,
        "label": label,
        "offset": offset,
        "slot": slot.to_string(),
        "type": ty,
    })
}

pub(crate) fn value_type(label: &str, bytes: u64) -> serde_json::Value {
    json!({"encoding": "inplace", "label": label, "numberOfBytes": bytes.to_string()})
}

pub(crate) fn mapping_type(key: &str, value: &str, label: &str) -> serde_json::Value {
    json!({"encoding": "mapping", "key": key, "label": label, "numberOfBytes": "32", "value": value})
}

/// Runs the benign part of a scenario.
struct Sim {
    ctx: Ctx,
    machine: Box<dyn Machine>,
}

pub(crate) trait Machine {
    /// Generates and records the next benign (possibly perturbed) transaction.
    fn step(&mut self, ctx: &mut Ctx) -> (RawTxRecord, bool);
    fn attack(&mut self, ctx: &mut Ctx, script: AttackScript) -> RawTxRecord;
    /// Canonical text of the variable amount anomalies perturb.
    fn perturbed(&self) -> Option<&'static str> {
        None
    }
}

impl Sim {
    fn new(spec: &ScenarioSpec) -> Result<Self, SimError> {
        spec.validate()?;
        let mut ctx = Ctx::new(spec);
        let bal = spec.initial_balance()?;
        let machine: Box<dyn Machine> = match spec.machine {
            MachineKind::Erc20 => Box::new(erc20::Erc20::genesis(&mut ctx, spec.accounts, bal)),
            MachineKind::DepositVault => Box::new(vault::Vault::genesis(
                &mut ctx,
                spec.accounts,
                bal,
                spec.rune_share,
            )),
            MachineKind::Whitelist => {
                Box::new(whitelist::Whitelist::genesis(&mut ctx, spec.accounts))
            }
            MachineKind::Bank => Box::new(bank::Bank::genesis(&mut ctx, spec.accounts, bal)),
        };
        Ok(Sim { ctx, machine })
    }
}

pub fn gen_corpus(spec: &ScenarioSpec) -> Result<Corpus, SimError> {
    let mut sim = Sim::new(spec)?;
    let mut records = Vec::with_capacity(spec.tx_count + 1);
    let mut manifest = AnomalyManifest::default();
    for _ in 0..spec.tx_count {
        let (rec, perturbed) = sim.machine.step(&mut sim.ctx);
        if perturbed {
            manifest.anomalous.push(rec.header.tx_hash);
        }
        records.push(rec);
    }
    if !manifest.anomalous.is_empty() {
        manifest.perturbed = sim.machine.perturbed().map(str::to_string);
    }
    if let Some(script) = spec.attack_script {
        let rec = sim.machine.attack(&mut sim.ctx, script);
        manifest.attack = Some(rec.header.tx_hash);
        records.push(rec);
    }
    Ok(Corpus {
        spec: spec.clone(),
        records,
        manifest,
    })
}

/// The attack transaction a scenario ends in: the world after the spec's
/// benign transactions, then one scripted exploit.
pub fn inject_attack(spec: &ScenarioSpec, script: AttackScript) -> Result<RawTxRecord, SimError> {
    check_script(spec.machine, script)?;
    let mut sim = Sim::new(spec)?;
    for _ in 0..spec.tx_count {
        sim.machine.step(&mut sim.ctx);
    }
    Ok(sim.machine.attack(&mut sim.ctx, script))
}
