//! A fixed-supply ERC20 token whose `transfer` silently skips when the
//! sender's balance is short.
//!
//! Layout: `totalSupply` at slot 0, `balances` at slot 1, `allowance` at
//! slot 2. Every call reads `totalSupply` and surfaces the full holder
//! balance map at its entry and exit.

use std::collections::BTreeSet;
use std::sync::OnceLock;

use rand::Rng;
use serde_json::json;

use super::{
    addr, event, func, index, mapping_type, storage_entry, uint, value_type, AttackScript, Ctx,
    Machine, MachineKind,
};
use crate::meta::AbiIndex;
use crate::sim::recorder::{Recorder, World};
use crate::trace::{RawTxRecord, RecordPoint};
use crate::word::{mapping_slot, Address, Word};

const TOTAL_SUPPLY: u64 = 0;
const BALANCES: u64 = 1;
const ALLOWANCE: u64 = 2;

// branch targets
const TRANSFER_MOVE: u64 = 0x7a;
const TRANSFER_SKIP: u64 = 0xb4;
const APPROVE_OK: u64 = 0x5c;
const FROM_ALLOWED: u64 = 0x9d;
const FROM_FUNDED: u64 = 0xa8;
const FROM_REVERT: u64 = 0xe1;

pub(crate) fn abi() -> serde_json::Value {
    json!([
        func("transfer", &[("to", "address"), ("amt", "uint256")], false),
        func(
            "approve",
            &[("spender", "address"), ("amt", "uint256")],
            false
        ),
        func(
            "transferFrom",
            &[("from", "address"), ("to", "address"), ("amt", "uint256")],
            false
        ),
        event(
            "Transfer",
            &[
                ("from", "address", true),
                ("to", "address", true),
                ("value", "uint256", false)
            ]
        ),
        event(
            "Approval",
            &[
                ("owner", "address", true),
                ("spender", "address", true),
                ("value", "uint256", false)
            ]
        ),
    ])
}

pub(crate) fn layout() -> serde_json::Value {
    let c = "Token.sol:Token";
    json!({
        "storage": [
            storage_entry(c, 3, "totalSupply", TOTAL_SUPPLY, 0, "t_uint256"),
            storage_entry(c, 7, "balances", BALANCES, 0, "t_mapping(t_address,t_uint256)"),
            storage_entry(c, 13, "allowance", ALLOWANCE, 0, "t_mapping(t_address,t_mapping(t_address,t_uint256))"),
        ],
        "types": {
            "t_address": value_type("address", 20),
            "t_uint256": value_type("uint256", 32),
            "t_mapping(t_address,t_uint256)": mapping_type("t_address", "t_uint256", "mapping(address => uint256)"),
            "t_mapping(t_address,t_mapping(t_address,t_uint256))": mapping_type(
                "t_address",
                "t_mapping(t_address,t_uint256)",
                "mapping(address => mapping(address => uint256))",
            ),
        }
    })
}

/// ABI shared by every simulated token.
pub(crate) fn token_abi() -> &'static AbiIndex {
    static ABI: OnceLock<AbiIndex> = OnceLock::new();
    ABI.get_or_init(|| index(&abi()))
}

fn balance_slot(holder: Address) -> Word {
    mapping_slot(&Word::from_address(holder), &Word::from_u64(BALANCES))
}

fn allowance_slot(owner: Address, spender: Address) -> Word {
    let inner = mapping_slot(&Word::from_address(owner), &Word::from_u64(ALLOWANCE));
    mapping_slot(&Word::from_address(spender), &inner)
}

fn amount(w: Word) -> u128 {
    w.to_u128().expect("simulated amounts fit in u128")
}

fn emit_transfer(rec: &mut Recorder<'_>, from: Address, to: Address, value: u128) {
    let (topics, data) = token_abi()
        .encode_event("Transfer", &[addr(from), addr(to), uint(value)])
        .expect("Transfer encodes");
    rec.emit(topics, data);
}

/// A call from `caller` into `token.transferFrom(from, to, amt)`. A dishonest
/// token reports success and logs the transfer without moving anything.
pub(crate) fn token_transfer_from(
    rec: &mut Recorder<'_>,
    token: Address,
    caller: Address,
    from: Address,
    to: Address,
    amt: u128,
    honest: bool,
) {
    let calldata = token_abi()
        .encode_call("transferFrom", &[addr(from), addr(to), uint(amt)])
        .expect("transferFrom encodes");
    rec.enter(caller, token, calldata, 0);
    rec.jumpi(FROM_ALLOWED);
    if honest {
        let bf = amount(rec.sload(balance_slot(from)));
        rec.jumpi(FROM_FUNDED);
        let bt = amount(rec.sload(balance_slot(to)));
        rec.sstore(balance_slot(from), Word::from_u128(bf - amt));
        rec.sstore(balance_slot(to), Word::from_u128(bt + amt));
    }
    emit_transfer(rec, from, to, amt);
    rec.exit(true);
}

pub(crate) struct Erc20 {
    address: Address,
    holders: Vec<Address>,
    approvals: BTreeSet<(Address, Address)>,
}

impl Erc20 {
    pub(crate) fn genesis(ctx: &mut Ctx, accounts: usize, initial: u128) -> Self {
        let address = MachineKind::Erc20.address();
        let holders = super::accounts(MachineKind::Erc20, accounts, 0);
        let mut supply = 0u128;
        for h in &holders {
            // spread starting balances so no two holders coincide
            let b = ctx.rng.random_range(initial / 2..=initial);
            ctx.world
                .poke(address, balance_slot(*h), Word::from_u128(b));
            supply += b;
        }
        ctx.world.poke(
            address,
            Word::from_u64(TOTAL_SUPPLY),
            Word::from_u128(supply),
        );
        Erc20 {
            address,
            holders,
            approvals: BTreeSet::new(),
        }
    }

    fn balance(&self, world: &World, h: Address) -> u128 {
        amount(world.load(self.address, balance_slot(h)))
    }

    fn allowance(&self, world: &World, owner: Address, spender: Address) -> u128 {
        amount(world.load(self.address, allowance_slot(owner, spender)))
    }

    fn observe_all(&self, rec: &mut Recorder<'_>, point: RecordPoint) {
        for h in &self.holders {
            rec.observe(self.address, *h, point);
        }
    }

    fn two_distinct(&self, ctx: &mut Ctx) -> (Address, Address) {
        let n = self.holders.len();
        let a = ctx.rng.random_range(0..n);
        let b = (a + ctx.rng.random_range(1..n)) % n;
        (self.holders[a], self.holders[b])
    }

    fn transfer(&mut self, ctx: &mut Ctx) -> (RawTxRecord, bool) {
        let (sender, to) = self.two_distinct(ctx);
        let bal = self.balance(&ctx.world, sender);
        let short = bal == 0 || ctx.rng.random_ratio(1, 8);
        let amt = if short {
            bal + ctx.rng.random_range(1..=bal / 4 + 1)
        } else {
            ctx.rng.random_range(1..=bal)
        };
        let perturb = !short && ctx.anomaly();
        let header = ctx.header(sender, "erc20");
        let calldata = token_abi()
            .encode_call("transfer", &[addr(to), uint(amt)])
            .expect("encodes");
        let mut rec = Recorder::new(&mut ctx.world, header);
        rec.enter(sender, self.address, calldata, 0);
        self.observe_all(&mut rec, RecordPoint::PreCall);
        rec.sload(Word::from_u64(TOTAL_SUPPLY));
        let b = amount(rec.sload(balance_slot(sender)));
        if b >= amt {
            rec.jumpi(TRANSFER_MOVE);
            let bt = amount(rec.sload(balance_slot(to)));
            rec.sstore(balance_slot(sender), Word::from_u128(b - amt));
            rec.sstore(balance_slot(to), Word::from_u128(bt + amt));
            // the anomaly logs a different amount than was moved
            let logged = if perturb { amt + 1 + amt / 3 } else { amt };
            emit_transfer(&mut rec, sender, to, logged);
        } else {
            rec.jumpi(TRANSFER_SKIP);
        }
        self.observe_all(&mut rec, RecordPoint::PostCall);
        rec.exit(true);
        (rec.finish(), perturb)
    }

    fn approve(&mut self, ctx: &mut Ctx) -> RawTxRecord {
        let (owner, spender) = self.two_distinct(ctx);
        let amt = ctx
            .rng
            .random_range(1..=self.balance(&ctx.world, owner).max(1) * 2);
        self.approvals.insert((owner, spender));
        let header = ctx.header(owner, "erc20");
        let calldata = token_abi()
            .encode_call("approve", &[addr(spender), uint(amt)])
            .expect("encodes");
        let mut rec = Recorder::new(&mut ctx.world, header);
        rec.enter(owner, self.address, calldata, 0);
        self.observe_all(&mut rec, RecordPoint::PreCall);
        rec.sload(Word::from_u64(TOTAL_SUPPLY));
        rec.jumpi(APPROVE_OK);
        rec.sstore(allowance_slot(owner, spender), Word::from_u128(amt));
        let (topics, data) = token_abi()
            .encode_event("Approval", &[addr(owner), addr(spender), uint(amt)])
            .expect("encodes");
        rec.emit(topics, data);
        self.observe_all(&mut rec, RecordPoint::PostCall);
        rec.exit(true);
        rec.finish()
    }

    fn transfer_from(&mut self, ctx: &mut Ctx) -> Option<RawTxRecord> {
        let usable: Vec<(Address, Address)> = self
            .approvals
            .iter()
            .copied()
            .filter(|(o, s)| {
                self.allowance(&ctx.world, *o, *s) > 0 && self.balance(&ctx.world, *o) > 0
            })
            .collect();
        if usable.is_empty() {
            return None;
        }
        let (from, spender) = usable[ctx.rng.random_range(0..usable.len())];
        let to = loop {
            let c = self.holders[ctx.rng.random_range(0..self.holders.len())];
            if c != from && c != spender {
                break c;
            }
        };
        let allowed = self.allowance(&ctx.world, from, spender);
        let cap = allowed.min(self.balance(&ctx.world, from));
        let overdraw = ctx.rng.random_ratio(1, 20);
        let amt = if overdraw {
            allowed + ctx.rng.random_range(1..=allowed / 4 + 1)
        } else {
            ctx.rng.random_range(1..=cap)
        };
        let header = ctx.header(spender, "erc20");
        let calldata = token_abi()
            .encode_call("transferFrom", &[addr(from), addr(to), uint(amt)])
            .expect("encodes");
        let mut rec = Recorder::new(&mut ctx.world, header);
        rec.enter(spender, self.address, calldata, 0);
        self.observe_all(&mut rec, RecordPoint::PreCall);
        rec.sload(Word::from_u64(TOTAL_SUPPLY));
        let a = amount(rec.sload(allowance_slot(from, spender)));
        if a < amt {
            rec.jumpi(FROM_REVERT);
            rec.exit(false);
            return Some(rec.finish());
        }
        rec.jumpi(FROM_ALLOWED);
        let bf = amount(rec.sload(balance_slot(from)));
        rec.jumpi(FROM_FUNDED);
        let bt = amount(rec.sload(balance_slot(to)));
        rec.sstore(allowance_slot(from, spender), Word::from_u128(a - amt));
        rec.sstore(balance_slot(from), Word::from_u128(bf - amt));
        rec.sstore(balance_slot(to), Word::from_u128(bt + amt));
        emit_transfer(&mut rec, from, to, amt);
        self.observe_all(&mut rec, RecordPoint::PostCall);
        rec.exit(true);
        Some(rec.finish())
    }
}

impl Machine for Erc20 {
    fn step(&mut self, ctx: &mut Ctx) -> (RawTxRecord, bool) {
        match ctx.rng.random_range(0..4) {
            0 | 1 => self.transfer(ctx),
            2 => (self.approve(ctx), false),
            _ => match self.transfer_from(ctx) {
                Some(r) => (r, false),
                None => (self.approve(ctx), false),
            },
        }
    }

    fn attack(&mut self, _ctx: &mut Ctx, script: AttackScript) -> RawTxRecord {
        unreachable!("{script:?} is validated against the machine before running")
    }

    fn perturbed(&self) -> Option<&'static str> {
        Some("ev.Transfer[0].value")
    }
}
