//! An ether bank whose `withdraw` pays out before it writes the cached
//! balance back, so a payee that re-enters is paid twice.
//!
//! Layout: `balances` at slot 0, `totalDeposits` at slot 1. Ether balances
//! of the bank and the caller are observed at every record point.

use rand::Rng;
use serde_json::json;

use super::{
    addr, event, func, index, mapping_type, storage_entry, uint, value_type, AttackScript, Ctx,
    Machine, MachineKind,
};
use crate::meta::AbiIndex;
use crate::sim::recorder::Recorder;
use crate::trace::{RawTxRecord, RecordPoint, ETH_TOKEN};
use crate::word::{mapping_slot, Address, Word};

const BALANCES: u64 = 0;
const TOTAL: u64 = 1;

const FUNDED: u64 = 0x5a;

pub(crate) fn abi() -> serde_json::Value {
    json!([
        func("deposit", &[], true),
        func("withdraw", &[("amount", "uint256")], false),
        event(
            "Deposited",
            &[("who", "address", true), ("amount", "uint256", false)]
        ),
        event(
            "Withdrawn",
            &[("who", "address", true), ("amount", "uint256", false)]
        ),
    ])
}

pub(crate) fn layout() -> serde_json::Value {
    let c = "Bank.sol:Bank";
    json!({
        "storage": [
            storage_entry(c, 5, "balances", BALANCES, 0, "t_mapping(t_address,t_uint256)"),
            storage_entry(c, 7, "totalDeposits", TOTAL, 0, "t_uint256"),
        ],
        "types": {
            "t_address": value_type("address", 20),
            "t_uint256": value_type("uint256", 32),
            "t_mapping(t_address,t_uint256)": mapping_type("t_address", "t_uint256", "mapping(address => uint256)"),
        }
    })
}

fn balance_slot(who: Address) -> Word {
    mapping_slot(&Word::from_address(who), &Word::from_u64(BALANCES))
}

fn amount(w: Word) -> u128 {
    w.to_u128().expect("simulated amounts fit in u128")
}

pub(crate) struct Bank {
    address: Address,
    abi: AbiIndex,
    users: Vec<Address>,
}

impl Bank {
    pub(crate) fn genesis(ctx: &mut Ctx, accounts: usize, initial: u128) -> Self {
        let users = super::accounts(MachineKind::Bank, accounts, 0);
        for u in &users {
            let b = ctx.rng.random_range(initial / 2..=initial);
            ctx.world.set_eth(*u, b);
        }
        Bank {
            address: MachineKind::Bank.address(),
            abi: index(&abi()),
            users,
        }
    }

    fn observe(&self, rec: &mut Recorder<'_>, caller: Address, point: RecordPoint) {
        rec.observe(ETH_TOKEN, self.address, point);
        rec.observe(ETH_TOKEN, caller, point);
    }

    fn deposit(&self, ctx: &mut Ctx, sender: Address, value: u128) -> RawTxRecord {
        let header = ctx.header(sender, "bank");
        let calldata = self.abi.encode_call("deposit", &[]).expect("encodes");
        let mut rec = Recorder::new(&mut ctx.world, header);
        rec.enter(sender, self.address, calldata, value);
        self.observe(&mut rec, sender, RecordPoint::PreCall);
        let b = amount(rec.sload(balance_slot(sender)));
        rec.sstore(balance_slot(sender), Word::from_u128(b + value));
        let t = amount(rec.sload(Word::from_u64(TOTAL)));
        rec.sstore(Word::from_u64(TOTAL), Word::from_u128(t + value));
        let (topics, data) = self
            .abi
            .encode_event("Deposited", &[addr(sender), uint(value)])
            .expect("encodes");
        rec.emit(topics, data);
        self.observe(&mut rec, sender, RecordPoint::PostCall);
        rec.exit(true);
        rec.finish()
    }

    /// The body of `withdraw`; `reenter` makes the payee call back once
    /// during the payout.
    fn withdraw_call(&self, rec: &mut Recorder<'_>, sender: Address, amt: u128, reenter: bool) {
        let calldata = self
            .abi
            .encode_call("withdraw", &[uint(amt)])
            .expect("encodes");
        rec.enter(sender, self.address, calldata, 0);
        self.observe(rec, sender, RecordPoint::PreCall);
        let cached = amount(rec.sload(balance_slot(sender)));
        rec.jumpi(FUNDED);
        self.observe(rec, sender, RecordPoint::PreSubCall(0));
        rec.enter(self.address, sender, Vec::new(), amt);
        if reenter {
            self.withdraw_call(rec, sender, amt, false);
        }
        rec.exit(true);
        self.observe(rec, sender, RecordPoint::PostSubCall(0));
        rec.sstore(balance_slot(sender), Word::from_u128(cached - amt));
        let t = amount(rec.sload(Word::from_u64(TOTAL)));
        rec.sstore(
            Word::from_u64(TOTAL),
            Word::from_u128(t.saturating_sub(amt)),
        );
        let (topics, data) = self
            .abi
            .encode_event("Withdrawn", &[addr(sender), uint(amt)])
            .expect("encodes");
        rec.emit(topics, data);
        self.observe(rec, sender, RecordPoint::PostCall);
        rec.exit(true);
    }
}

impl Machine for Bank {
    fn step(&mut self, ctx: &mut Ctx) -> (RawTxRecord, bool) {
        let sender = self.users[ctx.rng.random_range(0..self.users.len())];
        let deposited = amount(ctx.world.load(self.address, balance_slot(sender)));
        if deposited == 0 || ctx.rng.random_ratio(1, 2) {
            let value = ctx.rng.random_range(1..=(ctx.world.eth(sender) / 4).max(1));
            return (self.deposit(ctx, sender, value), false);
        }
        let amt = ctx.rng.random_range(1..=deposited);
        let header = ctx.header(sender, "bank");
        let mut rec = Recorder::new(&mut ctx.world, header);
        self.withdraw_call(&mut rec, sender, amt, false);
        (rec.finish(), false)
    }

    fn attack(&mut self, ctx: &mut Ctx, script: AttackScript) -> RawTxRecord {
        assert_eq!(script, AttackScript::ReentrantDrain);
        let eoa = Address::from_label("txoracle/sim/bank/attacker");
        let drainer = Address::from_label("txoracle/sim/bank/drainer");
        // the drainer contract made an ordinary deposit earlier
        let stake = (ctx.world.eth(self.address) / 4).max(1);
        let slot = balance_slot(drainer);
        let prior = amount(ctx.world.load(self.address, slot));
        ctx.world
            .poke(self.address, slot, Word::from_u128(prior + stake));
        let total = amount(ctx.world.load(self.address, Word::from_u64(TOTAL)));
        ctx.world.poke(
            self.address,
            Word::from_u64(TOTAL),
            Word::from_u128(total + stake),
        );
        let bank_eth = ctx.world.eth(self.address);
        ctx.world.set_eth(self.address, bank_eth + stake);

        let header = ctx.header(eoa, "bank-attack");
        let mut rec = Recorder::new(&mut ctx.world, header);
        rec.enter(
            eoa,
            drainer,
            crate::word::keccak256(b"attack()").0[..4].to_vec(),
            0,
        );
        self.withdraw_call(&mut rec, drainer, stake + prior, true);
        rec.exit(true);
        rec.finish()
    }
}
