//! An allow-listed counter. `join` (owner only) appends a member; `bump`
//! scans both member arrays in full, then adds to the counter.
//!
//! Layout: `whitelist` (address[]) at slot 0, `counter` at slot 1,
//! `members` (Member{address addr; uint96 limit}[]) at slot 2, `owner` at
//! slot 3.

use rand::Rng;
use serde_json::json;

use super::{
    addr, event, func, index, storage_entry, uint, uint_bits, value_type, AttackScript, Ctx,
    Machine, MachineKind,
};
use crate::meta::AbiIndex;
use crate::sim::recorder::Recorder;
use crate::trace::RawTxRecord;
use crate::word::{array_data_slot, Address, Word};

const WHITELIST: u64 = 0;
const COUNTER: u64 = 1;
const MEMBERS: u64 = 2;
const OWNER: u64 = 3;

const OWNER_OK: u64 = 0x44;
const SCAN_LIST: u64 = 0x61;
const SCAN_LIST_DONE: u64 = 0x7e;
const SCAN_MEMBERS: u64 = 0x93;
const SCAN_MEMBERS_DONE: u64 = 0xa0;
const GUARD_OK: u64 = 0xb2;

const MAX_LIMIT: u128 = (1u128 << 96) - 1;

pub(crate) fn abi() -> serde_json::Value {
    json!([
        func("join", &[("who", "address"), ("limit", "uint96")], false),
        func("bump", &[("amount", "uint256")], false),
        event(
            "Joined",
            &[("who", "address", true), ("limit", "uint96", false)]
        ),
        event(
            "Bumped",
            &[("who", "address", true), ("amount", "uint256", false)]
        ),
    ])
}

pub(crate) fn layout() -> serde_json::Value {
    let c = "Whitelist.sol:Whitelist";
    let member = "t_struct(Member)9_storage";
    json!({
        "storage": [
            storage_entry(c, 12, "whitelist", WHITELIST, 0, "t_array(t_address)dyn_storage"),
            storage_entry(c, 14, "counter", COUNTER, 0, "t_uint256"),
            storage_entry(c, 18, "members", MEMBERS, 0, "t_array(t_struct(Member)9_storage)dyn_storage"),
            storage_entry(c, 20, "owner", OWNER, 0, "t_address"),
        ],
        "types": {
            "t_address": value_type("address", 20),
            "t_uint256": value_type("uint256", 32),
            "t_uint96": value_type("uint96", 12),
            "t_array(t_address)dyn_storage": {
                "base": "t_address", "encoding": "dynamic_array", "label": "address[]", "numberOfBytes": "32"
            },
            "t_array(t_struct(Member)9_storage)dyn_storage": {
                "base": member, "encoding": "dynamic_array",
                "label": "struct Whitelist.Member[]", "numberOfBytes": "32"
            },
            member: {
                "encoding": "inplace",
                "label": "struct Whitelist.Member",
                "members": [
                    storage_entry(c, 6, "addr", 0, 0, "t_address"),
                    storage_entry(c, 8, "limit", 0, 20, "t_uint96"),
                ],
                "numberOfBytes": "32"
            }
        }
    })
}

fn pack_member(who: Address, limit: u128) -> Word {
    let mut w = Word::from_address(who);
    w.0[..12].copy_from_slice(&limit.to_be_bytes()[4..]);
    w
}

fn word_len(w: Word) -> u64 {
    w.to_u128()
        .and_then(|n| u64::try_from(n).ok())
        .expect("array lengths are small")
}

pub(crate) struct Whitelist {
    address: Address,
    abi: AbiIndex,
    owner: Address,
    /// Members with their limits, in join order.
    members: Vec<(Address, u128)>,
    pending: Vec<Address>,
}

impl Whitelist {
    pub(crate) fn genesis(ctx: &mut Ctx, accounts: usize) -> Self {
        let address = MachineKind::Whitelist.address();
        let owner = Address::from_label("txoracle/sim/whitelist/owner");
        let users = super::accounts(MachineKind::Whitelist, accounts, 0);
        let founders = accounts / 2;
        let mut members = Vec::new();
        let data_list = array_data_slot(&Word::from_u64(WHITELIST));
        let data_members = array_data_slot(&Word::from_u64(MEMBERS));
        for (i, who) in users[..founders].iter().enumerate() {
            let limit = ctx.rng.random_range(1_000_000..=MAX_LIMIT);
            ctx.world.poke(
                address,
                data_list.wrapping_add(i as u64),
                Word::from_address(*who),
            );
            ctx.world.poke(
                address,
                data_members.wrapping_add(i as u64),
                pack_member(*who, limit),
            );
            members.push((*who, limit));
        }
        ctx.world.poke(
            address,
            Word::from_u64(WHITELIST),
            Word::from_u64(founders as u64),
        );
        ctx.world.poke(
            address,
            Word::from_u64(MEMBERS),
            Word::from_u64(founders as u64),
        );
        ctx.world
            .poke(address, Word::from_u64(OWNER), Word::from_address(owner));
        Whitelist {
            address,
            abi: index(&abi()),
            owner,
            members,
            pending: users[founders..].to_vec(),
        }
    }

    fn join(&mut self, ctx: &mut Ctx) -> RawTxRecord {
        let who = self.pending.remove(0);
        let limit = ctx.rng.random_range(1_000_000..=MAX_LIMIT);
        let header = ctx.header(self.owner, "whitelist");
        let calldata = self
            .abi
            .encode_call("join", &[addr(who), uint_bits(limit, 96)])
            .expect("encodes");
        let mut rec = Recorder::new(&mut ctx.world, header);
        rec.enter(self.owner, self.address, calldata, 0);
        rec.sload(Word::from_u64(OWNER));
        rec.jumpi(OWNER_OK);
        let len = word_len(rec.sload(Word::from_u64(WHITELIST)));
        rec.sstore(Word::from_u64(WHITELIST), Word::from_u64(len + 1));
        rec.sstore(
            array_data_slot(&Word::from_u64(WHITELIST)).wrapping_add(len),
            Word::from_address(who),
        );
        let mlen = word_len(rec.sload(Word::from_u64(MEMBERS)));
        rec.sstore(Word::from_u64(MEMBERS), Word::from_u64(mlen + 1));
        rec.sstore(
            array_data_slot(&Word::from_u64(MEMBERS)).wrapping_add(mlen),
            pack_member(who, limit),
        );
        let (topics, data) = self
            .abi
            .encode_event("Joined", &[addr(who), uint_bits(limit, 96)])
            .expect("encodes");
        rec.emit(topics, data);
        rec.exit(true);
        self.members.push((who, limit));
        rec.finish()
    }

    /// A bump by `sender`. The guard's scan is branch-free per element, so
    /// the path depends only on the array lengths.
    fn bump(&self, ctx: &mut Ctx, sender: Address, amount: u128) -> RawTxRecord {
        let header = ctx.header(sender, "whitelist");
        let calldata = self
            .abi
            .encode_call("bump", &[uint(amount)])
            .expect("encodes");
        let mut rec = Recorder::new(&mut ctx.world, header);
        rec.enter(sender, self.address, calldata, 0);
        let len = word_len(rec.sload(Word::from_u64(WHITELIST)));
        let data = array_data_slot(&Word::from_u64(WHITELIST));
        for i in 0..len {
            rec.jumpi(SCAN_LIST);
            rec.sload(data.wrapping_add(i));
        }
        rec.jumpi(SCAN_LIST_DONE);
        let mlen = word_len(rec.sload(Word::from_u64(MEMBERS)));
        let mdata = array_data_slot(&Word::from_u64(MEMBERS));
        for i in 0..mlen {
            rec.jumpi(SCAN_MEMBERS);
            rec.sload(mdata.wrapping_add(i));
        }
        rec.jumpi(SCAN_MEMBERS_DONE);
        rec.jumpi(GUARD_OK);
        let c = rec.sload(Word::from_u64(COUNTER)).to_biguint() + amount;
        rec.sstore(
            Word::from_u64(COUNTER),
            Word::from_biguint(&c).expect("fits"),
        );
        let (topics, data) = self
            .abi
            .encode_event("Bumped", &[addr(sender), uint(amount)])
            .expect("encodes");
        rec.emit(topics, data);
        rec.exit(true);
        rec.finish()
    }
}

impl Machine for Whitelist {
    fn step(&mut self, ctx: &mut Ctx) -> (RawTxRecord, bool) {
        if !self.pending.is_empty() && ctx.rng.random_ratio(1, 10) {
            return (self.join(ctx), false);
        }
        let (sender, limit) = self.members[ctx.rng.random_range(0..self.members.len())];
        let amount = ctx.rng.random_range(1..=limit);
        (self.bump(ctx, sender, amount), false)
    }

    fn attack(&mut self, ctx: &mut Ctx, script: AttackScript) -> RawTxRecord {
        assert_eq!(script, AttackScript::UnauthorizedCall);
        // the guard lets an outsider through
        let outsider = Address::from_label("txoracle/sim/whitelist/outsider");
        self.bump(ctx, outsider, 1_000_000)
    }
}
