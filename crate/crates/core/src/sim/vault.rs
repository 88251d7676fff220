//! A deposit router: deposits of the privileged asset go straight to the
//! named vault, any other asset is pulled into the router itself.
//!
//! Layout: `RUNE` (address) at slot 0. Token balances are observed for the
//! sender, the vault and the router at every record point.

use rand::Rng;
use serde_json::json;

use super::erc20::token_transfer_from;
use super::{
    addr, event, func, index, storage_entry, uint, value_type, AttackScript, Ctx, Machine,
    MachineKind,
};
use crate::meta::AbiIndex;
use crate::sim::recorder::Recorder;
use crate::trace::{RawTxRecord, RecordPoint};
use crate::word::{Address, Word};

const RUNE_SLOT: u64 = 0;

const BRANCH_RUNE: u64 = 0x8f;
const BRANCH_OTHER: u64 = 0xc3;

pub(crate) fn abi() -> serde_json::Value {
    json!([
        func(
            "deposit",
            &[
                ("vault", "address"),
                ("asset", "address"),
                ("amount", "uint256")
            ],
            false
        ),
        event(
            "Deposit",
            &[
                ("vault", "address", true),
                ("asset", "address", true),
                ("amount", "uint256", false)
            ]
        ),
    ])
}

pub(crate) fn layout() -> serde_json::Value {
    json!({
        "storage": [storage_entry("Router.sol:Router", 4, "RUNE", RUNE_SLOT, 0, "t_address")],
        "types": { "t_address": value_type("address", 20) }
    })
}

pub(crate) struct Vault {
    address: Address,
    abi: AbiIndex,
    rune: Address,
    assets: Vec<Address>,
    users: Vec<Address>,
    vaults: Vec<Address>,
    rune_share: u8,
}

impl Vault {
    pub(crate) fn genesis(ctx: &mut Ctx, accounts: usize, initial: u128, rune_share: u8) -> Self {
        let address = MachineKind::DepositVault.address();
        let rune = Address::from_label("txoracle/sim/token/RUNE");
        let mut assets = vec![rune];
        assets.extend((0..3).map(|i| Address::from_label(&format!("txoracle/sim/token/{i}"))));
        let users = super::accounts(MachineKind::DepositVault, accounts, 0);
        let vaults = (0..3)
            .map(|i| Address::from_label(&format!("txoracle/sim/deposit-vault/vault/{i}")))
            .collect();
        ctx.world
            .poke(address, Word::from_u64(RUNE_SLOT), Word::from_address(rune));
        for a in &assets {
            for u in &users {
                let b = ctx.rng.random_range(initial / 2..=initial);
                ctx.world.set_token_balance(*a, *u, b);
            }
        }
        Vault {
            address,
            abi: index(&abi()),
            rune,
            assets,
            users,
            vaults,
            rune_share,
        }
    }

    fn observe(
        &self,
        rec: &mut Recorder<'_>,
        asset: Address,
        sender: Address,
        vault: Address,
        point: RecordPoint,
    ) {
        for holder in [sender, vault, self.address] {
            rec.observe(asset, holder, point);
        }
    }

    /// One deposit; `honest` is false for a token that moves nothing and
    /// `logged` overrides the amount the certificate states.
    fn deposit(
        &self,
        ctx: &mut Ctx,
        sender: Address,
        vault: Address,
        asset: Address,
        amt: u128,
        honest: bool,
        logged: u128,
    ) -> RawTxRecord {
        let header = ctx.header(sender, "deposit-vault");
        let calldata = self
            .abi
            .encode_call("deposit", &[addr(vault), addr(asset), uint(amt)])
            .expect("encodes");
        let mut rec = Recorder::new(&mut ctx.world, header);
        rec.enter(sender, self.address, calldata, 0);
        self.observe(&mut rec, asset, sender, vault, RecordPoint::PreCall);
        let rune = rec.sload(Word::from_u64(RUNE_SLOT)).to_address();
        let dest = if asset == rune {
            rec.jumpi(BRANCH_RUNE);
            vault
        } else {
            rec.jumpi(BRANCH_OTHER);
            self.address
        };
        self.observe(&mut rec, asset, sender, vault, RecordPoint::PreSubCall(0));
        token_transfer_from(&mut rec, asset, self.address, sender, dest, amt, honest);
        self.observe(&mut rec, asset, sender, vault, RecordPoint::PostSubCall(0));
        let (topics, data) = self
            .abi
            .encode_event("Deposit", &[addr(vault), addr(asset), uint(logged)])
            .expect("encodes");
        rec.emit(topics, data);
        self.observe(&mut rec, asset, sender, vault, RecordPoint::PostCall);
        rec.exit(true);
        rec.finish()
    }
}

impl Machine for Vault {
    fn step(&mut self, ctx: &mut Ctx) -> (RawTxRecord, bool) {
        let sender = self.users[ctx.rng.random_range(0..self.users.len())];
        let vault = self.vaults[ctx.rng.random_range(0..self.vaults.len())];
        let asset = if ctx.rng.random_range(0..100u8) < self.rune_share {
            self.rune
        } else {
            self.assets[ctx.rng.random_range(1..self.assets.len())]
        };
        let bal = ctx.world.token_balance(asset, sender);
        let amt = ctx.rng.random_range(1..=(bal / 8).max(1));
        let perturb = ctx.anomaly();
        let logged = if perturb { amt + 1 + amt / 3 } else { amt };
        (
            self.deposit(ctx, sender, vault, asset, amt, true, logged),
            perturb,
        )
    }

    fn attack(&mut self, ctx: &mut Ctx, script: AttackScript) -> RawTxRecord {
        assert_eq!(script, AttackScript::FakeDeposit);
        let attacker = Address::from_label("txoracle/sim/deposit-vault/attacker");
        let fake = Address::from_label("txoracle/sim/token/fake");
        let vault = self.vaults[0];
        let amt = 5_000_000_000_000_000_000_000u128;
        self.deposit(ctx, attacker, vault, fake, amt, false, amt)
    }

    fn perturbed(&self) -> Option<&'static str> {
        Some("ev.Deposit[0].amount")
    }
}
