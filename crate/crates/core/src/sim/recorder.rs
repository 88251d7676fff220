//! A journaled world and a recorder that turns simulated execution into raw
//! step records.

use std::collections::HashMap;

use crate::trace::{AccessKind, RawTxRecord, RecordPoint, Step, TxHeader, ETH_TOKEN};
use crate::word::{mapping_slot, Address, Bytes, Word};

/// Slot of `balances` in every simulated ERC20 token.
pub const TOKEN_BALANCES_SLOT: u64 = 1;

#[derive(Debug, Clone, Default)]
pub struct World {
    storage: HashMap<(Address, Word), Word>,
    eth: HashMap<Address, u128>,
}

impl World {
    pub fn load(&self, contract: Address, slot: Word) -> Word {
        self.storage
            .get(&(contract, slot))
            .copied()
            .unwrap_or_default()
    }

    /// Writes without recording a step, for genesis state.
    pub fn poke(&mut self, contract: Address, slot: Word, value: Word) {
        self.storage.insert((contract, slot), value);
    }

    pub fn eth(&self, who: Address) -> u128 {
        self.eth.get(&who).copied().unwrap_or(0)
    }

    pub fn set_eth(&mut self, who: Address, amount: u128) {
        self.eth.insert(who, amount);
    }

    pub fn token_balance(&self, token: Address, holder: Address) -> u128 {
        if token == ETH_TOKEN {
            return self.eth(holder);
        }
        let slot = mapping_slot(
            &Word::from_address(holder),
            &Word::from_u64(TOKEN_BALANCES_SLOT),
        );
        self.load(token, slot)
            .to_u128()
            .expect("simulated balances fit in u128")
    }

    pub fn set_token_balance(&mut self, token: Address, holder: Address, amount: u128) {
        let slot = mapping_slot(
            &Word::from_address(holder),
            &Word::from_u64(TOKEN_BALANCES_SLOT),
        );
        self.poke(token, slot, Word::from_u128(amount));
    }
}

enum Undo {
    Slot(Address, Word, Word),
    Eth(Address, u128),
}

/// Records one transaction against a world, undoing reverted frames.
pub struct Recorder<'w> {
    world: &'w mut World,
    header: TxHeader,
    steps: Vec<Step>,
    frames: Vec<(Address, usize)>,
    journal: Vec<Undo>,
}

impl<'w> Recorder<'w> {
    pub fn new(world: &'w mut World, header: TxHeader) -> Self {
        Recorder {
            world,
            header,
            steps: Vec::new(),
            frames: Vec::new(),
            journal: Vec::new(),
        }
    }

    pub fn world(&self) -> &World {
        self.world
    }

    fn this(&self) -> Address {
        self.frames.last().expect("inside a call").0
    }

    fn move_eth(&mut self, from: Address, to: Address, amount: u128) {
        if amount == 0 {
            return;
        }
        for who in [from, to] {
            self.journal.push(Undo::Eth(who, self.world.eth(who)));
        }
        let f = self.world.eth(from);
        self.world
            .set_eth(from, f.checked_sub(amount).expect("sender can pay"));
        let t = self.world.eth(to);
        self.world.set_eth(to, t + amount);
    }

    pub fn enter(&mut self, sender: Address, receiver: Address, calldata: Vec<u8>, value: u128) {
        self.steps.push(Step::CallEnter {
            sender,
            receiver,
            calldata: Bytes(calldata),
            value: Word::from_u128(value),
        });
        self.frames.push((receiver, self.journal.len()));
        self.move_eth(sender, receiver, value);
    }

    pub fn exit(&mut self, success: bool) {
        let (_, mark) = self.frames.pop().expect("matching enter");
        if !success {
            while self.journal.len() > mark {
                match self.journal.pop().expect("non-empty") {
                    Undo::Slot(c, s, v) => self.world.poke(c, s, v),
                    Undo::Eth(a, v) => self.world.set_eth(a, v),
                }
            }
        }
        self.steps.push(Step::CallExit { success });
    }

    pub fn jumpi(&mut self, dest: u64) {
        self.steps.push(Step::Jumpi { dest });
    }

    pub fn sload(&mut self, slot: Word) -> Word {
        let contract = self.this();
        let v = self.world.load(contract, slot);
        self.steps.push(Step::StorageAccess {
            contract,
            slot,
            pre: v,
            post: v,
            kind: AccessKind::Read,
        });
        v
    }

    pub fn sstore(&mut self, slot: Word, value: Word) {
        let contract = self.this();
        let pre = self.world.load(contract, slot);
        self.journal.push(Undo::Slot(contract, slot, pre));
        self.world.poke(contract, slot, value);
        self.steps.push(Step::StorageAccess {
            contract,
            slot,
            pre,
            post: value,
            kind: AccessKind::Write,
        });
    }

    pub fn emit(&mut self, topics: Vec<Word>, data: Vec<u8>) {
        let emitter = self.this();
        self.steps.push(Step::EventEmit {
            emitter,
            topics,
            data: Bytes(data),
        });
    }

    /// Records the current balance of `holder` in `token` for the innermost call.
    pub fn observe(&mut self, token: Address, holder: Address, point: RecordPoint) {
        let amount = self.world.token_balance(token, holder);
        self.steps.push(Step::BalanceObservation {
            token,
            holder,
            point,
            amount: Word::from_u128(amount),
        });
    }

    pub fn finish(self) -> RawTxRecord {
        assert!(self.frames.is_empty(), "unbalanced simulated calls");
        RawTxRecord {
            header: self.header,
            steps: self.steps,
        }
    }
}
