//! Brute-force enumeration of the comparison and membership relations that
//! hold on small hand-built traces.

use std::collections::BTreeSet;

use num_bigint::BigInt;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use txoracle_core::meta::NumClass;
use txoracle_core::property::{CmpOp, Loc, TxField};
use txoracle_core::trace::RecordPoint;
use txoracle_core::{ExecutionTrace, Property, TypedValue, VarRef, Word};

use super::synth::{addr, Synth};

use RecordPoint::{PostCall, PreCall};

fn param(name: &str) -> VarRef {
    VarRef::Param(name.into())
}

fn scalar_at(point: RecordPoint) -> VarRef {
    VarRef::state("s", vec![], point)
}

fn scalar_delta() -> VarRef {
    VarRef::Delta {
        loc: Loc::State {
            label: "s".into(),
            path: vec![],
        },
        from: PreCall,
        to: PostCall,
    }
}

/// A random trace with at most six numeric variables beyond the fixed
/// transaction fields.
pub struct Small {
    sender: u8,
    receiver: u8,
    block: u64,
    value: u64,
    params: Vec<u64>,
    pre: u64,
    post: u64,
    array: Option<Vec<u64>>,
}

impl Small {
    pub fn random(rng: &mut ChaCha8Rng) -> Self {
        let n_params = rng.random_range(0..=2);
        Small {
            sender: rng.random_range(1..=2),
            receiver: rng.random_range(1..=2),
            block: rng.random_range(1..4),
            value: rng.random_range(0..4),
            params: (0..n_params).map(|_| rng.random_range(0..4)).collect(),
            pre: rng.random_range(0..4),
            post: rng.random_range(0..4),
            array: rng.random_bool(0.5).then(|| {
                (0..rng.random_range(0..4))
                    .map(|_| rng.random_range(0..4))
                    .collect()
            }),
        }
    }

    pub fn trace(&self) -> ExecutionTrace {
        let mut s =
            Synth::new(addr(self.sender), addr(self.receiver)).at(1, self.block, self.value);
        for (i, v) in self.params.iter().enumerate() {
            s = s.param(&format!("p{i}"), TypedValue::uint(*v));
        }
        if let Some(items) = &self.array {
            s = s.param(
                "arr",
                TypedValue::Array(items.iter().map(|v| TypedValue::uint(*v)).collect()),
            );
        }
        s.state(
            "s",
            vec![],
            TypedValue::uint(self.pre),
            TypedValue::uint(self.post),
        )
        .build()
    }

    /// Every scalar the trace exposes, listed by hand.
    pub fn vars(&self) -> Vec<(VarRef, NumClass, BigInt)> {
        let word = |b: u8| Word::from_address(addr(b)).to_bigint();
        let mut out = vec![
            (
                VarRef::Tx(TxField::Sender),
                NumClass::Address,
                word(self.sender),
            ),
            (
                VarRef::Tx(TxField::Receiver),
                NumClass::Address,
                word(self.receiver),
            ),
            (
                VarRef::Tx(TxField::Block),
                NumClass::Block,
                BigInt::from(self.block),
            ),
            (
                VarRef::Tx(TxField::Timestamp),
                NumClass::Timestamp,
                BigInt::from(self.block * 12),
            ),
            (
                VarRef::Tx(TxField::Value),
                NumClass::Amount,
                BigInt::from(self.value),
            ),
            (scalar_at(PreCall), NumClass::Amount, BigInt::from(self.pre)),
            (
                scalar_at(PostCall),
                NumClass::Amount,
                BigInt::from(self.post),
            ),
            (
                scalar_delta(),
                NumClass::Amount,
                BigInt::from(self.post) - BigInt::from(self.pre),
            ),
        ];
        for (i, v) in self.params.iter().enumerate() {
            out.push((param(&format!("p{i}")), NumClass::Amount, BigInt::from(*v)));
        }
        out
    }

    pub fn expected_comparisons(&self) -> BTreeSet<Property> {
        let vars = self.vars();
        let mut out = BTreeSet::new();
        for (v, _, x) in &vars {
            out.insert(Property::const_eq(v.clone(), x.clone()));
        }
        for (i, (a, ca, x)) in vars.iter().enumerate() {
            for (b, cb, y) in &vars[i + 1..] {
                if ca != cb {
                    continue;
                }
                if x == y {
                    out.extend(Property::compare(a.clone(), CmpOp::Eq, b.clone()));
                }
                let zero = BigInt::from(0);
                if *ca == NumClass::Amount && *x != zero && x + y == zero {
                    out.extend(Property::negation(a.clone(), b.clone()));
                }
                if matches!(ca, NumClass::Amount | NumClass::Block | NumClass::Timestamp) {
                    if x <= y {
                        out.extend(Property::compare(a.clone(), CmpOp::Le, b.clone()));
                    }
                    if x >= y {
                        out.extend(Property::compare(a.clone(), CmpOp::Ge, b.clone()));
                    }
                }
            }
        }
        out
    }

    pub fn expected_memberships(&self) -> BTreeSet<Property> {
        let Some(items) = &self.array else {
            return BTreeSet::new();
        };
        self.vars()
            .into_iter()
            .filter(|(_, class, x)| {
                *class == NumClass::Amount && items.iter().any(|i| BigInt::from(*i) == *x)
            })
            .map(|(v, _, _)| Property::membership(v, param("arr"), None))
            .collect()
    }
}

