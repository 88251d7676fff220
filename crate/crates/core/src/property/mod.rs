//! Candidate properties over trace variables: construction, abstraction,
//! arithmetic seeding, evaluation and a stable text form.

pub mod arith;
pub mod detect;
pub mod eval;
pub mod infer;
pub mod text;
pub mod var;
pub mod view;

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{Signed, Zero};
use serde::{Deserialize, Serialize};

pub use arith::seed_arithmetic;
pub use detect::{detect_comparison, detect_membership, trace_vars, DetectConfig, ScalarVar};
pub use eval::{evaluate, Outcome};
pub use infer::{infer_advanced, infer_fixpoint};
pub use var::{Key, Loc, Seg, TxField, VarRef};
pub use view::{numeric_view, TraceView};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum CmpOp {
    Eq,
    Le,
    Ge,
}

impl CmpOp {
    fn flipped(self) -> Self {
        match self {
            CmpOp::Eq => CmpOp::Eq,
            CmpOp::Le => CmpOp::Ge,
            CmpOp::Ge => CmpOp::Le,
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            CmpOp::Eq => "==",
            CmpOp::Le => "<=",
            CmpOp::Ge => ">=",
        }
    }
}

/// A candidate property in canonical form. Build through the constructors,
/// which order operands and normalise coefficients so that equal formulas
/// are structurally equal.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Property {
    Compare {
        lhs: VarRef,
        op: CmpOp,
        rhs: VarRef,
    },
    /// `lhs == -rhs`.
    Negation {
        lhs: VarRef,
        rhs: VarRef,
    },
    ConstEq {
        var: VarRef,
        value: BigInt,
    },
    /// `elem` equals some element of `array`, or the `field` member of one.
    Membership {
        elem: VarRef,
        array: VarRef,
        field: Option<String>,
    },
    /// `sum(c_i * x_i) == constant` with coprime integer coefficients, the
    /// first one positive.
    Linear {
        terms: Vec<(BigInt, VarRef)>,
        constant: BigInt,
    },
    /// `x * y == product`.
    Quadratic {
        x: VarRef,
        y: VarRef,
        product: BigInt,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Basic,
    Inferred,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Pattern {
    Comparison,
    Membership,
    Arithmetic,
}

impl Property {
    /// `None` for the reflexive case.
    pub fn compare(a: VarRef, op: CmpOp, b: VarRef) -> Option<Self> {
        match a.cmp(&b) {
            std::cmp::Ordering::Equal => None,
            std::cmp::Ordering::Less => Some(Property::Compare { lhs: a, op, rhs: b }),
            std::cmp::Ordering::Greater => Some(Property::Compare {
                lhs: b,
                op: op.flipped(),
                rhs: a,
            }),
        }
    }

    pub fn negation(a: VarRef, b: VarRef) -> Option<Self> {
        match a.cmp(&b) {
            std::cmp::Ordering::Equal => None,
            std::cmp::Ordering::Less => Some(Property::Negation { lhs: a, rhs: b }),
            std::cmp::Ordering::Greater => Some(Property::Negation { lhs: b, rhs: a }),
        }
    }

    pub fn const_eq(var: VarRef, value: BigInt) -> Self {
        Property::ConstEq { var, value }
    }

    pub fn membership(elem: VarRef, array: VarRef, field: Option<String>) -> Self {
        Property::Membership { elem, array, field }
    }

    /// Normalises `sum(c_i * x_i) == constant`; `None` when every coefficient
    /// cancels or fewer than two variables remain.
    pub fn linear(terms: Vec<(BigInt, VarRef)>, constant: BigInt) -> Option<Self> {
        let mut merged: std::collections::BTreeMap<VarRef, BigInt> = Default::default();
        for (c, v) in terms {
            *merged.entry(v).or_insert_with(BigInt::zero) += c;
        }
        let mut terms: Vec<(BigInt, VarRef)> = merged
            .into_iter()
            .filter(|(_, c)| !c.is_zero())
            .map(|(v, c)| (c, v))
            .collect();
        if terms.len() < 2 {
            return None;
        }
        let mut constant = constant;
        let mut g = constant.abs();
        for (c, _) in &terms {
            g = g.gcd(c);
        }
        if terms[0].0.is_negative() {
            g = -g;
        }
        for (c, _) in terms.iter_mut() {
            *c /= &g;
        }
        constant /= &g;
        Some(Property::Linear { terms, constant })
    }

    pub fn quadratic(x: VarRef, y: VarRef, product: BigInt) -> Option<Self> {
        match x.cmp(&y) {
            std::cmp::Ordering::Equal => None,
            std::cmp::Ordering::Less => Some(Property::Quadratic { x, y, product }),
            std::cmp::Ordering::Greater => Some(Property::Quadratic {
                x: y,
                y: x,
                product,
            }),
        }
    }

    pub fn vars(&self) -> Vec<&VarRef> {
        match self {
            Property::Compare { lhs, rhs, .. } | Property::Negation { lhs, rhs } => vec![lhs, rhs],
            Property::ConstEq { var, .. } => vec![var],
            Property::Membership { elem, array, .. } => vec![elem, array],
            Property::Linear { terms, .. } => terms.iter().map(|(_, v)| v).collect(),
            Property::Quadratic { x, y, .. } => vec![x, y],
        }
    }

    fn vars_mut(&mut self) -> Vec<&mut VarRef> {
        match self {
            Property::Compare { lhs, rhs, .. } | Property::Negation { lhs, rhs } => vec![lhs, rhs],
            Property::ConstEq { var, .. } => vec![var],
            Property::Membership { elem, array, .. } => vec![elem, array],
            Property::Linear { terms, .. } => terms.iter_mut().map(|(_, v)| v).collect(),
            Property::Quadratic { x, y, .. } => vec![x, y],
        }
    }

    /// Every rewritable mapping-key position, in a fixed order.
    pub fn mapping_keys_mut(&mut self) -> Vec<&mut Key> {
        self.vars_mut()
            .into_iter()
            .flat_map(|v| v.mapping_keys_mut())
            .collect()
    }

    pub fn concrete_key_count(&self) -> usize {
        self.clone()
            .mapping_keys_mut()
            .iter()
            .filter(|k| matches!(k, Key::Concrete(_)))
            .count()
    }

    /// Re-establishes canonical operand order after keys were rewritten.
    pub fn recanonicalize(self) -> Option<Self> {
        match self {
            Property::Compare { lhs, op, rhs } => Property::compare(lhs, op, rhs),
            Property::Negation { lhs, rhs } => Property::negation(lhs, rhs),
            Property::Linear { terms, constant } => Property::linear(terms, constant),
            Property::Quadratic { x, y, product } => Property::quadratic(x, y, product),
            p => Some(p),
        }
    }

    pub fn provenance(&self) -> Provenance {
        if self.vars().iter().any(|v| v.has_symbolic_key()) {
            Provenance::Inferred
        } else {
            Provenance::Basic
        }
    }

    pub fn pattern(&self) -> Pattern {
        match self {
            Property::Compare { .. } | Property::Negation { .. } | Property::ConstEq { .. } => {
                Pattern::Comparison
            }
            Property::Membership { .. } => Pattern::Membership,
            Property::Linear { .. } | Property::Quadratic { .. } => Pattern::Arithmetic,
        }
    }

    pub fn is_arithmetic(&self) -> bool {
        self.pattern() == Pattern::Arithmetic
    }
}

impl Serialize for Property {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Property {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = <std::borrow::Cow<'de, str>>::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}
