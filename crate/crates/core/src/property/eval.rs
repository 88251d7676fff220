use num_bigint::BigInt;
use num_traits::Zero;
use serde::{Deserialize, Serialize};

use crate::meta::TypedValue;
use crate::property::text::render_int;
use crate::property::view::TraceView;
use crate::property::{CmpOp, Property};
use crate::trace::ExecutionTrace;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Outcome {
    Satisfied,
    Violated,
    Inapplicable,
}

impl From<bool> for Outcome {
    fn from(holds: bool) -> Self {
        if holds {
            Outcome::Satisfied
        } else {
            Outcome::Violated
        }
    }
}

pub fn evaluate(p: &Property, trace: &ExecutionTrace) -> Outcome {
    evaluate_in(p, &TraceView::new(trace))
}

fn member_value<'v>(item: &'v TypedValue, field: Option<&str>) -> Option<&'v TypedValue> {
    match (item, field) {
        (TypedValue::Struct(members), Some(f)) => {
            members.iter().find(|(n, _)| n == f).map(|(_, v)| v)
        }
        (TypedValue::Struct(_), None) => None,
        (other, None) => Some(other),
        (_, Some(_)) => None,
    }
}

pub fn evaluate_in(p: &Property, view: &TraceView<'_>) -> Outcome {
    let num = |v| view.numeric(v);
    macro_rules! get {
        ($e:expr) => {
            match $e {
                Some(x) => x,
                None => return Outcome::Inapplicable,
            }
        };
    }
    match p {
        Property::Compare { lhs, op, rhs } => {
            let (a, b) = (get!(num(lhs)), get!(num(rhs)));
            match op {
                CmpOp::Eq => a == b,
                CmpOp::Le => a <= b,
                CmpOp::Ge => a >= b,
            }
            .into()
        }
        Property::Negation { lhs, rhs } => {
            let (a, b) = (get!(num(lhs)), get!(num(rhs)));
            (a + b).is_zero().into()
        }
        Property::ConstEq { var, value } => (get!(num(var)) == *value).into(),
        Property::Membership { elem, array, field } => {
            let x = get!(num(elem));
            let items = get!(view.array(array));
            items
                .iter()
                .filter_map(|it| member_value(it, field.as_deref()))
                .any(|m| m.as_integer().as_ref() == Some(&x))
                .into()
        }
        Property::Linear { terms, constant } => {
            let mut acc = BigInt::zero();
            for (c, v) in terms {
                acc += c * get!(num(v));
            }
            (acc == *constant).into()
        }
        Property::Quadratic { x, y, product } => {
            let (a, b) = (get!(num(x)), get!(num(y)));
            (a * b == *product).into()
        }
    }
}

/// Observed value of each variable of `p`, rendered for reports.
pub fn observed(p: &Property, view: &TraceView<'_>) -> Vec<(String, String)> {
    p.vars()
        .into_iter()
        .map(|v| {
            let shown = match view.numeric(v) {
                Some(n) => render_int(&n),
                None => match view.array(v) {
                    Some(items) => format!("[{} elements]", items.len()),
                    None => "absent".to_string(),
                },
            };
            (v.to_string(), shown)
        })
        .collect()
}
