//! Pattern-based construction of basic properties from a single trace.

use std::collections::BTreeSet;

use num_bigint::BigInt;
use num_traits::Zero;

use crate::meta::{NumClass, PathSeg, TypedValue};
use crate::property::var::{Key, Loc, Seg, TxField, VarRef};
use crate::property::view::TraceView;
use crate::property::{CmpOp, Property};
use crate::trace::{ExecutionTrace, RecordPoint};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DetectConfig {
    /// Emit `<=` / `>=` alongside equalities.
    pub include_ordering: bool,
    /// Comparable variable pairs examined per trace.
    pub pair_budget: usize,
}

impl Default for DetectConfig {
    fn default() -> Self {
        DetectConfig {
            include_ordering: false,
            pair_budget: 20_000,
        }
    }
}

/// A scalar variable present in a trace, with its class and value.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScalarVar {
    pub var: VarRef,
    pub class: NumClass,
    pub value: BigInt,
}

pub(crate) fn to_segs(path: &[PathSeg]) -> Vec<Seg> {
    path.iter()
        .map(|s| match s {
            PathSeg::Key(w) => Seg::Key(Key::Concrete(*w)),
            PathSeg::Index(i) => Seg::Index(*i),
            PathSeg::Field(f) => Seg::Field(f.clone()),
        })
        .collect()
}

/// Pair order: entry, log and delta variables first.
pub(crate) fn priority(v: &VarRef) -> u8 {
    match v {
        VarRef::Tx(_) | VarRef::Param(_) | VarRef::Event { .. } => 0,
        VarRef::Delta { .. } => 1,
        VarRef::At {
            loc: Loc::Sum { .. } | Loc::TokenSum { .. },
            ..
        } => 2,
        VarRef::At { .. } => 3,
    }
}

fn point_locs(view: &TraceView<'_>, point: RecordPoint) -> Vec<(Loc, NumClass)> {
    let mut out = Vec::new();
    for (label, path, value) in view.state_entries(point) {
        if let Some(class) = value.class() {
            out.push((
                Loc::State {
                    label: label.to_string(),
                    path: to_segs(path),
                },
                class,
            ));
        }
    }
    for (token, holder) in view.token_entries(point) {
        out.push((
            Loc::Token {
                token: Key::Concrete(token.into()),
                holder: Key::Concrete(holder.into()),
            },
            NumClass::Amount,
        ));
    }
    for label in view.sum_labels(point) {
        out.push((
            Loc::Sum {
                label: label.to_string(),
            },
            NumClass::Amount,
        ));
    }
    for token in view.token_sum_tokens(point) {
        out.push((
            Loc::TokenSum {
                token: Key::Concrete(token.into()),
            },
            NumClass::Amount,
        ));
    }
    out.sort();
    out
}

/// Every scalar variable of the trace, sorted by pair priority then by
/// canonical order.
pub fn trace_vars(view: &TraceView<'_>) -> Vec<ScalarVar> {
    let mut out = Vec::new();
    let mut push = |var: VarRef, class: NumClass| {
        if let Some(value) = view.numeric(&var) {
            out.push(ScalarVar { var, class, value });
        }
    };
    for f in TxField::ALL {
        push(VarRef::Tx(f), f.class());
    }
    for (name, v) in view.params() {
        if let Some(class) = v.class() {
            push(VarRef::Param(name.clone()), class);
        }
    }
    for ((event, occurrence, param), v) in view.event_values() {
        if let Some(class) = v.class() {
            push(
                VarRef::Event {
                    event: event.clone(),
                    occurrence: *occurrence,
                    param: param.clone(),
                },
                class,
            );
        }
    }
    let points = view.points();
    for point in &points {
        let locs = point_locs(view, *point);
        if let Some(partner) = point.partner().filter(|p| points.contains(p)) {
            let after: BTreeSet<Loc> = point_locs(view, partner)
                .into_iter()
                .filter(|(_, c)| *c == NumClass::Amount)
                .map(|(l, _)| l)
                .collect();
            for (loc, class) in &locs {
                if *class == NumClass::Amount && after.contains(loc) {
                    push(
                        VarRef::Delta {
                            loc: loc.clone(),
                            from: *point,
                            to: partner,
                        },
                        NumClass::Amount,
                    );
                }
            }
        }
        for (loc, class) in locs {
            push(VarRef::At { loc, point: *point }, class);
        }
    }
    out.sort_by(|a, b| (priority(&a.var), &a.var).cmp(&(priority(&b.var), &b.var)));
    out.dedup_by(|a, b| a.var == b.var);
    out
}

/// Array-valued variables: array parameters, array log fields and assembled
/// state arrays at every record point.
pub fn array_vars<'a>(view: &TraceView<'a>) -> Vec<(VarRef, &'a [TypedValue])> {
    let mut out = Vec::new();
    for (name, v) in view.params() {
        if let TypedValue::Array(items) = v {
            out.push((VarRef::Param(name.clone()), items.as_slice()));
        }
    }
    for ((event, occurrence, param), v) in view.event_values() {
        if let TypedValue::Array(items) = v {
            out.push((
                VarRef::Event {
                    event: event.clone(),
                    occurrence: *occurrence,
                    param: param.clone(),
                },
                items.as_slice(),
            ));
        }
    }
    for point in view.points() {
        for (label, path, value) in view.state_entries(point) {
            if let TypedValue::Array(items) = value {
                out.push((VarRef::state(label, to_segs(path), point), items.as_slice()));
            }
        }
    }
    out.sort_by(|a, b| a.0.cmp(&b.0));
    out
}

/// Comparison candidates over `vars`; the flag reports whether the pair
/// budget cut the enumeration short.
pub fn comparison_candidates(vars: &[ScalarVar], cfg: &DetectConfig) -> (Vec<Property>, bool) {
    let mut out = Vec::new();
    for v in vars {
        out.push(Property::const_eq(v.var.clone(), v.value.clone()));
    }
    let mut pairs = 0usize;
    for (i, x) in vars.iter().enumerate() {
        for y in &vars[i + 1..] {
            if x.class != y.class {
                continue;
            }
            if pairs == cfg.pair_budget {
                return (out, true);
            }
            pairs += 1;
            if x.value == y.value {
                out.extend(Property::compare(x.var.clone(), CmpOp::Eq, y.var.clone()));
            }
            if x.class == NumClass::Amount && !x.value.is_zero() && (&x.value + &y.value).is_zero()
            {
                out.extend(Property::negation(x.var.clone(), y.var.clone()));
            }
            if cfg.include_ordering && x.class.ordered() {
                if x.value <= y.value {
                    out.extend(Property::compare(x.var.clone(), CmpOp::Le, y.var.clone()));
                }
                if x.value >= y.value {
                    out.extend(Property::compare(x.var.clone(), CmpOp::Ge, y.var.clone()));
                }
            }
        }
    }
    (out, false)
}

pub fn detect_comparison(trace: &ExecutionTrace, cfg: &DetectConfig) -> BTreeSet<Property> {
    let view = TraceView::new(trace);
    comparison_candidates(&trace_vars(&view), cfg)
        .0
        .into_iter()
        .collect()
}

fn element_matches(elem: &TypedValue, class: NumClass, value: &BigInt) -> bool {
    elem.class() == Some(class) && elem.as_integer().as_ref() == Some(value)
}

pub fn membership_candidates(
    vars: &[ScalarVar],
    arrays: &[(VarRef, &[TypedValue])],
) -> Vec<Property> {
    let mut out = Vec::new();
    for (array, items) in arrays {
        for x in vars {
            let mut fields: BTreeSet<Option<&str>> = BTreeSet::new();
            for item in items.iter() {
                match item {
                    TypedValue::Struct(members) => {
                        for (name, m) in members {
                            if element_matches(m, x.class, &x.value) {
                                fields.insert(Some(name.as_str()));
                            }
                        }
                    }
                    other => {
                        if element_matches(other, x.class, &x.value) {
                            fields.insert(None);
                        }
                    }
                }
            }
            for f in fields {
                out.push(Property::membership(
                    x.var.clone(),
                    array.clone(),
                    f.map(str::to_string),
                ));
            }
        }
    }
    out
}

pub fn detect_membership(trace: &ExecutionTrace) -> BTreeSet<Property> {
    let view = TraceView::new(trace);
    membership_candidates(&trace_vars(&view), &array_vars(&view))
        .into_iter()
        .collect()
}
