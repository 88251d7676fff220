//! Advanced inference: rewriting concrete mapping keys into references to the
//! entry or log scalars that carry the same value in the trace.

use std::collections::{BTreeSet, HashSet};

use crate::property::var::{Key, VarRef};
use crate::property::view::TraceView;
use crate::property::Property;
use crate::trace::ExecutionTrace;
use crate::word::Word;

/// One rewrite step: each emitted property replaces exactly one concrete key
/// position with one binding of equal value.
pub fn substitute_once(p: &Property, bindings: &[(VarRef, Word)]) -> Vec<Property> {
    let mut out = Vec::new();
    let keys: Vec<Option<Word>> = p
        .clone()
        .mapping_keys_mut()
        .into_iter()
        .map(|k| match k {
            Key::Concrete(w) => Some(*w),
            Key::Symbolic(_) => None,
        })
        .collect();
    for (pos, key) in keys.iter().enumerate() {
        let Some(w) = key else { continue };
        for (var, bw) in bindings {
            if bw != w {
                continue;
            }
            let mut q = p.clone();
            *q.mapping_keys_mut()[pos] = Key::Symbolic(Box::new(var.clone()));
            out.extend(q.recanonicalize());
        }
    }
    out
}

pub fn infer_advanced(p: &Property, trace: &ExecutionTrace) -> BTreeSet<Property> {
    let view = TraceView::new(trace);
    substitute_once(p, &view.bindings()).into_iter().collect()
}

/// Closure of [`substitute_once`] over `basic`, including `basic` itself.
///
/// Every concrete key position independently keeps its word or takes one
/// binding of equal value, so the closure is the product of those choices.
/// A basic property cannot turn reflexive part-way, which makes the product
/// and the stepwise fixpoint coincide.
pub fn closure(
    basic: impl IntoIterator<Item = Property>,
    bindings: &[(VarRef, Word)],
) -> HashSet<Property> {
    let mut seen: HashSet<Property> = HashSet::new();
    for p in basic {
        let mut raw = p.clone();
        let options: Vec<Vec<&VarRef>> = raw
            .mapping_keys_mut()
            .into_iter()
            .map(|k| match k {
                Key::Concrete(w) => bindings
                    .iter()
                    .filter(|(_, b)| b == w)
                    .map(|(v, _)| v)
                    .collect(),
                Key::Symbolic(_) => Vec::new(),
            })
            .collect();
        seen.insert(p);
        if options.iter().all(Vec::is_empty) {
            continue;
        }
        // odometer over the choices; digit 0 keeps the concrete word
        let mut digits = vec![0usize; options.len()];
        loop {
            let mut i = 0;
            while i < digits.len() {
                digits[i] += 1;
                if digits[i] <= options[i].len() {
                    break;
                }
                digits[i] = 0;
                i += 1;
            }
            if i == digits.len() {
                break;
            }
            let mut q = raw.clone();
            for ((k, d), opts) in q.mapping_keys_mut().into_iter().zip(&digits).zip(&options) {
                if *d > 0 {
                    *k = Key::Symbolic(Box::new(opts[d - 1].clone()));
                }
            }
            seen.extend(q.recanonicalize());
        }
    }
    seen
}

pub fn infer_fixpoint(basic: &BTreeSet<Property>, trace: &ExecutionTrace) -> BTreeSet<Property> {
    let view = TraceView::new(trace);
    closure(basic.iter().cloned(), &view.bindings())
        .into_iter()
        .collect()
}
