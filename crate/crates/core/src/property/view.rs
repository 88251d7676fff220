use std::collections::HashMap;

use num_bigint::BigInt;

use crate::meta::{NumClass, PathSeg, TypedValue};
use crate::property::var::{Key, Loc, Seg, TxField, VarRef};
use crate::trace::extract::ANON_SLOT_LABEL;
use crate::trace::{ExecutionTrace, RecordPoint};
use crate::word::{Address, Word};

type StateKey<'a> = (&'a str, &'a [PathSeg]);

/// Indexed, read-only access to the variables of one trace.
pub struct TraceView<'a> {
    pub trace: &'a ExecutionTrace,
    params: Vec<(String, &'a TypedValue)>,
    param_index: HashMap<String, usize>,
    events: Vec<((String, u32, String), &'a TypedValue)>,
    event_index: HashMap<(String, u32, String), usize>,
    state: HashMap<RecordPoint, HashMap<StateKey<'a>, &'a TypedValue>>,
    tokens: HashMap<RecordPoint, HashMap<(Address, Address), Word>>,
    sums: HashMap<(RecordPoint, &'a str), BigInt>,
    token_sums: HashMap<(RecordPoint, Address), BigInt>,
}

fn flatten<'a>(prefix: &str, v: &'a TypedValue, out: &mut Vec<(String, &'a TypedValue)>) {
    match v {
        TypedValue::Struct(members) => {
            for (name, m) in members {
                flatten(&format!("{prefix}.{name}"), m, out);
            }
        }
        _ => out.push((prefix.to_string(), v)),
    }
}

impl<'a> TraceView<'a> {
    pub fn new(trace: &'a ExecutionTrace) -> Self {
        let mut params = Vec::new();
        for p in &trace.entry.params {
            flatten(&p.name, &p.value, &mut params);
        }
        let param_index = params
            .iter()
            .enumerate()
            .map(|(i, (n, _))| (n.clone(), i))
            .collect();

        let mut events = Vec::new();
        for log in &trace.logs {
            let mut flat = Vec::new();
            for p in &log.params {
                flatten(&p.name, &p.value, &mut flat);
            }
            for (name, v) in flat {
                events.push(((log.event.clone(), log.occurrence, name), v));
            }
        }
        let event_index = events
            .iter()
            .enumerate()
            .map(|(i, (k, _))| (k.clone(), i))
            .collect();

        let mut state: HashMap<RecordPoint, HashMap<StateKey<'a>, &'a TypedValue>> = HashMap::new();
        let mut tokens: HashMap<RecordPoint, HashMap<(Address, Address), Word>> = HashMap::new();
        let mut sums: HashMap<(RecordPoint, &'a str), BigInt> = HashMap::new();
        let mut token_sums: HashMap<(RecordPoint, Address), BigInt> = HashMap::new();
        for snap in &trace.snapshots {
            let m = state.entry(snap.point).or_default();
            for e in &snap.state {
                m.insert((e.label.as_str(), e.path.as_slice()), &e.value);
                let summable = e.label != ANON_SLOT_LABEL
                    && e.path.len() == 1
                    && matches!(e.path[0], PathSeg::Key(_))
                    && e.value.class() == Some(NumClass::Amount);
                if summable {
                    if let Some(n) = e.value.as_integer() {
                        *sums.entry((snap.point, e.label.as_str())).or_default() += n;
                    }
                }
            }
            let t = tokens.entry(snap.point).or_default();
            for tok in &snap.tokens {
                t.insert((tok.token, tok.holder), tok.amount);
                *token_sums.entry((snap.point, tok.token)).or_default() += tok.amount.to_bigint();
            }
        }
        TraceView {
            trace,
            params,
            param_index,
            events,
            event_index,
            state,
            tokens,
            sums,
            token_sums,
        }
    }

    /// Flattened scalar and array parameters, in declaration order.
    pub fn params(&self) -> &[(String, &'a TypedValue)] {
        &self.params
    }

    pub fn event_values(&self) -> &[((String, u32, String), &'a TypedValue)] {
        &self.events
    }

    pub fn points(&self) -> Vec<RecordPoint> {
        self.trace.snapshots.iter().map(|s| s.point).collect()
    }

    pub fn typed(&self, v: &VarRef) -> Option<&'a TypedValue> {
        match v {
            VarRef::Param(n) => self.param_index.get(n).map(|i| self.params[*i].1),
            VarRef::Event {
                event,
                occurrence,
                param,
            } => self
                .event_index
                .get(&(event.clone(), *occurrence, param.clone()))
                .map(|i| self.events[*i].1),
            VarRef::At {
                loc: Loc::State { label, path },
                point,
            } => {
                let path = self.resolve_path(path)?;
                self.state
                    .get(point)?
                    .get(&(label.as_str(), path.as_slice()))
                    .copied()
            }
            _ => None,
        }
    }

    /// The word a symbolic key stands for in this trace.
    pub fn key_word(&self, v: &VarRef) -> Option<Word> {
        match v {
            VarRef::Tx(TxField::Sender) => Some(Word::from_address(self.trace.entry.sender)),
            VarRef::Tx(TxField::Receiver) => Some(Word::from_address(self.trace.entry.receiver)),
            VarRef::Tx(TxField::Block) => Some(Word::from_u64(self.trace.entry.block)),
            VarRef::Tx(TxField::Timestamp) => Some(Word::from_u64(self.trace.entry.timestamp)),
            VarRef::Tx(TxField::Value) => Some(self.trace.entry.value),
            VarRef::Param(_) | VarRef::Event { .. } => self.typed(v)?.as_key_word(),
            _ => None,
        }
    }

    pub fn resolve_key(&self, k: &Key) -> Option<Word> {
        match k {
            Key::Concrete(w) => Some(*w),
            Key::Symbolic(v) => self.key_word(v),
        }
    }

    fn resolve_path(&self, path: &[Seg]) -> Option<Vec<PathSeg>> {
        path.iter()
            .map(|s| match s {
                Seg::Key(k) => self.resolve_key(k).map(PathSeg::Key),
                Seg::Index(i) => Some(PathSeg::Index(*i)),
                Seg::Field(f) => Some(PathSeg::Field(f.clone())),
            })
            .collect()
    }

    fn key_address(&self, k: &Key) -> Option<Address> {
        let w = self.resolve_key(k)?;
        w.0[..12].iter().all(|b| *b == 0).then(|| w.to_address())
    }

    pub fn loc_value(&self, loc: &Loc, point: RecordPoint) -> Option<BigInt> {
        match loc {
            Loc::State { label, path } => {
                let path = self.resolve_path(path)?;
                self.state
                    .get(&point)?
                    .get(&(label.as_str(), path.as_slice()))?
                    .as_integer()
            }
            Loc::Token { token, holder } => {
                let key = (self.key_address(token)?, self.key_address(holder)?);
                Some(self.tokens.get(&point)?.get(&key)?.to_bigint())
            }
            Loc::Sum { label } => self.sums.get(&(point, label.as_str())).cloned(),
            Loc::TokenSum { token } => self
                .token_sums
                .get(&(point, self.key_address(token)?))
                .cloned(),
        }
    }

    /// Exact integer value of a scalar variable, `None` when absent.
    pub fn numeric(&self, v: &VarRef) -> Option<BigInt> {
        match v {
            VarRef::Tx(f) => {
                let e = &self.trace.entry;
                Some(match f {
                    TxField::Sender => Word::from_address(e.sender).to_bigint(),
                    TxField::Receiver => Word::from_address(e.receiver).to_bigint(),
                    TxField::Block => BigInt::from(e.block),
                    TxField::Timestamp => BigInt::from(e.timestamp),
                    TxField::Value => e.value.to_bigint(),
                })
            }
            VarRef::Param(_) | VarRef::Event { .. } => self.typed(v)?.as_integer(),
            VarRef::At { loc, point } => self.loc_value(loc, *point),
            VarRef::Delta { loc, from, to } => {
                Some(self.loc_value(loc, *to)? - self.loc_value(loc, *from)?)
            }
        }
    }

    /// Elements of an array-valued variable.
    pub fn array(&self, v: &VarRef) -> Option<&'a [TypedValue]> {
        match self.typed(v)? {
            TypedValue::Array(items) => Some(items.as_slice()),
            _ => None,
        }
    }

    /// Entry and log scalars that may stand in for a concrete mapping key,
    /// paired with the key word they denote.
    pub fn bindings(&self) -> Vec<(VarRef, Word)> {
        let e = &self.trace.entry;
        let mut out = vec![
            (VarRef::Tx(TxField::Sender), Word::from_address(e.sender)),
            (
                VarRef::Tx(TxField::Receiver),
                Word::from_address(e.receiver),
            ),
        ];
        for (name, v) in &self.params {
            if matches!(v, TypedValue::Address(_) | TypedValue::Unsigned { .. }) {
                out.push((
                    VarRef::Param(name.clone()),
                    v.as_key_word().expect("scalar"),
                ));
            }
        }
        for ((event, occurrence, param), v) in &self.events {
            if let TypedValue::Address(a) = v {
                out.push((
                    VarRef::Event {
                        event: event.clone(),
                        occurrence: *occurrence,
                        param: param.clone(),
                    },
                    Word::from_address(*a),
                ));
            }
        }
        out
    }

    pub(crate) fn state_entries(
        &self,
        point: RecordPoint,
    ) -> impl Iterator<Item = (&'a str, &'a [PathSeg], &'a TypedValue)> + '_ {
        self.state
            .get(&point)
            .into_iter()
            .flat_map(|m| m.iter().map(|((l, p), v)| (*l, *p, *v)))
    }

    pub(crate) fn token_entries(
        &self,
        point: RecordPoint,
    ) -> impl Iterator<Item = (Address, Address)> + '_ {
        self.tokens
            .get(&point)
            .into_iter()
            .flat_map(|m| m.keys().copied())
    }

    pub(crate) fn sum_labels(&self, point: RecordPoint) -> impl Iterator<Item = &'a str> + '_ {
        self.sums
            .keys()
            .filter(move |(p, _)| *p == point)
            .map(|(_, l)| *l)
    }

    pub(crate) fn token_sum_tokens(
        &self,
        point: RecordPoint,
    ) -> impl Iterator<Item = Address> + '_ {
        self.token_sums
            .keys()
            .filter(move |(p, _)| *p == point)
            .map(|(_, t)| *t)
    }
}

/// Resolves `v` against `trace`; see [`TraceView::numeric`].
pub fn numeric_view(trace: &ExecutionTrace, v: &VarRef) -> Option<BigInt> {
    TraceView::new(trace).numeric(v)
}
