//! Layered likely-invariant mining.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};

use num_bigint::BigInt;
use num_traits::Zero;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::MinerConfig;
use crate::meta::{ContractMeta, MetaSource};
use crate::property::detect::{array_vars, comparison_candidates, membership_candidates, priority};
use crate::property::eval::evaluate_in;
use crate::property::infer::closure;
use crate::property::{
    seed_arithmetic, trace_vars, CmpOp, Key, Outcome, Pattern, Property, Provenance, TraceView,
    VarRef,
};
use crate::trace::ExecutionTrace;
use crate::word::{keccak256, Address, Selector, Word};

pub const STORE_SCHEMA: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Layer {
    Contract,
    Function(Option<Selector>),
    Branch(Option<Selector>, Word),
}

fn selector_text(s: &Option<Selector>) -> String {
    s.map(|s| s.to_hex()).unwrap_or_else(|| "none".into())
}

impl Layer {
    /// Store key: `contract`, `function:0x…` or `branch:0x…:0x…`.
    pub fn key(&self) -> String {
        match self {
            Layer::Contract => "contract".into(),
            Layer::Function(s) => format!("function:{}", selector_text(s)),
            Layer::Branch(s, b) => format!("branch:{}:{}", selector_text(s), b.to_hex()),
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Layer::Contract => "contract",
            Layer::Function(_) => "function",
            Layer::Branch(..) => "branch",
        }
    }
}

#[derive(Debug, Clone)]
pub struct LayerGroup<'a> {
    pub layer: Layer,
    pub function: Option<String>,
    pub traces: Vec<&'a ExecutionTrace>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Support {
    pub satisfied: usize,
    pub applicable: usize,
    pub total: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Invariant {
    pub property: Property,
    pub pattern: Pattern,
    pub provenance: Provenance,
    pub support: Support,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct InvariantSet {
    pub contract: Address,
    pub layer: String,
    pub function: Option<String>,
    pub trace_count: usize,
    /// The group had fewer than `minSupport` traces and was not mined.
    pub too_small: bool,
    pub invariants: Vec<Invariant>,
    pub config: MinerConfig,
    pub corpus_digest: Word,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct InvariantStore {
    pub schema: u32,
    pub contract: Address,
    pub meta: MetaSource,
    pub config: MinerConfig,
    pub corpus_digest: Word,
    pub trace_count: usize,
    pub sets: BTreeMap<String, InvariantSet>,
}

impl InvariantStore {
    pub fn invariant_count(&self) -> usize {
        self.sets.values().map(|s| s.invariants.len()).sum()
    }
}

/// Order-insensitive digest of a trace corpus.
pub fn corpus_digest(traces: &[ExecutionTrace]) -> Word {
    let mut digests: Vec<Word> = traces
        .par_iter()
        .map(|t| keccak256(t.to_json_line().as_bytes()))
        .collect();
    digests.sort();
    let mut buf = Vec::with_capacity(digests.len() * 32);
    for d in &digests {
        buf.extend_from_slice(&d.0);
    }
    keccak256(&buf)
}

/// One contract group, one group per selector and one per (selector, branch).
/// Groups are returned contract first, then by selector and branch.
pub fn group_traces(traces: &[ExecutionTrace]) -> Vec<LayerGroup<'_>> {
    if traces.is_empty() {
        return Vec::new();
    }
    let mut sorted: Vec<&ExecutionTrace> = traces.iter().collect();
    sorted.sort_by_key(|t| t.order_key());
    let mut functions: BTreeMap<Option<Selector>, (String, Vec<&ExecutionTrace>)> = BTreeMap::new();
    let mut branches: BTreeMap<(Option<Selector>, Word), Vec<&ExecutionTrace>> = BTreeMap::new();
    for t in &sorted {
        functions
            .entry(t.selector)
            .or_insert_with(|| (t.function.clone(), Vec::new()))
            .1
            .push(t);
        branches.entry((t.selector, t.branch)).or_default().push(t);
    }
    let mut out = vec![LayerGroup {
        layer: Layer::Contract,
        function: None,
        traces: sorted.clone(),
    }];
    for (sel, (name, ts)) in functions {
        out.push(LayerGroup {
            layer: Layer::Function(sel),
            function: Some(name.clone()),
            traces: ts,
        });
        for ((bsel, branch), bts) in branches.range((sel, Word::ZERO)..) {
            if *bsel != sel {
                break;
            }
            out.push(LayerGroup {
                layer: Layer::Branch(sel, *branch),
                function: Some(name.clone()),
                traces: bts.clone(),
            });
        }
    }
    out
}

/// Basic properties of one trace closed under advanced inference.
pub fn trace_candidates(view: &TraceView<'_>, config: &MinerConfig) -> Vec<Property> {
    let vars = trace_vars(view);
    let (mut basic, _) = comparison_candidates(&vars, &config.detect());
    basic.extend(membership_candidates(&vars, &array_vars(view)));
    closure(basic, &view.bindings()).into_iter().collect()
}

fn count_support(p: &Property, views: &[TraceView<'_>]) -> (usize, usize) {
    let mut sat = 0;
    let mut app = 0;
    for v in views {
        match evaluate_in(p, v) {
            Outcome::Satisfied => {
                sat += 1;
                app += 1;
            }
            Outcome::Violated => app += 1,
            Outcome::Inapplicable => {}
        }
    }
    (sat, app)
}

/// Per-trace candidate lists, keyed by trace address so the layers a
/// trace belongs to share one computation.
pub type CandidateCache = HashMap<usize, Vec<Property>>;

fn trace_id(t: &ExecutionTrace) -> usize {
    std::ptr::from_ref(t) as usize
}

pub fn candidate_cache<'a>(
    traces: impl IntoParallelIterator<Item = &'a ExecutionTrace>,
    config: &MinerConfig,
) -> CandidateCache {
    traces
        .into_par_iter()
        .map(|t| (trace_id(t), trace_candidates(&TraceView::new(t), config)))
        .collect()
}

/// Candidates passing the threshold filter, before redundancy removal.
pub fn filter_candidates(group: &LayerGroup<'_>, config: &MinerConfig) -> Vec<Invariant> {
    if group.traces.len() < config.min_support {
        return Vec::new();
    }
    let cache = candidate_cache(group.traces.par_iter().copied(), config);
    filter_with_cache(group, &cache, config)
}

/// [`filter_candidates`] over a cache built by [`candidate_cache`] with the
/// same detection settings, so several thresholds can share one cache.
pub fn filter_with_cache(
    group: &LayerGroup<'_>,
    cache: &CandidateCache,
    config: &MinerConfig,
) -> Vec<Invariant> {
    let views: Vec<TraceView<'_>> = group.traces.par_iter().map(|t| TraceView::new(t)).collect();
    filter_cached(group, &views, cache, config)
}

fn filter_cached(
    group: &LayerGroup<'_>,
    views: &[TraceView<'_>],
    cache: &CandidateCache,
    config: &MinerConfig,
) -> Vec<Invariant> {
    let total = group.traces.len();
    if total < config.min_support {
        return Vec::new();
    }
    let emitted: HashMap<&Property, usize> = group
        .traces
        .par_iter()
        .fold(HashMap::new, |mut acc: HashMap<&Property, usize>, t| {
            for p in &cache[&trace_id(t)] {
                *acc.entry(p).or_default() += 1;
            }
            acc
        })
        .reduce(HashMap::new, |mut a, b| {
            for (p, n) in b {
                *a.entry(p).or_default() += n;
            }
            a
        });
    let floor = config.applicable_floor(total);
    // a property is credited only where it was constructed, so emissions
    // bound satisfied counts from below
    let needed = config.threshold.ceil_mul(floor);
    let mut survivors: BTreeSet<Property> = emitted
        .into_iter()
        .filter(|(_, n)| *n >= needed)
        .map(|(p, _)| p.clone())
        .collect();
    survivors.extend(seed_arithmetic(&group.traces, &config.detect()));
    let survivors: Vec<Property> = survivors.into_iter().collect();
    survivors
        .into_par_iter()
        .filter_map(|p| {
            let (sat, app) = count_support(&p, views);
            (app >= floor && config.threshold.admits(sat, app)).then(|| Invariant {
                pattern: p.pattern(),
                provenance: p.provenance(),
                property: p,
                support: Support {
                    satisfied: sat,
                    applicable: app,
                    total,
                },
            })
        })
        .collect()
}

/// Properties obtained from `p` by replacing one symbolic key with a
/// better-ranked key of the same value on every trace: the concrete word
/// when the key never varies, or an earlier binding.
fn key_substitutes(p: &Property, views: &[TraceView<'_>]) -> Vec<Property> {
    let keys: Vec<Option<VarRef>> = p
        .clone()
        .mapping_keys_mut()
        .into_iter()
        .map(|k| match k {
            Key::Symbolic(v) => Some((**v).clone()),
            Key::Concrete(_) => None,
        })
        .collect();
    let mut out = Vec::new();
    for (pos, key) in keys.iter().enumerate() {
        let Some(var) = key else { continue };
        let words: Vec<Option<Word>> = views.iter().map(|v| v.key_word(var)).collect();
        let Some(i0) = words.iter().position(Option::is_some) else {
            continue;
        };
        let first = words[i0].expect("present");
        let mut subs = Vec::new();
        if words.iter().flatten().all(|w| *w == first) {
            subs.push(Key::Concrete(first));
        }
        for (b, w) in views[i0].bindings() {
            let same = w == first
                && views
                    .iter()
                    .zip(&words)
                    .all(|(v, w)| w.is_none() || v.key_word(&b) == *w);
            if b < *var && same {
                subs.push(Key::Symbolic(Box::new(b)));
            }
        }
        for s in subs {
            let mut q = p.clone();
            *q.mapping_keys_mut()[pos] = s;
            out.extend(q.recanonicalize());
        }
    }
    out
}

/// Conservative redundancy removal, in order:
///
/// - orderings subsumed by a surviving equality;
/// - inferred properties whose key can be replaced by a better-ranked one
///   without changing support or any per-trace outcome;
/// - equalities and negations implied through a chain of others (each
///   component keeps a spanning tree rooted at its best-ranked variable);
/// - constants implied through such a chain;
/// - memberships restated through an equality;
/// - `x@a == x@b` where the matching delta is pinned to zero.
pub fn remove_redundant(cands: Vec<Invariant>, views: &[TraceView<'_>]) -> Vec<Invariant> {
    let mut by_prop: BTreeMap<Property, Invariant> =
        cands.into_iter().map(|i| (i.property.clone(), i)).collect();

    let eq_set: BTreeSet<(VarRef, VarRef)> = by_prop
        .keys()
        .filter_map(|p| match p {
            Property::Compare {
                lhs,
                op: CmpOp::Eq,
                rhs,
            } => Some((lhs.clone(), rhs.clone())),
            _ => None,
        })
        .collect();
    by_prop.retain(|p, _| match p {
        Property::Compare {
            lhs,
            op: CmpOp::Le | CmpOp::Ge,
            rhs,
        } => !eq_set.contains(&(lhs.clone(), rhs.clone())),
        _ => true,
    });

    let outcomes =
        |p: &Property| -> Vec<Outcome> { views.iter().map(|v| evaluate_in(p, v)).collect() };
    let inferred: Vec<&Property> = by_prop
        .keys()
        .filter(|p| p.provenance() == Provenance::Inferred)
        .collect();
    // substitution strictly improves the keys, so every chain ends in a
    // survivor and deciding against the undiminished set is sound
    let redundant: Vec<Property> = inferred
        .par_iter()
        .filter(|p| {
            let support = &by_prop[**p].support;
            let mine = outcomes(p);
            key_substitutes(p, views).into_iter().any(|q| {
                by_prop.get(&q).is_some_and(|i| &i.support == support) && outcomes(&q) == mine
            })
        })
        .map(|p| (*p).clone())
        .collect();
    for p in redundant {
        by_prop.remove(&p);
    }

    // signed graph: parity 0 for `==`, 1 for `== -`
    let mut adj: BTreeMap<VarRef, Vec<(VarRef, u8, Property)>> = BTreeMap::new();
    for p in by_prop.keys() {
        let (a, b, s) = match p {
            Property::Compare {
                lhs,
                op: CmpOp::Eq,
                rhs,
            } => (lhs, rhs, 0),
            Property::Negation { lhs, rhs } => (lhs, rhs, 1),
            _ => continue,
        };
        adj.entry(a.clone())
            .or_default()
            .push((b.clone(), s, p.clone()));
        adj.entry(b.clone())
            .or_default()
            .push((a.clone(), s, p.clone()));
    }
    let rank = |v: &VarRef| (priority(v), v.clone());
    let mut nodes: Vec<VarRef> = adj.keys().cloned().collect();
    nodes.sort_by_key(|v| rank(v));
    let mut parity: BTreeMap<VarRef, (VarRef, u8)> = BTreeMap::new();
    let mut tree = BTreeSet::new();
    for start in nodes {
        if parity.contains_key(&start) {
            continue;
        }
        parity.insert(start.clone(), (start.clone(), 0));
        let mut queue = VecDeque::from([start.clone()]);
        while let Some(x) = queue.pop_front() {
            let px = parity[&x].1;
            let mut next = adj[&x].clone();
            next.sort_by_key(|(y, _, _)| rank(y));
            for (y, s, p) in next {
                if !parity.contains_key(&y) {
                    parity.insert(y.clone(), (start.clone(), px ^ s));
                    tree.insert(p);
                    queue.push_back(y);
                }
            }
        }
    }
    let mut drop: BTreeSet<Property> = BTreeSet::new();
    for edges in adj.values() {
        for (_, s, p) in edges {
            if tree.contains(p) {
                continue;
            }
            let (a, b) = match p {
                Property::Compare { lhs, rhs, .. } | Property::Negation { lhs, rhs } => (lhs, rhs),
                _ => unreachable!("only comparisons are edges"),
            };
            // an edge contradicting the tree stays visible
            if parity[a].1 ^ parity[b].1 == *s {
                drop.insert(p.clone());
            }
        }
    }

    // one constant per component and value, on its best-ranked member
    let mut const_groups: BTreeMap<(VarRef, BigInt), Vec<(u8, VarRef, Property)>> = BTreeMap::new();
    for p in by_prop.keys() {
        if let Property::ConstEq { var, value } = p {
            if let Some((leader, s)) = parity.get(var) {
                let v = if *s == 1 {
                    -value.clone()
                } else {
                    value.clone()
                };
                const_groups.entry((leader.clone(), v)).or_default().push((
                    priority(var),
                    var.clone(),
                    p.clone(),
                ));
            }
        }
    }
    let zero_leaders: BTreeSet<VarRef> = const_groups
        .keys()
        .filter(|(_, v)| v.is_zero())
        .map(|(l, _)| l.clone())
        .collect();
    for mut members in const_groups.into_values() {
        members.sort();
        drop.extend(members.into_iter().skip(1).map(|(_, _, p)| p));
    }
    // membership of a variable equal to its component leader restates the
    // leader's membership
    for p in by_prop.keys() {
        if let Property::Membership { elem, array, field } = p {
            let Some((leader, 0)) = parity.get(elem) else {
                continue;
            };
            let lead = Property::Membership {
                elem: leader.clone(),
                array: array.clone(),
                field: field.clone(),
            };
            if leader != elem && by_prop.contains_key(&lead) {
                drop.insert(p.clone());
            }
        }
    }
    // `x@a == x@b` restates a delta pinned to zero, unless it links more
    let mut sizes: BTreeMap<&VarRef, usize> = BTreeMap::new();
    for (leader, _) in parity.values() {
        *sizes.entry(leader).or_default() += 1;
    }
    for p in by_prop.keys() {
        let Property::Compare {
            lhs: lhs @ VarRef::At { loc, point: a },
            op: CmpOp::Eq,
            rhs: VarRef::At { loc: l2, point: b },
        } = p
        else {
            continue;
        };
        if loc != l2 || sizes[&parity[lhs].0] != 2 {
            continue;
        }
        let pinned = [(a, b), (b, a)].into_iter().any(|(from, to)| {
            let d = VarRef::Delta {
                loc: loc.clone(),
                from: *from,
                to: *to,
            };
            let alone = Property::ConstEq {
                var: d.clone(),
                value: BigInt::zero(),
            };
            parity
                .get(&d)
                .is_some_and(|(l, _)| zero_leaders.contains(l))
                || by_prop.contains_key(&alone)
        });
        if pinned {
            drop.insert(p.clone());
        }
    }
    by_prop.retain(|p, _| !drop.contains(p));

    by_prop.into_values().collect()
}

pub fn mine_group(
    group: &LayerGroup<'_>,
    config: &MinerConfig,
    contract: Address,
    digest: Word,
) -> InvariantSet {
    let cache = if group.traces.len() < config.min_support {
        CandidateCache::new()
    } else {
        candidate_cache(group.traces.par_iter().copied(), config)
    };
    mine_group_cached(group, &cache, config, contract, digest)
}

fn mine_group_cached(
    group: &LayerGroup<'_>,
    cache: &CandidateCache,
    config: &MinerConfig,
    contract: Address,
    digest: Word,
) -> InvariantSet {
    let too_small = group.traces.len() < config.min_support;
    let invariants = if too_small {
        Vec::new()
    } else {
        let views: Vec<TraceView<'_>> =
            group.traces.par_iter().map(|t| TraceView::new(t)).collect();
        remove_redundant(filter_cached(group, &views, cache, config), &views)
    };
    InvariantSet {
        contract,
        layer: group.layer.key(),
        function: group.function.clone(),
        trace_count: group.traces.len(),
        too_small,
        invariants,
        config: config.clone(),
        corpus_digest: digest,
    }
}

/// Mines every layer group of `traces`, which must all target `meta.address`.
/// Reverted calls are left out unless the config includes them.
pub fn mine_contract(
    traces: &[ExecutionTrace],
    meta: &ContractMeta,
    config: &MinerConfig,
) -> InvariantStore {
    let digest = corpus_digest(traces);
    let kept: Vec<ExecutionTrace> = traces
        .iter()
        .filter(|t| t.contract == meta.address && (config.include_reverted || !t.reverted))
        .cloned()
        .collect();
    let mut groups = group_traces(&kept);
    if groups.is_empty() {
        groups.push(LayerGroup {
            layer: Layer::Contract,
            function: None,
            traces: Vec::new(),
        });
    }
    let cache = candidate_cache(&kept, config);
    let sets: BTreeMap<String, InvariantSet> = groups
        .par_iter()
        .map(|g| {
            (
                g.layer.key(),
                mine_group_cached(g, &cache, config, meta.address, digest),
            )
        })
        .collect();
    InvariantStore {
        schema: STORE_SCHEMA,
        contract: meta.address,
        meta: meta.source.clone(),
        config: config.clone(),
        corpus_digest: digest,
        trace_count: kept.len(),
        sets,
    }
}
