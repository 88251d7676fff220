//! Arithmetic seeding: linear relations over two or three amount variables
//! and constant products, solved exactly from a group's earliest traces.

use std::collections::{BTreeMap, BTreeSet};

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::meta::NumClass;
use crate::property::detect::{trace_vars, DetectConfig};
use crate::property::var::{Key, Loc, Seg, VarRef};
use crate::property::view::TraceView;
use crate::property::Property;
use crate::trace::ExecutionTrace;
use crate::word::Word;

/// Number of earliest group traces used as seed samples.
pub const SEED_WINDOW: usize = 8;
/// Variables kept for tuple enumeration after collapsing duplicates.
pub const MAX_SEED_VARS: usize = 48;

const PRIME: u64 = 0xffff_ffff_ffff_ffc5;

fn mulmod(a: u64, b: u64) -> u64 {
    ((a as u128 * b as u128) % PRIME as u128) as u64
}

fn powmod(mut b: u64, mut e: u64) -> u64 {
    let mut r = 1u64;
    while e > 0 {
        if e & 1 == 1 {
            r = mulmod(r, b);
        }
        b = mulmod(b, b);
        e >>= 1;
    }
    r
}

fn residue(v: &BigInt) -> u64 {
    let p = BigInt::from(PRIME);
    v.mod_floor(&p).to_u64().expect("reduced")
}

/// Rank modulo a large prime; never exceeds the rank over the rationals.
fn rank_mod_p(mut rows: Vec<Vec<u64>>) -> usize {
    let cols = rows.first().map_or(0, Vec::len);
    let mut rank = 0;
    for c in 0..cols {
        let Some(piv) = (rank..rows.len()).find(|r| rows[*r][c] != 0) else {
            continue;
        };
        rows.swap(rank, piv);
        let inv = powmod(rows[rank][c], PRIME - 2);
        for r in 0..rows.len() {
            if r != rank && rows[r][c] != 0 {
                let f = mulmod(rows[r][c], inv);
                for k in c..cols {
                    let sub = mulmod(f, rows[rank][k]);
                    rows[r][k] =
                        ((rows[r][k] as u128 + PRIME as u128 - sub as u128) % PRIME as u128) as u64;
                }
            }
        }
        rank += 1;
    }
    rank
}

/// Basis of the right nullspace of `rows` over the rationals.
pub fn nullspace(rows: &[Vec<BigInt>]) -> Vec<Vec<BigRational>> {
    let cols = rows.first().map_or(0, Vec::len);
    let mut m: Vec<Vec<BigRational>> = rows
        .iter()
        .map(|r| {
            r.iter()
                .map(|x| BigRational::from_integer(x.clone()))
                .collect()
        })
        .collect();
    let mut pivots = Vec::new();
    let mut rank = 0;
    for c in 0..cols {
        let Some(piv) = (rank..m.len()).find(|r| !m[*r][c].is_zero()) else {
            continue;
        };
        m.swap(rank, piv);
        let lead = m[rank][c].clone();
        for k in c..cols {
            m[rank][k] = &m[rank][k] / &lead;
        }
        for r in 0..m.len() {
            if r != rank && !m[r][c].is_zero() {
                let f = m[r][c].clone();
                for k in c..cols {
                    let sub = &f * &m[rank][k];
                    m[r][k] -= sub;
                }
            }
        }
        pivots.push(c);
        rank += 1;
    }
    let free: Vec<usize> = (0..cols).filter(|c| !pivots.contains(c)).collect();
    free.iter()
        .map(|&f| {
            let mut v = vec![BigRational::zero(); cols];
            v[f] = BigRational::one();
            for (r, &pc) in pivots.iter().enumerate() {
                v[pc] = -m[r][f].clone();
            }
            v
        })
        .collect()
}

fn to_integers(v: &[BigRational]) -> Vec<BigInt> {
    let l = v.iter().fold(BigInt::one(), |acc, x| acc.lcm(x.denom()));
    v.iter()
        .map(|x| (x * BigRational::from_integer(l.clone())).to_integer())
        .collect()
}

/// Every variant of `var` with any subset of its concrete mapping keys
/// replaced by a binding of equal value.
fn abstractions(var: &VarRef, bindings: &[(VarRef, Word)]) -> Vec<VarRef> {
    let mut out = vec![var.clone()];
    let n = var.clone().mapping_keys_mut().len();
    for pos in 0..n {
        let mut next = Vec::new();
        for v in &out {
            let mut probe = v.clone();
            let Key::Concrete(w) = probe.mapping_keys_mut()[pos].clone() else {
                continue;
            };
            for (b, bw) in bindings {
                if *bw == w {
                    let mut q = v.clone();
                    *q.mapping_keys_mut()[pos] = Key::Symbolic(Box::new(b.clone()));
                    next.push(q);
                }
            }
        }
        out.extend(next);
    }
    out
}

/// The storage cell a location denotes in one trace, with keys resolved.
fn resolved_loc(view: &TraceView<'_>, loc: &Loc) -> Option<Loc> {
    let r = |k: &Key| view.resolve_key(k).map(Key::Concrete);
    Some(match loc {
        Loc::State { label, path } => Loc::State {
            label: label.clone(),
            path: path
                .iter()
                .map(|s| match s {
                    Seg::Key(k) => r(k).map(Seg::Key),
                    other => Some(other.clone()),
                })
                .collect::<Option<Vec<_>>>()?,
        },
        Loc::Token { token, holder } => Loc::Token {
            token: r(token)?,
            holder: r(holder)?,
        },
        Loc::Sum { label } => Loc::Sum {
            label: label.clone(),
        },
        Loc::TokenSum { token } => Loc::TokenSum { token: r(token)? },
    })
}

struct SeedVar {
    var: VarRef,
    values: Vec<Option<BigInt>>,
    residues: Vec<Option<u64>>,
}

/// Linear fit of `vars`; the flag is set when the variables are known to be
/// linearly dependent on their common samples.
fn linear_fit(vars: &[&SeedVar], views: &[TraceView<'_>]) -> (Option<Property>, bool) {
    let mut dependent = false;
    let p = linear_candidates(vars, views, &mut dependent);
    (p, dependent)
}

fn linear_candidates(vars: &[&SeedVar], views: &[TraceView<'_>], dependent: &mut bool) -> Option<Property> {
    let k = vars.len();
    let samples: Vec<usize> = (0..views.len())
        .filter(|i| vars.iter().all(|v| v.values[*i].is_some()))
        .collect();
    if samples.len() < k + 1 {
        *dependent = true;
        return None;
    }
    // cheap full-rank rejection before any exact arithmetic
    let mod_rows: Vec<Vec<u64>> = samples
        .iter()
        .map(|&i| {
            let mut row: Vec<u64> = vars
                .iter()
                .map(|v| v.residues[i].expect("present"))
                .collect();
            row.push(1);
            row
        })
        .collect();
    if rank_mod_p(mod_rows) > k {
        return None;
    }
    // vars naming the same storage cell are related by definition
    let first = &views[samples[0]];
    let mut cells = BTreeSet::new();
    let locs: Vec<&Loc> = vars.iter().filter_map(|v| v.var.loc()).collect();
    // a sum next to one of its summands relates them by definition too
    for a in &locs {
        for b in &locs {
            let overlap = match (a, b) {
                (Loc::Sum { label }, Loc::State { label: l, .. }) => label == l,
                (Loc::TokenSum { token }, Loc::Token { token: t, .. }) => token == t,
                _ => false,
            };
            if overlap {
                return None;
            }
        }
    }
    for v in vars {
        if let Some(loc) = v.var.loc() {
            if !cells.insert(resolved_loc(first, loc)?) {
                return None;
            }
        }
    }
    let rows: Vec<Vec<BigInt>> = samples
        .iter()
        .map(|&i| {
            let mut row: Vec<BigInt> = vars
                .iter()
                .map(|v| v.values[i].clone().expect("present"))
                .collect();
            row.push(BigInt::one());
            row
        })
        .collect();
    let ns = nullspace(&rows);
    *dependent = !ns.is_empty();
    if ns.len() != 1 {
        return None;
    }
    let coeffs = to_integers(&ns[0]);
    if coeffs[..k].iter().any(Zero::is_zero) {
        return None;
    }
    let terms = coeffs[..k]
        .iter()
        .zip(vars)
        .map(|(c, v)| (c.clone(), v.var.clone()))
        .collect();
    let p = Property::linear(terms, -coeffs[k].clone())?;
    if let Property::Linear { terms, constant } = &p {
        let plain =
            terms.len() == 2 && constant.is_zero() && terms.iter().all(|(c, _)| c.abs().is_one());
        if plain {
            // already expressed as equality or negation
            return None;
        }
    }
    Some(p)
}

fn quadratic_candidate(x: &SeedVar, y: &SeedVar) -> Option<Property> {
    let samples: Vec<(&BigInt, &BigInt)> = x
        .values
        .iter()
        .zip(&y.values)
        .filter_map(|(a, b)| Some((a.as_ref()?, b.as_ref()?)))
        .collect();
    if samples.len() < 3 {
        return None;
    }
    let product = samples[0].0 * samples[0].1;
    if product.is_zero() || samples.iter().any(|(a, b)| *a * *b != product) {
        return None;
    }
    Property::quadratic(x.var.clone(), y.var.clone(), product)
}

/// Linear and quadratic candidates confirmed on every seed sample. The
/// seed window is the earliest [`SEED_WINDOW`] traces in chronological order.
pub fn seed_arithmetic(group: &[&ExecutionTrace], cfg: &DetectConfig) -> BTreeSet<Property> {
    let mut out = BTreeSet::new();
    if group.len() < 3 {
        return out;
    }
    let mut ordered: Vec<&ExecutionTrace> = group.to_vec();
    ordered.sort_by_key(|t| t.order_key());
    ordered.truncate(SEED_WINDOW);
    let views: Vec<TraceView<'_>> = ordered.iter().map(|t| TraceView::new(t)).collect();

    let mut universe: BTreeMap<(u8, VarRef), ()> = BTreeMap::new();
    for view in &views {
        let bindings = view.bindings();
        for sv in trace_vars(view) {
            if sv.class != NumClass::Amount {
                continue;
            }
            let rank = if sv.var.is_entry() {
                0
            } else if matches!(sv.var, VarRef::Delta { .. }) {
                1
            } else {
                2
            };
            for a in abstractions(&sv.var, &bindings) {
                universe.insert((rank, a), ());
            }
        }
    }

    let mut seen_vectors = BTreeSet::new();
    let mut vars: Vec<SeedVar> = Vec::new();
    for (_, var) in universe.into_keys() {
        let values: Vec<Option<BigInt>> = views.iter().map(|v| v.numeric(&var)).collect();
        let present: Vec<&BigInt> = values.iter().flatten().collect();
        if present.len() < 3 || present.iter().all(|x| *x == present[0]) {
            continue;
        }
        if !seen_vectors.insert(values.clone()) {
            continue;
        }
        let residues = values.iter().map(|v| v.as_ref().map(residue)).collect();
        vars.push(SeedVar {
            var,
            values,
            residues,
        });
        if vars.len() == MAX_SEED_VARS {
            break;
        }
    }

    let mut budget = cfg.pair_budget;
    let n = vars.len();
    let mut dependent = vec![false; n * n];
    for i in 0..n {
        for j in i + 1..n {
            if budget == 0 {
                return out;
            }
            budget -= 1;
            let (p, dep) = linear_fit(&[&vars[i], &vars[j]], &views);
            dependent[i * n + j] = dep;
            out.extend(p);
            out.extend(quadratic_candidate(&vars[i], &vars[j]));
        }
    }
    for i in 0..n {
        for j in i + 1..n {
            for k in j + 1..n {
                if budget == 0 {
                    return out;
                }
                budget -= 1;
                // a dependent pair leaves a zero coefficient or a second
                // relation in every triple containing it
                if dependent[i * n + j] || dependent[i * n + k] || dependent[j * n + k] {
                    continue;
                }
                out.extend(linear_fit(&[&vars[i], &vars[j], &vars[k]], &views).0);
            }
        }
    }
    out
}
