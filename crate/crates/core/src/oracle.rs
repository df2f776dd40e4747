//! Brute-force ground truth for small ground sets.
//!
//! Everything here enumerates: subsets (`2^d`), permutations (`d!`) or
//! triples `(A, B, i)`. Size caps fail fast with [`DsError::Unsupported`].

use serde::{Deserialize, Serialize};

use crate::error::{DsError, Result};
use crate::lovasz::{dot, greedy_with_chain};
use crate::setfn::{SetFunctionHandle, Subset};

pub const MAX_D: usize = 20;
pub const MAX_D_PAIRS: usize = 12;
pub const MAX_D_PERMUTATIONS: usize = 7;

const SLACK: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckedProperty {
    GlobalMin,
    LocalMin,
    StrongLocalMin,
    Submodular,
    Nondecreasing,
    BaseMembership,
    WeakDrSupermodularPair,
}

#[derive(Clone, Debug, PartialEq)]
pub struct OracleReport {
    pub global_min_value: f64,
    pub global_minimizers: Vec<Subset>,
    pub checked_property: CheckedProperty,
    pub witness: Option<Subset>,
}

/// Outcome of a property check with an optional counterexample.
#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub holds: bool,
    pub witness: Option<Subset>,
}

impl Check {
    fn pass() -> Self {
        Check { holds: true, witness: None }
    }

    fn fail(w: Subset) -> Self {
        Check { holds: false, witness: Some(w) }
    }
}

fn cap(d: usize, max: usize, what: &str) -> Result<()> {
    if d > max {
        return Err(DsError::unsupported(format!("{what} limited to d <= {max}, got {d}")));
    }
    Ok(())
}

/// `F(X)` for every mask `X` in `0..2^d`.
pub fn value_table(f: &SetFunctionHandle) -> Result<Vec<f64>> {
    let d = f.ground_size();
    cap(d, MAX_D, "enumeration")?;
    Ok((0..1u64 << d).map(|m| f.value(&Subset::from_mask(d, m))).collect())
}

/// Exact minimum and every minimizer (values within `1e-12`), in mask order.
pub fn brute_force_min(f: &SetFunctionHandle) -> Result<OracleReport> {
    let d = f.ground_size();
    let table = value_table(f)?;
    let min = table.iter().cloned().fold(f64::INFINITY, f64::min);
    let tol = SLACK * (1.0 + min.abs());
    let global_minimizers = (0..table.len())
        .filter(|&m| table[m] <= min + tol)
        .map(|m| Subset::from_mask(d, m as u64))
        .collect();
    Ok(OracleReport {
        global_min_value: min,
        global_minimizers,
        checked_property: CheckedProperty::GlobalMin,
        witness: None,
    })
}

/// `F(X) <= F(X Δ {i}) + eps` for all `i`; the witness is the first
/// violating flip in index order.
pub fn is_local_min(f: &SetFunctionHandle, x: &Subset, eps: f64) -> Result<Check> {
    if x.ground_size() != f.ground_size() {
        return Err(DsError::input("set has the wrong ground size"));
    }
    let fx = f.value(x);
    for i in 0..x.ground_size() {
        let y = x.flipped(i);
        if fx > f.value(&y) + eps {
            return Ok(Check::fail(y));
        }
    }
    Ok(Check::pass())
}

/// `F(X) <= F(Y) + eps` for all `Y ⊆ X` and all `Y ⊇ X`. Subsets are
/// checked first, then supersets, each in increasing mask order.
pub fn is_strong_local_min(f: &SetFunctionHandle, x: &Subset, eps: f64) -> Result<Check> {
    let d = f.ground_size();
    if x.ground_size() != d {
        return Err(DsError::input("set has the wrong ground size"));
    }
    let inside = x.indices();
    let outside: Vec<usize> = (0..d).filter(|&i| !x.contains(i)).collect();
    if inside.len().max(outside.len()) > MAX_D {
        return Err(DsError::unsupported("strong local check limited to 2^20 subsets per side"));
    }
    let fx = f.value(x);
    let build = |base: &Subset, elems: &[usize], bits: u64, add: bool| {
        let mut s = base.clone();
        for (j, &e) in elems.iter().enumerate() {
            if bits >> j & 1 == 1 {
                if add {
                    s.insert(e);
                } else {
                    s.remove(e);
                }
            }
        }
        s
    };
    // Subsets Y = X ∖ R for each R ⊆ X.
    let mut subsets: Vec<Subset> =
        (0..1u64 << inside.len()).map(|b| build(x, &inside, b, false)).collect();
    subsets.sort_by_key(|s| s.mask());
    for y in subsets {
        if fx > f.value(&y) + eps {
            return Ok(Check::fail(y));
        }
    }
    for b in 0..1u64 << outside.len() {
        let y = build(x, &outside, b, true);
        if fx > f.value(&y) + eps {
            return Ok(Check::fail(y));
        }
    }
    Ok(Check::pass())
}

/// A triple with `A ⊆ B`, `i ∉ B` and `F(i | A) < F(i | B)`.
#[derive(Clone, Debug, PartialEq)]
pub struct SubmodularWitness {
    pub a: Subset,
    pub b: Subset,
    pub i: usize,
}

/// Checks every diminishing-returns triple; `None` means submodular.
pub fn check_submodular(f: &SetFunctionHandle) -> Result<Option<SubmodularWitness>> {
    let d = f.ground_size();
    cap(d, MAX_D_PAIRS, "submodularity check")?;
    let t = value_table(f)?;
    let full = (1u64 << d) - 1;
    for b in 0..=full {
        // A ranges over subsets of B.
        let mut a = b;
        loop {
            for i in 0..d {
                let bit = 1u64 << i;
                if b & bit != 0 {
                    continue;
                }
                let ga = t[(a | bit) as usize] - t[a as usize];
                let gb = t[(b | bit) as usize] - t[b as usize];
                if ga < gb - SLACK * (1.0 + ga.abs().max(gb.abs())) {
                    return Ok(Some(SubmodularWitness {
                        a: Subset::from_mask(d, a),
                        b: Subset::from_mask(d, b),
                        i,
                    }));
                }
            }
            if a == 0 {
                break;
            }
            a = (a - 1) & b;
        }
    }
    Ok(None)
}

/// First `(X, i)` with `F(X ∪ i) < F(X)`, returned as the set `X`.
pub fn check_nondecreasing(f: &SetFunctionHandle) -> Result<Check> {
    let d = f.ground_size();
    let t = value_table(f)?;
    for m in 0..t.len() as u64 {
        for i in 0..d {
            let bit = 1u64 << i;
            if m & bit == 0 && t[(m | bit) as usize] < t[m as usize] - SLACK * (1.0 + t[m as usize].abs()) {
                return Ok(Check::fail(Subset::from_mask(d, m)));
            }
        }
    }
    Ok(Check::pass())
}

/// Weak DR constants `(α, β)` of a nondecreasing function.
///
/// Over all `A ⊆ B`, `i ∉ B`: `α = min F(i|A)/F(i|B)` over `F(i|B) > 0` and
/// `β = min F(i|B)/F(i|A)` over `F(i|A) > 0`, each 1 when the index set is
/// empty and clamped to `(0, 1]`. Zero denominators are skipped.
pub fn weak_dr_constants(f: &SetFunctionHandle) -> Result<(f64, f64)> {
    let d = f.ground_size();
    cap(d, MAX_D_PAIRS, "weak DR constants")?;
    if !check_nondecreasing(f)?.holds {
        return Err(DsError::unsupported("weak DR constants need a nondecreasing function"));
    }
    let t = value_table(f)?;
    let full = (1u64 << d) - 1;
    let tiny = 1e-14;
    let mut alpha = 1.0f64;
    let mut beta = 1.0f64;
    for b in 0..=full {
        let mut a = b;
        loop {
            for i in 0..d {
                let bit = 1u64 << i;
                if b & bit != 0 {
                    continue;
                }
                let ga = t[(a | bit) as usize] - t[a as usize];
                let gb = t[(b | bit) as usize] - t[b as usize];
                if gb > tiny {
                    alpha = alpha.min(ga / gb);
                }
                if ga > tiny {
                    beta = beta.min(gb.max(0.0) / ga);
                }
            }
            if a == 0 {
                break;
            }
            a = (a - 1) & b;
        }
    }
    let clamp = |v: f64| v.clamp(f64::MIN_POSITIVE, 1.0);
    Ok((clamp(alpha), clamp(beta)))
}

/// `F(A) + F(B)/β <= F(A∩B) + F(A∪B)/β` for all pairs; the witness is `A`
/// of the first violating pair in mask order.
pub fn check_weak_dr_supermodular_pairs(f: &SetFunctionHandle, beta: f64) -> Result<Check> {
    let d = f.ground_size();
    cap(d, MAX_D_PAIRS, "pair check")?;
    let t = value_table(f)?;
    let n = t.len();
    for a in 0..n {
        for b in 0..n {
            let lhs = t[a] + t[b] / beta;
            let rhs = t[a & b] + t[a | b] / beta;
            if lhs > rhs + 1e-9 * (1.0 + lhs.abs()) {
                return Ok(Check::fail(Subset::from_mask(d, a as u64)));
            }
        }
    }
    Ok(Check::pass())
}

/// Lexicographic successor for in-place permutation enumeration.
fn next_permutation(p: &mut [usize]) -> bool {
    if p.len() < 2 {
        return false;
    }
    let mut i = p.len() - 1;
    while i > 0 && p[i - 1] >= p[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = p.len() - 1;
    while p[j] <= p[i - 1] {
        j -= 1;
    }
    p.swap(i - 1, j);
    p[i..].reverse();
    true
}

/// Every greedy vertex of `B(F)`, one per permutation (duplicates kept).
pub fn greedy_vertices(f: &SetFunctionHandle) -> Result<Vec<Vec<f64>>> {
    let d = f.ground_size();
    cap(d, MAX_D_PERMUTATIONS, "permutation enumeration")?;
    let mut p: Vec<usize> = (0..d).collect();
    let mut out = Vec::new();
    loop {
        out.push(greedy_with_chain(f, &p).0);
        if !next_permutation(&mut p) {
            break;
        }
    }
    Ok(out)
}

/// `max <x, y>` over all greedy vertices: the support function of `B(F)`,
/// which equals `f_L(x)` for submodular `F`.
pub fn lovasz_bruteforce(f: &SetFunctionHandle, x: &[f64]) -> Result<f64> {
    if x.len() != f.ground_size() {
        return Err(DsError::input("point has wrong dimension"));
    }
    Ok(greedy_vertices(f)?.iter().map(|y| dot(x, y)).fold(f64::NEG_INFINITY, f64::max))
}

/// `y(V) = F(V)` and `y(A) <= F(A)` for all `A`, with relative slack `tol`.
/// The witness is the first violated `A` (or `V` for the equality).
pub fn base_polytope_membership(f: &SetFunctionHandle, y: &[f64], tol: f64) -> Result<Check> {
    let d = f.ground_size();
    if y.len() != d {
        return Err(DsError::input("vector has wrong dimension"));
    }
    let t = value_table(f)?;
    let full = (1u64 << d) - 1;
    let ysum = |m: u64| (0..d).filter(|&i| m >> i & 1 == 1).map(|i| y[i]).sum::<f64>();
    let scale = |v: f64| tol * (1.0 + v.abs());
    if (ysum(full) - t[full as usize]).abs() > scale(t[full as usize]) {
        return Ok(Check::fail(Subset::full(d)));
    }
    for m in 0..full {
        if ysum(m) > t[m as usize] + scale(t[m as usize]) {
            return Ok(Check::fail(Subset::from_mask(d, m)));
        }
    }
    Ok(Check::pass())
}

/// Membership of `w` in `ρx + B(H)`.
pub fn shifted_base_membership(h: &SetFunctionHandle, x: &[f64], rho: f64, w: &[f64], tol: f64) -> Result<Check> {
    let b: Vec<f64> = w.iter().zip(x).map(|(wi, xi)| wi - rho * xi).collect();
    base_polytope_membership(h, &b, tol)
}

/// Vertices of `∂h_L(x)`: greedy vertices of every decreasing order of `x`
/// (all tie-breaks within equal-value blocks), deduplicated.
pub fn subdifferential_vertices(h: &SetFunctionHandle, x: &[f64]) -> Result<Vec<Vec<f64>>> {
    let d = h.ground_size();
    cap(d, MAX_D_PERMUTATIONS, "permutation enumeration")?;
    let mut p: Vec<usize> = (0..d).collect();
    let mut out: Vec<Vec<f64>> = Vec::new();
    loop {
        if p.windows(2).all(|w| x[w[0]] >= x[w[1]]) {
            let y = greedy_with_chain(h, &p).0;
            if !out.iter().any(|v| v.iter().zip(&y).all(|(a, b)| (a - b).abs() < 1e-12)) {
                out.push(y);
            }
        }
        if !next_permutation(&mut p) {
            break;
        }
    }
    Ok(out)
}
