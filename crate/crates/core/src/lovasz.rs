//! Lovász extension, greedy base-polytope vertices, chain rounding.
//!
//! For `x` sorted decreasingly along a permutation `σ`, the Lovász extension is
//! `f_L(x) = Σ_k x_{σ(k)} F(σ(k) | S_{k-1})` with `S_k = {σ(1), .., σ(k)}`.
//! The marginals along `σ` form the greedy vector, a vertex of the base
//! polytope `B(F)` and a subgradient of `f_L` at every `x` sorted by `σ`.

use std::cmp::Ordering;

use crate::error::{DsError, Result};
use crate::setfn::{SetFunctionHandle, Subset};

/// A bijection on `{0, .., d-1}` stored as the visiting order `σ(1), .., σ(d)`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Permutation {
    order: Vec<usize>,
}

impl Permutation {
    pub fn new(order: Vec<usize>) -> Result<Self> {
        let d = order.len();
        let mut seen = vec![false; d];
        for &i in &order {
            if i >= d || seen[i] {
                return Err(DsError::input(format!("{order:?} is not a permutation of 0..{d}")));
            }
            seen[i] = true;
        }
        Ok(Permutation { order })
    }

    pub fn identity(d: usize) -> Self {
        Permutation { order: (0..d).collect() }
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.order
    }

    /// The prefix set `S_k` of the first `k` elements.
    pub fn prefix(&self, k: usize) -> Subset {
        let mut s = Subset::empty(self.order.len());
        for &i in &self.order[..k] {
            s.insert(i);
        }
        s
    }
}

/// Decreasing order of `x`; ties broken by decreasing `tie_break`, then by
/// ascending index. Comparisons are exact.
pub fn sort_decreasing(x: &[f64], tie_break: Option<&[f64]>) -> Result<Permutation> {
    if x.iter().any(|v| v.is_nan()) {
        return Err(DsError::input("NaN in sort key"));
    }
    if let Some(t) = tie_break {
        if t.len() != x.len() {
            return Err(DsError::input("tie-break vector has wrong length"));
        }
        if t.iter().any(|v| v.is_nan()) {
            return Err(DsError::input("NaN in tie-break vector"));
        }
    }
    Ok(Permutation { order: decreasing_order(x, tie_break) })
}

/// Infallible ordering used internally on values known to be finite.
pub(crate) fn decreasing_order(x: &[f64], tie_break: Option<&[f64]>) -> Vec<usize> {
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| {
        let primary = x[b].partial_cmp(&x[a]).unwrap_or(Ordering::Equal);
        let secondary = match tie_break {
            Some(t) => t[b].partial_cmp(&t[a]).unwrap_or(Ordering::Equal),
            None => Ordering::Equal,
        };
        primary.then(secondary).then(a.cmp(&b))
    });
    order
}

/// A greedy vertex of `B(F)` together with the permutation that produced it.
#[derive(Clone, Debug, PartialEq)]
pub struct BasePoint {
    pub y: Vec<f64>,
    pub source: Permutation,
}

/// `y_{σ(k)} = F(σ(k) | S_{k-1})`.
pub fn greedy_subgradient(f: &SetFunctionHandle, sigma: &Permutation) -> BasePoint {
    let (y, _) = greedy_with_chain(f, sigma.as_slice());
    BasePoint { y, source: sigma.clone() }
}

/// Greedy vector plus the chain values `F(S_0), .., F(S_d)` it was built from.
pub(crate) fn greedy_with_chain(f: &SetFunctionHandle, order: &[usize]) -> (Vec<f64>, Vec<f64>) {
    let chain = f.chain(order);
    let mut y = vec![0.0; order.len()];
    for (k, &i) in order.iter().enumerate() {
        y[i] = chain[k + 1] - chain[k];
    }
    (y, chain)
}

/// `f_L(x)`. Independent of tie-breaking among equal entries.
pub fn lovasz_eval(f: &SetFunctionHandle, x: &[f64]) -> f64 {
    let order = decreasing_order(x, None);
    let (y, _) = greedy_with_chain(f, &order);
    dot(x, &y)
}

/// Result of chain rounding: the best prefix `S_k̂` of the sorting permutation.
#[derive(Clone, Debug, PartialEq)]
pub struct RoundedSet {
    pub set: Subset,
    pub value: f64,
    pub chain_index: usize,
}

/// `Round_F(x)`: the prefix of the decreasing order of `x` minimizing `F`,
/// smallest prefix among ties. Guarantees `F(set) <= f_L(x)`.
pub fn round_f(f: &SetFunctionHandle, x: &[f64]) -> Result<RoundedSet> {
    if x.len() != f.ground_size() {
        return Err(DsError::input("point has wrong dimension"));
    }
    if x.iter().any(|v| !(0.0..=1.0).contains(v)) {
        return Err(DsError::input("rounding requires a point in [0,1]^d"));
    }
    Ok(round_along(f, &decreasing_order(x, None)))
}

/// Best prefix of an explicit order.
pub(crate) fn round_along(f: &SetFunctionHandle, order: &[usize]) -> RoundedSet {
    let chain = f.chain(order);
    let k = argmin_first(&chain);
    let mut set = Subset::empty(order.len());
    for &i in &order[..k] {
        set.insert(i);
    }
    RoundedSet { set, value: chain[k], chain_index: k }
}

/// Index of the first minimum.
pub(crate) fn argmin_first(values: &[f64]) -> usize {
    let mut best = 0;
    for (k, &v) in values.iter().enumerate().skip(1) {
        if v < values[best] {
            best = k;
        }
    }
    best
}

/// Lipschitz constant of `f_L`: `F(V)` for nondecreasing `F`, otherwise
/// `3 * max |F|` from the caller-supplied value bound.
pub fn lipschitz_bound(f: &SetFunctionHandle) -> Result<f64> {
    if f.is_nondecreasing() == Some(true) {
        return Ok(f.value(&Subset::full(f.ground_size())));
    }
    match f.value_bound() {
        Some(b) => Ok(3.0 * b),
        None => Err(DsError::unsupported(
            "Lipschitz bound needs a nondecreasing flag or a value bound",
        )),
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
