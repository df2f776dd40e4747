//! Ground sets, subsets and set-function evaluation oracles.
//!
//! A [`SetFunction`] is a pure evaluation oracle. [`SetFunctionHandle`] wraps
//! one behind an `Arc` together with the metadata the solvers need
//! (monotonicity flag, a bound on `max |F(X)|`) and performs index checks.

mod families;

use std::fmt;
use std::sync::Arc;

use crate::error::{DsError, Result};

pub use families::{
    from_fn, make_concave_of_modular, make_empirical_entropy, make_entropy_of_rows,
    make_modular, make_set_cover, make_sqrt_cover, BinaryMatrix,
};

/// The ground set `V = {0, .., d-1}`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct GroundSet {
    d: usize,
}

impl GroundSet {
    pub fn new(d: usize) -> Result<Self> {
        if d == 0 {
            return Err(DsError::input("ground set must have at least one element"));
        }
        Ok(GroundSet { d })
    }

    pub fn size(&self) -> usize {
        self.d
    }
}

/// A subset of a ground set, stored as a membership vector.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Subset {
    members: Vec<bool>,
}

impl Subset {
    pub fn empty(d: usize) -> Self {
        Subset { members: vec![false; d] }
    }

    pub fn full(d: usize) -> Self {
        Subset { members: vec![true; d] }
    }

    pub fn from_indices(d: usize, indices: &[usize]) -> Result<Self> {
        let mut s = Subset::empty(d);
        for &i in indices {
            if i >= d {
                return Err(DsError::input(format!("element {i} out of range for d = {d}")));
            }
            s.members[i] = true;
        }
        Ok(s)
    }

    /// Bit `i` of `mask` is element `i`. Requires `d <= 64`.
    pub fn from_mask(d: usize, mask: u64) -> Self {
        debug_assert!(d <= 64);
        Subset { members: (0..d).map(|i| mask >> i & 1 == 1).collect() }
    }

    pub fn from_bools(members: Vec<bool>) -> Self {
        Subset { members }
    }

    pub fn mask(&self) -> u64 {
        debug_assert!(self.members.len() <= 64);
        self.members
            .iter()
            .enumerate()
            .filter(|(_, &m)| m)
            .fold(0u64, |acc, (i, _)| acc | 1 << i)
    }

    pub fn ground_size(&self) -> usize {
        self.members.len()
    }

    pub fn len(&self) -> usize {
        self.members.iter().filter(|&&m| m).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.members.iter().any(|&m| m)
    }

    pub fn contains(&self, i: usize) -> bool {
        self.members.get(i).copied().unwrap_or(false)
    }

    pub fn insert(&mut self, i: usize) {
        self.members[i] = true;
    }

    pub fn remove(&mut self, i: usize) {
        self.members[i] = false;
    }

    pub fn with(&self, i: usize) -> Subset {
        let mut s = self.clone();
        s.insert(i);
        s
    }

    pub fn without(&self, i: usize) -> Subset {
        let mut s = self.clone();
        s.remove(i);
        s
    }

    /// The set with membership of `i` toggled.
    pub fn flipped(&self, i: usize) -> Subset {
        let mut s = self.clone();
        s.members[i] = !s.members[i];
        s
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.members.iter().enumerate().filter(|(_, &m)| m).map(|(i, _)| i)
    }

    pub fn indices(&self) -> Vec<usize> {
        self.iter().collect()
    }

    pub fn as_bools(&self) -> &[bool] {
        &self.members
    }

    pub fn is_subset_of(&self, other: &Subset) -> bool {
        self.members.iter().zip(&other.members).all(|(&a, &b)| !a || b)
    }

    pub fn union(&self, other: &Subset) -> Subset {
        Subset { members: self.members.iter().zip(&other.members).map(|(&a, &b)| a || b).collect() }
    }

    pub fn intersection(&self, other: &Subset) -> Subset {
        Subset { members: self.members.iter().zip(&other.members).map(|(&a, &b)| a && b).collect() }
    }

    /// Size of the symmetric difference.
    pub fn hamming(&self, other: &Subset) -> usize {
        self.members.iter().zip(&other.members).filter(|(a, b)| a != b).count()
    }

    /// The indicator vector `1_X`.
    pub fn indicator(&self) -> Vec<f64> {
        self.members.iter().map(|&m| if m { 1.0 } else { 0.0 }).collect()
    }
}

impl fmt::Debug for Subset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.iter()).finish()
    }
}

/// A normalized set function `F: 2^V -> R` with `F(∅) = 0`.
///
/// Implementations must be pure: the same subset always yields the same value.
pub trait SetFunction: Send + Sync {
    fn ground_size(&self) -> usize;

    /// `F(set)`. The caller guarantees `set.ground_size() == self.ground_size()`.
    fn value(&self, set: &Subset) -> f64;

    /// Values on the chain `S_0 = ∅ ⊂ S_1 ⊂ .. ⊂ S_d` where `S_k` holds the
    /// first `k` entries of `order`. Returns `d + 1` values.
    ///
    /// The default evaluates every prefix from scratch; families with cheap
    /// incremental updates override it.
    fn chain_values(&self, order: &[usize]) -> Vec<f64> {
        let mut set = Subset::empty(self.ground_size());
        let mut out = Vec::with_capacity(order.len() + 1);
        out.push(0.0);
        for &i in order {
            set.insert(i);
            out.push(self.value(&set));
        }
        out
    }
}

/// Shared, immutable evaluation oracle plus metadata.
#[derive(Clone)]
pub struct SetFunctionHandle {
    inner: Arc<dyn SetFunction>,
    nondecreasing: Option<bool>,
    value_bound: Option<f64>,
}

impl fmt::Debug for SetFunctionHandle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SetFunctionHandle")
            .field("d", &self.ground_size())
            .field("nondecreasing", &self.nondecreasing)
            .field("value_bound", &self.value_bound)
            .finish()
    }
}

impl SetFunctionHandle {
    pub fn new(f: impl SetFunction + 'static) -> Self {
        SetFunctionHandle { inner: Arc::new(f), nondecreasing: None, value_bound: None }
    }

    pub fn with_nondecreasing(mut self, flag: bool) -> Self {
        self.nondecreasing = Some(flag);
        self
    }

    pub fn with_value_bound(mut self, bound: f64) -> Self {
        self.value_bound = Some(bound);
        self
    }

    pub fn clear_flags(mut self) -> Self {
        self.nondecreasing = None;
        self.value_bound = None;
        self
    }

    pub fn ground(&self) -> GroundSet {
        GroundSet { d: self.inner.ground_size() }
    }

    pub fn ground_size(&self) -> usize {
        self.inner.ground_size()
    }

    pub fn is_nondecreasing(&self) -> Option<bool> {
        self.nondecreasing
    }

    pub fn value_bound(&self) -> Option<f64> {
        self.value_bound
    }

    fn check(&self, set: &Subset) -> Result<()> {
        if set.ground_size() != self.ground_size() {
            return Err(DsError::input(format!(
                "subset over {} elements passed to a function on {} elements",
                set.ground_size(),
                self.ground_size()
            )));
        }
        Ok(())
    }

    /// Checked evaluation of `F(set)`.
    pub fn evaluate(&self, set: &Subset) -> Result<f64> {
        self.check(set)?;
        Ok(self.inner.value(set))
    }

    /// Unchecked evaluation for hot loops that construct their own subsets.
    #[inline]
    pub fn value(&self, set: &Subset) -> f64 {
        self.inner.value(set)
    }

    /// `F(X ∪ {i}) - F(X)`, zero when `i ∈ X`.
    pub fn marginal_gain(&self, i: usize, set: &Subset) -> Result<f64> {
        self.check(set)?;
        if i >= self.ground_size() {
            return Err(DsError::input(format!("element {i} out of range")));
        }
        if set.contains(i) {
            return Ok(0.0);
        }
        Ok(self.inner.value(&set.with(i)) - self.inner.value(set))
    }

    /// See [`SetFunction::chain_values`].
    pub fn chain(&self, order: &[usize]) -> Vec<f64> {
        self.inner.chain_values(order)
    }
}

/// Weighted sum `Σ c_j F_j` of functions on a common ground set.
struct WeightedSum {
    d: usize,
    terms: Vec<(f64, SetFunctionHandle)>,
}

impl SetFunction for WeightedSum {
    fn ground_size(&self) -> usize {
        self.d
    }

    fn value(&self, set: &Subset) -> f64 {
        self.terms.iter().map(|(c, f)| c * f.value(set)).sum()
    }

    fn chain_values(&self, order: &[usize]) -> Vec<f64> {
        let mut out = vec![0.0; order.len() + 1];
        for (c, f) in &self.terms {
            for (o, v) in out.iter_mut().zip(f.chain(order)) {
                *o += c * v;
            }
        }
        out
    }
}

/// `Σ c_j F_j`. All terms must share the ground set.
pub fn weighted_sum(terms: Vec<(f64, SetFunctionHandle)>) -> Result<SetFunctionHandle> {
    let d = terms
        .first()
        .map(|(_, f)| f.ground_size())
        .ok_or_else(|| DsError::input("weighted sum needs at least one term"))?;
    if terms.iter().any(|(_, f)| f.ground_size() != d) {
        return Err(DsError::input("weighted sum terms have different ground sets"));
    }
    Ok(SetFunctionHandle::new(WeightedSum { d, terms }))
}

/// A real vector inducing the modular function `x(A) = Σ_{i∈A} x_i`.
#[derive(Clone, Debug, PartialEq)]
pub struct ModularVector(pub Vec<f64>);

impl ModularVector {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn value(&self, set: &Subset) -> f64 {
        set.iter().map(|i| self.0[i]).sum()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// A DS decomposition `F = G - H` with `G`, `H` normalized submodular.
///
/// The regularization weight of the DC decomposition lives in the solver
/// configuration, not here.
#[derive(Clone, Debug)]
pub struct DsInstance {
    pub g: SetFunctionHandle,
    pub h: SetFunctionHandle,
    f: SetFunctionHandle,
}

impl DsInstance {
    pub fn new(g: SetFunctionHandle, h: SetFunctionHandle) -> Result<Self> {
        if g.ground_size() != h.ground_size() {
            return Err(DsError::input("G and H must share the ground set"));
        }
        let f = weighted_sum(vec![(1.0, g.clone()), (-1.0, h.clone())])?;
        Ok(DsInstance { g, h, f })
    }

    pub fn d(&self) -> usize {
        self.g.ground_size()
    }

    /// The objective `F = G - H` as a handle.
    pub fn f(&self) -> &SetFunctionHandle {
        &self.f
    }

    pub fn value(&self, set: &Subset) -> f64 {
        self.g.value(set) - self.h.value(set)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn subset_basics() {
        let s = Subset::from_indices(5, &[0, 3]).unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s.mask(), 0b1001);
        assert_eq!(Subset::from_mask(5, 0b1001), s);
        assert!(s.is_subset_of(&s.with(2)));
        assert_eq!(s.flipped(3), Subset::from_indices(5, &[0]).unwrap());
        assert_eq!(s.hamming(&Subset::full(5)), 3);
        assert!(Subset::from_indices(3, &[3]).is_err());
    }

    #[test]
    fn ground_set_rejects_empty() {
        assert!(GroundSet::new(0).is_err());
        assert_eq!(GroundSet::new(4).unwrap().size(), 4);
    }

    #[test]
    fn evaluate_checks_ground_size() {
        let f = make_modular(ModularVector(vec![1.0, 2.0]));
        assert!(f.evaluate(&Subset::empty(3)).is_err());
        assert!(f.marginal_gain(2, &Subset::empty(2)).is_err());
    }

    #[test]
    fn marginal_gain_of_sqrt_cardinality() {
        let f = from_fn(2, |s| (s.len() as f64).sqrt());
        let x = Subset::from_indices(2, &[0]).unwrap();
        let gain = f.marginal_gain(1, &x).unwrap();
        assert!((gain - (2f64.sqrt() - 1.0)).abs() < 1e-15);
        assert_eq!(f.marginal_gain(0, &x).unwrap(), 0.0);
    }

    #[test]
    fn difference_chain_matches_values() {
        let g = make_set_cover(3, vec![vec![0], vec![1], vec![2]], 1.0).unwrap();
        let h = make_set_cover(3, vec![vec![0], vec![0, 1], vec![0, 1, 2]], 1.0).unwrap();
        let inst = DsInstance::new(g, h).unwrap();
        let chain = inst.f().chain(&[2, 0, 1]);
        assert_eq!(chain, vec![0.0, -2.0, -1.0, 0.0]);
    }
}
