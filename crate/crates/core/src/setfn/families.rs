//! Concrete set-function families: set cover, concave-of-modular,
//! empirical entropy, modular, and closures.

use std::sync::Arc;

use super::{ModularVector, SetFunction, SetFunctionHandle, Subset};
use crate::error::{DsError, Result};

#[derive(Clone, Copy, Debug)]
enum CoverScale {
    /// `alpha * |N(X)|`
    Linear(f64),
    /// `lambda * sqrt(|N(X)|)`
    Sqrt(f64),
}

impl CoverScale {
    fn apply(self, count: usize) -> f64 {
        match self {
            CoverScale::Linear(a) => a * count as f64,
            CoverScale::Sqrt(l) => l * (count as f64).sqrt(),
        }
    }
}

struct Cover {
    universe: usize,
    covers: Vec<Vec<usize>>,
    scale: CoverScale,
}

impl SetFunction for Cover {
    fn ground_size(&self) -> usize {
        self.covers.len()
    }

    fn value(&self, set: &Subset) -> f64 {
        let mut seen = vec![false; self.universe];
        let mut count = 0;
        for i in set.iter() {
            for &u in &self.covers[i] {
                if !seen[u] {
                    seen[u] = true;
                    count += 1;
                }
            }
        }
        self.scale.apply(count)
    }

    fn chain_values(&self, order: &[usize]) -> Vec<f64> {
        let mut seen = vec![false; self.universe];
        let mut count = 0;
        let mut out = Vec::with_capacity(order.len() + 1);
        out.push(0.0);
        for &i in order {
            for &u in &self.covers[i] {
                if !seen[u] {
                    seen[u] = true;
                    count += 1;
                }
            }
            out.push(self.scale.apply(count));
        }
        out
    }
}

fn validate_covers(universe_size: usize, covers: &[Vec<usize>]) -> Result<()> {
    if covers.is_empty() {
        return Err(DsError::input("covers list is empty"));
    }
    for (i, c) in covers.iter().enumerate() {
        if let Some(&u) = c.iter().find(|&&u| u >= universe_size) {
            return Err(DsError::input(format!(
                "cover of element {i} contains item {u} outside universe of size {universe_size}"
            )));
        }
    }
    Ok(())
}

/// `F(X) = alpha * |∪_{i∈X} U_i|` with one cover `U_i` per ground element.
pub fn make_set_cover(
    universe_size: usize,
    covers: Vec<Vec<usize>>,
    alpha: f64,
) -> Result<SetFunctionHandle> {
    validate_covers(universe_size, &covers)?;
    if !(alpha > 0.0) {
        return Err(DsError::input(format!("cover weight must be positive, got {alpha}")));
    }
    Ok(SetFunctionHandle::new(Cover { universe: universe_size, covers, scale: CoverScale::Linear(alpha) })
        .with_nondecreasing(true)
        .with_value_bound(alpha * universe_size as f64))
}

/// `F(X) = lambda * sqrt(|∪_{i∈X} U_i|)`, the vocabulary-size penalty of the
/// corpus selection objective.
pub fn make_sqrt_cover(
    universe_size: usize,
    covers: Vec<Vec<usize>>,
    lambda: f64,
) -> Result<SetFunctionHandle> {
    validate_covers(universe_size, &covers)?;
    if lambda < 0.0 {
        return Err(DsError::input("lambda must be nonnegative"));
    }
    Ok(SetFunctionHandle::new(Cover { universe: universe_size, covers, scale: CoverScale::Sqrt(lambda) })
        .with_nondecreasing(true)
        .with_value_bound(lambda * (universe_size as f64).sqrt()))
}

struct ConcaveOfModular {
    group_of: Vec<usize>,
    n_groups: usize,
    weights: Vec<f64>,
}

impl SetFunction for ConcaveOfModular {
    fn ground_size(&self) -> usize {
        self.weights.len()
    }

    fn value(&self, set: &Subset) -> f64 {
        let mut sums = vec![0.0; self.n_groups];
        for i in set.iter() {
            sums[self.group_of[i]] += self.weights[i];
        }
        sums.iter().map(|s| s.sqrt()).sum()
    }

    fn chain_values(&self, order: &[usize]) -> Vec<f64> {
        let mut sums = vec![0.0f64; self.n_groups];
        let mut total = 0.0;
        let mut out = Vec::with_capacity(order.len() + 1);
        out.push(0.0);
        for &i in order {
            let g = self.group_of[i];
            let before = sums[g].sqrt();
            sums[g] += self.weights[i];
            total += sums[g].sqrt() - before;
            out.push(total);
        }
        out
    }
}

/// `F(X) = Σ_i sqrt(m(X ∩ V_i))` for a partition `V_1..V_r` and nonnegative `m`.
pub fn make_concave_of_modular(
    groups: Vec<Vec<usize>>,
    weights: ModularVector,
) -> Result<SetFunctionHandle> {
    let d = weights.len();
    if d == 0 {
        return Err(DsError::input("empty weight vector"));
    }
    if weights.0.iter().any(|&w| !(w >= 0.0) || !w.is_finite()) {
        return Err(DsError::input("weights must be finite and nonnegative"));
    }
    let mut group_of = vec![usize::MAX; d];
    for (g, members) in groups.iter().enumerate() {
        for &i in members {
            if i >= d {
                return Err(DsError::input(format!("group {g} contains element {i} >= d = {d}")));
            }
            if group_of[i] != usize::MAX {
                return Err(DsError::input(format!("element {i} appears in more than one group")));
            }
            group_of[i] = g;
        }
    }
    if let Some(i) = group_of.iter().position(|&g| g == usize::MAX) {
        return Err(DsError::input(format!("element {i} is not covered by any group")));
    }
    let f = ConcaveOfModular { group_of, n_groups: groups.len(), weights: weights.0 };
    let bound = f.value(&Subset::full(d));
    Ok(SetFunctionHandle::new(f).with_nondecreasing(true).with_value_bound(bound))
}

/// Dense binary matrix with `n` rows (samples) and `d` columns (features),
/// stored column-major.
#[derive(Clone, Debug, PartialEq)]
pub struct BinaryMatrix {
    n_rows: usize,
    columns: Vec<Vec<u8>>,
}

impl BinaryMatrix {
    pub fn from_rows(rows: &[Vec<u8>]) -> Result<Self> {
        let n_rows = rows.len();
        if n_rows == 0 {
            return Err(DsError::input("data matrix has no rows"));
        }
        let d = rows[0].len();
        if d == 0 {
            return Err(DsError::input("data matrix has no columns"));
        }
        let mut columns = vec![Vec::with_capacity(n_rows); d];
        for (r, row) in rows.iter().enumerate() {
            if row.len() != d {
                return Err(DsError::Parse { row: r, col: row.len(), msg: format!("expected {d} cells") });
            }
            for (c, &v) in row.iter().enumerate() {
                if v > 1 {
                    return Err(DsError::Parse { row: r, col: c, msg: format!("non-binary cell {v}") });
                }
                columns[c].push(v);
            }
        }
        Ok(BinaryMatrix { n_rows, columns })
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }

    pub fn get(&self, row: usize, col: usize) -> u8 {
        self.columns[col][row]
    }

    pub fn column(&self, col: usize) -> &[u8] {
        &self.columns[col]
    }

    /// Rows listed in `rows`, in that order.
    pub fn select_rows(&self, rows: &[usize]) -> BinaryMatrix {
        BinaryMatrix {
            n_rows: rows.len(),
            columns: self.columns.iter().map(|c| rows.iter().map(|&r| c[r]).collect()).collect(),
        }
    }
}

/// Plug-in Shannon entropy (natural log) of the joint empirical distribution
/// of a column subset, restricted to a fixed set of rows.
struct Entropy {
    data: Arc<BinaryMatrix>,
    rows: Vec<usize>,
}

/// Running partition of rows into classes of identical projected patterns.
struct Refinement {
    ids: Vec<u32>,
    n_ids: usize,
    remap: Vec<u32>,
    counts: Vec<u32>,
}

impl Refinement {
    fn new(n: usize) -> Self {
        Refinement { ids: vec![0; n], n_ids: 1, remap: Vec::new(), counts: Vec::new() }
    }

    fn refine(&mut self, column: &[u8], rows: &[usize]) {
        self.remap.clear();
        self.remap.resize(2 * self.n_ids, u32::MAX);
        let mut next = 0u32;
        for (id, &r) in self.ids.iter_mut().zip(rows) {
            let key = (*id as usize) * 2 + column[r] as usize;
            if self.remap[key] == u32::MAX {
                self.remap[key] = next;
                next += 1;
            }
            *id = self.remap[key];
        }
        self.n_ids = next as usize;
    }

    fn entropy(&mut self) -> f64 {
        let n = self.ids.len();
        if self.n_ids <= 1 || n == 0 {
            return 0.0;
        }
        self.counts.clear();
        self.counts.resize(self.n_ids, 0);
        for &id in &self.ids {
            self.counts[id as usize] += 1;
        }
        let nf = n as f64;
        let sum: f64 = self.counts.iter().map(|&c| c as f64 * (c as f64).ln()).sum();
        (nf.ln() - sum / nf).max(0.0)
    }
}

impl SetFunction for Entropy {
    fn ground_size(&self) -> usize {
        self.data.n_cols()
    }

    fn value(&self, set: &Subset) -> f64 {
        let mut part = Refinement::new(self.rows.len());
        for c in set.iter() {
            part.refine(self.data.column(c), &self.rows);
        }
        part.entropy()
    }

    fn chain_values(&self, order: &[usize]) -> Vec<f64> {
        let mut part = Refinement::new(self.rows.len());
        let mut out = Vec::with_capacity(order.len() + 1);
        out.push(0.0);
        for &c in order {
            part.refine(self.data.column(c), &self.rows);
            out.push(part.entropy());
        }
        out
    }
}

/// `F(X)` = empirical entropy of the columns `X` over all rows of `data`.
pub fn make_empirical_entropy(data: Arc<BinaryMatrix>) -> Result<SetFunctionHandle> {
    let rows = (0..data.n_rows()).collect();
    make_entropy_of_rows(data, rows)
}

/// Entropy of the columns `X` over the listed rows only.
pub fn make_entropy_of_rows(data: Arc<BinaryMatrix>, rows: Vec<usize>) -> Result<SetFunctionHandle> {
    if data.n_rows() == 0 || rows.is_empty() {
        return Err(DsError::input("entropy needs at least one row"));
    }
    if let Some(&r) = rows.iter().find(|&&r| r >= data.n_rows()) {
        return Err(DsError::input(format!("row {r} out of range")));
    }
    let d = data.n_cols();
    let f = Entropy { data, rows };
    let bound = f.value(&Subset::full(d));
    Ok(SetFunctionHandle::new(f).with_nondecreasing(true).with_value_bound(bound))
}

struct Modular {
    weights: Vec<f64>,
}

impl SetFunction for Modular {
    fn ground_size(&self) -> usize {
        self.weights.len()
    }

    fn value(&self, set: &Subset) -> f64 {
        set.iter().map(|i| self.weights[i]).sum()
    }

    fn chain_values(&self, order: &[usize]) -> Vec<f64> {
        let mut acc = 0.0;
        let mut out = Vec::with_capacity(order.len() + 1);
        out.push(0.0);
        for &i in order {
            acc += self.weights[i];
            out.push(acc);
        }
        out
    }
}

/// The modular function `x(A) = Σ_{i∈A} x_i`. Flagged nondecreasing when all
/// weights are nonnegative.
pub fn make_modular(weights: ModularVector) -> SetFunctionHandle {
    let nondecreasing = weights.0.iter().all(|&w| w >= 0.0);
    let bound = weights.0.iter().map(|w| w.abs()).sum::<f64>();
    SetFunctionHandle::new(Modular { weights: weights.0 })
        .with_nondecreasing(nondecreasing)
        .with_value_bound(bound)
}

struct FnSetFunction<F> {
    d: usize,
    f: F,
}

impl<F: Fn(&Subset) -> f64 + Send + Sync> SetFunction for FnSetFunction<F> {
    fn ground_size(&self) -> usize {
        self.d
    }

    fn value(&self, set: &Subset) -> f64 {
        (self.f)(set)
    }
}

/// Wraps a closure. The closure must return 0 on the empty set; no flags are set.
pub fn from_fn(d: usize, f: impl Fn(&Subset) -> f64 + Send + Sync + 'static) -> SetFunctionHandle {
    SetFunctionHandle::new(FnSetFunction { d, f })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(d: usize, idx: &[usize]) -> Subset {
        Subset::from_indices(d, idx).unwrap()
    }

    fn tiny_a_h() -> SetFunctionHandle {
        make_set_cover(3, vec![vec![0], vec![0, 1], vec![0, 1, 2]], 1.0).unwrap()
    }

    #[test]
    fn set_cover_values() {
        let h = tiny_a_h();
        assert_eq!(h.evaluate(&set(3, &[1])).unwrap(), 2.0);
        assert_eq!(h.evaluate(&set(3, &[0, 1, 2])).unwrap(), 3.0);
        assert_eq!(h.evaluate(&Subset::empty(3)).unwrap(), 0.0);
        assert_eq!(h.marginal_gain(2, &set(3, &[0])).unwrap(), 2.0);
        assert_eq!(h.value_bound(), Some(3.0));
        assert_eq!(h.is_nondecreasing(), Some(true));
    }

    #[test]
    fn set_cover_rejects_bad_input() {
        assert!(make_set_cover(3, vec![], 1.0).is_err());
        assert!(make_set_cover(3, vec![vec![3]], 1.0).is_err());
        assert!(make_set_cover(3, vec![vec![0]], 0.0).is_err());
    }

    #[test]
    fn set_cover_scales_linearly() {
        let covers = vec![vec![0, 2], vec![1], vec![2, 3, 4]];
        let one = make_set_cover(5, covers.clone(), 1.0).unwrap();
        let two = make_set_cover(5, covers, 2.0).unwrap();
        for mask in 0..8u64 {
            let s = Subset::from_mask(3, mask);
            assert_eq!(two.value(&s), 2.0 * one.value(&s));
        }
    }

    #[test]
    fn tiny_c_h_cover() {
        // U^H: {1},{2},{3},{1},{1} in one-based notation.
        let h = make_set_cover(3, vec![vec![0], vec![1], vec![2], vec![0], vec![0]], 1.0).unwrap();
        assert_eq!(h.value(&set(5, &[1, 2])), 2.0);
    }

    #[test]
    fn concave_of_modular_values() {
        let one = make_concave_of_modular(vec![vec![0, 1, 2, 3]], ModularVector(vec![1.0; 4])).unwrap();
        assert!((one.value(&set(4, &[0, 1])) - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(one.value(&Subset::empty(4)), 0.0);

        let two = make_concave_of_modular(vec![vec![0, 1], vec![2]], ModularVector(vec![1.0, 3.0, 4.0]))
            .unwrap();
        let v = two.value(&set(3, &[1, 2]));
        assert!((v - (3f64.sqrt() + 2.0)).abs() < 1e-15);
        let chain = two.chain(&[1, 2, 0]);
        assert!((chain[2] - v).abs() < 1e-15);
        assert!((chain[3] - two.value(&Subset::full(3))).abs() < 1e-15);
    }

    #[test]
    fn concave_of_modular_rejects_non_partition() {
        let w = ModularVector(vec![1.0, 1.0, 1.0]);
        assert!(make_concave_of_modular(vec![vec![0, 1], vec![1, 2]], w.clone()).is_err());
        assert!(make_concave_of_modular(vec![vec![0, 1]], w.clone()).is_err());
        assert!(make_concave_of_modular(vec![vec![0, 1, 2]], ModularVector(vec![1.0, -1.0, 1.0])).is_err());
    }

    #[test]
    fn entropy_values() {
        let zeros = Arc::new(BinaryMatrix::from_rows(&[vec![0], vec![0], vec![0]]).unwrap());
        let h = make_empirical_entropy(zeros).unwrap();
        assert_eq!(h.value(&Subset::full(1)), 0.0);

        let coin = Arc::new(BinaryMatrix::from_rows(&[vec![0], vec![1], vec![1], vec![0]]).unwrap());
        let h = make_empirical_entropy(coin).unwrap();
        assert!((h.value(&Subset::full(1)) - 2f64.ln()).abs() < 1e-12);

        let four = vec![vec![0, 0], vec![0, 1], vec![1, 0], vec![1, 1]];
        let h = make_empirical_entropy(Arc::new(BinaryMatrix::from_rows(&four).unwrap())).unwrap();
        assert!((h.value(&Subset::full(2)) - 4f64.ln()).abs() < 1e-12);
        let chain = h.chain(&[1, 0]);
        assert!((chain[1] - 2f64.ln()).abs() < 1e-12);
        assert!((chain[2] - 4f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn entropy_rejects_bad_data() {
        assert!(BinaryMatrix::from_rows(&[]).is_err());
        assert!(matches!(
            BinaryMatrix::from_rows(&[vec![0, 2]]),
            Err(DsError::Parse { row: 0, col: 1, .. })
        ));
    }

    #[test]
    fn modular_values() {
        let f = make_modular(ModularVector(vec![1.0, 1.0, 1.0]));
        assert_eq!(f.value(&set(3, &[0, 2])), 2.0);
        let z = make_modular(ModularVector(vec![0.0; 4]));
        assert_eq!(z.value(&Subset::full(4)), 0.0);
        let m = make_modular(ModularVector(vec![2.0, -1.0]));
        assert_eq!(m.value(&Subset::full(2)), 1.0);
        assert_eq!(m.is_nondecreasing(), Some(false));
    }
}
