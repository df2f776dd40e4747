//! Inner solvers for the two DCA subproblems.
//!
//! The x-update minimizes the convex function
//! `Φ(x) = g_L(x) - <y, x> + (ρ/2)‖x‖²` over the box `[0,1]^d`
//! ([`pgm_solve`], or [`exact_solve`] by enumeration on small ground sets).
//! The complete variants additionally minimize the concave function
//! `φ_k(w) = <w, x^k> - g*(w)` over `∂h(x^k) = ρx^k + ∂h_L(x^k)` with
//! Frank–Wolfe ([`fw_concave_min`]).
//!
//! Lower bounds for the PGM certificate come from the fact that every
//! `s ∈ B(G)` satisfies `g_L(x) >= <s, x>` on the box, so
//! `D(s) = min_{x∈[0,1]^d} <s - y, x> + (ρ/2)‖x‖²` is a valid lower bound on
//! `min Φ`. It is evaluated at each greedy subgradient and at their running
//! weighted average (still a point of `B(G)`).

use serde::{Deserialize, Serialize};

use crate::error::{DsError, Result};
use crate::lovasz::{decreasing_order, dot, greedy_with_chain, lipschitz_bound, BasePoint, Permutation};
use crate::setfn::{DsInstance, SetFunctionHandle, Subset};

/// How often (in iterations) the best iterate is checked against the lower bound.
const CERT_INTERVAL: usize = 25;

/// Largest ground set accepted by [`exact_solve`].
pub const EXACT_MAX_D: usize = 20;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepKind {
    RhoZero,
    RhoPos,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepRule {
    /// `√d / (κ √(k+1))` when ρ = 0; when ρ > 0 the smaller of that and
    /// `2 / (ρ (k+2))`.
    Standard,
    /// A fixed step, mostly for experiments.
    Constant(f64),
}

/// Step size at iteration `k` for a box of dimension `d`.
pub fn pgm_step_size(kind: StepKind, k: usize, kappa: f64, rho: f64, d: usize) -> f64 {
    let diameter = (d as f64).sqrt();
    let convex = diameter / (kappa.max(f64::MIN_POSITIVE) * ((k + 1) as f64).sqrt());
    match kind {
        StepKind::RhoZero => convex,
        StepKind::RhoPos => convex.min(2.0 / (rho * (k + 2) as f64)),
    }
}

/// `min_{x∈[0,1]^d} g_L(x) - <linear, x> + (ρ/2)‖x‖²`.
#[derive(Clone, Debug)]
pub struct PgmProblem {
    pub g: SetFunctionHandle,
    pub linear: Vec<f64>,
    pub rho: f64,
    pub x0: Vec<f64>,
}

impl PgmProblem {
    pub fn new(g: SetFunctionHandle, linear: Vec<f64>, rho: f64, x0: Vec<f64>) -> Result<Self> {
        let d = g.ground_size();
        if linear.len() != d || x0.len() != d {
            return Err(DsError::input("PGM problem vectors have the wrong dimension"));
        }
        if !(rho >= 0.0) {
            return Err(DsError::input("rho must be nonnegative"));
        }
        Ok(PgmProblem { g, linear, rho, x0 })
    }

    fn d(&self) -> usize {
        self.linear.len()
    }

    /// `Φ(x)` together with the greedy subgradient of `g_L` used to evaluate it.
    fn eval_with_subgradient(&self, x: &[f64]) -> (f64, Vec<f64>) {
        let order = decreasing_order(x, None);
        let (s, _) = greedy_with_chain(&self.g, &order);
        (dot(&s, x) - dot(&self.linear, x) + 0.5 * self.rho * dot(x, x), s)
    }

    pub fn objective(&self, x: &[f64]) -> f64 {
        self.eval_with_subgradient(x).0
    }

    /// Minimizer of `<s - y, x> + (ρ/2)‖x‖²` over the box and its value.
    fn dual_point(&self, s: &[f64]) -> (Vec<f64>, f64) {
        let mut x = vec![0.0; s.len()];
        let mut value = 0.0;
        for i in 0..s.len() {
            let c = s[i] - self.linear[i];
            let t = if self.rho > 0.0 {
                (-c / self.rho).clamp(0.0, 1.0)
            } else if c < 0.0 {
                1.0
            } else {
                0.0
            };
            x[i] = t;
            value += c * t + 0.5 * self.rho * t * t;
        }
        (x, value)
    }

    /// Best chain prefix of `x` for `G - y` (the ρ = 0 box minimum is integral).
    fn round_candidate(&self, x: &[f64]) -> (Vec<f64>, f64) {
        let order = decreasing_order(x, None);
        let chain = self.g.chain(&order);
        let mut acc = 0.0;
        let mut best_k = 0;
        let mut best = 0.0;
        for (k, &i) in order.iter().enumerate() {
            acc += self.linear[i];
            let v = chain[k + 1] - acc;
            if v < best {
                best = v;
                best_k = k + 1;
            }
        }
        let mut out = vec![0.0; x.len()];
        for &i in &order[..best_k] {
            out[i] = 1.0;
        }
        (out, best)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PgmResult {
    pub x: Vec<f64>,
    pub objective: f64,
    /// Upper bound on `Φ(x) - min Φ`.
    pub gap_certificate: f64,
    pub iterations: usize,
    /// Whether `gap_certificate <= eps_x` was reached within budget.
    pub certified: bool,
}

fn clip_box(x: &mut [f64]) {
    for v in x.iter_mut() {
        *v = v.clamp(0.0, 1.0);
    }
}

/// Projected subgradient method with a duality-gap certificate.
///
/// Returns the best point seen (iterates, the dual-recovered point and, when
/// ρ = 0, chain roundings). Exhausting `max_iter` before the certificate drops
/// below `eps_x` yields `certified = false`, not an error.
pub fn pgm_solve(p: &PgmProblem, eps_x: f64, max_iter: usize, step: StepRule) -> Result<PgmResult> {
    let d = p.d();
    let max_iter = max_iter.max(1);
    let mut x = p.x0.clone();
    clip_box(&mut x);

    let y_norm = dot(&p.linear, &p.linear).sqrt();
    let mut kappa = lipschitz_bound(&p.g).ok().map(|k| k + y_norm);

    let mut best_x = x.clone();
    let mut best_obj = f64::INFINITY;
    let mut lower = f64::NEG_INFINITY;
    let mut s_sum = vec![0.0; d];
    let mut w_sum = 0.0;
    let mut iterations = 0;
    let mut certified = false;

    for k in 0..max_iter {
        iterations = k + 1;
        let (obj, s) = p.eval_with_subgradient(&x);
        if obj < best_obj {
            best_obj = obj;
            best_x.copy_from_slice(&x);
        }
        lower = lower.max(p.dual_point(&s).1);

        let grad: Vec<f64> = (0..d).map(|i| s[i] - p.linear[i] + p.rho * x[i]).collect();
        let kind = if p.rho > 0.0 { StepKind::RhoPos } else { StepKind::RhoZero };
        let kappa_k = *kappa.get_or_insert_with(|| dot(&grad, &grad).sqrt().max(1e-12));
        let eta = match step {
            StepRule::Standard => pgm_step_size(kind, k, kappa_k, p.rho, d),
            StepRule::Constant(c) => c,
        };
        let weight = if p.rho > 0.0 { (k + 1) as f64 } else { eta };
        for (acc, si) in s_sum.iter_mut().zip(&s) {
            *acc += weight * si;
        }
        w_sum += weight;

        if k % CERT_INTERVAL == 0 || k + 1 == max_iter {
            let s_avg: Vec<f64> = s_sum.iter().map(|v| v / w_sum).collect();
            let (x_dual, lb) = p.dual_point(&s_avg);
            lower = lower.max(lb);
            let (obj_dual, s_dual) = p.eval_with_subgradient(&x_dual);
            lower = lower.max(p.dual_point(&s_dual).1);
            if obj_dual < best_obj {
                best_obj = obj_dual;
                best_x = x_dual;
            }
            if p.rho == 0.0 {
                let (x_round, obj_round) = p.round_candidate(&best_x);
                if obj_round < best_obj {
                    best_obj = obj_round;
                    best_x = x_round;
                }
            }
            if best_obj - lower <= eps_x {
                certified = true;
                break;
            }
        }

        for i in 0..d {
            x[i] -= eta * grad[i];
        }
        clip_box(&mut x);
    }

    Ok(PgmResult {
        x: best_x,
        objective: best_obj,
        gap_certificate: (best_obj - lower).max(0.0),
        iterations,
        certified,
    })
}

/// Exact minimizer by enumerating all `2^d` sets, for oracle-sized problems.
///
/// With ρ = 0 the minimum over the box is attained at `1_X` for the
/// smallest-cardinality minimizer `X` of `G(X) - y(X)`. With ρ > 0 the
/// threshold sets `{x >= t}` of the solution minimize
/// `G(X) - y(X) + ρ t |X|`; the lower envelope of these `2^d` lines over
/// `t ∈ [0,1]` gives the solution coordinate-wise.
pub fn exact_solve(p: &PgmProblem) -> Result<PgmResult> {
    let d = p.d();
    if d > EXACT_MAX_D {
        return Err(DsError::unsupported(format!("exact inner solve limited to d <= {EXACT_MAX_D}")));
    }
    // Best value and set per cardinality.
    let mut best_val = vec![f64::INFINITY; d + 1];
    let mut best_mask = vec![0u64; d + 1];
    for mask in 0..(1u64 << d) {
        let set = Subset::from_mask(d, mask);
        let v = p.g.value(&set) - set.iter().map(|i| p.linear[i]).sum::<f64>();
        let c = mask.count_ones() as usize;
        if v < best_val[c] {
            best_val[c] = v;
            best_mask[c] = mask;
        }
    }

    let mut x = vec![0.0f64; d];
    if p.rho == 0.0 {
        let min = best_val.iter().cloned().fold(f64::INFINITY, f64::min);
        let tol = 1e-12 * (1.0 + min.abs());
        let c = (0..=d).find(|&c| best_val[c] <= min + tol).unwrap_or(0);
        for (i, xi) in x.iter_mut().enumerate() {
            if best_mask[c] >> i & 1 == 1 {
                *xi = 1.0;
            }
        }
    } else {
        // Line for cardinality c: best_val[c] + ρ c t. Just above t = 0 the
        // smallest intercept wins, ties to the smaller slope.
        let mut cur = 0;
        for c in 1..=d {
            if best_val[c] < best_val[cur] {
                cur = c;
            }
        }
        let mut t = 0.0f64;
        loop {
            let mut next: Option<(f64, usize)> = None;
            for c in 0..cur {
                let tc = (best_val[c] - best_val[cur]) / (p.rho * (cur - c) as f64);
                if next.is_none_or(|(tb, _)| tc < tb) {
                    next = Some((tc, c));
                }
            }
            let (t_end, following) = match next {
                Some((tc, c)) if tc < 1.0 => (tc.max(t), Some(c)),
                _ => (1.0, None),
            };
            for (i, xi) in x.iter_mut().enumerate() {
                if best_mask[cur] >> i & 1 == 1 {
                    *xi = (*xi).max(t_end);
                }
            }
            match following {
                Some(c) => {
                    t = t_end;
                    cur = c;
                }
                None => break,
            }
        }
    }
    let objective = p.objective(&x);
    Ok(PgmResult { x, objective, gap_certificate: 0.0, iterations: 1, certified: true })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InnerSolver {
    /// Projected subgradient with gap certificate.
    Pgm,
    /// Brute-force enumeration; `d <= 20`.
    Exact,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InnerConfig {
    pub solver: InnerSolver,
    pub eps_x: f64,
    pub max_iter: usize,
}

pub fn solve_inner(p: &PgmProblem, cfg: &InnerConfig) -> Result<PgmResult> {
    match cfg.solver {
        InnerSolver::Pgm => pgm_solve(p, cfg.eps_x, cfg.max_iter, StepRule::Standard),
        InnerSolver::Exact => exact_solve(p),
    }
}

/// A point `w = ρx + b` of `∂h(x)` with `b` a greedy vertex of `B(H)`.
#[derive(Clone, Debug, PartialEq)]
pub struct ShiftedBasePoint {
    pub w: Vec<f64>,
    pub base: BasePoint,
}

pub(crate) fn shifted(h: &SetFunctionHandle, x: &[f64], rho: f64, order: Vec<usize>) -> ShiftedBasePoint {
    let (y, _) = greedy_with_chain(h, &order);
    let w = x.iter().zip(&y).map(|(xi, yi)| rho * xi + yi).collect();
    ShiftedBasePoint { w, base: BasePoint { y, source: Permutation::new(order).expect("valid order") } }
}

/// `argmin_{w ∈ ∂h(x)} <s, w>`: greedy along the decreasing order of `x` with
/// ties broken by decreasing `-s`.
pub fn linmin_subdiff(s: &[f64], x: &[f64], h: &SetFunctionHandle, rho: f64) -> ShiftedBasePoint {
    let neg: Vec<f64> = s.iter().map(|v| -v).collect();
    shifted(h, x, rho, decreasing_order(x, Some(&neg)))
}

/// `argmax_{w ∈ ∂h(x)} <s, w>`: ties broken by decreasing `s`.
pub fn linmax_subdiff(s: &[f64], x: &[f64], h: &SetFunctionHandle, rho: f64) -> ShiftedBasePoint {
    shifted(h, x, rho, decreasing_order(x, Some(s)))
}

/// `φ_k(w) = <w, x^k> - g*(w)` for the decomposition
/// `g = g_L + δ_box + (ρ/2)‖·‖²`, `h = h_L + (ρ/2)‖·‖²`.
///
/// `g*(w) = -min_x Φ_w(x)` is only known up to the inner solver's accuracy,
/// so every value carries that slack.
pub struct PhiObjective<'a> {
    pub x_anchor: Vec<f64>,
    pub instance: &'a DsInstance,
    pub rho: f64,
    pub inner: InnerConfig,
}

#[derive(Clone, Debug)]
pub struct PhiValue {
    pub phi: f64,
    /// `x^k - x̃` with `x̃` the inner solution; an approximate supergradient.
    pub supergradient: Vec<f64>,
    pub inner: PgmResult,
}

impl PhiObjective<'_> {
    pub fn evaluate(&self, w: &[f64]) -> Result<PhiValue> {
        let p = PgmProblem::new(self.instance.g.clone(), w.to_vec(), self.rho, self.x_anchor.clone())?;
        let inner = solve_inner(&p, &self.inner)?;
        let phi = dot(w, &self.x_anchor) + inner.objective;
        let supergradient = self.x_anchor.iter().zip(&inner.x).map(|(a, b)| a - b).collect();
        Ok(PhiValue { phi, supergradient, inner })
    }
}

/// One Frank–Wolfe iterate.
#[derive(Clone, Debug)]
pub struct FwState {
    pub w: Vec<f64>,
    pub s: Vec<f64>,
    pub v: Vec<f64>,
    /// `<s, w - v>`.
    pub gap: f64,
    pub phi: f64,
    pub inner: PgmResult,
}

#[derive(Clone, Debug)]
pub struct FwOutcome {
    pub history: Vec<FwState>,
    /// Index of the iterate with the smallest `φ_k`.
    pub best: usize,
}

impl FwOutcome {
    pub fn best_state(&self) -> &FwState {
        &self.history[self.best]
    }

    pub fn gap_history(&self) -> Vec<f64> {
        self.history.iter().map(|s| s.gap).collect()
    }

    pub fn min_gap(&self) -> f64 {
        self.history.iter().map(|s| s.gap).fold(f64::INFINITY, f64::min)
    }

    pub fn all_certified(&self) -> bool {
        self.history.iter().all(|s| s.inner.certified)
    }

    pub fn max_inner_gap(&self) -> f64 {
        self.history.iter().map(|s| s.inner.gap_certificate).fold(0.0, f64::max)
    }
}

/// Frank–Wolfe with step size 1 on `φ_k` over `∂h(x^k)`, starting at `w0`.
///
/// Runs at most `budget` iterations and stops early once the FW gap drops to
/// `eps`. Each iteration costs one inner solve.
pub fn fw_concave_min(phi: &PhiObjective<'_>, w0: &[f64], eps: f64, budget: usize) -> Result<FwOutcome> {
    let mut w = w0.to_vec();
    let mut history: Vec<FwState> = Vec::new();
    for _ in 0..budget.max(1) {
        let val = phi.evaluate(&w)?;
        let v = linmin_subdiff(&val.supergradient, &phi.x_anchor, &phi.instance.h, phi.rho).w;
        let gap: f64 = (0..w.len()).map(|i| val.supergradient[i] * (w[i] - v[i])).sum();
        let done = gap <= eps;
        history.push(FwState { w: w.clone(), s: val.supergradient, v: v.clone(), gap, phi: val.phi, inner: val.inner });
        if done {
            break;
        }
        w = v;
    }
    let mut best = 0;
    for (t, st) in history.iter().enumerate() {
        if st.phi < history[best].phi {
            best = t;
        }
    }
    Ok(FwOutcome { history, best })
}
