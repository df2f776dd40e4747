//! SubSup, SupSub, ModMod, direct PGM and direct double greedy.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::inner::{pgm_step_size, solve_inner, InnerConfig, PgmProblem, StepKind};
use crate::lovasz::{decreasing_order, dot, greedy_with_chain, lipschitz_bound, lovasz_eval, round_f};
use crate::setfn::{from_fn, DsInstance, ModularVector, SetFunctionHandle, Subset};
use crate::solvers::{
    candidate_orders, check_start, drive, IterRecord, IterateState, Recorder, Segment, SolverConfig,
    SolverTrace,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundKind {
    Upper1,
    Upper2,
    Lower,
}

/// `m(X) = offset + Σ_{j∈X} weights_j`, tight at `anchor`.
#[derive(Clone, Debug, PartialEq)]
pub struct ModularBound {
    pub weights: ModularVector,
    pub offset: f64,
    pub anchor: Subset,
    pub kind: BoundKind,
}

impl ModularBound {
    pub fn value(&self, x: &Subset) -> f64 {
        self.offset + self.weights.value(x)
    }
}

/// Modular upper bounds of a submodular `F`, tight at `Y`:
///
/// - `Upper1`: `F(Y) - Σ_{j∈Y∖X} F(j | Y∖j) + Σ_{j∈X∖Y} F(j | ∅)`
/// - `Upper2`: `F(Y) - Σ_{j∈Y∖X} F(j | V∖j) + Σ_{j∈X∖Y} F(j | Y)`
///
/// `kind = Lower` is rejected with a panic; use [`modular_lower`].
pub fn modular_upper(f: &SetFunctionHandle, y: &Subset, kind: BoundKind) -> ModularBound {
    let d = f.ground_size();
    let fy = f.value(y);
    let full = Subset::full(d);
    let fv = f.value(&full);
    let empty = Subset::empty(d);
    let f0 = f.value(&empty);
    let mut w = vec![0.0; d];
    let mut offset = fy;
    for (j, wj) in w.iter_mut().enumerate() {
        if y.contains(j) {
            *wj = match kind {
                BoundKind::Upper1 => fy - f.value(&y.without(j)),
                BoundKind::Upper2 => fv - f.value(&full.without(j)),
                BoundKind::Lower => panic!("modular_upper called with Lower"),
            };
            offset -= *wj;
        } else {
            *wj = match kind {
                BoundKind::Upper1 => f.value(&empty.with(j)) - f0,
                BoundKind::Upper2 => f.value(&y.with(j)) - fy,
                BoundKind::Lower => unreachable!(),
            };
        }
    }
    ModularBound { weights: ModularVector(w), offset, anchor: y.clone(), kind }
}

/// Greedy modular lower bound along the decreasing order of `1_Y` with ties
/// broken by index.
pub fn modular_lower(f: &SetFunctionHandle, y: &Subset) -> ModularBound {
    modular_lower_along(f, y, &decreasing_order(&y.indicator(), None))
}

/// Greedy modular lower bound along `order`, whose first `|Y|` entries must be `Y`.
pub fn modular_lower_along(f: &SetFunctionHandle, y: &Subset, order: &[usize]) -> ModularBound {
    let (w, chain) = greedy_with_chain(f, order);
    ModularBound { weights: ModularVector(w), offset: chain[0], anchor: y.clone(), kind: BoundKind::Lower }
}

/// Randomized double greedy for unconstrained maximization, elements in
/// index order. Adds `i` with probability `a/(a+b)` where
/// `a = max(F(i|A), 0)` and `b = max(-F(i|B∖i), 0)`; adds when `a = b = 0`.
pub fn double_greedy_max(f: &SetFunctionHandle, seed: u64) -> Subset {
    double_greedy_with(f, &mut ChaCha8Rng::seed_from_u64(seed))
}

pub(crate) fn double_greedy_with(f: &SetFunctionHandle, rng: &mut impl Rng) -> Subset {
    let d = f.ground_size();
    let mut a_set = Subset::empty(d);
    let mut b_set = Subset::full(d);
    let mut fa = f.value(&a_set);
    let mut fb = f.value(&b_set);
    for i in 0..d {
        let a_with = a_set.with(i);
        let b_without = b_set.without(i);
        let fa_with = f.value(&a_with);
        let fb_without = f.value(&b_without);
        let a = (fa_with - fa).max(0.0);
        let b = (fb_without - fb).max(0.0);
        let add = if a + b == 0.0 { true } else { rng.gen::<f64>() < a / (a + b) };
        if add {
            a_set = a_with;
            fa = fa_with;
        } else {
            b_set = b_without;
            fb = fb_without;
        }
    }
    a_set
}

fn integral_set(x: &[f64]) -> Subset {
    Subset::from_bools(x.iter().map(|&v| v > 0.5).collect())
}

fn push_set_state(rec: &mut Recorder, inst: &DsInstance, set: &Subset, restart_flag: bool) {
    let v = inst.value(set);
    rec.push(IterRecord::state(0, v, v, set, &set.indicator(), restart_flag));
}

/// `argmin_X G(X) - y(X)` through the inner solver at ρ = 0 followed by the
/// best chain prefix of the solution for `G - y`.
fn minimize_g_minus_y(g: &SetFunctionHandle, y: &[f64], warm: &[f64], inner: &InnerConfig) -> Result<(Subset, f64, bool)> {
    let p = PgmProblem::new(g.clone(), y.to_vec(), 0.0, warm.to_vec())?;
    let r = solve_inner(&p, inner)?;
    let order = decreasing_order(&r.x, None);
    let chain = g.chain(&order);
    let mut acc = 0.0;
    let mut best_k = 0;
    let mut best = chain[0];
    for (k, &i) in order.iter().enumerate() {
        acc += y[i];
        let v = chain[k + 1] - acc;
        if v < best {
            best = v;
            best_k = k + 1;
        }
    }
    let mut s = Subset::empty(g.ground_size());
    for &i in &order[..best_k] {
        s.insert(i);
    }
    Ok((s, r.gap_certificate, r.certified))
}

/// SubSup: `X^{k+1} = argmin G(X) - y^k(X)` with `y^k` a greedy vertex of
/// `B(H)` along an order whose `|X^k|`-prefix is `X^k`. Stops on a fixed point.
pub fn subsup_run(inst: &DsInstance, cfg: &SolverConfig, x0: &Subset) -> Result<(IterateState, SolverTrace)> {
    let inner = cfg.inner_config();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    drive(inst, cfg, "subsup", &x0.indicator(), |start, rec, flag| {
        let mut set = integral_set(&start);
        push_set_state(rec, inst, &set, flag);
        let mut converged = false;
        let mut last_y = Vec::new();
        for _ in 0..cfg.max_outer {
            let x = set.indicator();
            let orders = candidate_orders(inst, &x, &set, cfg.permutation_mode, &mut rng);
            let mut best: Option<(f64, Subset, f64, bool, Vec<f64>)> = None;
            for order in orders {
                let (y, _) = greedy_with_chain(&inst.h, &order);
                let (cand, gap, cert) = minimize_g_minus_y(&inst.g, &y, &x, &inner)?;
                let v = inst.value(&cand);
                if best.as_ref().is_none_or(|b| v < b.0) {
                    best = Some((v, cand, gap, cert, y));
                }
            }
            let (v, cand, gap, cert, y) = best.expect("at least one order");
            last_y = y;
            let same = cand == set;
            let mut r = IterRecord::state(0, v, v, &cand, &cand.indicator(), false);
            r.candidate_f = Some(v);
            r.pgm_gap = Some(gap);
            r.pgm_certified = cert;
            r.accepted = !same;
            if same {
                let fx = inst.value(&set);
                r.f_disc = fx;
                r.f_cont = fx;
                rec.push(r);
                converged = true;
                break;
            }
            set = cand;
            rec.push(r);
        }
        Ok(Segment { x: set.indicator(), set, y: last_y, converged })
    })
}

/// Shared loop of SupSub and ModMod: move to the best candidate while it
/// strictly improves `F`.
fn surrogate_loop(
    inst: &DsInstance,
    cfg: &SolverConfig,
    name: &str,
    x0: &Subset,
    mut candidates: impl FnMut(&Subset, &mut ChaCha8Rng) -> Vec<Subset>,
) -> Result<(IterateState, SolverTrace)> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    drive(inst, cfg, name, &x0.indicator(), |start, rec, flag| {
        let mut set = integral_set(&start);
        let mut fx = inst.value(&set);
        push_set_state(rec, inst, &set, flag);
        let mut converged = false;
        for _ in 0..cfg.baseline_max_iter {
            let mut best: Option<(f64, Subset)> = None;
            for c in candidates(&set, &mut rng) {
                let v = inst.value(&c);
                if best.as_ref().is_none_or(|b| v < b.0) {
                    best = Some((v, c));
                }
            }
            let (v, cand) = best.expect("at least one candidate");
            let accepted = v < fx;
            if accepted {
                set = cand;
                fx = v;
            }
            let mut r = IterRecord::state(0, fx, fx, &set, &set.indicator(), false);
            r.candidate_f = Some(v);
            r.accepted = accepted;
            rec.push(r);
            if !accepted {
                converged = true;
                break;
            }
        }
        Ok(Segment { x: set.indicator(), set, y: Vec::new(), converged })
    })
}

/// SupSub: for each upper bound `m` of `G` at `X^k`, maximize `H - m` by
/// double greedy; keep the best candidate.
pub fn supsub_run(inst: &DsInstance, cfg: &SolverConfig, x0: &Subset) -> Result<(IterateState, SolverTrace)> {
    let d = inst.d();
    surrogate_loop(inst, cfg, "supsub", x0, |set, rng| {
        [BoundKind::Upper1, BoundKind::Upper2]
            .iter()
            .map(|&kind| {
                let m = modular_upper(&inst.g, set, kind);
                let h = inst.h.clone();
                let w = m.weights.0.clone();
                let target = from_fn(d, move |s| h.value(s) - s.iter().map(|i| w[i]).sum::<f64>());
                double_greedy_with(&target, rng)
            })
            .collect()
    })
}

/// ModMod: minimize `upper(G) - lower(H)` at `X^k` in closed form
/// (elements with negative combined weight).
pub fn modmod_run(inst: &DsInstance, cfg: &SolverConfig, x0: &Subset) -> Result<(IterateState, SolverTrace)> {
    let d = inst.d();
    surrogate_loop(inst, cfg, "modmod", x0, |set, rng| {
        let orders = candidate_orders(inst, &set.indicator(), set, cfg.permutation_mode, rng);
        let mut out = Vec::new();
        for order in &orders {
            let low = modular_lower_along(&inst.h, set, order);
            for kind in [BoundKind::Upper1, BoundKind::Upper2] {
                let up = modular_upper(&inst.g, set, kind);
                let pick: Vec<bool> = (0..d).map(|j| up.weights.0[j] - low.weights.0[j] < 0.0).collect();
                out.push(Subset::from_bools(pick));
            }
        }
        out
    })
}

/// Projected subgradient on `f_L` over the box for `baseline_max_iter`
/// steps; records every `pgm_max_iter` steps and returns `Round_F` of the
/// best iterate.
pub fn pgm_direct_run(inst: &DsInstance, cfg: &SolverConfig, x0: &[f64]) -> Result<(IterateState, SolverTrace)> {
    check_start(inst, x0)?;
    let cfg = SolverConfig { localmin_restart: false, ..cfg.clone() };
    let f = inst.f().clone();
    let d = inst.d();
    let kappa = match (lipschitz_bound(&inst.g), lipschitz_bound(&inst.h)) {
        (Ok(a), Ok(b)) => Some(a + b),
        _ => None,
    };
    let block = cfg.pgm_max_iter.max(1);
    drive(inst, &cfg, "pgm", x0, |start, rec, flag| {
        let mut x = start;
        let mut best_x = x.clone();
        let mut best_val = lovasz_eval(&f, &x);
        let record = |rec: &mut Recorder, best_x: &[f64], best_val: f64, flag: bool| -> Result<()> {
            let r = round_f(&f, best_x)?;
            rec.push(IterRecord::state(0, r.value, best_val, &r.set, best_x, flag));
            Ok(())
        };
        record(rec, &best_x, best_val, flag)?;
        let mut kappa_t = kappa;
        for t in 0..cfg.baseline_max_iter {
            let order = decreasing_order(&x, None);
            let (s, _) = greedy_with_chain(&f, &order);
            let val = dot(&s, &x);
            if val < best_val {
                best_val = val;
                best_x.copy_from_slice(&x);
            }
            let k = *kappa_t.get_or_insert_with(|| dot(&s, &s).sqrt().max(1e-12));
            let eta = pgm_step_size(StepKind::RhoZero, t, k, 0.0, d);
            for i in 0..d {
                x[i] = (x[i] - eta * s[i]).clamp(0.0, 1.0);
            }
            if (t + 1) % block == 0 {
                record(rec, &best_x, best_val, false)?;
            }
        }
        if lovasz_eval(&f, &x) < best_val {
            best_x.copy_from_slice(&x);
        }
        let r = round_f(&f, &best_x)?;
        Ok(Segment { x: best_x, set: r.set, y: Vec::new(), converged: true })
    })
}

/// Double greedy applied to `-F` directly.
pub fn greedy_direct_run(inst: &DsInstance, cfg: &SolverConfig) -> Result<(IterateState, SolverTrace)> {
    let cfg = SolverConfig { localmin_restart: false, ..cfg.clone() };
    let d = inst.d();
    let f = inst.f().clone();
    let neg = from_fn(d, move |s| -f.value(s));
    drive(inst, &cfg, "greedy", &vec![0.0; d], |_, rec, flag| {
        push_set_state(rec, inst, &Subset::empty(d), flag);
        let set = double_greedy_max(&neg, cfg.seed);
        push_set_state(rec, inst, &set, false);
        Ok(Segment { x: set.indicator(), set, y: Vec::new(), converged: true })
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inner::InnerSolver;
    use crate::setfn::{make_modular, make_set_cover};

    fn tiny_a() -> DsInstance {
        let g = make_set_cover(3, vec![vec![0], vec![1], vec![2]], 1.0).unwrap();
        let h = make_set_cover(3, vec![vec![0], vec![0, 1], vec![0, 1, 2]], 1.0).unwrap();
        DsInstance::new(g, h).unwrap()
    }

    fn set(d: usize, idx: &[usize]) -> Subset {
        Subset::from_indices(d, idx).unwrap()
    }

    #[test]
    fn upper_bound_examples() {
        let h = tiny_a().h;
        let m = modular_upper(&h, &set(3, &[0]), BoundKind::Upper1);
        assert_eq!(m.value(&set(3, &[0, 1])), 3.0);
        let m0 = modular_upper(&h, &Subset::empty(3), BoundKind::Upper1);
        assert_eq!(m0.weights.0, vec![1.0, 2.0, 3.0]);
        assert_eq!(m0.offset, 0.0);
        let w = make_modular(ModularVector(vec![1.0, -2.0, 0.5]));
        for kind in [BoundKind::Upper1, BoundKind::Upper2] {
            let m = modular_upper(&w, &set(3, &[1]), kind);
            for mask in 0..8 {
                let s = Subset::from_mask(3, mask);
                assert!((m.value(&s) - w.value(&s)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn lower_bound_examples() {
        let h = tiny_a().h;
        let m = modular_lower_along(&h, &set(3, &[2]), &[2, 0, 1]);
        assert_eq!(m.weights.0, vec![0.0, 0.0, 3.0]);
        let full = modular_lower(&h, &Subset::full(3));
        assert_eq!(full.value(&Subset::full(3)), 3.0);
    }

    #[test]
    fn double_greedy_examples() {
        let m = make_modular(ModularVector(vec![1.0, -2.0, 3.0]));
        for seed in 0..5 {
            assert_eq!(double_greedy_max(&m, seed), set(3, &[0, 2]));
        }
        assert_eq!(double_greedy_max(&from_fn(4, |_| 0.0), 1), Subset::full(4));
    }

    #[test]
    fn subsup_on_tiny_a() {
        let inst = tiny_a();
        let cfg = SolverConfig { inner_solver: InnerSolver::Exact, ..SolverConfig::default() };
        let (state, _) = subsup_run(&inst, &cfg, &Subset::empty(3)).unwrap();
        assert_eq!(state.x_rounded, Subset::empty(3));
        let cfg = SolverConfig { localmin_restart: true, ..cfg };
        let (state, _) = subsup_run(&inst, &cfg, &Subset::empty(3)).unwrap();
        assert_eq!(state.x_rounded, set(3, &[2]));
    }

    #[test]
    fn modular_instances_one_step() {
        let g = make_modular(ModularVector(vec![1.0, 0.2, 3.0, 0.5]));
        let h = make_modular(ModularVector(vec![0.5, 1.0, 1.0, 2.0]));
        let inst = DsInstance::new(g, h).unwrap();
        let cfg = SolverConfig::default();
        for run in [modmod_run, supsub_run] {
            let (state, _) = run(&inst, &cfg, &Subset::empty(4)).unwrap();
            assert_eq!(state.x_rounded, set(4, &[1, 3]));
        }
    }

    #[test]
    fn pgm_direct_tiny_a() {
        let inst = tiny_a();
        let cfg = SolverConfig { baseline_max_iter: 2000, ..SolverConfig::default() };
        let (state, trace) = pgm_direct_run(&inst, &cfg, &[0.5; 3]).unwrap();
        assert!(state.f_disc <= 0.0);
        assert_eq!(trace.records.len(), 3);
    }
}
