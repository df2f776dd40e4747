//! DCA, DCAR, ADCA, ADCAR, CDCA, CDCAR and the local-minimality restart wrapper.
//!
//! All variants use the decomposition `g = g_L + δ_box + (ρ/2)‖·‖²`,
//! `h = h_L + (ρ/2)‖·‖²`. The plain step takes `y^k = ρx^k + greedy(H, σ)`
//! for a decreasing order `σ` of `x^k` and solves the box problem
//! `min g_L(x) - <y^k, x> + (ρ/2)‖x‖²`. The complete step replaces the choice
//! of `y^k` by a Frank–Wolfe minimization of `φ_k` over `ρx^k + ∂h_L(x^k)`.
//! Rounded variants replace `x^{k+1}` by `1_{Round_F(x̃^{k+1})}`.
//!
//! `f(x)` below always means `f_L(x) = g_L(x) - h_L(x)`; the ρ-terms cancel.

use std::collections::VecDeque;
use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{DsError, Result};
use crate::inner::{
    fw_concave_min, shifted, solve_inner, InnerConfig, InnerSolver, PgmProblem, PhiObjective,
};
use crate::lovasz::{decreasing_order, lovasz_eval, round_f};
use crate::oracle::is_local_min;
use crate::setfn::{DsInstance, Subset};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PermutationMode {
    /// Ties broken by index.
    Single,
    /// Random, decreasing `G(i | X∖i)`, decreasing `F(i | X∖i)`.
    Heuristic3,
    /// One order per element, moving it to the boundary of its tie block.
    AllD,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    pub rho: f64,
    pub eps_stop: f64,
    pub eps_x: f64,
    /// Outer iterations per run segment; for the complete variants each FW
    /// iteration also counts.
    pub max_outer: usize,
    pub fw_budget: usize,
    pub permutation_mode: PermutationMode,
    pub round_each_iter: bool,
    pub accelerate: bool,
    pub accel_q: usize,
    pub localmin_restart: bool,
    pub seed: u64,
    pub inner_solver: InnerSolver,
    pub pgm_max_iter: usize,
    pub fw_tol: f64,
    /// Iteration cap for SupSub, ModMod and direct PGM.
    pub baseline_max_iter: usize,
    pub max_restarts: usize,
    /// Record wall-clock times; off by default so traces are reproducible.
    pub timing: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            rho: 0.0,
            eps_stop: 1e-6,
            eps_x: 1e-6,
            max_outer: 30,
            fw_budget: 10,
            permutation_mode: PermutationMode::Single,
            round_each_iter: false,
            accelerate: false,
            accel_q: 5,
            localmin_restart: false,
            seed: 0,
            inner_solver: InnerSolver::Pgm,
            pgm_max_iter: 1000,
            fw_tol: 1e-6,
            baseline_max_iter: 30_000,
            max_restarts: 100,
            timing: false,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.rho >= 0.0) || !self.rho.is_finite() {
            return Err(DsError::input("rho must be a finite nonnegative number"));
        }
        if !(self.eps_x >= 0.0) {
            return Err(DsError::input("eps_x must be nonnegative"));
        }
        if self.eps_stop.is_nan() || self.fw_tol.is_nan() {
            return Err(DsError::input("tolerances must not be NaN"));
        }
        if self.accel_q == 0 {
            return Err(DsError::input("accel_q must be at least 1"));
        }
        Ok(())
    }

    pub fn inner_config(&self) -> InnerConfig {
        InnerConfig { solver: self.inner_solver, eps_x: self.eps_x, max_iter: self.pgm_max_iter }
    }

    /// The ε′ certificate for this configuration on a ground set of size `d`.
    pub fn cert(&self, d: usize) -> CertBound {
        cert_bound(self.rho, d, self.eps_stop.max(0.0), self.eps_x)
    }
}

/// The ε′ certificate and the constants of the approximate descent inequality
/// `f(x^k) - f(x^{k+1}) >= (ρ̄/2)‖x^k - x^{k+1}‖² - ε̄`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CertBound {
    pub rho: f64,
    pub d: usize,
    pub eps: f64,
    pub eps_x: f64,
    pub eps_y: f64,
    pub t_x: f64,
    pub t_y: f64,
    pub eps_prime: f64,
    pub rho_bar: f64,
    pub eps_bar: f64,
}

/// `cert_bound_with` at `t_x = t_y = 1/2`, `ε_y = 0`.
pub fn cert_bound(rho: f64, d: usize, eps: f64, eps_x: f64) -> CertBound {
    cert_bound_with(rho, d, eps, eps_x, 0.0, 0.5, 0.5)
}

pub fn cert_bound_with(rho: f64, d: usize, eps: f64, eps_x: f64, eps_y: f64, t_x: f64, t_y: f64) -> CertBound {
    let slack = eps + eps_x;
    let half = rho * d as f64 / 2.0;
    let eps_prime = if slack <= half { (2.0 * rho * d as f64 * slack).sqrt() } else { half + slack };
    CertBound {
        rho,
        d,
        eps,
        eps_x,
        eps_y,
        t_x,
        t_y,
        eps_prime,
        rho_bar: rho * (2.0 - t_x - t_y),
        eps_bar: eps_x / t_x + eps_y / t_y,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Dca,
    Dcar,
    Adca,
    Adcar,
    Cdca,
    Cdcar,
    Subsup,
    Supsub,
    Modmod,
    Pgm,
    Greedy,
}

impl Method {
    pub const ALL: [Method; 11] = [
        Method::Dca,
        Method::Dcar,
        Method::Adca,
        Method::Adcar,
        Method::Cdca,
        Method::Cdcar,
        Method::Subsup,
        Method::Supsub,
        Method::Modmod,
        Method::Pgm,
        Method::Greedy,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Dca => "dca",
            Method::Dcar => "dcar",
            Method::Adca => "adca",
            Method::Adcar => "adcar",
            Method::Cdca => "cdca",
            Method::Cdcar => "cdcar",
            Method::Subsup => "subsup",
            Method::Supsub => "supsub",
            Method::Modmod => "modmod",
            Method::Pgm => "pgm",
            Method::Greedy => "greedy",
        }
    }

    /// DCA-family methods depend on ρ; baselines do not.
    pub fn is_dc_family(self) -> bool {
        self.variant().is_some()
    }

    fn variant(self) -> Option<Variant> {
        let v = |complete, round, accelerate| Some(Variant { complete, round, accelerate });
        match self {
            Method::Dca => v(false, false, false),
            Method::Dcar => v(false, true, false),
            Method::Adca => v(false, false, true),
            Method::Adcar => v(false, true, true),
            Method::Cdca => v(true, false, false),
            Method::Cdcar => v(true, true, false),
            _ => None,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = DsError;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        Method::ALL
            .iter()
            .copied()
            .find(|m| m.name() == s)
            .ok_or_else(|| DsError::input(format!("unknown method '{s}'")))
    }
}

#[derive(Clone, Copy, Debug)]
struct Variant {
    complete: bool,
    round: bool,
    accelerate: bool,
}

/// One trace line. The state fields (`F_disc`, `f_cont`, `set`) describe the
/// iterate after the step; the step fields describe the attempted step, which
/// is not adopted when it fails the stopping test.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterRecord {
    pub k: usize,
    #[serde(rename = "F_disc")]
    pub f_disc: f64,
    pub f_cont: f64,
    /// `f(base) - f(x̃)` where `base` is `x^k` or the extrapolated point.
    pub step_decrease: Option<f64>,
    /// `‖base - x̃‖²`.
    pub step_sq: Option<f64>,
    /// `F` of the candidate set produced by the step.
    #[serde(rename = "candidate_F")]
    pub candidate_f: Option<f64>,
    pub accepted: bool,
    pub extrapolated: bool,
    pub pgm_gap: Option<f64>,
    pub pgm_certified: bool,
    pub fw_gaps: Vec<f64>,
    pub fw_gap_accepted: Option<f64>,
    pub fw_iters: usize,
    pub wall_ms: f64,
    pub restart_flag: bool,
    pub set: Vec<usize>,
    pub x: Vec<f64>,
}

impl IterRecord {
    pub(crate) fn state(k: usize, f_disc: f64, f_cont: f64, set: &Subset, x: &[f64], restart_flag: bool) -> Self {
        IterRecord {
            k,
            f_disc,
            f_cont,
            step_decrease: None,
            step_sq: None,
            candidate_f: None,
            accepted: true,
            extrapolated: false,
            pgm_gap: None,
            pgm_certified: true,
            fw_gaps: Vec::new(),
            fw_gap_accepted: None,
            fw_iters: 0,
            wall_ms: 0.0,
            restart_flag,
            set: set.indices(),
            x: x.to_vec(),
        }
    }
}

/// Run-level outcome stored as the last trace line.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceOutcome {
    pub method: String,
    pub rho: f64,
    pub seed: u64,
    pub d: usize,
    pub final_set: Vec<usize>,
    pub final_value: f64,
    pub final_f_cont: f64,
    pub certificate: CertBound,
    /// Whether every inner solve met its tolerance.
    pub inner_certified: bool,
    /// Whether the last segment stopped on its stopping test (not the budget).
    pub converged: bool,
    pub restarts: usize,
    pub fw_iterations: usize,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolverTrace {
    pub records: Vec<IterRecord>,
    pub outcome: TraceOutcome,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
enum TraceLine {
    Iter(IterRecord),
    Final(TraceOutcome),
}

impl SolverTrace {
    pub fn discrete_values(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.f_disc).collect()
    }

    pub fn continuous_values(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.f_cont).collect()
    }

    /// JSON-lines: one `iter` line per record, then one `final` line.
    pub fn to_jsonl(&self) -> Result<String> {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&serde_json::to_string(&TraceLine::Iter(r.clone()))?);
            out.push('\n');
        }
        out.push_str(&serde_json::to_string(&TraceLine::Final(self.outcome.clone()))?);
        out.push('\n');
        Ok(out)
    }

    /// Inverse of [`SolverTrace::to_jsonl`]; `path` only labels errors.
    pub fn from_jsonl(text: &str, path: &Path) -> Result<Self> {
        let corrupt = |line: usize, msg: String| DsError::CorruptTrace { path: path.to_path_buf(), line, msg };
        let mut records = Vec::new();
        let mut outcome = None;
        for (n, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            if outcome.is_some() {
                return Err(corrupt(n + 1, "content after final line".into()));
            }
            match serde_json::from_str::<TraceLine>(line) {
                Ok(TraceLine::Iter(r)) => records.push(r),
                Ok(TraceLine::Final(o)) => outcome = Some(o),
                Err(e) => return Err(corrupt(n + 1, e.to_string())),
            }
        }
        let line_count = text.lines().count();
        let outcome = outcome.ok_or_else(|| corrupt(line_count.max(1), "missing final line".into()))?;
        Ok(SolverTrace { records, outcome })
    }
}

/// The final iterate of a run.
#[derive(Clone, Debug, PartialEq)]
pub struct IterateState {
    pub x: Vec<f64>,
    pub x_rounded: Subset,
    /// The last `y^k` used (`ρx^k` plus a point of `∂h_L(x^k)`).
    pub y: Vec<f64>,
    pub k: usize,
    pub f_cont: f64,
    pub f_disc: f64,
}

/// Trace accumulation shared by the DCA family and the baselines.
pub(crate) struct Recorder {
    pub records: Vec<IterRecord>,
    pub inner_certified: bool,
    pub fw_iterations: usize,
    timing: bool,
    start: Instant,
}

impl Recorder {
    pub fn new(timing: bool) -> Self {
        Recorder { records: Vec::new(), inner_certified: true, fw_iterations: 0, timing, start: Instant::now() }
    }

    pub fn next_k(&self) -> usize {
        self.records.len()
    }

    pub fn push(&mut self, mut r: IterRecord) {
        r.k = self.records.len();
        r.wall_ms = if self.timing { self.start.elapsed().as_secs_f64() * 1e3 } else { 0.0 };
        if !r.pgm_certified {
            self.inner_certified = false;
        }
        self.fw_iterations += r.fw_iters;
        self.records.push(r);
    }
}

/// Result of running one algorithm from one start point until it stops.
pub(crate) struct Segment {
    pub x: Vec<f64>,
    pub set: Subset,
    pub y: Vec<f64>,
    pub converged: bool,
}

pub(crate) fn check_start(inst: &DsInstance, x0: &[f64]) -> Result<()> {
    if x0.len() != inst.d() {
        return Err(DsError::input(format!("start point has length {}, expected {}", x0.len(), inst.d())));
    }
    if x0.iter().any(|v| !(0.0..=1.0).contains(v)) {
        return Err(DsError::input("start point must lie in [0,1]^d"));
    }
    Ok(())
}

/// Runs `segment` from `x0`, restarting from the best single-flip neighbour of
/// the returned set while that set is not an ε′-local minimum and
/// `cfg.localmin_restart` is on.
pub(crate) fn drive(
    inst: &DsInstance,
    cfg: &SolverConfig,
    method: &str,
    x0: &[f64],
    mut segment: impl FnMut(Vec<f64>, &mut Recorder, bool) -> Result<Segment>,
) -> Result<(IterateState, SolverTrace)> {
    cfg.validate()?;
    check_start(inst, x0)?;
    let cert = cfg.cert(inst.d());
    let mut rec = Recorder::new(cfg.timing);
    let mut restarts = 0;
    let mut seg = segment(x0.to_vec(), &mut rec, false)?;
    while cfg.localmin_restart && seg.converged && restarts < cfg.max_restarts {
        let check = is_local_min(inst.f(), &seg.set, cert.eps_prime)?;
        if check.holds {
            break;
        }
        let f = inst.f();
        let mut best = seg.set.flipped(0);
        let mut best_val = f.value(&best);
        for i in 1..inst.d() {
            let cand = seg.set.flipped(i);
            let v = f.value(&cand);
            if v < best_val {
                best = cand;
                best_val = v;
            }
        }
        restarts += 1;
        seg = segment(best.indicator(), &mut rec, true)?;
    }

    let f = inst.f();
    let f_disc = f.value(&seg.set);
    let f_cont = lovasz_eval(f, &seg.x);
    let state = IterateState {
        x: seg.x,
        x_rounded: seg.set.clone(),
        y: seg.y,
        k: rec.records.len().saturating_sub(1),
        f_cont,
        f_disc,
    };
    let outcome = TraceOutcome {
        method: method.to_string(),
        rho: cfg.rho,
        seed: cfg.seed,
        d: inst.d(),
        final_set: seg.set.indices(),
        final_value: f_disc,
        final_f_cont: f_cont,
        certificate: cert,
        inner_certified: rec.inner_certified,
        converged: seg.converged,
        restarts,
        fw_iterations: rec.fw_iterations,
        error: None,
    };
    Ok((state, SolverTrace { records: rec.records, outcome }))
}

/// Tie-breaking orders of `x` for the chosen permutation mode, deduplicated.
///
/// `set` is the current set `X^k` used for the marginal-gain heuristics.
pub fn candidate_orders(
    inst: &DsInstance,
    x: &[f64],
    set: &Subset,
    mode: PermutationMode,
    rng: &mut impl Rng,
) -> Vec<Vec<usize>> {
    let d = x.len();
    let mut orders: Vec<Vec<usize>> = Vec::new();
    let mut push = |o: Vec<usize>| {
        if !orders.contains(&o) {
            orders.push(o);
        }
    };
    match mode {
        PermutationMode::Single => push(decreasing_order(x, None)),
        PermutationMode::Heuristic3 => {
            let random: Vec<f64> = (0..d).map(|_| rng.gen::<f64>()).collect();
            let leave_one = |f: &crate::setfn::SetFunctionHandle| -> Vec<f64> {
                let base = f.value(set);
                (0..d)
                    .map(|i| {
                        if set.contains(i) {
                            base - f.value(&set.without(i))
                        } else {
                            f.value(&set.with(i)) - base
                        }
                    })
                    .collect()
            };
            push(decreasing_order(x, Some(&random)));
            push(decreasing_order(x, Some(&leave_one(&inst.g))));
            push(decreasing_order(x, Some(&leave_one(inst.f()))));
        }
        PermutationMode::AllD => {
            for j in 0..d {
                let mut tie = vec![0.0; d];
                tie[j] = if x[j] >= 0.5 { -1.0 } else { 1.0 };
                push(decreasing_order(x, Some(&tie)));
            }
        }
    }
    orders
}

/// Nesterov-type extrapolation with a non-monotone acceptance test.
///
/// `z = x^k + ((t_k - 1)/t_{k+1})(x^k - x^{k-1})` clipped to the box, with
/// `t_1 = 1` and `t_{k+1} = (1 + √(1 + 4t_k²))/2`. Returns `z` when
/// `F(Round_F(z))` is at most the largest of the last `q` values in
/// `history`, and `x^k` otherwise.
pub fn adca_extrapolate(
    x_k: &[f64],
    x_km1: &[f64],
    k: usize,
    q: usize,
    history: &[f64],
    inst: &DsInstance,
) -> Result<Vec<f64>> {
    if k == 0 {
        return Err(DsError::input("extrapolation needs k >= 1"));
    }
    if x_k.len() != inst.d() || x_km1.len() != inst.d() {
        return Err(DsError::input("extrapolation points have the wrong dimension"));
    }
    let next_t = |t: f64| (1.0 + (1.0 + 4.0 * t * t).sqrt()) / 2.0;
    let mut t = 1.0;
    for _ in 1..k {
        t = next_t(t);
    }
    let coef = (t - 1.0) / next_t(t);
    let z: Vec<f64> =
        x_k.iter().zip(x_km1).map(|(a, b)| (a + coef * (a - b)).clamp(0.0, 1.0)).collect();
    if z == x_k {
        return Ok(z);
    }
    let window = &history[history.len().saturating_sub(q.max(1))..];
    let threshold = window.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if round_f(inst.f(), &z)?.value <= threshold {
        Ok(z)
    } else {
        Ok(x_k.to_vec())
    }
}

struct Step {
    x_tilde: Vec<f64>,
    y: Vec<f64>,
    pgm_gap: f64,
    pgm_certified: bool,
    fw_gaps: Vec<f64>,
    fw_gap_accepted: Option<f64>,
    fw_iters: usize,
}

fn plain_step(
    inst: &DsInstance,
    cfg: &SolverConfig,
    round: bool,
    base: &[f64],
    orders: Vec<Vec<usize>>,
) -> Result<Step> {
    let inner = cfg.inner_config();
    let mut best: Option<(f64, Step)> = None;
    let single = orders.len() == 1;
    for order in orders {
        let y = shifted(&inst.h, base, cfg.rho, order).w;
        let p = PgmProblem::new(inst.g.clone(), y.clone(), cfg.rho, base.to_vec())?;
        let r = solve_inner(&p, &inner)?;
        let score = if single {
            0.0
        } else if round || cfg.permutation_mode == PermutationMode::Heuristic3 {
            round_f(inst.f(), &r.x)?.value
        } else {
            lovasz_eval(inst.f(), &r.x)
        };
        if best.as_ref().is_none_or(|(s, _)| score < *s) {
            let step = Step {
                x_tilde: r.x,
                y,
                pgm_gap: r.gap_certificate,
                pgm_certified: r.certified,
                fw_gaps: Vec::new(),
                fw_gap_accepted: None,
                fw_iters: 0,
            };
            best = Some((score, step));
        }
    }
    Ok(best.expect("at least one candidate order").1)
}

fn complete_step(inst: &DsInstance, cfg: &SolverConfig, base: &[f64], orders: Vec<Vec<usize>>) -> Result<Step> {
    let phi = PhiObjective { x_anchor: base.to_vec(), instance: inst, rho: cfg.rho, inner: cfg.inner_config() };
    let starts: Vec<Vec<f64>> = orders.into_iter().map(|o| shifted(&inst.h, base, cfg.rho, o).w).collect();
    let mut w0 = starts[0].clone();
    if starts.len() > 1 {
        let mut best = f64::INFINITY;
        for w in &starts {
            let v = phi.evaluate(w)?.phi;
            if v < best {
                best = v;
                w0 = w.clone();
            }
        }
    }
    let out = fw_concave_min(&phi, &w0, cfg.fw_tol, cfg.fw_budget)?;
    let best = out.best_state();
    Ok(Step {
        x_tilde: best.inner.x.clone(),
        y: best.w.clone(),
        pgm_gap: out.max_inner_gap(),
        pgm_certified: out.all_certified(),
        fw_gaps: out.gap_history(),
        fw_gap_accepted: Some(best.gap),
        fw_iters: out.history.len(),
    })
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn dc_segment(
    inst: &DsInstance,
    cfg: &SolverConfig,
    v: Variant,
    x0: Vec<f64>,
    rec: &mut Recorder,
    rng: &mut ChaCha8Rng,
    restart_flag: bool,
) -> Result<Segment> {
    let f = inst.f();
    // Current iterate, its set and values.
    let (mut x, mut set) = if v.round {
        let s = round_f(f, &x0)?.set;
        (s.indicator(), s)
    } else {
        let s = round_f(f, &x0)?.set;
        (x0, s)
    };
    let mut big_f = f.value(&set);
    let mut small_f = lovasz_eval(f, &x);
    rec.push(IterRecord::state(rec.next_k(), big_f, small_f, &set, &x, restart_flag));

    let mut prev_x = x.clone();
    let mut history: VecDeque<f64> = VecDeque::from([big_f]);
    let mut last_y = Vec::new();
    let mut steps_taken = 0usize;
    let mut budget_used = 0usize;
    let mut suppress_extrapolation = false;
    let mut converged = false;

    while budget_used < cfg.max_outer {
        let (base, extrapolated) = if v.accelerate && steps_taken >= 1 && !suppress_extrapolation {
            let hist: Vec<f64> = history.iter().copied().collect();
            let z = adca_extrapolate(&x, &prev_x, steps_taken, cfg.accel_q, &hist, inst)?;
            let moved = z != x;
            (z, moved)
        } else {
            (x.clone(), false)
        };
        suppress_extrapolation = false;
        let base_set = if extrapolated { round_f(f, &base)?.set } else { set.clone() };
        let orders = candidate_orders(inst, &base, &base_set, cfg.permutation_mode, rng);
        let step = if v.complete {
            complete_step(inst, cfg, &base, orders)?
        } else {
            plain_step(inst, cfg, v.round, &base, orders)?
        };
        budget_used += 1 + if v.complete { step.fw_iters } else { 0 };

        let f_tilde = lovasz_eval(f, &step.x_tilde);
        let cand_round = round_f(f, &step.x_tilde)?;
        let (next_x, next_set, next_small) = if v.round {
            let s = cand_round.set.clone();
            let f_s = cand_round.value;
            (s.indicator(), s, f_s)
        } else {
            let s = cand_round.set.clone();
            (step.x_tilde.clone(), s, f_tilde)
        };
        let next_big = f.value(&next_set);
        let decrease = if v.round { big_f - next_big } else { small_f - next_small };
        let accepted = decrease > cfg.eps_stop;

        let f_base = if extrapolated { lovasz_eval(f, &base) } else { small_f };
        let mut r = IterRecord::state(0, big_f, small_f, &set, &x, false);
        r.step_decrease = Some(f_base - f_tilde);
        r.step_sq = Some(sq_dist(&base, &step.x_tilde));
        r.candidate_f = Some(next_big);
        r.accepted = accepted;
        r.extrapolated = extrapolated;
        r.pgm_gap = Some(step.pgm_gap);
        r.pgm_certified = step.pgm_certified;
        r.fw_gap_accepted = step.fw_gap_accepted;
        r.fw_iters = step.fw_iters;
        r.fw_gaps = step.fw_gaps;
        last_y = step.y;

        if accepted {
            prev_x = std::mem::replace(&mut x, next_x);
            set = next_set;
            big_f = next_big;
            small_f = next_small;
            r.f_disc = big_f;
            r.f_cont = small_f;
            r.set = set.indices();
            r.x = x.clone();
            history.push_back(big_f);
            if history.len() > cfg.accel_q {
                history.pop_front();
            }
            steps_taken += 1;
            rec.push(r);
        } else if extrapolated {
            suppress_extrapolation = true;
            rec.push(r);
        } else {
            rec.push(r);
            converged = true;
            break;
        }
    }
    Ok(Segment { x, set, y: last_y, converged })
}

fn run_variant(inst: &DsInstance, cfg: &SolverConfig, v: Variant, name: &str, x0: &[f64]) -> Result<(IterateState, SolverTrace)> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    drive(inst, cfg, name, x0, |start, rec, flag| dc_segment(inst, cfg, v, start, rec, &mut rng, flag))
}

/// Approximate DCA. Honors `round_each_iter` and `accelerate`, so it also
/// covers DCAR, ADCA and ADCAR.
pub fn dca_run(inst: &DsInstance, cfg: &SolverConfig, x0: &[f64]) -> Result<(IterateState, SolverTrace)> {
    let v = Variant { complete: false, round: cfg.round_each_iter, accelerate: cfg.accelerate };
    let name = match (v.round, v.accelerate) {
        (false, false) => "dca",
        (true, false) => "dcar",
        (false, true) => "adca",
        (true, true) => "adcar",
    };
    run_variant(inst, cfg, v, name, x0)
}

/// DCA with rounding at every iteration, started from a set.
pub fn dcar_run(inst: &DsInstance, cfg: &SolverConfig, x0: &Subset) -> Result<(IterateState, SolverTrace)> {
    let cfg = SolverConfig { round_each_iter: true, ..cfg.clone() };
    dca_run(inst, &cfg, &x0.indicator())
}

/// Complete DCA. Honors `round_each_iter`.
pub fn cdca_run(inst: &DsInstance, cfg: &SolverConfig, x0: &[f64]) -> Result<(IterateState, SolverTrace)> {
    let v = Variant { complete: true, round: cfg.round_each_iter, accelerate: false };
    let name = if v.round { "cdcar" } else { "cdca" };
    run_variant(inst, cfg, v, name, x0)
}

pub fn cdcar_run(inst: &DsInstance, cfg: &SolverConfig, x0: &Subset) -> Result<(IterateState, SolverTrace)> {
    let cfg = SolverConfig { round_each_iter: true, ..cfg.clone() };
    cdca_run(inst, &cfg, &x0.indicator())
}

/// Runs any DCA-family method with the restart wrapper forced on.
pub fn localmin_restart_wrap(
    method: Method,
    inst: &DsInstance,
    cfg: &SolverConfig,
    x0: &[f64],
) -> Result<(IterateState, SolverTrace)> {
    let cfg = SolverConfig { localmin_restart: true, ..cfg.clone() };
    run_method(method, inst, &cfg, x0)
}

/// Dispatches on `method`; the method's own switches override `cfg`.
pub fn run_method(method: Method, inst: &DsInstance, cfg: &SolverConfig, x0: &[f64]) -> Result<(IterateState, SolverTrace)> {
    use crate::baselines;
    if let Some(v) = method.variant() {
        return run_variant(inst, cfg, v, method.name(), x0);
    }
    match method {
        Method::Subsup => baselines::subsup_run(inst, cfg, &round_start(inst, x0)?),
        Method::Supsub => baselines::supsub_run(inst, cfg, &round_start(inst, x0)?),
        Method::Modmod => baselines::modmod_run(inst, cfg, &round_start(inst, x0)?),
        Method::Pgm => baselines::pgm_direct_run(inst, cfg, x0),
        Method::Greedy => baselines::greedy_direct_run(inst, cfg),
        _ => unreachable!("dc-family methods handled above"),
    }
}

fn round_start(inst: &DsInstance, x0: &[f64]) -> Result<Subset> {
    check_start(inst, x0)?;
    Ok(round_f(inst.f(), x0)?.set)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::setfn::{make_modular, make_set_cover, ModularVector};

    fn tiny_a() -> DsInstance {
        let g = make_set_cover(3, vec![vec![0], vec![1], vec![2]], 1.0).unwrap();
        let h = make_set_cover(3, vec![vec![0], vec![0, 1], vec![0, 1, 2]], 1.0).unwrap();
        DsInstance::new(g, h).unwrap()
    }

    fn exact(rho: f64) -> SolverConfig {
        SolverConfig { rho, inner_solver: InnerSolver::Exact, ..SolverConfig::default() }
    }

    #[test]
    fn cert_bound_examples() {
        let c = cert_bound(0.0, 5, 1e-3, 2e-3);
        assert!((c.eps_prime - 3e-3).abs() < 1e-18);
        assert_eq!(cert_bound(2.0, 4, 0.5, 0.5).eps_prime, 4.0);
        let edge = cert_bound(1.0, 4, 1.0, 1.0);
        assert_eq!(edge.eps_prime, 4.0);
        assert_eq!(edge.rho_bar, 1.0);
        assert_eq!(edge.eps_bar, 2.0);
    }

    #[test]
    fn config_defaults_and_json() {
        let c = SolverConfig::default();
        assert_eq!((c.eps_stop, c.max_outer, c.fw_budget, c.accel_q), (1e-6, 30, 10, 5));
        let parsed: SolverConfig =
            serde_json::from_str(r#"{"rho": 0.1, "permutation_mode": "all_d"}"#).unwrap();
        assert_eq!(parsed.rho, 0.1);
        assert_eq!(parsed.permutation_mode, PermutationMode::AllD);
        assert!(serde_json::from_str::<SolverConfig>(r#"{"rhoo": 1}"#).is_err());
        let back: SolverConfig = serde_json::from_str(&serde_json::to_string(&c).unwrap()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.name().parse::<Method>().unwrap(), m);
        }
        assert!("dcx".parse::<Method>().is_err());
    }

    #[test]
    fn dca_stalls_on_tiny_a() {
        let inst = tiny_a();
        let (state, trace) = dca_run(&inst, &exact(1.0), &[1.0, 0.5, 0.0]).unwrap();
        assert_eq!(state.x, vec![1.0, 0.5, 0.0]);
        assert!(state.f_cont.abs() < 1e-12);
        assert_eq!(trace.records.len(), 2);
        assert!(trace.outcome.converged);
    }

    #[test]
    fn restart_escapes_on_tiny_a() {
        let inst = tiny_a();
        let cfg = SolverConfig { localmin_restart: true, ..exact(1.0) };
        let (state, trace) = dca_run(&inst, &cfg, &[1.0, 0.5, 0.0]).unwrap();
        assert_eq!(state.x_rounded.indices(), vec![2]);
        assert_eq!(state.f_disc, -2.0);
        assert_eq!(trace.outcome.restarts, 1);
        assert!(trace.records.iter().any(|r| r.restart_flag));
    }

    #[test]
    fn modular_f_dcar_one_step() {
        let g = make_modular(ModularVector(vec![1.0, 0.2, 3.0, 0.5]));
        let h = make_modular(ModularVector(vec![0.5, 1.0, 1.0, 2.0]));
        let inst = DsInstance::new(g, h).unwrap();
        let (state, _) = dcar_run(&inst, &exact(0.0), &Subset::empty(4)).unwrap();
        assert_eq!(state.x_rounded.indices(), vec![1, 3]);
    }

    #[test]
    fn extrapolation_rules() {
        let inst = tiny_a();
        let a = [0.2, 0.4, 0.6];
        let b = [0.0, 0.5, 1.0];
        assert_eq!(adca_extrapolate(&a, &b, 1, 5, &[0.0], &inst).unwrap(), a.to_vec());
        assert_eq!(adca_extrapolate(&a, &a, 4, 5, &[0.0], &inst).unwrap(), a.to_vec());
        assert!(adca_extrapolate(&a, &b, 0, 5, &[0.0], &inst).is_err());
    }

    #[test]
    fn trace_jsonl_round_trip() {
        let inst = tiny_a();
        let cfg = SolverConfig { localmin_restart: true, ..exact(1.0) };
        let (_, trace) = cdca_run(&inst, &cfg, &[1.0, 0.5, 0.0]).unwrap();
        let text = trace.to_jsonl().unwrap();
        assert!(text.lines().next().unwrap().contains("\"F_disc\""));
        let back = SolverTrace::from_jsonl(&text, Path::new("t.jsonl")).unwrap();
        assert_eq!(back, trace);
        let broken = text.replacen("\"k\"", "\"kk\"", 1).replacen('{', "[", 1);
        match SolverTrace::from_jsonl(&broken, Path::new("t.jsonl")) {
            Err(DsError::CorruptTrace { line, .. }) => assert_eq!(line, 1),
            other => panic!("expected corrupt trace, got {other:?}"),
        }
    }
}
