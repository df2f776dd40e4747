//! Oracle-backed invariant suites run by `dsmin verify`.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::harness::{gen_speech_synthetic, random_cover_instance, random_modular_h_instance, tiny_a, tiny_c};
use crate::inner::{exact_solve, pgm_solve, InnerSolver, PgmProblem, StepRule};
use crate::lovasz::{greedy_subgradient, lovasz_eval, round_f, BasePoint, Permutation};
use crate::oracle::{
    base_polytope_membership, brute_force_min, check_nondecreasing, check_submodular, is_local_min,
    is_strong_local_min, lovasz_bruteforce, MAX_D_PERMUTATIONS,
};
use crate::setfn::{SetFunctionHandle, Subset};
use crate::solvers::{cdcar_run, dca_run, dcar_run, PermutationMode, SolverConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VerifyLevel {
    Fast,
    Full,
}

impl VerifyLevel {
    pub fn max_d(self) -> usize {
        match self {
            VerifyLevel::Fast => 8,
            VerifyLevel::Full => 12,
        }
    }

    fn trials(self) -> usize {
        match self {
            VerifyLevel::Fast => 20,
            VerifyLevel::Full => 60,
        }
    }
}

/// Replaces the greedy subgradient in the membership suite. Used to check that
/// the suite catches a broken subgradient.
pub type SubgradientHook = fn(&SetFunctionHandle, &Permutation) -> BasePoint;

/// Greedy subgradient with the first coordinate raised by one.
pub fn faulty_subgradient(f: &SetFunctionHandle, sigma: &Permutation) -> BasePoint {
    let mut b = greedy_subgradient(f, sigma);
    if let Some(y0) = b.y.first_mut() {
        *y0 += 1.0;
    }
    b
}

#[derive(Clone, Debug, PartialEq)]
pub struct SuiteResult {
    pub name: &'static str,
    pub cases: usize,
    pub failure: Option<String>,
}

impl fmt::Display for SuiteResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.failure {
            None => write!(f, "ok    {} ({} cases)", self.name, self.cases),
            Some(w) => write!(f, "FAIL  {} ({} cases): {}", self.name, self.cases, w),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct VerifyReport {
    pub level: VerifyLevel,
    pub suites: Vec<SuiteResult>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.suites.iter().all(|s| s.failure.is_none())
    }
}

struct Suite {
    name: &'static str,
    cases: usize,
    failure: Option<String>,
}

impl Suite {
    fn new(name: &'static str) -> Self {
        Suite { name, cases: 0, failure: None }
    }

    /// Records one case; keeps the first failure.
    fn case(&mut self, ok: bool, describe: impl FnOnce() -> String) {
        self.cases += 1;
        if !ok && self.failure.is_none() {
            self.failure = Some(describe());
        }
    }

    fn finish(self) -> SuiteResult {
        SuiteResult { name: self.name, cases: self.cases, failure: self.failure }
    }
}

fn set_str(s: &Subset) -> String {
    format!("{:?}", s.indices())
}

fn random_point(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    (0..d)
        .map(|_| if rng.gen_bool(0.2) { f64::from(rng.gen_range(0..=1u8)) } else { rng.gen::<f64>() })
        .collect()
}

fn random_permutation(rng: &mut ChaCha8Rng, d: usize) -> Permutation {
    use rand::seq::SliceRandom;
    let mut p: Vec<usize> = (0..d).collect();
    p.shuffle(rng);
    Permutation::new(p).expect("shuffled identity is a permutation")
}

fn rounding_suite(level: VerifyLevel, rng: &mut ChaCha8Rng) -> Result<SuiteResult> {
    let mut s = Suite::new("rounding bounded by lovasz extension");
    for t in 0..level.trials() {
        let d = rng.gen_range(1..=level.max_d());
        let inst = random_cover_instance(rng.gen(), d, 2 * d)?;
        let x = random_point(rng, d);
        let fl = lovasz_eval(inst.f(), &x);
        let r = round_f(inst.f(), &x)?;
        s.case(r.value <= fl + 1e-9, || format!("trial {t}: F(round) = {} > f_L = {fl} at x = {x:?}", r.value));
    }
    Ok(s.finish())
}

fn membership_suite(level: VerifyLevel, rng: &mut ChaCha8Rng, hook: SubgradientHook) -> Result<SuiteResult> {
    let mut s = Suite::new("greedy subgradient in base polytope");
    for t in 0..level.trials() {
        let d = rng.gen_range(1..=level.max_d());
        let inst = random_cover_instance(rng.gen(), d, 2 * d)?;
        let sigma = random_permutation(rng, d);
        let b = hook(&inst.h, &sigma);
        let c = base_polytope_membership(&inst.h, &b.y, 1e-9)?;
        s.case(c.holds, || {
            format!(
                "trial {t}: y = {:?} violates B(H) at A = {}",
                b.y,
                c.witness.as_ref().map(set_str).unwrap_or_default()
            )
        });
    }
    Ok(s.finish())
}

fn lovasz_suite(level: VerifyLevel, rng: &mut ChaCha8Rng) -> Result<SuiteResult> {
    let mut s = Suite::new("lovasz extension matches vertex enumeration");
    for t in 0..level.trials() {
        let d = rng.gen_range(1..=level.max_d().min(MAX_D_PERMUTATIONS - 1));
        let inst = random_cover_instance(rng.gen(), d, 2 * d)?;
        let x = random_point(rng, d);
        let a = lovasz_eval(&inst.g, &x);
        let b = lovasz_bruteforce(&inst.g, &x)?;
        s.case((a - b).abs() <= 1e-9, || format!("trial {t}: {a} vs {b} at x = {x:?}"));
    }
    Ok(s.finish())
}

fn speech_suite(level: VerifyLevel, rng: &mut ChaCha8Rng) -> Result<SuiteResult> {
    let mut s = Suite::new("speech instance components submodular and nondecreasing");
    for t in 0..level.trials().min(10) {
        let d = rng.gen_range(2..=level.max_d());
        let r = rng.gen_range(1..=d.min(4));
        let sp = gen_speech_synthetic(rng.gen(), d, 3 * d, r, 1.0)?;
        for (name, f) in [("G", &sp.instance.g), ("H", &sp.instance.h)] {
            let w = check_submodular(f)?;
            s.case(w.is_none(), || format!("trial {t}: {name} not submodular: {w:?}"));
            let m = check_nondecreasing(f)?;
            s.case(m.holds, || format!("trial {t}: {name} decreasing at {:?}", m.witness));
        }
    }
    Ok(s.finish())
}

fn pgm_suite(level: VerifyLevel, rng: &mut ChaCha8Rng) -> Result<SuiteResult> {
    let mut s = Suite::new("inner gap certificate sound against exact solve");
    for t in 0..level.trials() {
        let d = rng.gen_range(1..=level.max_d());
        let inst = random_cover_instance(rng.gen(), d, 2 * d)?;
        let rho = [0.0, 0.1, 1.0][t % 3];
        let y: Vec<f64> = (0..d).map(|_| rng.gen_range(0.0..3.0)).collect();
        let p = PgmProblem::new(inst.g.clone(), y, rho, vec![0.0; d])?;
        let approx = pgm_solve(&p, 1e-6, 300, StepRule::Standard)?;
        let exact = exact_solve(&p)?;
        let true_gap = approx.objective - exact.objective;
        s.case(true_gap <= approx.gap_certificate + 1e-9 && true_gap >= -1e-9, || {
            format!("trial {t}: true gap {true_gap} but certificate {}", approx.gap_certificate)
        });
    }
    Ok(s.finish())
}

fn descent_suite(level: VerifyLevel, rng: &mut ChaCha8Rng) -> Result<SuiteResult> {
    let mut s = Suite::new("DCA steps satisfy the descent inequality");
    for t in 0..level.trials().min(15) {
        let d = rng.gen_range(2..=level.max_d().min(10));
        let inst = random_cover_instance(rng.gen(), d, 2 * d)?;
        let cfg = SolverConfig { rho: [0.0, 0.1, 1.0][t % 3], inner_solver: InnerSolver::Exact, ..SolverConfig::default() };
        let cert = cfg.cert(d);
        let (_, trace) = dca_run(&inst, &cfg, &random_point(rng, d))?;
        for r in &trace.records {
            if let (Some(dec), Some(sq)) = (r.step_decrease, r.step_sq) {
                let bound = cert.rho_bar / 2.0 * sq - cert.eps_bar - 1e-6;
                s.case(dec >= bound, || format!("trial {t}, k = {}: decrease {dec} < bound {bound}", r.k));
            }
        }
    }
    Ok(s.finish())
}

fn certificate_suite(level: VerifyLevel, rng: &mut ChaCha8Rng) -> Result<SuiteResult> {
    let mut s = Suite::new("DCAR outputs are certified local minima");
    for t in 0..level.trials().min(10) {
        let d = rng.gen_range(2..=level.max_d().min(8));
        let inst = random_cover_instance(rng.gen(), d, 2 * d)?;
        let cfg = SolverConfig {
            permutation_mode: PermutationMode::AllD,
            inner_solver: InnerSolver::Exact,
            max_outer: 200,
            ..SolverConfig::default()
        };
        let (state, trace) = dcar_run(&inst, &cfg, &Subset::empty(d))?;
        if !trace.outcome.converged {
            continue;
        }
        let eps = cfg.cert(d).eps_prime;
        let c = is_local_min(inst.f(), &state.x_rounded, eps)?;
        s.case(c.holds, || {
            format!("trial {t}: {} improved by flip to {:?}", set_str(&state.x_rounded), c.witness.map(|w| w.indices()))
        });
    }
    Ok(s.finish())
}

fn modular_suite(level: VerifyLevel, rng: &mut ChaCha8Rng) -> Result<SuiteResult> {
    let mut s = Suite::new("modular H reaches the global minimum");
    for t in 0..level.trials().min(10) {
        let d = rng.gen_range(1..=level.max_d().min(10));
        let inst = random_modular_h_instance(rng.gen(), d, 2 * d)?;
        let cfg = SolverConfig { inner_solver: InnerSolver::Exact, ..SolverConfig::default() };
        let oracle = brute_force_min(inst.f())?;
        let eps = cfg.cert(d).eps_prime;
        let (state, _) = dcar_run(&inst, &cfg, &Subset::empty(d))?;
        s.case(state.f_disc <= oracle.global_min_value + eps + 1e-9, || {
            format!("trial {t}: F = {} vs min {}", state.f_disc, oracle.global_min_value)
        });
    }
    Ok(s.finish())
}

fn fixture_suite() -> Result<SuiteResult> {
    let mut s = Suite::new("three- and five-element fixtures");
    let a = tiny_a(1.0)?;
    let cfg = SolverConfig { rho: 1.0, ..SolverConfig::default() };
    let x0 = [1.0, 0.5, 0.0];
    let (st, _) = dca_run(&a, &cfg, &x0)?;
    s.case(st.f_cont.abs() <= 1e-9, || format!("plain DCA ended at f = {}", st.f_cont));
    let restart = SolverConfig { localmin_restart: true, ..cfg };
    let (st, _) = dca_run(&a, &restart, &x0)?;
    s.case(st.x_rounded.indices() == [2] && st.f_disc == -2.0, || {
        format!("restarted DCA ended at {} with F = {}", set_str(&st.x_rounded), st.f_disc)
    });

    let c = tiny_c(1.0)?;
    let one = Subset::from_indices(5, &[0])?;
    let strong = is_strong_local_min(c.f(), &one, 0.0)?;
    s.case(!strong.holds, || "{0} reported as a strong local minimum".into());
    let weak = is_local_min(c.f(), &one, 0.0)?;
    s.case(weak.holds, || "{0} not reported as a local minimum".into());
    let cfg = SolverConfig { inner_solver: InnerSolver::Exact, ..SolverConfig::default() };
    let (st, _) = cdcar_run(&c, &cfg, &one)?;
    s.case(st.f_disc == -1.0, || format!("CDCAR from {{0}} ended with F = {}", st.f_disc));
    Ok(s.finish())
}

/// Runs every suite; `hook` replaces the greedy subgradient in the membership suite.
pub fn run_verify(level: VerifyLevel, hook: Option<SubgradientHook>) -> Result<VerifyReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let hook = hook.unwrap_or(greedy_subgradient);
    let suites = vec![
        fixture_suite()?,
        rounding_suite(level, &mut rng)?,
        membership_suite(level, &mut rng, hook)?,
        lovasz_suite(level, &mut rng)?,
        speech_suite(level, &mut rng)?,
        pgm_suite(level, &mut rng)?,
        descent_suite(level, &mut rng)?,
        certificate_suite(level, &mut rng)?,
        modular_suite(level, &mut rng)?,
    ];
    Ok(VerifyReport { level, suites })
}
