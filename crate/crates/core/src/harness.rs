//! Experiment instances, run orchestration, trace persistence and plot data.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{DsError, Result};
use crate::setfn::{
    make_concave_of_modular, make_entropy_of_rows, make_modular, make_set_cover, make_sqrt_cover,
    weighted_sum, BinaryMatrix, DsInstance, ModularVector, Subset,
};
use crate::solvers::{run_method, Method, PermutationMode, SolverConfig, SolverTrace, TraceOutcome};

/// Continuation probability of the geometric cover-size draw.
const COVER_CONTINUE: f64 = 0.7;

/// `F(X) = λ√|N(X)| - Σ_i √(m(X ∩ V_i))` over synthetic utterance/word data.
#[derive(Clone, Debug)]
pub struct SpeechInstance {
    pub incidence: Vec<Vec<usize>>,
    pub n_words: usize,
    pub m: ModularVector,
    pub groups: Vec<Vec<usize>>,
    pub lambda: f64,
    pub instance: DsInstance,
}

/// Consecutive-index partition of `0..d` into `r` nearly equal groups.
fn consecutive_groups(d: usize, r: usize) -> Vec<Vec<usize>> {
    let base = d / r;
    let extra = d % r;
    let mut out = Vec::with_capacity(r);
    let mut start = 0;
    for g in 0..r {
        let len = base + usize::from(g < extra);
        out.push((start..start + len).collect());
        start += len;
    }
    out
}

fn random_cover(rng: &mut ChaCha8Rng, universe: usize, max_len: usize) -> Vec<usize> {
    let mut len = 1;
    while len < max_len.min(universe) && rng.gen_bool(COVER_CONTINUE) {
        len += 1;
    }
    let mut items = sample(rng, universe, len).into_vec();
    items.sort_unstable();
    items
}

pub fn gen_speech_synthetic(seed: u64, d: usize, n_words: usize, r: usize, lambda: f64) -> Result<SpeechInstance> {
    if d == 0 || n_words == 0 || r == 0 {
        return Err(DsError::input("d, n_words and r must be at least 1"));
    }
    if r > d {
        return Err(DsError::input(format!("r = {r} groups exceed d = {d} utterances")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let incidence: Vec<Vec<usize>> = (0..d).map(|_| random_cover(&mut rng, n_words, n_words)).collect();
    let m = ModularVector((0..d).map(|_| rng.gen::<f64>()).collect());
    let groups = consecutive_groups(d, r);
    let g = make_sqrt_cover(n_words, incidence.clone(), lambda)?;
    let h = make_concave_of_modular(groups.clone(), m.clone())?;
    let instance = DsInstance::new(g, h)?;
    Ok(SpeechInstance { incidence, n_words, m, groups, lambda, instance })
}

/// `F(X) = λ|X| - Î(U_X; C)` with `G = λ|X| + Ĥ(U_X | C)` and `H = Ĥ(U_X)`.
#[derive(Clone, Debug)]
pub struct FeatureInstance {
    pub data: Arc<BinaryMatrix>,
    pub class_labels: Vec<u8>,
    pub train_rows: Vec<usize>,
    pub lambda: f64,
    pub instance: DsInstance,
}

/// Builds a feature-selection instance from a binary CSV with a header row.
///
/// `class_column` is a header name or a zero-based column index. Rows are
/// subsampled with `seed` unless `train_fraction >= 1`.
pub fn build_feature_instance(
    csv_path: &Path,
    class_column: &str,
    lambda: f64,
    train_fraction: f64,
    seed: u64,
) -> Result<FeatureInstance> {
    if !(train_fraction > 0.0) {
        return Err(DsError::input("train_fraction must be positive"));
    }
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_path(csv_path)?;
    let headers = reader.headers()?.clone();
    let class_idx = match headers.iter().position(|h| h == class_column) {
        Some(i) => i,
        None => class_column
            .parse::<usize>()
            .ok()
            .filter(|&i| i < headers.len())
            .ok_or_else(|| DsError::input(format!("class column '{class_column}' not found")))?,
    };
    let mut features: Vec<Vec<u8>> = Vec::new();
    let mut labels = Vec::new();
    for (r, record) in reader.records().enumerate() {
        let record = record?;
        let mut row = Vec::with_capacity(record.len().saturating_sub(1));
        for (c, cell) in record.iter().enumerate() {
            let v = match cell.trim() {
                "0" => 0u8,
                "1" => 1u8,
                other => {
                    return Err(DsError::Parse { row: r, col: c, msg: format!("expected 0 or 1, found '{other}'") })
                }
            };
            if c == class_idx {
                labels.push(v);
            } else {
                row.push(v);
            }
        }
        features.push(row);
    }
    let data = Arc::new(BinaryMatrix::from_rows(&features)?);
    let n = data.n_rows();
    let train_rows: Vec<usize> = if train_fraction >= 1.0 {
        (0..n).collect()
    } else {
        let k = ((train_fraction * n as f64).round() as usize).clamp(1, n);
        let mut rows = sample(&mut ChaCha8Rng::seed_from_u64(seed), n, k).into_vec();
        rows.sort_unstable();
        rows
    };
    let d = data.n_cols();
    let h = make_entropy_of_rows(data.clone(), train_rows.clone())?;
    let mut terms = vec![(lambda, make_modular(ModularVector(vec![1.0; d])))];
    for class in [0u8, 1u8] {
        let rows: Vec<usize> = train_rows.iter().copied().filter(|&r| labels[r] == class).collect();
        if rows.is_empty() {
            continue;
        }
        let p = rows.len() as f64 / train_rows.len() as f64;
        terms.push((p, make_entropy_of_rows(data.clone(), rows)?));
    }
    let g = weighted_sum(terms)?;
    let g_full = g.value(&Subset::full(d));
    let g = g.with_nondecreasing(lambda >= 0.0).with_value_bound(g_full.abs());
    let instance = DsInstance::new(g, h)?;
    Ok(FeatureInstance { data, class_labels: labels, train_rows, lambda, instance })
}

/// `G`, `H` random set covers over `universe` items; `H` scaled by a random
/// factor in `[0.8, 1.6)`.
pub fn random_cover_instance(seed: u64, d: usize, universe: usize) -> Result<DsInstance> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g_covers: Vec<Vec<usize>> = (0..d).map(|_| random_cover(&mut rng, universe, 3)).collect();
    let h_covers: Vec<Vec<usize>> = (0..d).map(|_| random_cover(&mut rng, universe, 4)).collect();
    let alpha_h = rng.gen_range(0.8..1.6);
    DsInstance::new(make_set_cover(universe, g_covers, 1.0)?, make_set_cover(universe, h_covers, alpha_h)?)
}

/// Random set-cover `G` with a modular `H`, weights in `[0, 2)`.
pub fn random_modular_h_instance(seed: u64, d: usize, universe: usize) -> Result<DsInstance> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g_covers: Vec<Vec<usize>> = (0..d).map(|_| random_cover(&mut rng, universe, 3)).collect();
    let w: Vec<f64> = (0..d).map(|_| rng.gen_range(0.0..2.0)).collect();
    DsInstance::new(make_set_cover(universe, g_covers, 1.0)?, make_modular(ModularVector(w)))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fixture {
    TinyA,
    TinyC,
}

/// Three-element instance on which plain DCA stalls at a non-local minimum.
pub fn tiny_a(alpha: f64) -> Result<DsInstance> {
    let g = make_set_cover(3, vec![vec![0], vec![1], vec![2]], alpha)?;
    let h = make_set_cover(3, vec![vec![0], vec![0, 1], vec![0, 1, 2]], alpha)?;
    DsInstance::new(g, h)
}

/// Five-element instance with a local minimum `{0}` that is not strong.
pub fn tiny_c(alpha: f64) -> Result<DsInstance> {
    let g = make_set_cover(3, vec![vec![0], vec![1], vec![1], vec![2], vec![2]], alpha)?;
    let h = make_set_cover(3, vec![vec![0], vec![1], vec![2], vec![0], vec![0]], alpha)?;
    DsInstance::new(g, h)
}

fn one() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InstanceSpec {
    /// Regenerated per run seed unless `instance_seed` is set.
    Speech { d: usize, n_words: usize, r: usize, lambda: f64, #[serde(default)] instance_seed: Option<u64> },
    Feature { csv_path: PathBuf, class_column: String, lambda: f64, train_fraction: f64 },
    Covers { d: usize, universe: usize, #[serde(default)] instance_seed: Option<u64> },
    Fixture { name: Fixture, #[serde(default = "one")] alpha: f64 },
}

impl InstanceSpec {
    pub fn build(&self, seed: u64) -> Result<DsInstance> {
        match self {
            InstanceSpec::Speech { d, n_words, r, lambda, instance_seed } => {
                Ok(gen_speech_synthetic(instance_seed.unwrap_or(seed), *d, *n_words, *r, *lambda)?.instance)
            }
            InstanceSpec::Feature { csv_path, class_column, lambda, train_fraction } => {
                Ok(build_feature_instance(csv_path, class_column, *lambda, *train_fraction, seed)?.instance)
            }
            InstanceSpec::Covers { d, universe, instance_seed } => {
                random_cover_instance(instance_seed.unwrap_or(seed), *d, *universe)
            }
            InstanceSpec::Fixture { name: Fixture::TinyA, alpha } => tiny_a(*alpha),
            InstanceSpec::Fixture { name: Fixture::TinyC, alpha } => tiny_c(*alpha),
        }
    }
}

fn default_name() -> String {
    "experiment".into()
}

fn default_methods() -> Vec<Method> {
    Method::ALL.to_vec()
}

pub fn default_rho_grid() -> Vec<f64> {
    vec![0.0, 0.001, 0.01, 0.1, 1.0, 10.0]
}

fn default_seeds() -> Vec<u64> {
    vec![42, 43, 44]
}

/// Solver settings used by experiments unless overridden: three tie-breaking
/// permutations and the local-minimality restart.
pub fn default_experiment_solver() -> SolverConfig {
    SolverConfig {
        permutation_mode: PermutationMode::Heuristic3,
        localmin_restart: true,
        ..SolverConfig::default()
    }
}

fn default_workers() -> usize {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_name")]
    pub name: String,
    pub instance: InstanceSpec,
    #[serde(default = "default_methods")]
    pub methods: Vec<Method>,
    #[serde(default = "default_rho_grid")]
    pub rho_grid: Vec<f64>,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "default_experiment_solver")]
    pub solver: SolverConfig,
    #[serde(default = "default_workers")]
    pub workers: usize,
    /// Start point; the empty set when absent.
    #[serde(default)]
    pub x0: Option<Vec<f64>>,
}

impl ExperimentConfig {
    pub fn new(instance: InstanceSpec) -> Self {
        ExperimentConfig {
            name: default_name(),
            instance,
            methods: default_methods(),
            rho_grid: default_rho_grid(),
            seeds: default_seeds(),
            solver: default_experiment_solver(),
            workers: default_workers(),
            x0: None,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// Cells in deterministic order: seed, then method, then ρ. Baselines run
    /// once per seed and are reported at ρ = 0.
    pub fn cells(&self) -> Vec<Cell> {
        let mut out = Vec::new();
        for &seed in &self.seeds {
            for &method in &self.methods {
                if method.is_dc_family() {
                    for &rho in &self.rho_grid {
                        out.push(Cell { method, rho, seed });
                    }
                } else {
                    out.push(Cell { method, rho: 0.0, seed });
                }
            }
        }
        out
    }
}

/// Applies a dotted `key=value` override to a config document.
///
/// The key must already exist in the fully populated document (unknown keys
/// are rejected). Values are parsed as JSON when possible; a comma-separated
/// list becomes an array, and a scalar assigned to an array field is wrapped.
pub fn apply_override(doc: &mut Value, key: &str, raw: &str) -> Result<()> {
    let mut slot = &mut *doc;
    for part in key.split('.') {
        slot = slot
            .as_object_mut()
            .and_then(|o| o.get_mut(part))
            .ok_or_else(|| DsError::input(format!("unknown config key '{key}'")))?;
    }
    let parse_one = |s: &str| serde_json::from_str::<Value>(s).unwrap_or_else(|_| Value::String(s.to_string()));
    let mut value = if raw.contains(',') && serde_json::from_str::<Value>(raw).is_err() {
        Value::Array(raw.split(',').map(|s| parse_one(s.trim())).collect())
    } else {
        parse_one(raw)
    };
    if slot.is_array() && !value.is_array() {
        value = Value::Array(vec![value]);
    }
    *slot = value;
    Ok(())
}

/// Parses a config and applies overrides in order.
pub fn config_with_overrides(text: &str, overrides: &[(String, String)]) -> Result<ExperimentConfig> {
    let cfg = ExperimentConfig::from_json(text)?;
    if overrides.is_empty() {
        return Ok(cfg);
    }
    let mut doc = serde_json::to_value(&cfg)?;
    for (k, v) in overrides {
        apply_override(&mut doc, k, v)?;
    }
    Ok(serde_json::from_value(doc)?)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Cell {
    pub method: Method,
    pub rho: f64,
    pub seed: u64,
}

impl Cell {
    pub fn file_name(&self) -> String {
        format!("{}-{}-{}.jsonl", self.method.name(), self.rho, self.seed)
    }
}

fn failed_trace(cell: &Cell, cfg: &SolverConfig, d: usize, err: &DsError) -> SolverTrace {
    SolverTrace {
        records: Vec::new(),
        outcome: TraceOutcome {
            method: cell.method.name().into(),
            rho: cell.rho,
            seed: cell.seed,
            d,
            final_set: Vec::new(),
            final_value: f64::NAN,
            final_f_cont: f64::NAN,
            certificate: cfg.cert(d),
            inner_certified: false,
            converged: false,
            restarts: 0,
            fw_iterations: 0,
            error: Some(err.to_string()),
        },
    }
}

/// Runs one cell; failures are recorded in the trace rather than returned.
pub fn run_cell(cfg: &ExperimentConfig, cell: &Cell, inst: &Result<DsInstance>) -> SolverTrace {
    let scfg = SolverConfig { rho: cell.rho, seed: cell.seed, ..cfg.solver.clone() };
    let inst = match inst {
        Ok(i) => i,
        Err(e) => return failed_trace(cell, &scfg, 0, e),
    };
    let x0 = cfg.x0.clone().unwrap_or_else(|| vec![0.0; inst.d()]);
    match run_method(cell.method, inst, &scfg, &x0) {
        Ok((_, t)) => t,
        Err(e) => failed_trace(cell, &scfg, inst.d(), &e),
    }
}

pub struct ExperimentResult {
    pub traces: Vec<SolverTrace>,
    pub summary: Summary,
}

/// Runs every cell on a pool of `cfg.workers` threads (0 = one per core).
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    let cells = cfg.cells();
    let mut instances: BTreeMap<u64, Result<DsInstance>> = BTreeMap::new();
    for &seed in &cfg.seeds {
        instances.entry(seed).or_insert_with(|| cfg.instance.build(seed));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| DsError::input(format!("cannot build worker pool: {e}")))?;
    let traces: Vec<SolverTrace> =
        pool.install(|| cells.par_iter().map(|c| run_cell(cfg, c, &instances[&c.seed])).collect());
    let summary = summarize(&cfg.name, &traces);
    Ok(ExperimentResult { traces, summary })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: String,
    pub rho: f64,
    pub seeds: Vec<u64>,
    pub n_failed: usize,
    pub n_noncertified: usize,
    pub final_mean: f64,
    pub final_std: f64,
    pub best_final: f64,
    pub mean_discrete_gap: Vec<f64>,
    pub std_discrete_gap: Vec<f64>,
    pub mean_continuous_gap: Vec<f64>,
    pub std_continuous_gap: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub experiment: String,
    /// Per seed, the best `F` and `f_L` reached by any compared method.
    pub baseline_discrete: BTreeMap<u64, f64>,
    pub baseline_continuous: BTreeMap<u64, f64>,
    pub methods: Vec<MethodSummary>,
}

impl Summary {
    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    if v.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

fn padded(v: &[f64], len: usize) -> Vec<f64> {
    let last = v.last().copied().unwrap_or(f64::NAN);
    (0..len).map(|i| v.get(i).copied().unwrap_or(last)).collect()
}

/// Per `(method, ρ)` statistics of `F(X^k) - min F` and `f_L(x^k) - min f_L`,
/// with the minima taken per seed over all traces. Shorter traces are padded
/// with their last value; standard deviations are population deviations.
pub fn summarize(experiment: &str, traces: &[SolverTrace]) -> Summary {
    let mut base_d: BTreeMap<u64, f64> = BTreeMap::new();
    let mut base_c: BTreeMap<u64, f64> = BTreeMap::new();
    for t in traces.iter().filter(|t| t.outcome.error.is_none()) {
        let s = t.outcome.seed;
        let md = t.discrete_values().into_iter().chain([t.outcome.final_value]).fold(f64::INFINITY, f64::min);
        let mc = t.continuous_values().into_iter().chain([t.outcome.final_f_cont]).fold(f64::INFINITY, f64::min);
        let e = base_d.entry(s).or_insert(f64::INFINITY);
        *e = e.min(md);
        let e = base_c.entry(s).or_insert(f64::INFINITY);
        *e = e.min(mc);
    }

    let mut groups: BTreeMap<(String, u64), Vec<&SolverTrace>> = BTreeMap::new();
    for t in traces {
        groups.entry((t.outcome.method.clone(), t.outcome.rho.to_bits())).or_default().push(t);
    }
    let mut methods: Vec<MethodSummary> = groups
        .into_values()
        .map(|mut ts| {
            ts.sort_by_key(|t| t.outcome.seed);
            let ok: Vec<&SolverTrace> = ts.iter().copied().filter(|t| t.outcome.error.is_none()).collect();
            let len = ok.iter().map(|t| t.records.len()).max().unwrap_or(0);
            let series = |pick: &dyn Fn(&SolverTrace) -> Vec<f64>, base: &BTreeMap<u64, f64>| {
                let rows: Vec<Vec<f64>> = ok
                    .iter()
                    .map(|t| {
                        let b = base.get(&t.outcome.seed).copied().unwrap_or(0.0);
                        padded(&pick(t).iter().map(|v| v - b).collect::<Vec<_>>(), len)
                    })
                    .collect();
                let mut means = Vec::with_capacity(len);
                let mut stds = Vec::with_capacity(len);
                for k in 0..len {
                    let col: Vec<f64> = rows.iter().map(|r| r[k]).collect();
                    let (m, s) = mean_std(&col);
                    means.push(m);
                    stds.push(s);
                }
                (means, stds)
            };
            let (mdg, sdg) = series(&|t| t.discrete_values(), &base_d);
            let (mcg, scg) = series(&|t| t.continuous_values(), &base_c);
            let finals: Vec<f64> = ok.iter().map(|t| t.outcome.final_value).collect();
            let (final_mean, final_std) = mean_std(&finals);
            MethodSummary {
                method: ts[0].outcome.method.clone(),
                rho: ts[0].outcome.rho,
                seeds: ts.iter().map(|t| t.outcome.seed).collect(),
                n_failed: ts.len() - ok.len(),
                n_noncertified: ok.iter().filter(|t| !t.outcome.inner_certified).count(),
                final_mean,
                final_std,
                best_final: finals.iter().cloned().fold(f64::INFINITY, f64::min),
                mean_discrete_gap: mdg,
                std_discrete_gap: sdg,
                mean_continuous_gap: mcg,
                std_continuous_gap: scg,
            }
        })
        .collect();
    methods.sort_by(|a, b| {
        let ia = a.method.parse::<Method>().map(|m| m as usize).unwrap_or(usize::MAX);
        let ib = b.method.parse::<Method>().map(|m| m as usize).unwrap_or(usize::MAX);
        ia.cmp(&ib).then(a.method.cmp(&b.method)).then(a.rho.total_cmp(&b.rho))
    });
    Summary { experiment: experiment.to_string(), baseline_discrete: base_d, baseline_continuous: base_c, methods }
}

/// Floor applied to plotted gaps so they stay positive on a log scale.
pub const PLOT_FLOOR: f64 = 1e-12;

pub const PLOT_COLUMNS: [&str; 5] =
    ["iteration", "mean_discrete_gap", "std_discrete_gap", "mean_continuous_gap", "std_continuous_gap"];

/// Writes one `plot-<method>-<rho>.csv` per summary entry and returns the paths.
///
/// The first line is a `#` comment; values use 17 significant digits.
pub fn emit_plot_data(summary: &Summary, out_dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(out_dir)?;
    let mut paths = Vec::new();
    for m in &summary.methods {
        let path = out_dir.join(format!("plot-{}-{}.csv", m.method, m.rho));
        let mut text = format!("# gaps floored at {PLOT_FLOOR:e} for log-scale plotting\n");
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(PLOT_COLUMNS)?;
        for k in 0..m.mean_discrete_gap.len() {
            let f = |v: f64| format!("{:.16e}", v);
            w.write_record([
                k.to_string(),
                f(m.mean_discrete_gap[k].max(PLOT_FLOOR)),
                f(m.std_discrete_gap[k]),
                f(m.mean_continuous_gap[k].max(PLOT_FLOOR)),
                f(m.std_continuous_gap[k]),
            ])?;
        }
        let bytes = w.into_inner().map_err(|e| DsError::Io(e.into_error()))?;
        text.push_str(&String::from_utf8(bytes).expect("csv output is utf-8"));
        fs::write(&path, text)?;
        paths.push(path);
    }
    Ok(paths)
}

/// Reads a plot CSV back as rows of `(iteration, four values)`.
pub fn read_plot_data(path: &Path) -> Result<Vec<(usize, [f64; 4])>> {
    let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_path(path)?;
    let mut out = Vec::new();
    for (n, rec) in r.records().enumerate() {
        let rec = rec?;
        let bad = |c: usize| DsError::Parse { row: n, col: c, msg: "not a number".into() };
        let k = rec.get(0).and_then(|s| s.parse().ok()).ok_or_else(|| bad(0))?;
        let mut vals = [0.0; 4];
        for (j, v) in vals.iter_mut().enumerate() {
            *v = rec.get(j + 1).and_then(|s| s.parse().ok()).ok_or_else(|| bad(j + 1))?;
        }
        out.push((k, vals));
    }
    Ok(out)
}

/// Writes each trace as `<dir>/<method>-<rho>-<seed>.jsonl`.
pub fn write_traces(dir: &Path, traces: &[SolverTrace]) -> Result<()> {
    fs::create_dir_all(dir)?;
    for t in traces {
        let o = &t.outcome;
        fs::write(dir.join(format!("{}-{}-{}.jsonl", o.method, o.rho, o.seed)), t.to_jsonl()?)?;
    }
    Ok(())
}

/// Loads every `*.jsonl` trace in `dir`, in file-name order.
pub fn load_traces(dir: &Path) -> Result<Vec<SolverTrace>> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
        .collect();
    paths.sort();
    paths.iter().map(|p| SolverTrace::from_jsonl(&fs::read_to_string(p)?, p)).collect()
}

/// Writes traces, `summary.json` and plot CSVs under `dir`.
pub fn persist(dir: &Path, traces: &[SolverTrace], summary: &Summary) -> Result<()> {
    write_traces(dir, traces)?;
    fs::write(dir.join("summary.json"), summary.to_json()?)?;
    emit_plot_data(summary, dir)?;
    Ok(())
}

/// Rebuilds the summary and plots from stored traces. Returns the summary
/// and warnings about methods present in a previous summary but missing now.
pub fn report(dir: &Path) -> Result<(Summary, Vec<String>)> {
    let traces = load_traces(dir)?;
    if traces.is_empty() {
        return Err(DsError::input(format!("no traces found in {}", dir.display())));
    }
    let name = dir.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let mut warnings = Vec::new();
    let prev_path = dir.join("summary.json");
    let experiment = match fs::read_to_string(&prev_path).ok().and_then(|s| serde_json::from_str::<Summary>(&s).ok()) {
        Some(prev) => {
            for m in &prev.methods {
                if !traces.iter().any(|t| t.outcome.method == m.method && t.outcome.rho == m.rho) {
                    warnings.push(format!("no traces for {} at rho {}", m.method, m.rho));
                }
            }
            prev.experiment
        }
        None => name,
    };
    let summary = summarize(&experiment, &traces);
    fs::write(&prev_path, summary.to_json()?)?;
    emit_plot_data(&summary, dir)?;
    Ok((summary, warnings))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn groups_are_consecutive() {
        assert_eq!(consecutive_groups(5, 2), vec![vec![0, 1, 2], vec![3, 4]]);
        assert_eq!(consecutive_groups(3, 3), vec![vec![0], vec![1], vec![2]]);
    }

    #[test]
    fn speech_determinism_and_errors() {
        let a = gen_speech_synthetic(7, 12, 30, 3, 1.0).unwrap();
        let b = gen_speech_synthetic(7, 12, 30, 3, 1.0).unwrap();
        assert_eq!(a.incidence, b.incidence);
        assert_eq!(a.m, b.m);
        assert!(a.incidence.iter().all(|c| !c.is_empty()));
        assert!(gen_speech_synthetic(7, 3, 30, 4, 1.0).is_err());
    }

    #[test]
    fn single_group_is_sqrt_of_weights() {
        let s = gen_speech_synthetic(3, 6, 10, 1, 1.0).unwrap();
        let x = Subset::from_indices(6, &[0, 2, 5]).unwrap();
        let expected = (s.m.0[0] + s.m.0[2] + s.m.0[5]).sqrt();
        assert!((s.instance.h.value(&x) - expected).abs() < 1e-12);
    }

    #[test]
    fn overrides() {
        let text = r#"{"instance": {"kind": "fixture", "name": "tiny_a"}}"#;
        let cfg = config_with_overrides(
            text,
            &[("methods".into(), "dca,cdcar".into()), ("solver.rho".into(), "0.5".into())],
        )
        .unwrap();
        assert_eq!(cfg.methods, vec![Method::Dca, Method::Cdcar]);
        assert_eq!(cfg.solver.rho, 0.5);
        let one = config_with_overrides(text, &[("methods".into(), "dca".into())]).unwrap();
        assert_eq!(one.methods, vec![Method::Dca]);
        assert!(config_with_overrides(text, &[("solver.nope".into(), "1".into())]).is_err());
        assert!(config_with_overrides(text, &[("instance.alpha".into(), "2".into())]).is_ok());
    }

    #[test]
    fn config_rejects_unknown_fields() {
        assert!(ExperimentConfig::from_json(r#"{"instance": {"kind": "fixture", "name": "tiny_a"}, "bogus": 1}"#).is_err());
        assert!(ExperimentConfig::from_json(r#"{"instance": {"kind": "fixture", "name": "tiny_a", "bogus": 1}}"#).is_err());
    }

    #[test]
    fn cells_skip_rho_for_baselines() {
        let mut cfg = ExperimentConfig::new(InstanceSpec::Fixture { name: Fixture::TinyA, alpha: 1.0 });
        cfg.methods = vec![Method::Dca, Method::Subsup];
        cfg.seeds = vec![1];
        assert_eq!(cfg.cells().len(), 7);
    }
}
