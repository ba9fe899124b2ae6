//! Run configuration, increment scheduling, ledger persistence, and reports.

use std::collections::{BTreeMap, HashMap};
use std::fs::{self, File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::mpsc;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fci::{solve_increment_fci, FciError};
use crate::increments::{
    enumerate_increments, increments_of_order, ExpansionResult, Increment, IncrementError,
    IncrementLedger, Status,
};
use crate::integrals::{parse_fcidump, ActiveSpaceHamiltonian, IntegralError, IntegralStore};
use crate::mp2_fno::{
    delta_mp2, fno_decompose, fno_truncate, mp2_energy, transform_virtuals, vv_density, FnoPolicy,
    FnoSubspace, Mp2Error,
};
use crate::qubit::{estimate_gates, estimate_qubits, ResourceEstimate, GATE_MODEL_VERSION};
use crate::vqe::{solve_increment_vqe, VqeConfig, VqeError};

pub const REPORT_SCHEMA_VERSION: u32 = 1;
pub const DEFAULT_RETRIES: usize = 2;
/// Occupancy thresholds of the estimate-only table.
pub const DEFAULT_THRESHOLDS: [f64; 10] = [0.99, 0.9, 0.8, 0.7, 0.6, 0.5, 0.4, 0.3, 0.2, 0.1];

#[derive(Debug, Error)]
pub enum OrchestratorError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Integrals(#[from] IntegralError),
    #[error(transparent)]
    Increment(#[from] IncrementError),
    #[error(transparent)]
    Mp2(#[from] Mp2Error),
    #[error(transparent)]
    Fci(#[from] FciError),
    #[error(transparent)]
    Vqe(#[from] VqeError),
    #[error("ledger {path} line {line}: {msg}")]
    Ledger { path: PathBuf, line: usize, msg: String },
    #[error("report: {0}")]
    Report(#[from] serde_json::Error),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> OrchestratorError + '_ {
    move |source| OrchestratorError::Io { path: path.to_path_buf(), source }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverKind {
    Fci,
    VqeUccsd,
    /// VQE energies drive the expansion; FCI runs alongside as reference.
    Both,
}

impl SolverKind {
    pub fn tag(&self) -> &'static str {
        match self {
            SolverKind::Fci => "fci",
            SolverKind::VqeUccsd => "vqe_uccsd",
            SolverKind::Both => "both",
        }
    }

    pub fn parse(s: &str) -> Result<Self, OrchestratorError> {
        match s {
            "fci" => Ok(SolverKind::Fci),
            "vqe" | "vqe_uccsd" => Ok(SolverKind::VqeUccsd),
            "both" => Ok(SolverKind::Both),
            _ => Err(OrchestratorError::Config(format!("unknown solver '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FnoScope {
    PerIncrement,
    Global,
}

impl FnoScope {
    pub fn tag(&self) -> &'static str {
        match self {
            FnoScope::PerIncrement => "per_increment",
            FnoScope::Global => "global",
        }
    }

    pub fn parse(s: &str) -> Result<Self, OrchestratorError> {
        match s {
            "per_increment" => Ok(FnoScope::PerIncrement),
            "global" => Ok(FnoScope::Global),
            _ => Err(OrchestratorError::Config(format!("unknown fno scope '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub fcidump_path: PathBuf,
    pub order: usize,
    pub fno: Option<FnoPolicy>,
    pub fno_scope: FnoScope,
    pub solver: SolverKind,
    pub screen_threshold: Option<f64>,
    pub workers: usize,
    pub ledger_path: Option<PathBuf>,
    pub report_path: Option<PathBuf>,
    /// Reuse records already in the ledger instead of starting it afresh.
    pub resume: bool,
    pub retries: usize,
    pub vqe: VqeConfig,
}

impl RunConfig {
    pub fn new(fcidump_path: impl Into<PathBuf>, order: usize) -> Self {
        Self {
            fcidump_path: fcidump_path.into(),
            order,
            fno: None,
            fno_scope: FnoScope::PerIncrement,
            solver: SolverKind::Fci,
            screen_threshold: None,
            workers: 1,
            ledger_path: None,
            report_path: None,
            resume: false,
            retries: DEFAULT_RETRIES,
            vqe: VqeConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<(), OrchestratorError> {
        if self.order == 0 {
            return Err(OrchestratorError::Config("order must be at least 1".into()));
        }
        if self.workers == 0 {
            return Err(OrchestratorError::Config("workers must be at least 1".into()));
        }
        match self.fno {
            Some(FnoPolicy::Occupancy(t)) if !(t > 0.0 && t <= 1.0) => {
                return Err(OrchestratorError::Config(format!("fno.occupancy {t} not in (0, 1]")));
            }
            Some(FnoPolicy::KeepCount(0)) => {
                return Err(OrchestratorError::Config("fno.keep_count must be at least 1".into()));
            }
            _ => {}
        }
        if let Some(t) = self.screen_threshold {
            if t.is_nan() || t < 0.0 {
                return Err(OrchestratorError::Config(format!("screen threshold {t} is negative")));
            }
        }
        if self.resume && self.ledger_path.is_none() {
            return Err(OrchestratorError::Config("resume requires a ledger path".into()));
        }
        Ok(())
    }

    /// Ledger key component describing the truncation.
    pub fn fno_tag(&self) -> String {
        match self.fno {
            None => "none".into(),
            Some(p) => format!("{}/{}", p.tag(), self.fno_scope.tag()),
        }
    }
}

/// Parses the flat `key = value` config format. Blank lines and `#`
/// comments are ignored; relative paths are taken relative to `base_dir`.
///
/// Keys: `fcidump`, `order`, `fno.occupancy`, `fno.keep_count`,
/// `fno.scope`, `solver`, `screen.threshold`, `workers`, `ledger`,
/// `report`, `resume`, `retries`.
pub fn parse_config(text: &str, base_dir: &Path) -> Result<RunConfig, OrchestratorError> {
    let mut cfg = RunConfig::new(PathBuf::new(), 0);
    let mut have_fcidump = false;
    let mut have_order = false;
    let resolve = |v: &str| {
        let p = PathBuf::from(v);
        if p.is_relative() {
            base_dir.join(p)
        } else {
            p
        }
    };
    let bad = |line: usize, msg: String| OrchestratorError::Config(format!("line {line}: {msg}"));
    for (k, raw) in text.lines().enumerate() {
        let line = k + 1;
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let (key, value) = body
            .split_once('=')
            .ok_or_else(|| bad(line, format!("expected key = value, got '{body}'")))?;
        let (key, value) = (key.trim(), value.trim());
        let num = |v: &str| v.parse::<usize>().map_err(|e| bad(line, format!("{key}: {e}")));
        let real = |v: &str| v.parse::<f64>().map_err(|e| bad(line, format!("{key}: {e}")));
        match key {
            "fcidump" => {
                cfg.fcidump_path = resolve(value);
                have_fcidump = true;
            }
            "order" => {
                cfg.order = num(value)?;
                have_order = true;
            }
            "fno.occupancy" | "fno.keep_count" => {
                if cfg.fno.is_some() {
                    return Err(bad(line, "fno.occupancy and fno.keep_count are exclusive".into()));
                }
                cfg.fno = Some(if key == "fno.occupancy" {
                    FnoPolicy::Occupancy(real(value)?)
                } else {
                    FnoPolicy::KeepCount(num(value)?)
                });
            }
            "fno.scope" => cfg.fno_scope = FnoScope::parse(value)?,
            "solver" => cfg.solver = SolverKind::parse(value)?,
            "screen.threshold" => cfg.screen_threshold = Some(real(value)?),
            "workers" => cfg.workers = num(value)?,
            "ledger" => cfg.ledger_path = Some(resolve(value)),
            "report" => cfg.report_path = Some(resolve(value)),
            "resume" => {
                cfg.resume = value
                    .parse::<bool>()
                    .map_err(|e| bad(line, format!("{key}: {e}")))?
            }
            "retries" => cfg.retries = num(value)?,
            _ => return Err(bad(line, format!("unknown key '{key}'"))),
        }
    }
    if !have_fcidump {
        return Err(OrchestratorError::Config("missing key 'fcidump'".into()));
    }
    if !have_order {
        return Err(OrchestratorError::Config("missing key 'order'".into()));
    }
    cfg.validate()?;
    Ok(cfg)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecordStatus {
    Solved,
    Failed,
}

/// One ledger line: the result of solving one increment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerRecord {
    pub subset: Increment,
    pub order: usize,
    pub solver: String,
    pub fno: String,
    pub status: RecordStatus,
    /// Virtual spatial orbitals before and after truncation.
    pub n_virt: usize,
    pub kept_virtuals: usize,
    pub occupancy_fraction: f64,
    /// Solver correlation energy in the truncated space.
    pub e_solver: f64,
    pub delta_mp2: f64,
    /// `e_solver + delta_mp2`, the value entering the expansion.
    pub ec: f64,
    #[serde(default)]
    pub eps: Option<f64>,
    /// FCI correlation energy (plus `delta_mp2`) when the VQE solver runs
    /// with an FCI reference.
    #[serde(default)]
    pub ec_reference: Option<f64>,
    #[serde(default)]
    pub eps_reference: Option<f64>,
    pub resources: ResourceEstimate,
    #[serde(default)]
    pub vqe_iterations: Option<usize>,
    #[serde(default)]
    pub vqe_converged: Option<bool>,
    #[serde(default)]
    pub error: Option<String>,
    pub attempts: usize,
    pub wall_time_s: f64,
}

type LedgerKey = (Increment, String, String);

fn key_of(r: &LedgerRecord) -> LedgerKey {
    (r.subset.clone(), r.solver.clone(), r.fno.clone())
}

/// Reads a ledger, skipping a torn final line. Any other unreadable line is
/// an error.
pub fn read_ledger(path: &Path) -> Result<Vec<LedgerRecord>, OrchestratorError> {
    let text = match fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(io_err(path)(e)),
    };
    let complete = text.ends_with('\n');
    let lines: Vec<&str> = text.lines().collect();
    let mut out = Vec::new();
    for (k, line) in lines.iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<LedgerRecord>(line) {
            Ok(r) => out.push(r),
            Err(_) if k + 1 == lines.len() && !complete => {
                log::warn!("{}: ignoring torn final line", path.display());
            }
            Err(e) => {
                return Err(OrchestratorError::Ledger {
                    path: path.to_path_buf(),
                    line: k + 1,
                    msg: e.to_string(),
                })
            }
        }
    }
    Ok(out)
}

/// Replaces the ledger atomically with `records`, one per line.
pub fn write_ledger(path: &Path, records: &[LedgerRecord]) -> Result<(), OrchestratorError> {
    let tmp = path.with_extension("tmp");
    {
        let mut w = BufWriter::new(File::create(&tmp).map_err(io_err(&tmp))?);
        for r in records {
            serde_json::to_writer(&mut w, r)?;
            w.write_all(b"\n").map_err(io_err(&tmp))?;
        }
        w.flush().map_err(io_err(&tmp))?;
    }
    fs::rename(&tmp, path).map_err(io_err(path))
}

/// Active-space Hamiltonian of an increment: other occupied orbitals are
/// folded into the mean field, all virtuals stay active.
pub fn increment_hamiltonian(
    store: &IntegralStore,
    subset: &Increment,
) -> Result<ActiveSpaceHamiltonian, IntegralError> {
    let n_occ = store.n_occupied();
    let frozen: Vec<usize> = (0..n_occ).filter(|i| !subset.indices().contains(i)).collect();
    let active: Vec<usize> = subset.indices().iter().copied().chain(n_occ..store.n_orb()).collect();
    store.fold_frozen(&frozen, &active)
}

/// Natural orbitals of the whole molecule, used for the global scope.
pub fn global_fno(store: &IntegralStore) -> Result<FnoSubspace, OrchestratorError> {
    let full = store.full_hamiltonian()?;
    let d = vv_density(&full, &full.occupied_spin_orbitals(), &full.virtual_spin_orbitals())?;
    Ok(fno_decompose(&d))
}

/// Increment Hamiltonian after FNO truncation, with the MP2 correction and
/// the truncated subspace.
pub struct TruncatedIncrement {
    pub ham: ActiveSpaceHamiltonian,
    pub delta_mp2: f64,
    pub n_virt: usize,
    pub kept_virtuals: usize,
    pub occupancy_fraction: f64,
}

pub fn truncate_increment(
    store: &IntegralStore,
    subset: &Increment,
    policy: Option<FnoPolicy>,
    global: Option<&FnoSubspace>,
) -> Result<TruncatedIncrement, OrchestratorError> {
    let ham = increment_hamiltonian(store, subset)?;
    let n_virt = ham.n_virt();
    let Some(policy) = policy else {
        return Ok(TruncatedIncrement { ham, delta_mp2: 0.0, n_virt, kept_virtuals: n_virt, occupancy_fraction: 1.0 });
    };
    let occ = ham.occupied_spin_orbitals();
    let decomposed = match global {
        Some(g) => g.clone(),
        None => fno_decompose(&vv_density(&ham, &occ, &ham.virtual_spin_orbitals())?),
    };
    // A keep count above the available virtuals keeps them all.
    let policy = match policy {
        FnoPolicy::KeepCount(k) if k > decomposed.dim_spatial() => {
            FnoPolicy::KeepCount(decomposed.dim_spatial().max(1))
        }
        p => p,
    };
    let sub = if decomposed.dim() == 0 { decomposed } else { fno_truncate(&decomposed, policy)? };
    let truncated = transform_virtuals(&ham, &sub)?;
    let delta = delta_mp2(&ham, &truncated, &occ)?;
    Ok(TruncatedIncrement {
        kept_virtuals: truncated.n_virt(),
        occupancy_fraction: sub.occupancy_fraction,
        ham: truncated,
        delta_mp2: delta,
        n_virt,
    })
}

struct SolveContext<'a> {
    store: &'a IntegralStore,
    cfg: &'a RunConfig,
    global: Option<&'a FnoSubspace>,
    fno_tag: String,
}

fn solve_once(ctx: &SolveContext<'_>, subset: &Increment) -> Result<LedgerRecord, OrchestratorError> {
    let start = Instant::now();
    let t = truncate_increment(ctx.store, subset, ctx.cfg.fno, ctx.global)?;
    let mut vqe_iterations = None;
    let mut vqe_converged = None;
    let mut ec_reference = None;
    let e_solver = match ctx.cfg.solver {
        SolverKind::Fci => solve_increment_fci(&t.ham)?,
        SolverKind::VqeUccsd | SolverKind::Both => {
            let (ec, outcome) = solve_increment_vqe(&t.ham, &ctx.cfg.vqe)?;
            vqe_iterations = Some(outcome.iterations);
            vqe_converged = Some(outcome.converged);
            if ctx.cfg.solver == SolverKind::Both {
                ec_reference = Some(solve_increment_fci(&t.ham)? + t.delta_mp2);
            }
            ec
        }
    };
    let resources = estimate_gates(t.ham.n_occ, t.ham.n_virt(), Some(&t.ham));
    Ok(LedgerRecord {
        subset: subset.clone(),
        order: subset.order(),
        solver: ctx.cfg.solver.tag().into(),
        fno: ctx.fno_tag.clone(),
        status: RecordStatus::Solved,
        n_virt: t.n_virt,
        kept_virtuals: t.kept_virtuals,
        occupancy_fraction: t.occupancy_fraction,
        e_solver,
        delta_mp2: t.delta_mp2,
        ec: e_solver + t.delta_mp2,
        eps: None,
        ec_reference,
        eps_reference: None,
        resources,
        vqe_iterations,
        vqe_converged,
        error: None,
        attempts: 1,
        wall_time_s: start.elapsed().as_secs_f64(),
    })
}

fn solve_with_retries(ctx: &SolveContext<'_>, subset: &Increment) -> LedgerRecord {
    let start = Instant::now();
    let mut last = String::new();
    for attempt in 1..=ctx.cfg.retries + 1 {
        match solve_once(ctx, subset) {
            Ok(mut r) => {
                r.attempts = attempt;
                r.wall_time_s = start.elapsed().as_secs_f64();
                return r;
            }
            Err(e) => {
                log::warn!("increment {subset} attempt {attempt} failed: {e}");
                last = e.to_string();
            }
        }
    }
    LedgerRecord {
        subset: subset.clone(),
        order: subset.order(),
        solver: ctx.cfg.solver.tag().into(),
        fno: ctx.fno_tag.clone(),
        status: RecordStatus::Failed,
        n_virt: 0,
        kept_virtuals: 0,
        occupancy_fraction: 0.0,
        e_solver: 0.0,
        delta_mp2: 0.0,
        ec: 0.0,
        eps: None,
        ec_reference: None,
        eps_reference: None,
        resources: ResourceEstimate {
            n_qubits: 0,
            one_qubit_gates: 0,
            two_qubit_gates: 0,
            n_pauli_terms_hamiltonian: None,
            n_variational_parameters: 0,
        },
        vqe_iterations: None,
        vqe_converged: None,
        error: Some(last),
        attempts: ctx.cfg.retries + 1,
        wall_time_s: start.elapsed().as_secs_f64(),
    }
}

/// Solves `work` on a pool of `workers` threads. Each finished record is
/// passed to `sink` on the calling thread, in completion order.
fn solve_pool(
    ctx: &SolveContext<'_>,
    work: &[Increment],
    workers: usize,
    mut sink: impl FnMut(LedgerRecord) -> Result<(), OrchestratorError>,
) -> Result<(), OrchestratorError> {
    if work.is_empty() {
        return Ok(());
    }
    let next = AtomicUsize::new(0);
    let (tx, rx) = mpsc::channel();
    std::thread::scope(|scope| {
        for _ in 0..workers.min(work.len()) {
            let tx = tx.clone();
            let next = &next;
            scope.spawn(move || loop {
                let k = next.fetch_add(1, Ordering::SeqCst);
                if k >= work.len() {
                    break;
                }
                let record = solve_with_retries(ctx, &work[k]);
                if tx.send(record).is_err() {
                    break;
                }
            });
        }
        drop(tx);
        let mut result = Ok(());
        for record in rx {
            if result.is_ok() {
                result = sink(record);
                if result.is_err() {
                    // Stop handing out work; running solves finish and are dropped.
                    next.store(work.len(), Ordering::SeqCst);
                }
            }
        }
        result
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Complete,
    Partial,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reduction {
    pub qubits_pct: f64,
    pub one_qubit_gates_pct: f64,
    pub two_qubit_gates_pct: f64,
}

/// `100 (1 - part / full)`, or 0 when `full` is 0.
pub fn reduction_pct(part: f64, full: f64) -> f64 {
    if full == 0.0 {
        0.0
    } else {
        100.0 * (1.0 - part / full)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IncrementReport {
    pub subset: Increment,
    pub label: String,
    pub order: usize,
    pub status: String,
    pub n_virt: usize,
    pub kept_virtuals: usize,
    pub discarded_virtuals: usize,
    pub occupancy_fraction: f64,
    pub e_solver: f64,
    pub delta_mp2: f64,
    pub ec: f64,
    pub eps: Option<f64>,
    pub ec_reference: Option<f64>,
    pub eps_reference: Option<f64>,
    pub resources: ResourceEstimate,
    pub reduction: Reduction,
    pub vqe_iterations: Option<usize>,
    pub vqe_converged: Option<bool>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub schema_version: u32,
    pub gate_model_version: String,
    /// Gate counts are a model upper bound, not compiled circuit counts.
    pub gate_counts_are_model_estimates: bool,
    pub trotter_steps: u32,
    pub fcidump: String,
    pub expansion_order: usize,
    pub solver: SolverKind,
    pub fno_policy: Option<FnoPolicy>,
    pub fno_scope: FnoScope,
    pub screen_threshold: Option<f64>,
    pub status: RunStatus,
    pub n_orbitals: usize,
    pub n_electrons: usize,
    pub n_occupied: usize,
    pub n_virtual: usize,
    pub e_hf: f64,
    pub e_mp2: f64,
    pub e_mp2_corr: f64,
    pub increments: Vec<IncrementReport>,
    pub n_screened: usize,
    pub missing: Vec<Increment>,
    pub expansion: Option<ExpansionResult>,
    pub reference_expansion: Option<ExpansionResult>,
    pub full_system: ResourceEstimate,
    pub max_qubits_over_increments: usize,
}

impl RunReport {
    pub fn exit_code(&self) -> i32 {
        match self.status {
            RunStatus::Complete => 0,
            RunStatus::Partial => 2,
        }
    }
}

/// Runs the whole pipeline; see the crate documentation for the stages.
pub fn run(cfg: &RunConfig) -> Result<RunReport, OrchestratorError> {
    cfg.validate()?;
    let text = fs::read_to_string(&cfg.fcidump_path).map_err(io_err(&cfg.fcidump_path))?;
    let store = parse_fcidump(&text)?;
    let n_occ = store.n_occupied();
    if cfg.order > n_occ {
        return Err(OrchestratorError::Config(format!(
            "order {} exceeds {n_occ} occupied orbitals",
            cfg.order
        )));
    }
    let full = store.full_hamiltonian()?;
    let e_hf = full.hf_energy();
    let e_hf_store = store.hf_energy();
    if (e_hf - e_hf_store).abs() > 1e-10 {
        log::warn!("HF energies disagree: {e_hf} vs {e_hf_store}");
    }
    let mp2 = mp2_energy(&full, &full.occupied_spin_orbitals(), &full.virtual_spin_orbitals())?;
    let global = match (cfg.fno, cfg.fno_scope) {
        (Some(_), FnoScope::Global) => Some(global_fno(&store)?),
        _ => None,
    };
    let ctx = SolveContext { store: &store, cfg, global: global.as_ref(), fno_tag: cfg.fno_tag() };

    // Existing records, by key; records of other configurations are kept.
    let mut records: BTreeMap<LedgerKey, LedgerRecord> = BTreeMap::new();
    let mut ledger_file = None;
    if let Some(path) = &cfg.ledger_path {
        if cfg.resume {
            for r in read_ledger(path)? {
                records.insert(key_of(&r), r);
            }
        }
        let kept: Vec<LedgerRecord> = records.values().cloned().collect();
        write_ledger(path, &kept)?;
        let f = OpenOptions::new().append(true).open(path).map_err(io_err(path))?;
        ledger_file = Some((path.clone(), f));
    }

    let mut ledger = IncrementLedger::new(n_occ);
    let mut reference = IncrementLedger::new(n_occ);
    let mut n_screened = 0;
    for m in 1..=cfg.order {
        let candidates = increments_of_order(n_occ, m);
        let work: Vec<Increment> = match cfg.screen_threshold {
            Some(t) if m > 1 => ledger.screen(m - 1, t),
            _ => candidates.clone(),
        };
        for s in candidates.iter().filter(|s| !work.contains(s)) {
            ledger.mark_screened(s.clone());
            reference.mark_screened(s.clone());
            n_screened += 1;
        }
        let todo: Vec<Increment> = work
            .iter()
            .filter(|s| {
                let key = ((*s).clone(), cfg.solver.tag().to_string(), ctx.fno_tag.clone());
                !matches!(records.get(&key), Some(r) if r.status == RecordStatus::Solved)
            })
            .cloned()
            .collect();
        solve_pool(&ctx, &todo, cfg.workers, |record| {
            log::info!(
                "{} solved: E_c = {:.10} ({} qubits, {:.2} s)",
                record.subset.label(),
                record.ec,
                record.resources.n_qubits,
                record.wall_time_s
            );
            if let Some((path, f)) = ledger_file.as_mut() {
                let mut line = serde_json::to_string(&record)?;
                line.push('\n');
                f.write_all(line.as_bytes()).map_err(io_err(path))?;
                f.flush().map_err(io_err(path))?;
            }
            records.insert(key_of(&record), record);
            Ok(())
        })?;
        for s in &work {
            let key = (s.clone(), cfg.solver.tag().to_string(), ctx.fno_tag.clone());
            match records.get(&key) {
                Some(r) if r.status == RecordStatus::Solved => {
                    ledger.insert_ec(s.clone(), r.ec)?;
                    if let Some(ec) = r.ec_reference {
                        reference.insert_ec(s.clone(), ec)?;
                    }
                }
                _ => ledger.mark_failed(s.clone()),
            }
        }
        // eps of this order; increments with unsolved subsets stay without eps.
        for s in increments_of_order(n_occ, m) {
            if ledger.status_of(&s) == Status::Solved || ledger.status_of(&s) == Status::Screened {
                let _ = ledger.increment_epsilon(&s);
            }
            if reference.status_of(&s) == Status::Solved || reference.status_of(&s) == Status::Screened {
                let _ = reference.increment_epsilon(&s);
            }
        }
    }

    let expansion = ledger.reconstruct(cfg.order, e_hf);
    let (status, missing, expansion) = match expansion {
        Ok(x) => (RunStatus::Complete, Vec::new(), Some(x)),
        Err(IncrementError::Incomplete(m)) => (RunStatus::Partial, m, None),
        Err(e) => return Err(e.into()),
    };
    let reference_expansion = if cfg.solver == SolverKind::Both {
        reference.reconstruct(cfg.order, e_hf).ok()
    } else {
        None
    };

    // Fill eps into this configuration's records and compact the ledger.
    for s in enumerate_increments(n_occ, cfg.order)? {
        let key = (s.clone(), cfg.solver.tag().to_string(), ctx.fno_tag.clone());
        if let Some(r) = records.get_mut(&key) {
            r.eps = ledger.eps.get(&s).copied();
            r.eps_reference = reference.eps.get(&s).copied();
        }
    }
    if let Some((path, f)) = ledger_file.take() {
        drop(f);
        let all: Vec<LedgerRecord> = records.values().cloned().collect();
        write_ledger(&path, &all)?;
    }

    let full_system = estimate_gates(
        n_occ,
        store.n_orb() - n_occ,
        if store.n_orb() * 2 <= crate::qubit::MAX_STATEVECTOR_QUBITS { Some(&full) } else { None },
    );
    let mut increments = Vec::new();
    for s in enumerate_increments(n_occ, cfg.order)? {
        let key = (s.clone(), cfg.solver.tag().to_string(), ctx.fno_tag.clone());
        let Some(r) = records.get(&key) else { continue };
        if ledger.status_of(&s) == Status::Screened {
            continue;
        }
        let res = &r.resources;
        increments.push(IncrementReport {
            label: s.label(),
            subset: s.clone(),
            order: s.order(),
            status: match r.status {
                RecordStatus::Solved => "solved".into(),
                RecordStatus::Failed => "failed".into(),
            },
            n_virt: r.n_virt,
            kept_virtuals: r.kept_virtuals,
            discarded_virtuals: r.n_virt - r.kept_virtuals,
            occupancy_fraction: r.occupancy_fraction,
            e_solver: r.e_solver,
            delta_mp2: r.delta_mp2,
            ec: r.ec,
            eps: ledger.eps.get(&s).copied(),
            ec_reference: r.ec_reference,
            eps_reference: reference.eps.get(&s).copied(),
            resources: res.clone(),
            reduction: Reduction {
                qubits_pct: reduction_pct(res.n_qubits as f64, full_system.n_qubits as f64),
                one_qubit_gates_pct: reduction_pct(
                    res.one_qubit_gates as f64,
                    full_system.one_qubit_gates as f64,
                ),
                two_qubit_gates_pct: reduction_pct(
                    res.two_qubit_gates as f64,
                    full_system.two_qubit_gates as f64,
                ),
            },
            vqe_iterations: r.vqe_iterations,
            vqe_converged: r.vqe_converged,
            error: r.error.clone(),
        });
    }
    let max_qubits_over_increments =
        increments.iter().map(|r| r.resources.n_qubits).max().unwrap_or(0);
    let report = RunReport {
        schema_version: REPORT_SCHEMA_VERSION,
        gate_model_version: GATE_MODEL_VERSION.into(),
        gate_counts_are_model_estimates: true,
        trotter_steps: 1,
        fcidump: cfg
            .fcidump_path
            .file_name()
            .map(|f| f.to_string_lossy().into_owned())
            .unwrap_or_default(),
        expansion_order: cfg.order,
        solver: cfg.solver,
        fno_policy: cfg.fno,
        fno_scope: cfg.fno_scope,
        screen_threshold: cfg.screen_threshold,
        status,
        n_orbitals: store.n_orb(),
        n_electrons: store.n_electrons(),
        n_occupied: n_occ,
        n_virtual: store.n_orb() - n_occ,
        e_hf,
        e_mp2: e_hf + mp2.e2,
        e_mp2_corr: mp2.e2,
        increments,
        n_screened,
        missing,
        expansion,
        reference_expansion,
        full_system,
        max_qubits_over_increments,
    };
    if let Some(path) = &cfg.report_path {
        fs::write(path, render_json(&report)?).map_err(io_err(path))?;
    }
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Table,
}

pub fn render_json(report: &RunReport) -> Result<String, OrchestratorError> {
    let mut s = serde_json::to_string_pretty(report)?;
    s.push('\n');
    Ok(s)
}

pub fn parse_report(text: &str) -> Result<RunReport, OrchestratorError> {
    Ok(serde_json::from_str(text)?)
}

pub fn report_render(report: &RunReport, format: ReportFormat) -> Result<String, OrchestratorError> {
    match format {
        ReportFormat::Json => render_json(report),
        ReportFormat::Table => Ok(render_table(report)),
    }
}

fn with_pct(value: u64, pct: f64) -> String {
    format!("{value} ({pct:.1}%)")
}

pub fn render_table(report: &RunReport) -> String {
    let mut out = String::new();
    let policy = match report.fno_policy {
        None => "none".to_string(),
        Some(p) => format!("{} ({})", p.tag(), report.fno_scope.tag()),
    };
    out += &format!(
        "MI({}) {}  solver={}  fno={}  status={:?}\n",
        report.expansion_order,
        report.fcidump,
        report.solver.tag(),
        policy,
        report.status
    );
    out += &format!(
        "orbitals={} electrons={} occupied={} virtual={}\n",
        report.n_orbitals, report.n_electrons, report.n_occupied, report.n_virtual
    );
    out += &format!("E_HF  = {:.10}\nE_MP2 = {:.10}\n\n", report.e_hf, report.e_mp2);
    out += &format!(
        "{:<20} {:>5} {:>12} {:>18} {:>18} {:>15} {:>15}\n",
        "increment", "kept", "qubits", "one-qubit gates", "two-qubit gates", "E_c", "eps"
    );
    for r in &report.increments {
        let eps = r.eps.map(|e| format!("{e:.10}")).unwrap_or_else(|| "-".into());
        out += &format!(
            "{:<20} {:>5} {:>12} {:>18} {:>18} {:>15.10} {:>15}\n",
            r.label,
            r.kept_virtuals,
            format!("{} ({:.1}%)", r.resources.n_qubits, r.reduction.qubits_pct),
            with_pct(r.resources.one_qubit_gates, r.reduction.one_qubit_gates_pct),
            with_pct(r.resources.two_qubit_gates, r.reduction.two_qubit_gates_pct),
            r.ec,
            eps
        );
    }
    let fs = &report.full_system;
    out += &format!(
        "{:<20} {:>5} {:>12} {:>18} {:>18}\n",
        "full system", report.n_virtual, fs.n_qubits, fs.one_qubit_gates, fs.two_qubit_gates
    );
    out += "\n";
    match &report.expansion {
        Some(x) => {
            for (m, e) in &x.per_order_sums {
                out += &format!("order {m} sum   = {e:.10}\n");
            }
            out += &format!("E_corr        = {:.10}\nE_total       = {:.10}\n", x.e_corr, x.e_total);
        }
        None => {
            let missing: Vec<String> = report.missing.iter().map(|s| s.to_string()).collect();
            out += &format!("incomplete expansion, missing: {}\n", missing.join(" "));
        }
    }
    if let Some(x) = &report.reference_expansion {
        out += &format!("E_total (FCI reference) = {:.10}\n", x.e_total);
    }
    out += &format!("max qubits over increments = {}\n", report.max_qubits_over_increments);
    out += &format!(
        "gate counts: model {} (upper-bound proxy, {} Trotter step)\n",
        report.gate_model_version, report.trotter_steps
    );
    out
}

/// Virtual spatial orbitals kept at occupancy `tau` from a descending
/// spatial occupation spectrum (cumulative mass, inclusive boundary).
pub fn kept_at_occupancy(spectrum: &[f64], tau: f64) -> usize {
    if tau >= 1.0 {
        return spectrum.len();
    }
    let total: f64 = spectrum.iter().sum();
    let target = tau * total * (1.0 - 1e-12);
    let mut cum = 0.0;
    let mut m = 0;
    while m < spectrum.len() && cum < target {
        cum += spectrum[m];
        m += 1;
    }
    m
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateRow {
    /// `None` for the untruncated full system.
    pub occupancy: Option<f64>,
    pub n_virt: usize,
    pub fno_qubits: usize,
    pub mi_fno_qubits: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateTable {
    pub n_occ: usize,
    pub n_virt_total: usize,
    pub order: usize,
    pub n_increments: u64,
    pub rows: Vec<EstimateRow>,
    pub full_system_qubits: usize,
}

/// Where the kept-virtual counts come from.
#[derive(Debug, Clone, PartialEq)]
pub enum EstimateSource {
    /// Descending spatial natural-orbital occupations.
    Spectrum(Vec<f64>),
    /// Known `(tau, N_v)` pairs.
    Counts(Vec<(f64, usize)>),
}

/// Qubit counts without solving anything: `2 (N_v + N_occ)` for FNO alone
/// and `2 (N_v + n)` for the order-`n` expansion.
pub fn estimate_only(
    n_occ: usize,
    n_virt_total: usize,
    order: usize,
    source: &EstimateSource,
    thresholds: &[f64],
) -> Result<EstimateTable, OrchestratorError> {
    if order == 0 || order > n_occ {
        return Err(OrchestratorError::Config(format!("order {order} not in [1, {n_occ}]")));
    }
    let pairs: Vec<(f64, usize)> = match source {
        EstimateSource::Spectrum(s) => {
            thresholds.iter().map(|&t| (t, kept_at_occupancy(s, t))).collect()
        }
        EstimateSource::Counts(c) => c.clone(),
    };
    let rows = pairs
        .into_iter()
        .map(|(t, nv)| EstimateRow {
            occupancy: Some(t),
            n_virt: nv,
            fno_qubits: estimate_qubits(n_occ, nv),
            mi_fno_qubits: estimate_qubits(order, nv),
        })
        .collect();
    Ok(EstimateTable {
        n_occ,
        n_virt_total,
        order,
        n_increments: crate::increments::count_increments(n_occ, order)?,
        rows,
        full_system_qubits: estimate_qubits(n_occ, n_virt_total),
    })
}

/// Spatial occupation spectrum of the whole molecule's natural orbitals.
pub fn occupation_spectrum(store: &IntegralStore) -> Result<Vec<f64>, OrchestratorError> {
    let g = global_fno(store)?;
    Ok(g
        .eigenvalues
        .iter()
        .zip(&g.spins)
        .filter(|(_, s)| **s == crate::integrals::Spin::Alpha)
        .map(|(e, _)| *e)
        .collect())
}

pub fn render_estimate_table(t: &EstimateTable) -> String {
    let mut out = format!(
        "N_occ={} N_v={} MI({}) increments={}\n{:<14} {:>6} {:>8} {:>12}\n",
        t.n_occ, t.n_virt_total, t.order, t.n_increments, "FNO occupancy", "N_v", "FNO",
        format!("MI({})-FNO", t.order)
    );
    for r in &t.rows {
        let label = match r.occupancy {
            Some(o) => format!("{}%", crate::fmt_g(o * 100.0, 6)),
            None => "full".into(),
        };
        out += &format!("{:<14} {:>6} {:>8} {:>12}\n", label, r.n_virt, r.fno_qubits, r.mi_fno_qubits);
    }
    out += &format!("{:<14} {:>6} {:>8}\n", "Full system", t.n_virt_total, t.full_system_qubits);
    out
}

/// Convenience map from subset to report row.
pub fn rows_by_subset(report: &RunReport) -> HashMap<Increment, &IncrementReport> {
    report.increments.iter().map(|r| (r.subset.clone(), r)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_parsing() {
        let text = "# run\nfcidump = mol.fcidump\norder = 2\nfno.keep_count = 7\nsolver = both\nworkers=3\n";
        let cfg = parse_config(text, Path::new("/data")).unwrap();
        assert_eq!(cfg.fcidump_path, PathBuf::from("/data/mol.fcidump"));
        assert_eq!(cfg.order, 2);
        assert_eq!(cfg.fno, Some(FnoPolicy::KeepCount(7)));
        assert_eq!(cfg.solver, SolverKind::Both);
        assert_eq!(cfg.workers, 3);
        assert_eq!(cfg.fno_tag(), "keep_count=7/per_increment");
    }

    #[test]
    fn config_conflicts() {
        let both = "fcidump=a\norder=2\nfno.keep_count=7\nfno.occupancy=0.99\n";
        assert!(matches!(parse_config(both, Path::new(".")), Err(OrchestratorError::Config(_))));
        assert!(parse_config("fcidump=a\norder=0\n", Path::new(".")).is_err());
        assert!(parse_config("fcidump=a\norder=1\nworkers=0\n", Path::new(".")).is_err());
        assert!(parse_config("fcidump=a\norder=1\nfno.occupancy=1.5\n", Path::new(".")).is_err());
        assert!(parse_config("order=1\n", Path::new(".")).is_err());
        assert!(parse_config("fcidump=a\norder=1\nbogus=1\n", Path::new(".")).is_err());
    }

    #[test]
    fn uniform_spectrum_ladder() {
        let spectrum = vec![0.01; 40];
        for &t in &DEFAULT_THRESHOLDS {
            assert_eq!(kept_at_occupancy(&spectrum, t), (t * 40.0_f64).ceil() as usize);
        }
        let t = estimate_only(5, 40, 3, &EstimateSource::Spectrum(spectrum), &[0.5]).unwrap();
        assert_eq!(t.rows[0].n_virt, 20);
        assert_eq!(t.rows[0].fno_qubits, 50);
        assert_eq!(t.rows[0].mi_fno_qubits, 46);
        assert_eq!(t.n_increments, 25);
    }

    #[test]
    fn reduction_percentages() {
        assert!((reduction_pct(16.0, 48.0) - 66.66666666666667).abs() < 1e-12);
        assert_eq!(format!("{:.1}", reduction_pct(794.0, 72_182.0)), "98.9");
        assert_eq!(reduction_pct(3.0, 0.0), 0.0);
    }
}
