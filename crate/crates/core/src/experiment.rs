//! Experiment configuration, orchestration and artifact emission.
//!
//! Every run writes its files into one output directory together with
//! `manifest.json`, which lists each file with its SHA-256. Nothing depends
//! on the clock or on thread scheduling, so reruns are byte-identical.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rand::RngCore;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dfiap::{self, DeltaChainSpec, GeneratorResidual, KernelComparison, State};
use crate::error::{FiapError, Result};
use crate::expr::{Expr, Var};
use crate::model::{CfiapSpec, InitLaw, ModelConfig};
use crate::ph::{self, FixedPoint, RateFunction};
use crate::point_process::{Purpose, RngStream, StreamId};
use crate::rmf::{self, DepartureCounts, EventLog, RmfObserver, Snapshots};
use crate::stats::{self, Pmf, SlopeFit};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    RmfSim,
    PhSolve,
    Compare,
    DfiapValidate,
    #[serde(rename = "sweep-M", alias = "sweep-m")]
    SweepM,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::RmfSim => "rmf-sim",
            Mode::PhSolve => "ph-solve",
            Mode::Compare => "compare",
            Mode::DfiapValidate => "dfiap-validate",
            Mode::SweepM => "sweep-M",
        }
    }
}

impl std::str::FromStr for Mode {
    type Err = FiapError;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "rmf-sim" => Mode::RmfSim,
            "ph-solve" => Mode::PhSolve,
            "compare" => Mode::Compare,
            "dfiap-validate" => Mode::DfiapValidate,
            "sweep-M" | "sweep-m" => Mode::SweepM,
            _ => return Err(FiapError::Config(format!("unknown mode `{s}`"))),
        })
    }
}

/// Pass/fail bands for the convergence-rate checks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Bands {
    pub slope: [f64; 2],
    pub residual_rms: f64,
}

impl Default for Bands {
    fn default() -> Self {
        Self { slope: [-0.8, -0.2], residual_rms: 0.25 }
    }
}

/// Fixed-point solver settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    pub tol: f64,
    pub max_iter: usize,
    /// Paths per iteration; defaults to `n_paths`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_paths: Option<usize>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self { tol: 0.01, max_iter: 20, n_paths: None }
    }
}

/// δ-chain instance for `dfiap-validate`. Resets and weights default to the
/// model's when those are integer constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r: Option<Vec<u64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu: Option<Vec<Vec<u64>>>,
    #[serde(default = "default_chain_sigma")]
    pub sigma: Expr,
    #[serde(default = "default_delta")]
    pub delta: f64,
    /// Start state `[replica][node]`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub state: Option<Vec<Vec<u64>>>,
    #[serde(default = "default_max_state")]
    pub max_state: u64,
    #[serde(default = "default_deltas")]
    pub deltas: Vec<f64>,
    #[serde(default = "default_steps")]
    pub trajectory_steps: usize,
}

fn default_chain_sigma() -> Expr {
    Expr::parse("min(x, 5)").expect("valid default")
}
fn default_delta() -> f64 {
    0.2
}
fn default_max_state() -> u64 {
    20
}
fn default_deltas() -> Vec<f64> {
    vec![0.1, 0.05, 0.025]
}
fn default_steps() -> usize {
    100
}

impl Default for ChainConfig {
    fn default() -> Self {
        Self {
            r: None,
            mu: None,
            sigma: default_chain_sigma(),
            delta: default_delta(),
            state: None,
            max_state: default_max_state(),
            deltas: default_deltas(),
            trajectory_steps: default_steps(),
        }
    }
}

/// Where the model comes from: inline, or a JSON file relative to the
/// experiment config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ModelSource {
    Path(PathBuf),
    Inline(serde_json::Value),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelSource,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<Mode>,
    #[serde(rename = "M", default, skip_serializing_if = "Option::is_none")]
    pub m: Option<usize>,
    #[serde(rename = "M_list", default, skip_serializing_if = "Option::is_none")]
    pub m_list: Option<Vec<usize>>,
    pub n_paths: usize,
    /// Paths for the Poisson-Hypothesis side; defaults to `n_paths`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ph_paths: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<f64>,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(default = "default_grid")]
    pub grid: usize,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub bands: Bands,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dfiap: Option<ChainConfig>,
}

fn default_grid() -> usize {
    ph::DEFAULT_CELLS
}

impl ExperimentConfig {
    pub fn from_json(src: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(src);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let inner = e.into_inner();
            FiapError::Config(format!("line {} column {}, field `{path}`: {inner}", inner.line(), inner.column()))
        })
    }

    /// Reads a config file; a `model` path is resolved against its directory
    /// and inlined.
    pub fn load(path: &Path) -> Result<Self> {
        let src = fs::read_to_string(path).map_err(|e| FiapError::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_json(&src)?;
        if let ModelSource::Path(p) = &cfg.model {
            let full = path.parent().unwrap_or(Path::new(".")).join(p);
            let text = fs::read_to_string(&full).map_err(|e| FiapError::Config(format!("model file {}: {e}", full.display())))?;
            let value: serde_json::Value =
                serde_json::from_str(&text).map_err(|e| FiapError::Config(format!("model file {}: {e}", full.display())))?;
            cfg.model = ModelSource::Inline(value);
        }
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("experiment config serializes")
    }

    pub fn model_config(&self) -> Result<ModelConfig> {
        match &self.model {
            ModelSource::Inline(v) => ModelConfig::from_json(&v.to_string())
                .map_err(|e| FiapError::Config(format!("model: {}", e.to_string().trim_start_matches("config error: ")))),
            ModelSource::Path(p) => Err(FiapError::Config(format!("model file {} was not loaded", p.display()))),
        }
    }

    /// The model with the experiment's horizon applied.
    pub fn spec(&self) -> Result<CfiapSpec> {
        let spec = self.model_config()?.build()?;
        match self.horizon {
            Some(h) => spec.with_horizon(h),
            None => Ok(spec),
        }
    }

    /// Replica counts to run, strictly increasing.
    pub fn replica_list(&self) -> Result<Vec<usize>> {
        let list = match (&self.m, &self.m_list) {
            (Some(m), None) => vec![*m],
            (None, Some(l)) => l.clone(),
            (Some(_), Some(_)) => return Err(FiapError::Config("give either `M` or `M_list`, not both".into())),
            (None, None) => return Err(FiapError::Config("`M` or `M_list` is required".into())),
        };
        if list.is_empty() || list.windows(2).any(|w| w[0] >= w[1]) {
            return Err(FiapError::Config("`M_list` must be nonempty and strictly increasing".into()));
        }
        if let Some(&m) = list.iter().find(|&&m| m < 2) {
            return Err(FiapError::TooFewReplicas(m));
        }
        Ok(list)
    }

    pub fn check(&self) -> Result<()> {
        if self.n_paths == 0 {
            return Err(FiapError::Config("`n_paths` must be positive".into()));
        }
        if self.grid == 0 {
            return Err(FiapError::Config("`grid` must be positive".into()));
        }
        if self.bands.slope[0] > self.bands.slope[1] {
            return Err(FiapError::Config("`bands.slope` must be [low, high]".into()));
        }
        self.spec()?;
        Ok(())
    }
}

/// Independent seed for one stage of an experiment.
pub fn sub_seed(seed: u64, stage: u32) -> u64 {
    RngStream::aux(seed, stage).next_u64()
}

/// Independence gaps use a coarse grid: the statistic is a sup over cells.
pub const INDEPENDENCE_BINS: usize = 4;

/// Observer collecting what the comparison statistics need: intensities at
/// `times` of nodes 0 and 1 in replicas 0 and 1, arrivals to `(0, 0)` up to
/// each time, and departures of node 0 in every replica.
#[derive(Debug, Clone)]
pub struct CompareObserver {
    pub snapshots: Snapshots,
    pub arrivals: Vec<f64>,
    pub departures: DepartureCounts,
}

impl CompareObserver {
    pub fn new(times: &[f64], replicas: usize, nodes: usize, horizon: f64) -> Self {
        Self {
            snapshots: Snapshots::new(times.to_vec(), replicas, nodes, horizon),
            arrivals: vec![0.0; times.len()],
            departures: DepartureCounts::new(replicas, nodes),
        }
    }
}

impl RmfObserver for CompareObserver {
    fn departure(&mut self, t: f64, m: usize, j: usize) {
        self.departures.departure(t, m, j);
    }

    fn arrival(&mut self, t: f64, m: usize, i: usize, _src: usize, w: f64) {
        if m == 0 && i == 0 {
            for (k, &s) in self.snapshots.times.iter().enumerate() {
                if t <= s {
                    self.arrivals[k] += w;
                }
            }
        }
    }

    fn segment(&mut self, m: usize, i: usize, t0: f64, lam0: f64, t1: f64, drift: &crate::point_process::Drift) -> Result<()> {
        self.snapshots.segment(m, i, t0, lam0, t1, drift)
    }
}

/// Per-path samples at the comparison times. `lam[k][p]` is `λ_{0,0}` at
/// `times[k]` on path `p`; `partner` is `λ_{1,0}` for RMF runs and `λ̃_1`
/// for Poisson-Hypothesis runs (absent when `K = 1`).
#[derive(Debug, Clone, Default)]
pub struct CompareSample {
    pub times: Vec<f64>,
    pub arrivals: Vec<Vec<f64>>,
    pub lam: Vec<Vec<f64>>,
    pub partner: Vec<Vec<f64>>,
    /// `N_{m,0}([0, T])` for every replica, `[path][replica]`; RMF only.
    pub counts: Vec<Vec<f64>>,
}

fn gather(times: &[f64], per_path: Vec<(Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>)>, keep_counts: bool) -> CompareSample {
    let nt = times.len();
    let mut s = CompareSample {
        times: times.to_vec(),
        arrivals: vec![Vec::with_capacity(per_path.len()); nt],
        lam: vec![Vec::with_capacity(per_path.len()); nt],
        partner: vec![Vec::with_capacity(per_path.len()); nt],
        counts: Vec::new(),
    };
    for (a, l, p, c) in per_path {
        for k in 0..nt {
            s.arrivals[k].push(a[k]);
            s.lam[k].push(l[k]);
            if !p.is_empty() {
                s.partner[k].push(p[k]);
            }
        }
        if keep_counts {
            s.counts.push(c);
        }
    }
    if s.partner.iter().all(Vec::is_empty) {
        s.partner.clear();
    }
    s
}

/// Runs `n_paths` RMF trajectories and extracts the comparison sample.
pub fn sample_rmf(spec: &CfiapSpec, replicas: usize, n_paths: usize, seed: u64, times: &[f64], keep_counts: bool) -> Result<CompareSample> {
    let (k, horizon) = (spec.nodes(), spec.horizon());
    let per_path = rmf::run_batch_map(
        spec,
        replicas,
        horizon,
        seed,
        n_paths,
        |_, obs: CompareObserver| {
            let nt = obs.snapshots.times.len();
            let lam = (0..nt).map(|t| obs.snapshots.get(t, 0, 0)).collect();
            let partner = (0..nt).map(|t| obs.snapshots.get(t, 1, 0)).collect();
            let counts = if keep_counts { (0..replicas).map(|m| obs.departures.get(m, 0) as f64).collect() } else { Vec::new() };
            (obs.arrivals, lam, partner, counts)
        },
        || CompareObserver::new(times, replicas, k, horizon),
    )?;
    Ok(gather(times, per_path, keep_counts))
}

/// Runs `n_paths` Poisson-Hypothesis paths driven by `rates`.
pub fn sample_ph(spec: &CfiapSpec, rates: &RateFunction, n_paths: usize, seed: u64, times: &[f64]) -> Result<CompareSample> {
    let (k, horizon) = (spec.nodes(), spec.horizon());
    let per_path = ph::simulate_ph(
        spec,
        rates,
        n_paths,
        horizon,
        seed,
        || CompareObserver::new(times, 1, k, horizon),
        |_, obs| {
            let nt = obs.snapshots.times.len();
            let lam = (0..nt).map(|t| obs.snapshots.get(t, 0, 0)).collect();
            let partner = if k > 1 { (0..nt).map(|t| obs.snapshots.get(t, 0, 1)).collect() } else { Vec::new() };
            (obs.arrivals, lam, partner, Vec::new())
        },
    )?;
    Ok(gather(times, per_path, false))
}

/// `(fit, reason)`: the fit, or why it was skipped.
pub type FitOutcome = std::result::Result<SlopeFit, String>;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitSummary {
    pub statistic: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fit: Option<SlopeFit>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub skipped: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pass: Option<bool>,
}

impl FitSummary {
    fn new(statistic: &str, outcome: FitOutcome, bands: &Bands) -> Self {
        match outcome {
            Ok(fit) => {
                let pass = (bands.slope[0]..=bands.slope[1]).contains(&fit.slope) && fit.residual_rms < bands.residual_rms;
                Self { statistic: statistic.into(), fit: Some(fit), skipped: None, pass: Some(pass) }
            }
            Err(reason) => Self { statistic: statistic.into(), fit: None, skipped: Some(reason), pass: None },
        }
    }
}

/// One row of `results.csv`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResultRow {
    pub experiment: String,
    #[serde(rename = "M")]
    pub m: usize,
    pub statistic: String,
    pub value: f64,
    pub stderr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ManifestEntry {
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Manifest {
    pub version: String,
    pub mode: String,
    pub seed: u64,
    pub config_sha256: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub converged: Option<bool>,
    pub files: Vec<ManifestEntry>,
}

/// What a run produced.
#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub out: PathBuf,
    pub manifest: Manifest,
    pub rows: Vec<ResultRow>,
    /// `Some(false)` when a pass/fail check in the summary failed.
    pub passed: Option<bool>,
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Hash of the effective config. The output directory is not part of an
/// experiment's identity and is left out.
pub fn config_hash(cfg: &ExperimentConfig) -> String {
    let mut c = cfg.clone();
    c.out = None;
    sha256_hex(c.to_json().as_bytes())
}

/// Collects output files in memory so the manifest can hash them.
struct Artifacts {
    dir: PathBuf,
    files: BTreeMap<String, Vec<u8>>,
}

impl Artifacts {
    fn new(dir: PathBuf) -> Self {
        Self { dir, files: BTreeMap::new() }
    }

    fn add(&mut self, name: &str, bytes: Vec<u8>) {
        self.files.insert(name.to_string(), bytes);
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut bytes = serde_json::to_vec_pretty(value)?;
        bytes.push(b'\n');
        self.add(name, bytes);
        Ok(())
    }

    fn rows(&mut self, rows: &[ResultRow]) -> Result<()> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["experiment", "M", "statistic", "value", "stderr"])?;
        for r in rows {
            w.write_record([r.experiment.clone(), r.m.to_string(), r.statistic.clone(), format!("{:?}", r.value), format!("{:?}", r.stderr)])?;
        }
        self.add("results.csv", w.into_inner().map_err(|e| FiapError::Io(e.into_error()))?);
        Ok(())
    }

    fn finish(self, cfg: &ExperimentConfig, mode: Mode, converged: Option<bool>) -> Result<Manifest> {
        fs::create_dir_all(&self.dir)?;
        let mut files = Vec::new();
        for (name, bytes) in &self.files {
            fs::write(self.dir.join(name), bytes)?;
            files.push(ManifestEntry { path: name.clone(), bytes: bytes.len() as u64, sha256: sha256_hex(bytes) });
        }
        let manifest = Manifest {
            version: env!("CARGO_PKG_VERSION").to_string(),
            mode: mode.name().to_string(),
            seed: cfg.seed,
            config_sha256: config_hash(cfg),
            converged,
            files,
        };
        let mut bytes = serde_json::to_vec_pretty(&manifest)?;
        bytes.push(b'\n');
        fs::write(self.dir.join("manifest.json"), bytes)?;
        Ok(manifest)
    }
}

fn row(experiment: Mode, m: usize, statistic: &str, value: f64, stderr: f64) -> ResultRow {
    ResultRow { experiment: experiment.name().into(), m, statistic: statistic.into(), value, stderr }
}

/// Runs one experiment and writes its artifacts into the configured output
/// directory (default `out`).
pub fn run(cfg: &ExperimentConfig, mode: Mode) -> Result<RunReport> {
    if let Some(m) = cfg.mode {
        if m != mode {
            return Err(FiapError::Config(format!("config is for mode `{}`, asked to run `{}`", m.name(), mode.name())));
        }
    }
    cfg.check()?;
    let dir = cfg.out.clone().unwrap_or_else(|| PathBuf::from("out"));
    let mut art = Artifacts::new(dir.clone());
    let (rows, converged, passed) = match mode {
        Mode::RmfSim => run_rmf_sim(cfg, &mut art)?,
        Mode::PhSolve => run_ph_solve(cfg, &mut art)?,
        Mode::Compare => run_compare(cfg, mode, &mut art)?,
        Mode::SweepM => {
            if cfg.m_list.as_ref().is_none_or(|l| l.len() < 3) {
                return Err(FiapError::Config("sweep-M needs `M_list` with at least three values".into()));
            }
            run_compare(cfg, mode, &mut art)?
        }
        Mode::DfiapValidate => run_dfiap_validate(cfg, &mut art)?,
    };
    art.rows(&rows)?;
    let manifest = art.finish(cfg, mode, converged)?;
    Ok(RunReport { out: dir, manifest, rows, passed })
}

type Outcome = (Vec<ResultRow>, Option<bool>, Option<bool>);

fn run_rmf_sim(cfg: &ExperimentConfig, art: &mut Artifacts) -> Result<Outcome> {
    let spec = cfg.spec()?;
    let replicas = *cfg.replica_list()?.last().expect("nonempty");
    let (k, horizon) = (spec.nodes(), spec.horizon());
    let times: Vec<f64> = (0..=cfg.grid).map(|c| horizon * c as f64 / cfg.grid as f64).collect();
    let seed = sub_seed(cfg.seed, 1);
    let mut obs = (EventLog::default(), Snapshots::new(times, replicas, k, horizon));
    rmf::run_rmf(&spec, replicas, horizon, seed, &rmf::RmfOptions::default(), &mut obs)?;
    let mut bytes = Vec::new();
    obs.0.write_csv(&mut bytes)?;
    art.add("events.csv", bytes);
    let mut bytes = Vec::new();
    obs.1.write_csv(&mut bytes)?;
    art.add("trajectory.csv", bytes);

    let counts = rmf::run_batch_map(&spec, replicas, horizon, seed, cfg.n_paths, |_, d: DepartureCounts| d, || DepartureCounts::new(replicas, k))?;
    let mut rows = Vec::new();
    for i in 0..k {
        let per_path: Vec<f64> = counts.iter().map(|d| (0..replicas).map(|m| d.get(m, i) as f64).sum::<f64>() / replicas as f64).collect();
        let est = stats::mean_estimate(&per_path)?;
        rows.push(row(Mode::RmfSim, replicas, &format!("mean_departures_node{i}"), est.value, est.stderr));
    }
    Ok((rows, None, None))
}

fn solve(cfg: &ExperimentConfig, spec: &CfiapSpec) -> Result<FixedPoint> {
    let paths = cfg.solver.n_paths.unwrap_or(cfg.n_paths);
    ph::solve_fixed_point(spec, cfg.grid, cfg.solver.tol, cfg.solver.max_iter, paths, sub_seed(cfg.seed, 0))
}

fn emit_fixed_point(fp: &FixedPoint, art: &mut Artifacts) -> Result<()> {
    let mut bytes = Vec::new();
    fp.rates.write_csv(&mut bytes)?;
    art.add("rates.csv", bytes);
    let mut bytes = Vec::new();
    fp.write_diagnostics_csv(&mut bytes)?;
    art.add("diagnostics.csv", bytes);
    Ok(())
}

fn run_ph_solve(cfg: &ExperimentConfig, art: &mut Artifacts) -> Result<Outcome> {
    let spec = cfg.spec()?;
    let fp = solve(cfg, &spec)?;
    emit_fixed_point(&fp, art)?;
    let mut rows = Vec::new();
    for d in &fp.diagnostics {
        rows.push(row(Mode::PhSolve, 0, &format!("sup_delta_iter{}", d.iteration), d.sup_delta, d.noise_floor / 3.0));
    }
    let stderr = fp.stderr.iter().flatten().copied().fold(0.0, f64::max);
    for i in 0..spec.nodes() {
        let mass = fp.rates.integral(i, spec.horizon());
        rows.push(row(Mode::PhSolve, 0, &format!("integrated_rate_node{i}"), mass, stderr * spec.horizon()));
    }
    art.json("summary.json", &serde_json::json!({ "mode": "ph-solve", "converged": fp.converged, "iterations": fp.diagnostics.len() }))?;
    Ok((rows, Some(fp.converged), None))
}

/// Arrival-count TV: exact pmf when interactions are integer constants,
/// otherwise binned against the Poisson-Hypothesis sample.
fn arrival_tv(rmf: &[f64], ph_sample: &[f64], exact: Option<&Pmf>, seed: u64) -> Result<stats::Estimate> {
    match exact {
        Some(pmf) => {
            let xs: Vec<i64> = rmf.iter().map(|&a| a.round() as i64).collect();
            stats::tv_sample_vs_pmf(&xs, pmf, seed)
        }
        None => {
            let b = stats::tv_binned(rmf, ph_sample, stats::DEFAULT_TV_BINS, seed)?;
            Ok(stats::Estimate { value: b.value, stderr: b.stderr })
        }
    }
}

fn fit_outcome(k: usize, ms: &[usize], values: &[f64]) -> FitOutcome {
    if k == 1 {
        return Err("K = 1: replica and Poisson-Hypothesis dynamics coincide".into());
    }
    if ms.len() < 3 {
        return Err(format!("{} replica counts, need 3", ms.len()));
    }
    let mf: Vec<f64> = ms.iter().map(|&m| m as f64).collect();
    stats::loglog_slope(&mf, values).map_err(|e| e.to_string())
}

fn run_compare(cfg: &ExperimentConfig, mode: Mode, art: &mut Artifacts) -> Result<Outcome> {
    let spec = cfg.spec()?;
    let ms = cfg.replica_list()?;
    let (k, horizon) = (spec.nodes(), spec.horizon());
    let times = [horizon / 2.0, horizon];
    let tags = ["T2", "T"];

    let fp = solve(cfg, &spec)?;
    emit_fixed_point(&fp, art)?;
    let ph_paths = cfg.ph_paths.unwrap_or(cfg.n_paths);
    let ph_sample = sample_ph(&spec, &fp.rates, ph_paths, sub_seed(cfg.seed, 2), &times)?;
    let exact: Option<Vec<Pmf>> = if spec.integer_interactions() {
        Some(times.iter().map(|&t| ph::arrival_pmf(&spec, &fp.rates, 0, t)).collect::<Result<_>>()?)
    } else {
        None
    };
    let boot = sub_seed(cfg.seed, 3);
    let mut rows = Vec::new();
    let mut notes: Vec<String> = Vec::new();
    if k > 1 {
        if ph_paths >= stats::MIN_INDEPENDENCE_SAMPLES {
            let last = times.len() - 1;
            let g = stats::independence_gap(&ph_sample.lam[last], &ph_sample.partner[last], INDEPENDENCE_BINS, boot)?;
            rows.push(row(mode, 0, "independence_gap_nodes_T", g.value, g.stderr));
        } else {
            notes.push(format!("node independence gap skipped: {ph_paths} paths < {}", stats::MIN_INDEPENDENCE_SAMPLES));
        }
    }

    let mut tv_arr = Vec::new();
    let mut tv_lam = Vec::new();
    let mut tlln = Vec::new();
    for (idx, &m) in ms.iter().enumerate() {
        let sample = sample_rmf(&spec, m, cfg.n_paths, sub_seed(cfg.seed, 100 + idx as u32), &times, true)?;
        for (t, tag) in tags.iter().enumerate() {
            let e = arrival_tv(&sample.arrivals[t], &ph_sample.arrivals[t], exact.as_ref().map(|v| &v[t]), boot)?;
            rows.push(row(mode, m, &format!("tv_arrivals_{tag}"), e.value, e.stderr));
            let b = stats::tv_binned(&sample.lam[t], &ph_sample.lam[t], stats::DEFAULT_TV_BINS, boot)?;
            rows.push(row(mode, m, &format!("tv_intensity_{tag}"), b.value, b.stderr));
            rows.push(row(mode, m, &format!("tv_intensity_{tag}_half_bins"), b.half_bins, b.stderr));
            rows.push(row(mode, m, &format!("tv_intensity_{tag}_double_bins"), b.double_bins, b.stderr));
            if *tag == "T" {
                tv_arr.push(e.value);
                tv_lam.push(b.value);
            }
        }
        if cfg.n_paths >= 2 {
            let d = stats::tlln_deviation(&sample.counts, boot)?;
            rows.push(row(mode, m, "tlln_deviation", d.value, d.stderr));
            tlln.push(d.value);
            rows.push(row(mode, m, "chen_stein_rhs", stats::chen_stein_rhs(&sample.counts)?, 0.0));
        }
        let last = times.len() - 1;
        if cfg.n_paths >= stats::MIN_INDEPENDENCE_SAMPLES {
            match stats::independence_gap(&sample.lam[last], &sample.partner[last], INDEPENDENCE_BINS, boot) {
                Ok(g) => rows.push(row(mode, m, "independence_gap_replicas_T", g.value, g.stderr)),
                Err(e) => notes.push(format!("M = {m}: replica independence gap skipped: {e}")),
            }
        }
    }

    let fits = vec![
        FitSummary::new("tv_arrivals_T", fit_outcome(k, &ms, &tv_arr), &cfg.bands),
        FitSummary::new("tv_intensity_T", fit_outcome(k, &ms, &tv_lam), &cfg.bands),
    ];
    let passed = fits.iter().filter_map(|f| f.pass).reduce(|a, b| a && b);
    let tlln_ratios: Vec<f64> = tlln.windows(2).map(|w| w[1] / w[0]).collect();
    art.json(
        "summary.json",
        &serde_json::json!({
            "mode": mode.name(),
            "M_list": ms,
            "converged": fp.converged,
            "exact_arrival_law": exact.is_some(),
            "bands": cfg.bands,
            "fits": fits,
            "tlln_ratios": tlln_ratios,
            "notes": notes,
            "pass": passed,
        }),
    )?;
    Ok((rows, Some(fp.converged), passed))
}

/// Largest deviation between Monte-Carlo single-coordinate frequencies and
/// the exact rows, with the largest binomial standard error.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KernelMcReport {
    pub samples: usize,
    pub max_abs_error: f64,
    pub max_stderr: f64,
    pub max_mass_defect: f64,
    pub pass: bool,
    pub table: Vec<KernelMcRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KernelMcRow {
    pub m: usize,
    pub i: usize,
    pub l: i64,
    pub exact: f64,
    pub empirical: f64,
    pub stderr: f64,
}

/// Runs `n` independent δ-steps from `state` and compares per-coordinate
/// frequencies with [`dfiap::transition_row_exact`].
pub fn kernel_mc_check(state: &[Vec<u64>], chain: &DeltaChainSpec, n: usize, seed: u64) -> Result<KernelMcReport> {
    if n == 0 {
        return Err(FiapError::EmptySample);
    }
    let (mc, k) = (state.len(), chain.nodes());
    let mut rng = RngStream::new(seed, 0, StreamId::new(0, 0, Purpose::Aux(0)));
    let mut counts: Vec<BTreeMap<u64, usize>> = vec![BTreeMap::new(); mc * k];
    for _ in 0..n {
        let next = dfiap::delta_step(state, chain, &mut rng)?;
        for (c, v) in next.iter().flatten().enumerate() {
            *counts[c].entry(*v).or_default() += 1;
        }
    }
    let mut table = Vec::new();
    let (mut max_err, mut max_se, mut defect) = (0.0f64, 0.0f64, 0.0f64);
    for m in 0..mc {
        for i in 0..k {
            let pmf = dfiap::transition_row_exact(state, chain, m, i)?;
            defect = defect.max((pmf.total() - 1.0).abs());
            let c = &counts[m * k + i];
            let lo = pmf.min().min(c.keys().next().map_or(i64::MAX, |&v| v as i64));
            let hi = pmf.max().max(c.keys().next_back().map_or(i64::MIN, |&v| v as i64));
            for l in lo..=hi {
                let exact = pmf.prob(l);
                let empirical = c.get(&(l as u64)).copied().unwrap_or(0) as f64 / n as f64;
                if exact == 0.0 && empirical == 0.0 {
                    continue;
                }
                let stderr = (exact * (1.0 - exact) / n as f64).sqrt();
                max_err = max_err.max((exact - empirical).abs());
                max_se = max_se.max(stderr);
                table.push(KernelMcRow { m, i, l, exact, empirical, stderr });
            }
        }
    }
    let pass = max_err <= 3.0 * max_se && defect <= stats::MASS_TOLERANCE;
    Ok(KernelMcReport { samples: n, max_abs_error: max_err, max_stderr: max_se, max_mass_defect: defect, pass, table })
}

/// Drift-free Galves-Löcherbach model with integer resets and weights, the
/// continuous-time counterpart of a δ-chain.
pub fn integer_gl(r: &[u64], mu: &[Vec<u64>], horizon: f64) -> Result<CfiapSpec> {
    let k = r.len();
    let h = mu.iter().map(|row| row.iter().map(|&w| Expr::constant(w as f64)).collect()).collect();
    let bound = mu.iter().flatten().copied().max().unwrap_or(0) as f64;
    CfiapSpec::custom(
        horizon,
        h,
        bound,
        Expr::parse("abs(x)")?,
        1.0,
        r.iter().map(|&v| Expr::constant(v as f64)).collect(),
        vec![Expr::var(Var::Lam); k],
        vec![InitLaw::Constant { value: 1.0 }; k],
    )
}

/// Default chain state: small, distinct values that exercise saturation.
fn default_state(replicas: usize, k: usize) -> State {
    (0..replicas).map(|m| (0..k).map(|i| ((m * k + i) * 5 % 7) as u64).collect()).collect()
}

fn integer_constant(e: &Expr, what: &str) -> Result<u64> {
    match e {
        Expr::Const(c) if *c >= 0.0 && c.fract() == 0.0 => Ok(*c as u64),
        _ => Err(FiapError::Config(format!("{what} `{e}` is not an integer constant; set it in `dfiap`"))),
    }
}

fn run_dfiap_validate(cfg: &ExperimentConfig, art: &mut Artifacts) -> Result<Outcome> {
    let spec = cfg.spec()?;
    let chain_cfg = cfg.dfiap.clone().unwrap_or_default();
    let k = spec.nodes();
    let replicas = *cfg.replica_list()?.last().expect("nonempty");
    let r = match &chain_cfg.r {
        Some(r) => r.clone(),
        None => (0..k).map(|i| integer_constant(spec.fragmentation_expr(i), "reset")).collect::<Result<_>>()?,
    };
    let mu = match &chain_cfg.mu {
        Some(mu) => mu.clone(),
        None => (0..k)
            .map(|j| (0..k).map(|i| if i == j { Ok(0) } else { integer_constant(spec.interaction_expr(j, i), "weight") }).collect())
            .collect::<Result<_>>()?,
    };
    let chain = DeltaChainSpec::new(r.clone(), mu.clone(), chain_cfg.sigma.clone(), chain_cfg.delta)?;
    let state = chain_cfg.state.clone().unwrap_or_else(|| default_state(replicas, k));
    if state.len() != replicas {
        return Err(FiapError::Config(format!("`dfiap.state` has {} rows, M is {replicas}", state.len())));
    }

    let mut bytes = Vec::new();
    dfiap::write_transition_table(&state, &chain, &mut bytes)?;
    art.add("transitions.csv", bytes);

    let mc = kernel_mc_check(&state, &chain, cfg.n_paths, sub_seed(cfg.seed, 4))?;
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["m", "i", "l", "exact", "empirical", "stderr"])?;
    for t in &mc.table {
        w.write_record([t.m.to_string(), t.i.to_string(), t.l.to_string(), format!("{:?}", t.exact), format!("{:?}", t.empirical), format!("{:?}", t.stderr)])?;
    }
    art.add("mc_report.csv", w.into_inner().map_err(|e| FiapError::Io(e.into_error()))?);

    let mut rng = RngStream::new(sub_seed(cfg.seed, 5), 0, StreamId::new(0, 0, Purpose::Aux(1)));
    let mut path = vec![state.clone()];
    for _ in 0..chain_cfg.trajectory_steps {
        let next = dfiap::delta_step(path.last().expect("nonempty"), &chain, &mut rng)?;
        path.push(next);
    }
    let mut bytes = Vec::new();
    dfiap::write_chain_trajectory(&path, &mut bytes)?;
    art.add("chain_trajectory.csv", bytes);

    let membership: KernelComparison = dfiap::compare_membership_kernels(&chain, replicas, chain_cfg.max_state)?;

    // Generator check on two replicas of the drift-free integer model.
    let gl = integer_gl(&r, &mu, spec.horizon())?;
    let gstate = default_state(2, k).into_iter().map(|row| row.into_iter().map(|v| v.max(1)).collect()).collect::<State>();
    let first = |x: &[Vec<u64>]| x[0][0] as f64;
    let residuals: Vec<GeneratorResidual> = dfiap::generator_residual(&first, &gstate, &gl, &chain_cfg.deltas)?;
    let ratios: Vec<f64> = residuals.windows(2).map(|w| w[1].residual / w[0].residual).collect();
    let generator_pass = !ratios.is_empty() && ratios.iter().all(|r| (0.3..=0.7).contains(r));
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["delta", "p_delta", "generator", "residual"])?;
    for g in &residuals {
        w.write_record([format!("{:?}", g.delta), format!("{:?}", g.p_delta), format!("{:?}", g.generator), format!("{:?}", g.residual)])?;
    }
    art.add("generator.csv", w.into_inner().map_err(|e| FiapError::Io(e.into_error()))?);

    let membership_pass = membership.max_abs_diff <= stats::MASS_TOLERANCE;
    let passed = mc.pass && membership_pass && generator_pass;
    art.json(
        "summary.json",
        &serde_json::json!({
            "mode": "dfiap-validate",
            "M": replicas,
            "kernel": { "samples": mc.samples, "max_abs_error": mc.max_abs_error, "max_stderr": mc.max_stderr,
                        "max_mass_defect": mc.max_mass_defect, "pass": mc.pass },
            "membership": { "max_state": chain_cfg.max_state, "states_checked": membership.states_checked,
                            "max_abs_diff": membership.max_abs_diff, "pass": membership_pass },
            "generator": { "residuals": residuals, "ratios": ratios, "pass": generator_pass },
            "pass": passed,
        }),
    )?;
    let rows = vec![
        row(Mode::DfiapValidate, replicas, "kernel_max_abs_error", mc.max_abs_error, mc.max_stderr),
        row(Mode::DfiapValidate, replicas, "membership_max_abs_diff", membership.max_abs_diff, 0.0),
    ]
    .into_iter()
    .chain(residuals.iter().map(|g| row(Mode::DfiapValidate, 2, &format!("generator_residual_{:?}", g.delta), g.residual, 0.0)))
    .collect();
    Ok((rows, None, Some(passed)))
}
