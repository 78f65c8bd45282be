//! Poisson-Hypothesis dynamics and the mean-rate fixed point.
//!
//! Under the Poisson Hypothesis node `i` receives, from each `j ≠ i`, an
//! independent inhomogeneous Poisson stream whose rate is the mean intensity
//! `s ↦ E[λ̃_j(s)]`. The mean rates are unknown; [`solve_fixed_point`] finds
//! them by iterating [`phi_iterate`], the map sending input rates to the mean
//! intensities they induce.

use std::io::{Read, Write};

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{FiapError, Result};
use crate::model::CfiapSpec;
use crate::point_process::{next_event_thinning, Purpose, RngStream, StreamId, SHARED_REPLICA};
use crate::rmf::{CellIntegrals, ReplicaState, RmfObserver};
use crate::stats::Pmf;

pub const DEFAULT_CELLS: usize = 200;

/// Per-node piecewise-constant nonnegative rates on a uniform grid of `[0, T]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateFunction {
    horizon: f64,
    /// `values[node][cell]`.
    values: Vec<Vec<f64>>,
}

impl RateFunction {
    pub fn new(horizon: f64, values: Vec<Vec<f64>>) -> Result<Self> {
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(FiapError::InvalidParameter(format!("horizon must be positive, got {horizon}")));
        }
        let cells = values.first().map(|v| v.len()).unwrap_or(0);
        if cells == 0 || values.iter().any(|v| v.len() != cells) {
            return Err(FiapError::InvalidParameter("rate table must be a nonempty rectangle".into()));
        }
        if let Some(v) = values.iter().flatten().find(|v| !(**v >= 0.0 && v.is_finite())) {
            return Err(FiapError::InvalidParameter(format!("rate {v} is negative or non-finite")));
        }
        Ok(Self { horizon, values })
    }

    pub fn constant(nodes: usize, horizon: f64, cells: usize, rates: &[f64]) -> Result<Self> {
        if rates.len() != nodes {
            return Err(FiapError::InvalidParameter(format!("{} rates for {nodes} nodes", rates.len())));
        }
        Self::new(horizon, rates.iter().map(|&r| vec![r; cells]).collect())
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn nodes(&self) -> usize {
        self.values.len()
    }

    pub fn cells(&self) -> usize {
        self.values[0].len()
    }

    pub fn step(&self) -> f64 {
        self.horizon / self.cells() as f64
    }

    pub fn cell_start(&self, c: usize) -> f64 {
        self.horizon * c as f64 / self.cells() as f64
    }

    pub fn value(&self, node: usize, cell: usize) -> f64 {
        self.values[node][cell]
    }

    pub fn values(&self, node: usize) -> &[f64] {
        &self.values[node]
    }

    /// Rate at time `t` (cells are left-closed; `t = T` belongs to the last cell).
    pub fn at(&self, node: usize, t: f64) -> f64 {
        let c = ((t / self.step()) as usize).min(self.cells() - 1);
        self.values[node][c]
    }

    /// `∫_0^t rate`, exact for the piecewise-constant representation.
    pub fn integral(&self, node: usize, t: f64) -> f64 {
        let dt = self.step();
        let t = t.clamp(0.0, self.horizon);
        let full = ((t / dt) as usize).min(self.cells());
        let mut acc: f64 = self.values[node][..full].iter().sum::<f64>() * dt;
        if full < self.cells() {
            acc += self.values[node][full] * (t - self.cell_start(full));
        }
        acc
    }

    /// Largest absolute cell difference.
    pub fn sup_distance(&self, other: &RateFunction) -> f64 {
        self.values.iter().flatten().zip(other.values.iter().flatten()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }

    /// CSV with columns `node,cell_start,rate`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["node", "cell_start", "rate"])?;
        for (i, row) in self.values.iter().enumerate() {
            for (c, v) in row.iter().enumerate() {
                w.write_record([i.to_string(), format!("{:?}", self.cell_start(c)), format!("{v:?}")])?;
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Reads the CSV form back; the grid must be the uniform grid of `[0, horizon]`.
    pub fn read_csv<R: Read>(input: R, horizon: f64) -> Result<Self> {
        let mut rows: Vec<(usize, f64, f64)> = Vec::new();
        for rec in csv::Reader::from_reader(input).deserialize() {
            rows.push(rec?);
        }
        let nodes = rows.iter().map(|r| r.0 + 1).max().ok_or(FiapError::EmptySample)?;
        let mut values = vec![Vec::new(); nodes];
        for (i, _, v) in &rows {
            values[*i].push(*v);
        }
        let out = Self::new(horizon, values)?;
        let mut seen = vec![0usize; nodes];
        for (i, start, _) in &rows {
            let want = out.cell_start(seen[*i]);
            if (start - want).abs() > 1e-9 * horizon.max(1.0) {
                return Err(FiapError::Config(format!("node {i}: cell start {start} where {want} was expected")));
            }
            seen[*i] += 1;
        }
        Ok(out)
    }
}

/// Exogenous Poisson arrival times on `[0, horizon]` with piecewise-constant
/// rate, by per-cell exponential spacings.
fn poisson_times(rates: &RateFunction, node: usize, horizon: f64, rng: &mut RngStream, out: &mut Vec<f64>) {
    let dt = rates.step();
    for c in 0..rates.cells() {
        let (a, b) = (rates.cell_start(c), (rates.cell_start(c) + dt).min(horizon));
        let r = rates.value(node, c);
        if a >= horizon {
            break;
        }
        if r <= 0.0 {
            continue;
        }
        let mut t = a;
        loop {
            t += rng.exp1() / r;
            if t >= b {
                break;
            }
            out.push(t);
        }
    }
}

/// One Poisson-Hypothesis path. Node `i` uses the streams of trajectory
/// `trajectory`, replica 0 and node `i` only, so nodes share no randomness.
/// Events go to `obs` with replica index 0; the returned state has one replica.
pub fn run_ph_path<O: RmfObserver>(
    spec: &CfiapSpec,
    rates: &RateFunction,
    horizon: f64,
    seed: u64,
    trajectory: u64,
    obs: &mut O,
) -> Result<ReplicaState> {
    let k = spec.nodes();
    if rates.horizon() < horizon * (1.0 - 1e-12) {
        return Err(FiapError::InvalidParameter(format!(
            "rate grid covers [0, {}], horizon is {horizon}",
            rates.horizon()
        )));
    }
    if rates.nodes() != k {
        return Err(FiapError::InvalidParameter(format!("rates for {} nodes, model has {k}", rates.nodes())));
    }
    let mut state = ReplicaState::single(k);
    let mut times = Vec::new();
    for i in 0..k {
        let stream = |p| RngStream::new(seed, trajectory, StreamId::new(0, i as u32, p));
        // Arrivals to node i, merged over sources.
        let mut arrivals: Vec<(f64, usize)> = Vec::new();
        for j in (0..k).filter(|&j| j != i) {
            times.clear();
            poisson_times(rates, j, horizon, &mut stream(Purpose::Arrivals(j as u32)), &mut times);
            arrivals.extend(times.iter().map(|&t| (t, j)));
        }
        arrivals.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

        let z = spec.init(i).sample(&mut RngStream::new(seed, trajectory, StreamId::new(SHARED_REPLICA, i as u32, Purpose::Init)));
        let mut thin = stream(Purpose::Thinning);
        let drift = spec.drift(i);
        let (mut t0, mut lam0, mut agg) = (0.0, z, 0.0);
        let mut next_arrival = 0;
        loop {
            let until = arrivals.get(next_arrival).map_or(horizon, |a| a.0);
            let bound = drift.bound(t0, lam0, until)?;
            let (a0, l0) = (t0, lam0);
            let fire = next_event_thinning(|s| drift.advance(a0, l0, s), bound, (t0, until), &mut thin)?;
            let t = fire.unwrap_or(until);
            let before = drift.advance(t0, lam0, t)?;
            if !before.is_finite() {
                return Err(FiapError::NonFinite { context: "intensity", time: t, value: before });
            }
            obs.segment(0, i, t0, lam0, t, drift)?;
            t0 = t;
            if fire.is_some() {
                lam0 = spec.g(i, t, before);
                obs.departure(t, 0, i);
            } else if next_arrival < arrivals.len() {
                let j = arrivals[next_arrival].1;
                let w = spec.h(j, i, t);
                obs.arrival(t, 0, i, j, w);
                let base = before - spec.f(agg);
                agg += w;
                lam0 = base + spec.f(agg);
                next_arrival += 1;
            } else {
                lam0 = before;
                break;
            }
        }
        state.set_node(0, i, horizon, lam0, agg, lam0 - spec.f(agg));
    }
    state.t = horizon;
    Ok(state)
}

/// Runs `n_paths` Poisson-Hypothesis paths and keeps `keep(state, observer)`
/// for each, in path order.
pub fn simulate_ph<O, F, G, R>(
    spec: &CfiapSpec,
    rates: &RateFunction,
    n_paths: usize,
    horizon: f64,
    seed: u64,
    make: F,
    keep: G,
) -> Result<Vec<R>>
where
    O: RmfObserver,
    F: Fn() -> O + Sync,
    G: Fn(ReplicaState, O) -> R + Sync,
    R: Send,
{
    (0..n_paths as u64)
        .into_par_iter()
        .map(|p| {
            let mut obs = make();
            let state = run_ph_path(spec, rates, horizon, seed, p, &mut obs)?;
            Ok(keep(state, obs))
        })
        .collect()
}

/// Output of one application of the mean-rate map.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PhiOutput {
    pub rates: RateFunction,
    /// Monte-Carlo standard error of each cell mean, `[node][cell]`.
    pub stderr: Vec<Vec<f64>>,
}

impl PhiOutput {
    pub fn max_stderr(&self) -> f64 {
        self.stderr.iter().flatten().copied().fold(0.0, f64::max)
    }
}

const CHUNK: usize = 256;

/// Cell averages of `max(λ̃, 0)` across `n_paths` paths driven by `rates_in`.
pub fn phi_iterate(spec: &CfiapSpec, rates_in: &RateFunction, n_paths: usize, seed: u64) -> Result<PhiOutput> {
    if n_paths == 0 {
        return Err(FiapError::EmptySample);
    }
    let (k, cells, horizon) = (spec.nodes(), rates_in.cells(), rates_in.horizon());
    let dt = rates_in.step();
    // Fixed chunking keeps the floating-point summation order independent of
    // the thread count.
    let chunks: Vec<(Vec<f64>, Vec<f64>)> = (0..n_paths.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            let mut sum = vec![0.0; k * cells];
            let mut sq = vec![0.0; k * cells];
            for p in (c * CHUNK)..((c + 1) * CHUNK).min(n_paths) {
                let mut obs = CellIntegrals::new(k, horizon, cells);
                run_ph_path(spec, rates_in, horizon, seed, p as u64, &mut obs)?;
                for (idx, v) in obs.sums.iter().flatten().enumerate() {
                    let avg = v / dt;
                    sum[idx] += avg;
                    sq[idx] += avg * avg;
                }
            }
            Ok((sum, sq))
        })
        .collect::<Result<_>>()?;
    let mut sum = vec![0.0; k * cells];
    let mut sq = vec![0.0; k * cells];
    for (s, q) in &chunks {
        for idx in 0..k * cells {
            sum[idx] += s[idx];
            sq[idx] += q[idx];
        }
    }
    let n = n_paths as f64;
    let mut values = vec![vec![0.0; cells]; k];
    let mut stderr = vec![vec![0.0; cells]; k];
    for i in 0..k {
        for c in 0..cells {
            let idx = i * cells + c;
            let mean = sum[idx] / n;
            let var = if n_paths > 1 { ((sq[idx] - n * mean * mean) / (n - 1.0)).max(0.0) } else { 0.0 };
            values[i][c] = mean.max(0.0);
            stderr[i][c] = (var / n).sqrt();
        }
    }
    Ok(PhiOutput { rates: RateFunction::new(horizon, values)?, stderr })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IterationDiagnostic {
    pub iteration: usize,
    pub sup_delta: f64,
    pub noise_floor: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FixedPoint {
    pub rates: RateFunction,
    pub stderr: Vec<Vec<f64>>,
    pub diagnostics: Vec<IterationDiagnostic>,
    pub converged: bool,
}

impl FixedPoint {
    /// CSV with columns `iteration,sup_delta,noise_floor`.
    pub fn write_diagnostics_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["iteration", "sup_delta", "noise_floor"])?;
        for d in &self.diagnostics {
            w.write_record([d.iteration.to_string(), format!("{:?}", d.sup_delta), format!("{:?}", d.noise_floor)])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Iterates [`phi_iterate`] from the constant guess `E[λ_i(0)]` until the
/// sup-norm change drops below `tol` plus a noise floor of three times the
/// largest cell standard error, or `max_iter` is reached. Every iteration
/// reuses `seed` (common random numbers), so successive deltas measure the
/// change of the map rather than fresh sampling noise.
///
/// When the stopping rule never fires the iterate with the smallest incoming
/// change is returned with `converged = false`.
pub fn solve_fixed_point(
    spec: &CfiapSpec,
    cells: usize,
    tol: f64,
    max_iter: usize,
    n_paths: usize,
    seed: u64,
) -> Result<FixedPoint> {
    if !(tol > 0.0) {
        return Err(FiapError::InvalidParameter(format!("tolerance must be positive, got {tol}")));
    }
    if cells == 0 || max_iter == 0 {
        return Err(FiapError::InvalidParameter("need at least one cell and one iteration".into()));
    }
    let k = spec.nodes();
    let init: Vec<f64> = (0..k).map(|i| spec.init(i).mean().max(0.0)).collect();
    let mut rates = RateFunction::constant(k, spec.horizon(), cells, &init)?;
    let mut diagnostics = Vec::new();
    let mut best: Option<(f64, PhiOutput)> = None;
    for iteration in 1..=max_iter {
        let out = phi_iterate(spec, &rates, n_paths, seed)?;
        let sup_delta = out.rates.sup_distance(&rates);
        let noise_floor = 3.0 * out.max_stderr();
        diagnostics.push(IterationDiagnostic { iteration, sup_delta, noise_floor });
        rates = out.rates.clone();
        if sup_delta < tol + noise_floor {
            return Ok(FixedPoint { rates, stderr: out.stderr, diagnostics, converged: true });
        }
        if best.as_ref().is_none_or(|(d, _)| sup_delta < *d) {
            best = Some((sup_delta, out));
        }
    }
    let (_, out) = best.expect("at least one iteration ran");
    Ok(FixedPoint { rates: out.rates, stderr: out.stderr, diagnostics, converged: false })
}

/// Exact law of `Ã_i(t)` when every `h_{j→i}` is a nonnegative integer
/// constant: a sum of scaled independent Poisson variables.
pub fn arrival_pmf(spec: &CfiapSpec, rates: &RateFunction, i: usize, t: f64) -> Result<Pmf> {
    let mut out = Pmf::point_mass(0);
    for j in (0..spec.nodes()).filter(|&j| j != i) {
        let w = spec
            .h_const(j, i)
            .filter(|w| w.fract() == 0.0 && *w >= 0.0)
            .ok_or_else(|| FiapError::InvalidParameter(format!("h_{{{j}->{i}}} is not a nonnegative integer constant")))?;
        let part = Pmf::poisson(rates.integral(j, t))?.scaled(w as i64)?;
        out = out.convolve(&part);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{gl_desk, Builtin, BuiltinParams, InitLaw, InitSpec};
    use crate::rmf::{run_rmf, DepartureCounts, EventLog, RmfOptions};
    use crate::stats::{mean_estimate, EmpiricalPmf};
    use statrs::distribution::{ChiSquared, ContinuousCDF};

    #[test]
    fn rate_function_integral_and_csv() {
        let r = RateFunction::new(2.0, vec![vec![1.0, 3.0], vec![0.0, 0.5]]).unwrap();
        assert_eq!(r.integral(0, 0.5), 0.5);
        assert_eq!(r.integral(0, 1.5), 2.5);
        assert_eq!(r.integral(0, 2.0), 4.0);
        assert_eq!(r.at(1, 2.0), 0.5);
        let mut buf = Vec::new();
        r.write_csv(&mut buf).unwrap();
        assert_eq!(RateFunction::read_csv(&buf[..], 2.0).unwrap(), r);
        assert!(RateFunction::read_csv(&buf[..], 3.0).is_err());
        assert!(RateFunction::new(1.0, vec![vec![-1.0]]).is_err());
    }

    #[test]
    fn single_node_path_equals_rmf_replica() {
        let spec = gl_desk(1, 2.0);
        let rates = RateFunction::constant(1, 2.0, 10, &[1.0]).unwrap();
        for traj in 0..20 {
            let mut ph = EventLog::default();
            let s1 = run_ph_path(&spec, &rates, 2.0, 3, traj, &mut ph).unwrap();
            let mut rmf = EventLog::default();
            let opts = RmfOptions { trajectory: traj, ..RmfOptions::default() };
            let s2 = run_rmf(&spec, 2, 2.0, 3, &opts, &mut rmf).unwrap();
            let own: Vec<f64> = rmf.departures.iter().filter(|d| d.replica == 0).map(|d| d.time).collect();
            assert_eq!(ph.departures.iter().map(|d| d.time).collect::<Vec<_>>(), own);
            assert_eq!(s1.lam(0, 0), s2.lam(0, 0));
        }
    }

    #[test]
    fn constant_rate_arrivals_are_poisson() {
        let spec = gl_desk(3, 1.0);
        let rates = RateFunction::constant(3, 1.0, 7, &[1.5, 1.5, 1.5]).unwrap();
        let n = 100_000;
        let totals: Vec<f64> = simulate_ph(&spec, &rates, n, 1.0, 17, || (), |s, _| s.agg(0, 0)).unwrap();
        let emp = EmpiricalPmf::from_integral_f64(&totals).unwrap();
        let pmf = arrival_pmf(&spec, &rates, 0, 1.0).unwrap();
        assert!((pmf.mean() - 3.0).abs() < 1e-12);
        // Chi-square over cells with expected count >= 5, tail pooled.
        let mut chi2 = 0.0;
        let mut cells = 0;
        let mut tail_obs = n as f64;
        let mut tail_exp = n as f64;
        for k in 0.. {
            let e = pmf.prob(k) * n as f64;
            if e < 5.0 {
                break;
            }
            let o = emp.count(k) as f64;
            chi2 += (o - e).powi(2) / e;
            tail_obs -= o;
            tail_exp -= e;
            cells += 1;
        }
        chi2 += (tail_obs - tail_exp).powi(2) / tail_exp;
        let p = 1.0 - ChiSquared::new(cells as f64).unwrap().cdf(chi2);
        assert!(p > 0.01, "chi2 {chi2} on {cells} dof, p = {p}");
    }

    #[test]
    fn nodes_are_uncorrelated() {
        let spec = gl_desk(2, 2.0);
        let rates = RateFunction::constant(2, 2.0, 20, &[1.3, 1.3]).unwrap();
        let n = 20_000;
        let pairs: Vec<(f64, f64)> = simulate_ph(&spec, &rates, n, 2.0, 5, || (), |s, _| (s.lam(0, 0), s.lam(0, 1))).unwrap();
        let xs: Vec<f64> = pairs.iter().map(|p| p.0).collect();
        let ys: Vec<f64> = pairs.iter().map(|p| p.1).collect();
        let (mx, my) = (mean_estimate(&xs).unwrap().value, mean_estimate(&ys).unwrap().value);
        let cov: f64 = pairs.iter().map(|(x, y)| (x - mx) * (y - my)).sum::<f64>() / n as f64;
        let sx = (xs.iter().map(|x| (x - mx).powi(2)).sum::<f64>() / n as f64).sqrt();
        let sy = (ys.iter().map(|y| (y - my).powi(2)).sum::<f64>() / n as f64).sqrt();
        let corr = cov / (sx * sy);
        assert!(corr.abs() < 3.0 / (n as f64).sqrt(), "corr {corr}");
    }

    #[test]
    fn zero_input_gl_rates_stay_at_one() {
        // Resets and drift both pull to 1 and nothing arrives: λ ≡ 1.
        let spec = gl_desk(2, 2.0);
        let zero = RateFunction::constant(2, 2.0, 20, &[0.0, 0.0]).unwrap();
        let out = phi_iterate(&spec, &zero, 500, 1).unwrap();
        for i in 0..2 {
            for c in 0..20 {
                assert!((out.rates.value(i, c) - 1.0).abs() < 1e-12);
            }
        }
        assert!(out.max_stderr() < 1e-9);
    }

    #[test]
    fn phi_is_deterministic_and_single_node_fixed() {
        let spec = CfiapSpec::builtin(
            Builtin::GlExcitatory,
            1,
            &BuiltinParams::gl(1.0, 0.5, 2.0),
            1.0,
            InitSpec::Single(InitLaw::Constant { value: 1.0 }),
        )
        .unwrap();
        let r = RateFunction::constant(1, 1.0, 10, &[1.0]).unwrap();
        let a = phi_iterate(&spec, &r, 2000, 4).unwrap();
        assert_eq!(a, phi_iterate(&spec, &r, 2000, 4).unwrap());
        let fp = solve_fixed_point(&spec, 10, 1e-3, 5, 2000, 4).unwrap();
        assert!(fp.converged);
        assert_eq!(fp.diagnostics.len(), 2, "{:?}", fp.diagnostics);
        assert_eq!(fp.rates, a.rates);
        assert!(phi_iterate(&spec, &r, 0, 4).is_err());
    }

    #[test]
    fn gordon_newell_fixed_point_is_symmetric() {
        let spec = CfiapSpec::builtin(
            Builtin::GordonNewell,
            3,
            &BuiltinParams::default(),
            1.0,
            InitSpec::Single(InitLaw::Constant { value: 2.0 }),
        )
        .unwrap();
        let fp = solve_fixed_point(&spec, 10, 1e-3, 30, 20_000, 8).unwrap();
        assert!(fp.converged);
        for c in 0..10 {
            for i in 1..3 {
                let d = fp.rates.value(i, c) - fp.rates.value(0, c);
                let se = (fp.stderr[i][c].powi(2) + fp.stderr[0][c].powi(2)).sqrt();
                assert!(d.abs() <= 4.0 * se + 1e-12, "cell {c} node {i}: {d} vs {se}");
            }
        }
    }

    #[test]
    fn short_rate_grid_is_rejected() {
        let spec = gl_desk(2, 2.0);
        let r = RateFunction::constant(2, 1.0, 4, &[1.0, 1.0]).unwrap();
        assert!(run_ph_path(&spec, &r, 2.0, 0, 0, &mut DepartureCounts::new(1, 2)).is_err());
    }
}
