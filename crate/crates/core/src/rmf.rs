//! Event-driven simulation of the `M`-replica mean-field dynamics.
//!
//! Every `(replica, node)` pair carries its own thinning candidate in a
//! priority queue. A departure of node `j` in replica `n` resets that node
//! through `g_j` and sends, for each `i ≠ j`, the weight `h_{j→i}(t)` to node
//! `i` of a replica drawn uniformly among the other `M − 1`. Only nodes whose
//! intensity changed get a fresh candidate; the memoryless property of the
//! dominating stream makes the restart exact.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{FiapError, Result};
use crate::model::CfiapSpec;
use crate::point_process::{next_event_thinning, Drift, Purpose, RngStream, StreamId, SHARED_REPLICA};

/// Live state of one RMF trajectory. Matrices are stored replica-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplicaState {
    pub t: f64,
    replicas: usize,
    nodes: usize,
    /// Intensity at `anchor[idx]`; the current value follows the drift from there.
    lam: Vec<f64>,
    anchor: Vec<f64>,
    agg: Vec<f64>,
    base: Vec<f64>,
}

impl ReplicaState {
    fn new(replicas: usize, nodes: usize) -> Self {
        let n = replicas * nodes;
        Self {
            t: 0.0,
            replicas,
            nodes,
            lam: vec![0.0; n],
            anchor: vec![0.0; n],
            agg: vec![0.0; n],
            base: vec![0.0; n],
        }
    }

    /// One-copy state used by the Poisson-Hypothesis engine.
    pub(crate) fn single(nodes: usize) -> Self {
        Self::new(1, nodes)
    }

    pub(crate) fn set_node(&mut self, m: usize, i: usize, t: f64, lam: f64, agg: f64, base: f64) {
        let idx = self.idx(m, i);
        self.anchor[idx] = t;
        self.lam[idx] = lam;
        self.agg[idx] = agg;
        self.base[idx] = base;
    }

    #[inline]
    fn idx(&self, m: usize, i: usize) -> usize {
        m * self.nodes + i
    }

    pub fn replicas(&self) -> usize {
        self.replicas
    }

    pub fn nodes(&self) -> usize {
        self.nodes
    }

    /// Intensity of node `i` in replica `m` at the state time.
    pub fn lam(&self, m: usize, i: usize) -> f64 {
        self.lam[self.idx(m, i)]
    }

    /// Cumulative weighted arrivals (the argument of `f`).
    pub fn agg(&self, m: usize, i: usize) -> f64 {
        self.agg[self.idx(m, i)]
    }

    /// Reset-plus-drift component, `lam − f(agg)`.
    pub fn base(&self, m: usize, i: usize) -> f64 {
        self.base[self.idx(m, i)]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Departure {
    pub time: f64,
    pub replica: usize,
    pub node: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Arrival {
    pub time: f64,
    pub replica: usize,
    pub node: usize,
    pub src_node: usize,
    pub weight: f64,
}

/// Departures and routed arrivals of one trajectory, in time order. The
/// `K − 1` arrivals caused by one departure share its time stamp.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EventLog {
    pub departures: Vec<Departure>,
    pub arrivals: Vec<Arrival>,
}

impl EventLog {
    /// `N_{m,i}([0, t])`.
    pub fn departure_count(&self, m: usize, i: usize, t: f64) -> usize {
        self.departures.iter().filter(|d| d.replica == m && d.node == i && d.time <= t).count()
    }

    /// CSV with columns `time,kind,replica,node,src_node,weight`. Departures
    /// leave `src_node` and `weight` empty.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["time", "kind", "replica", "node", "src_node", "weight"])?;
        let (mut a, mut d) = (0, 0);
        // Merge by time; a departure precedes the arrivals it causes.
        while a < self.arrivals.len() || d < self.departures.len() {
            let take_dep = d < self.departures.len()
                && (a == self.arrivals.len() || self.departures[d].time <= self.arrivals[a].time);
            if take_dep {
                let e = self.departures[d];
                w.write_record([format!("{:?}", e.time), "departure".into(), e.replica.to_string(), e.node.to_string(), String::new(), String::new()])?;
                d += 1;
            } else {
                let e = self.arrivals[a];
                w.write_record([
                    format!("{:?}", e.time),
                    "arrival".into(),
                    e.replica.to_string(),
                    e.node.to_string(),
                    e.src_node.to_string(),
                    format!("{:?}", e.weight),
                ])?;
                a += 1;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }
}

/// Hooks into a running trajectory. Every method has an empty default.
pub trait RmfObserver {
    fn departure(&mut self, _t: f64, _m: usize, _j: usize) {}

    fn arrival(&mut self, _t: f64, _m: usize, _i: usize, _src: usize, _w: f64) {}

    /// A maximal event-free piece of `(m, i)`: starts at `(t0, lam0)`, follows
    /// `drift` and ends at `t1` (the next change or the horizon).
    fn segment(&mut self, _m: usize, _i: usize, _t0: f64, _lam0: f64, _t1: f64, _drift: &Drift) -> Result<()> {
        Ok(())
    }
}

impl RmfObserver for () {}

impl RmfObserver for EventLog {
    fn departure(&mut self, t: f64, m: usize, j: usize) {
        self.departures.push(Departure { time: t, replica: m, node: j });
    }

    fn arrival(&mut self, t: f64, m: usize, i: usize, src: usize, w: f64) {
        self.arrivals.push(Arrival { time: t, replica: m, node: i, src_node: src, weight: w });
    }
}

impl<A: RmfObserver, B: RmfObserver> RmfObserver for (A, B) {
    fn departure(&mut self, t: f64, m: usize, j: usize) {
        self.0.departure(t, m, j);
        self.1.departure(t, m, j);
    }

    fn arrival(&mut self, t: f64, m: usize, i: usize, src: usize, w: f64) {
        self.0.arrival(t, m, i, src, w);
        self.1.arrival(t, m, i, src, w);
    }

    fn segment(&mut self, m: usize, i: usize, t0: f64, lam0: f64, t1: f64, drift: &Drift) -> Result<()> {
        self.0.segment(m, i, t0, lam0, t1, drift)?;
        self.1.segment(m, i, t0, lam0, t1, drift)
    }
}

/// Per-replica departure counts `N_{m,i}([0, T])`.
#[derive(Debug, Clone, Default)]
pub struct DepartureCounts {
    nodes: usize,
    pub counts: Vec<u64>,
}

impl DepartureCounts {
    pub fn new(replicas: usize, nodes: usize) -> Self {
        Self { nodes, counts: vec![0; replicas * nodes] }
    }

    pub fn get(&self, m: usize, i: usize) -> u64 {
        self.counts[m * self.nodes + i]
    }
}

impl RmfObserver for DepartureCounts {
    fn departure(&mut self, _t: f64, m: usize, j: usize) {
        self.counts[m * self.nodes + j] += 1;
    }
}

/// Integrals of the (clamped) intensity over the cells of a uniform grid,
/// summed over replicas, for each node.
#[derive(Debug, Clone)]
pub struct CellIntegrals {
    pub horizon: f64,
    pub cells: usize,
    /// `sums[i][c] = Σ_m ∫_cell max(λ_{m,i}, 0) ds`.
    pub sums: Vec<Vec<f64>>,
}

impl CellIntegrals {
    pub fn new(nodes: usize, horizon: f64, cells: usize) -> Self {
        Self { horizon, cells, sums: vec![vec![0.0; cells]; nodes] }
    }

    /// Adds the integral of one event-free piece.
    pub fn add_piece(&mut self, i: usize, t0: f64, lam0: f64, t1: f64, drift: &Drift) -> Result<()> {
        let dt = self.horizon / self.cells as f64;
        let mut c = ((t0 / dt) as usize).min(self.cells - 1);
        let mut s = t0;
        let mut lam = lam0;
        while s < t1 && c < self.cells {
            let e = (((c + 1) as f64) * dt).min(t1);
            if e > s {
                self.sums[i][c] += drift.integral_positive(s, lam, e)?;
                lam = drift.advance(s, lam, e)?;
                s = e;
            }
            c += 1;
        }
        Ok(())
    }
}

impl RmfObserver for CellIntegrals {
    fn segment(&mut self, _m: usize, i: usize, t0: f64, lam0: f64, t1: f64, drift: &Drift) -> Result<()> {
        self.add_piece(i, t0, lam0, t1, drift)
    }
}

/// Intensities of every `(m, i)` at the given times (right-continuous).
#[derive(Debug, Clone)]
pub struct Snapshots {
    pub times: Vec<f64>,
    nodes: usize,
    /// `values[k][m * K + i]` is the intensity at `times[k]`.
    pub values: Vec<Vec<f64>>,
    horizon: f64,
}

impl Snapshots {
    pub fn new(times: Vec<f64>, replicas: usize, nodes: usize, horizon: f64) -> Self {
        let values = vec![vec![f64::NAN; replicas * nodes]; times.len()];
        Self { times, nodes, values, horizon }
    }

    pub fn get(&self, k: usize, m: usize, i: usize) -> f64 {
        self.values[k][m * self.nodes + i]
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["time", "replica", "node", "intensity"])?;
        for (k, t) in self.times.iter().enumerate() {
            for (idx, v) in self.values[k].iter().enumerate() {
                w.write_record([format!("{t:?}"), (idx / self.nodes).to_string(), (idx % self.nodes).to_string(), format!("{v:?}")])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

impl RmfObserver for Snapshots {
    fn segment(&mut self, m: usize, i: usize, t0: f64, lam0: f64, t1: f64, drift: &Drift) -> Result<()> {
        let start = self.times.partition_point(|&s| s < t0);
        for k in start..self.times.len() {
            let s = self.times[k];
            if s >= t1 && !(s == t1 && t1 == self.horizon) {
                break;
            }
            self.values[k][m * self.nodes + i] = drift.advance(t0, lam0, s)?;
        }
        Ok(())
    }
}

/// Uniform replica in `{0, …, M − 1} \ {exclude}`.
///
/// Drawn as `exclude + 1 + U (mod M)` with `U` uniform on `0..M − 1`, so
/// relabeling replicas by a cyclic shift shifts the routing identically.
pub fn route(rng: &mut RngStream, replicas: usize, exclude: usize) -> Result<usize> {
    if replicas < 2 {
        return Err(FiapError::TooFewReplicas(replicas));
    }
    if exclude >= replicas {
        return Err(FiapError::InvalidParameter(format!("replica {exclude} out of range 0..{replicas}")));
    }
    Ok((exclude + 1 + rng.below(replicas - 1)) % replicas)
}

/// Run options beyond `(spec, M, horizon, seed)`.
#[derive(Debug, Clone, Default)]
pub struct RmfOptions {
    /// Trajectory index; part of every stream key.
    pub trajectory: u64,
    /// Draw initial intensities independently per replica instead of sharing
    /// one draw per node across replicas.
    pub independent_init: bool,
    /// Stream label of each replica (identity when `None`). Used to check
    /// exchangeability under relabeling.
    pub replica_labels: Option<Vec<u32>>,
}

#[derive(Clone, Copy, PartialEq)]
struct Candidate {
    time: f64,
    idx: usize,
    version: u64,
}

impl Eq for Candidate {}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        // Min-heap on time; ties (probability zero) broken by index.
        other.time.total_cmp(&self.time).then_with(|| other.idx.cmp(&self.idx))
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

struct Engine<'a> {
    spec: &'a CfiapSpec,
    horizon: f64,
    state: ReplicaState,
    version: Vec<u64>,
    thinning: Vec<RngStream>,
    routing: Vec<RngStream>,
    queue: BinaryHeap<Candidate>,
}

impl Engine<'_> {
    #[inline]
    fn current(&self, idx: usize, t: f64) -> Result<f64> {
        let i = idx % self.state.nodes;
        self.spec.drift(i).advance(self.state.anchor[idx], self.state.lam[idx], t)
    }

    fn schedule(&mut self, idx: usize) -> Result<()> {
        let i = idx % self.state.nodes;
        let drift = self.spec.drift(i);
        let (t0, lam0) = (self.state.anchor[idx], self.state.lam[idx]);
        let bound = drift.bound(t0, lam0, self.horizon)?;
        let next = next_event_thinning(|s| drift.advance(t0, lam0, s), bound, (t0, self.horizon), &mut self.thinning[idx])?;
        self.version[idx] += 1;
        if let Some(time) = next {
            self.queue.push(Candidate { time, idx, version: self.version[idx] });
        }
        Ok(())
    }

    /// Closes the current piece of `idx` at `t` and returns `λ(t−)`.
    fn close(&mut self, idx: usize, t: f64, obs: &mut impl RmfObserver) -> Result<f64> {
        let nodes = self.state.nodes;
        let (m, i) = (idx / nodes, idx % nodes);
        let lam = self.current(idx, t)?;
        obs.segment(m, i, self.state.anchor[idx], self.state.lam[idx], t, self.spec.drift(i))?;
        if !lam.is_finite() {
            return Err(FiapError::NonFinite { context: "intensity", time: t, value: lam });
        }
        Ok(lam)
    }

    fn set(&mut self, idx: usize, t: f64, lam: f64, base: f64) {
        self.state.anchor[idx] = t;
        self.state.lam[idx] = lam;
        self.state.base[idx] = base;
        debug_assert!(
            (lam - (base + self.spec.f(self.state.agg[idx]))).abs() <= 1e-9 * (1.0 + lam.abs()),
            "reconstruction identity broken at {idx}: {lam} vs {base} + f({})",
            self.state.agg[idx]
        );
    }
}

/// Runs one trajectory to `horizon`, feeding events to `obs`.
pub fn run_rmf<O: RmfObserver>(
    spec: &CfiapSpec,
    replicas: usize,
    horizon: f64,
    seed: u64,
    opts: &RmfOptions,
    obs: &mut O,
) -> Result<ReplicaState> {
    if replicas < 2 {
        return Err(FiapError::TooFewReplicas(replicas));
    }
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(FiapError::InvalidParameter(format!("horizon must be positive, got {horizon}")));
    }
    let k = spec.nodes();
    let labels: Vec<u32> = match &opts.replica_labels {
        Some(l) if l.len() == replicas => l.clone(),
        Some(l) => return Err(FiapError::InvalidParameter(format!("{} replica labels for M = {replicas}", l.len()))),
        None => (0..replicas as u32).collect(),
    };
    let traj = opts.trajectory;
    let stream = |m: usize, i: usize, p: Purpose| RngStream::new(seed, traj, StreamId::new(labels[m], i as u32, p));

    let mut state = ReplicaState::new(replicas, k);
    let shared: Vec<f64> = (0..k)
        .map(|i| spec.init(i).sample(&mut RngStream::new(seed, traj, StreamId::new(SHARED_REPLICA, i as u32, Purpose::Init))))
        .collect();
    for m in 0..replicas {
        for i in 0..k {
            let z = if opts.independent_init { spec.init(i).sample(&mut stream(m, i, Purpose::Init)) } else { shared[i] };
            let idx = m * k + i;
            state.lam[idx] = z;
            state.base[idx] = z - spec.f(0.0);
        }
    }
    let n = replicas * k;
    let mut eng = Engine {
        spec,
        horizon,
        state,
        version: vec![0; n],
        thinning: (0..n).map(|idx| stream(idx / k, idx % k, Purpose::Thinning)).collect(),
        routing: (0..n).map(|idx| stream(idx / k, idx % k, Purpose::Routing)).collect(),
        queue: BinaryHeap::with_capacity(n),
    };
    for idx in 0..n {
        eng.schedule(idx)?;
    }

    while let Some(c) = eng.queue.pop() {
        if c.version != eng.version[c.idx] {
            continue;
        }
        let t = c.time;
        let (src_m, j) = (c.idx / k, c.idx % k);
        eng.state.t = t;

        let before = eng.close(c.idx, t, obs)?;
        let reset = spec.g(j, t, before);
        let base = reset - spec.f(eng.state.agg[c.idx]);
        eng.set(c.idx, t, reset, base);
        obs.departure(t, src_m, j);

        for i in (0..k).filter(|&i| i != j) {
            let w = spec.h(j, i, t);
            let v = route(&mut eng.routing[c.idx], replicas, src_m)?;
            obs.arrival(t, v, i, j, w);
            if w == 0.0 {
                continue;
            }
            let tgt = v * k + i;
            let before = eng.close(tgt, t, obs)?;
            let base = before - spec.f(eng.state.agg[tgt]);
            eng.state.agg[tgt] += w;
            let lam = base + spec.f(eng.state.agg[tgt]);
            eng.set(tgt, t, lam, base);
            eng.schedule(tgt)?;
        }
        eng.schedule(c.idx)?;
    }

    for idx in 0..n {
        let lam = eng.close(idx, horizon, obs)?;
        let base = lam - spec.f(eng.state.agg[idx]);
        eng.set(idx, horizon, lam, base);
    }
    eng.state.t = horizon;
    Ok(eng.state)
}

/// One trajectory with its full event log.
pub fn simulate_rmf(spec: &CfiapSpec, replicas: usize, horizon: f64, seed: u64) -> Result<(ReplicaState, EventLog)> {
    let mut log = EventLog::default();
    let state = run_rmf(spec, replicas, horizon, seed, &RmfOptions::default(), &mut log)?;
    Ok((state, log))
}

/// Runs trajectories `0..n_paths` in parallel; results come back in
/// trajectory order regardless of scheduling.
pub fn run_batch<O, F>(spec: &CfiapSpec, replicas: usize, horizon: f64, seed: u64, n_paths: usize, make: F) -> Result<Vec<(ReplicaState, O)>>
where
    O: RmfObserver + Send,
    F: Fn() -> O + Sync,
{
    run_batch_map(spec, replicas, horizon, seed, n_paths, |state, obs| (state, obs), make)
}

/// Like [`run_batch`] but maps `(final state, observer)` to the kept result.
pub fn run_batch_map<O, F, G, R>(
    spec: &CfiapSpec,
    replicas: usize,
    horizon: f64,
    seed: u64,
    n_paths: usize,
    keep: G,
    make: F,
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
            let opts = RmfOptions { trajectory: p, ..RmfOptions::default() };
            let state = run_rmf(spec, replicas, horizon, seed, &opts, &mut obs)?;
            Ok(keep(state, obs))
        })
        .collect()
}

/// `A_{m,i}(t)` on `grid`: total weight of arrivals to `(m, i)` up to each time.
pub fn arrival_count_paths(log: &EventLog, m: usize, i: usize, grid: &[f64]) -> Vec<f64> {
    let mine: Vec<&Arrival> = log.arrivals.iter().filter(|a| a.replica == m && a.node == i).collect();
    let mut out = Vec::with_capacity(grid.len());
    let mut acc = 0.0;
    let mut next = 0;
    for &t in grid {
        while next < mine.len() && mine[next].time <= t {
            acc += mine[next].weight;
            next += 1;
        }
        out.push(acc);
    }
    out
}
