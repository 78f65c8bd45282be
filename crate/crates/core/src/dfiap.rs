//! Discrete-time FIAPs, their replica versions and the δ-step chain of an
//! integer-state Galves-Löcherbach model.
//!
//! The δ-chain composes two half steps. Fragmentation: each `(m, i)` resets
//! to `r_i` with probability `1 − e^{−σ(λ_{m,i})δ}`. Aggregation: each reset
//! node `(m, i)` adds, for every `j ≠ i`, `μ_{i→j}` to node `j` of a replica
//! drawn uniformly among the other `M − 1`. Increments land on the
//! post-reset state, so a node can reset and receive in the same step.
//!
//! States are `M×K` matrices of naturals indexed `[replica][node]`.

use std::io::Write;

use serde::Serialize;

use crate::error::{FiapError, Result};
use crate::expr::{Expr, Var, Vars};
use crate::model::CfiapSpec;
use crate::point_process::{Drift, RngStream};
use crate::rmf::route;
use crate::stats::{Pmf, MASS_TOLERANCE};

/// Largest number of free binary coordinates exact enumeration will visit.
pub const ENUMERATION_BUDGET: usize = 22;

/// Default bound on states visited by kernel comparisons.
pub const DEFAULT_MAX_STATE: u64 = 50;

pub type State = Vec<Vec<u64>>;

fn eval_nat(e: &Expr, x: u64, what: &str) -> Result<u64> {
    let v = e.eval(Vars::x(x as f64));
    if v >= 0.0 && v.fract() == 0.0 && v < 9e15 {
        Ok(v as u64)
    } else {
        Err(FiapError::Expr(format!("{what}({x}) = {v} is not a natural number")))
    }
}

/// Discrete FIAP: `Y_i = g1_i(X_i)·1{U_i < σ_i(X_i)} + g2_i(X_i)·1{U_i ≥ σ_i(X_i)} + A_i`
/// with `A_i = Σ_{j≠i} h_{j→i}(X_j)·1{U_j < σ_j(X_j)}`. All maps are
/// expressions in `x`.
#[derive(Debug, Clone, PartialEq)]
pub struct DFiapSpec {
    pub g1: Vec<Expr>,
    pub g2: Vec<Expr>,
    /// `h[j][i] = h_{j→i}`.
    pub h: Vec<Vec<Expr>>,
    pub sigma: Vec<Expr>,
}

impl DFiapSpec {
    pub fn new(g1: Vec<Expr>, g2: Vec<Expr>, h: Vec<Vec<Expr>>, sigma: Vec<Expr>) -> Result<Self> {
        let k = g1.len();
        if k == 0 || g2.len() != k || sigma.len() != k || h.len() != k || h.iter().any(|r| r.len() != k) {
            return Err(FiapError::InvalidParameter("inconsistent DFIAP dimensions".into()));
        }
        for e in g1.iter().chain(&g2).chain(&sigma).chain(h.iter().flatten()) {
            if e.uses(Var::T) || e.uses(Var::Lam) {
                return Err(FiapError::Expr(format!("`{e}` may only depend on x")));
            }
        }
        Ok(Self { g1, g2, h, sigma })
    }

    pub fn nodes(&self) -> usize {
        self.g1.len()
    }

    pub fn g1(&self, i: usize, x: u64) -> Result<u64> {
        eval_nat(&self.g1[i], x, "g1")
    }

    pub fn g2(&self, i: usize, x: u64) -> Result<u64> {
        eval_nat(&self.g2[i], x, "g2")
    }

    pub fn h(&self, j: usize, i: usize, x: u64) -> Result<u64> {
        eval_nat(&self.h[j][i], x, "h")
    }

    pub fn sigma(&self, i: usize, x: u64) -> f64 {
        self.sigma[i].eval(Vars::x(x as f64))
    }

    /// Checks `σ_i(0) = 0`, `σ_i(1) > 0`, monotonicity and range on
    /// `0..=max_state`, and that `g1`, `g2`, `h` are natural-valued there.
    pub fn check(&self, max_state: u64) -> Result<()> {
        for i in 0..self.nodes() {
            if self.sigma(i, 0) != 0.0 {
                return Err(FiapError::InvalidParameter(format!("sigma_{i}(0) = {}", self.sigma(i, 0))));
            }
            if max_state >= 1 && !(self.sigma(i, 1) > 0.0) {
                return Err(FiapError::InvalidParameter(format!("sigma_{i}(1) must be positive")));
            }
            let mut prev = 0.0;
            for x in 0..=max_state {
                let s = self.sigma(i, x);
                if !(0.0..=1.0).contains(&s) || s < prev {
                    return Err(FiapError::InvalidParameter(format!(
                        "sigma_{i}({x}) = {s} is outside [0, 1] or decreasing"
                    )));
                }
                prev = s;
                self.g1(i, x)?;
                self.g2(i, x)?;
                for j in 0..self.nodes() {
                    self.h(i, j, x)?;
                }
            }
        }
        Ok(())
    }
}

/// One synchronous step of a single FIAP.
pub fn step_dfiap(state: &[u64], spec: &DFiapSpec, rng: &mut RngStream) -> Result<Vec<u64>> {
    let k = spec.nodes();
    if state.len() != k {
        return Err(FiapError::InvalidParameter(format!("state has {} entries, K = {k}", state.len())));
    }
    let fired: Vec<bool> = (0..k).map(|i| rng.uniform() < spec.sigma(i, state[i])).collect();
    (0..k)
        .map(|i| {
            let own = if fired[i] { spec.g1(i, state[i])? } else { spec.g2(i, state[i])? };
            let mut arrivals = 0;
            for j in (0..k).filter(|&j| j != i && fired[j]) {
                arrivals += spec.h(j, i, state[j])?;
            }
            Ok(own + arrivals)
        })
        .collect()
}

fn check_state(state: &[Vec<u64>], k: usize) -> Result<usize> {
    let m = state.len();
    if m < 2 {
        return Err(FiapError::TooFewReplicas(m));
    }
    if state.iter().any(|r| r.len() != k) {
        return Err(FiapError::InvalidParameter(format!("state rows must have K = {k} entries")));
    }
    Ok(m)
}

/// One synchronous step of the replica FIAP; also returns the arrival matrix.
pub fn step_rmf_dfiap_with_arrivals(state: &[Vec<u64>], spec: &DFiapSpec, rng: &mut RngStream) -> Result<(State, State)> {
    let k = spec.nodes();
    let m = check_state(state, k)?;
    let fired: Vec<Vec<bool>> =
        state.iter().map(|row| (0..k).map(|j| rng.uniform() < spec.sigma(j, row[j])).collect()).collect();
    let mut arrivals = vec![vec![0u64; k]; m];
    for n in 0..m {
        for j in (0..k).filter(|&j| fired[n][j]) {
            for i in (0..k).filter(|&i| i != j) {
                let v = route(rng, m, n)?;
                arrivals[v][i] += spec.h(j, i, state[n][j])?;
            }
        }
    }
    let mut next = vec![vec![0u64; k]; m];
    for n in 0..m {
        for i in 0..k {
            let x = state[n][i];
            next[n][i] = if fired[n][i] { spec.g1(i, x)? } else { spec.g2(i, x)? } + arrivals[n][i];
        }
    }
    Ok((next, arrivals))
}

pub fn step_rmf_dfiap(state: &[Vec<u64>], spec: &DFiapSpec, rng: &mut RngStream) -> Result<State> {
    step_rmf_dfiap_with_arrivals(state, spec, rng).map(|(next, _)| next)
}

/// δ-step chain of an integer-state Galves-Löcherbach model.
#[derive(Debug, Clone, PartialEq)]
pub struct DeltaChainSpec {
    /// Reset values `r_i ≥ 1`.
    pub r: Vec<u64>,
    /// `mu[j][i] = μ_{j→i}`; the diagonal is unused.
    pub mu: Vec<Vec<u64>>,
    /// Spike rate as a function of the state, an expression in `x`.
    pub sigma: Expr,
    pub delta: f64,
}

impl DeltaChainSpec {
    pub fn new(r: Vec<u64>, mu: Vec<Vec<u64>>, sigma: Expr, delta: f64) -> Result<Self> {
        let k = r.len();
        if k == 0 || mu.len() != k || mu.iter().any(|row| row.len() != k) {
            return Err(FiapError::InvalidParameter("inconsistent chain dimensions".into()));
        }
        if r.contains(&0) {
            return Err(FiapError::InvalidParameter("resets must be positive integers".into()));
        }
        if !(delta >= 0.0 && delta.is_finite()) {
            return Err(FiapError::InvalidParameter(format!("step {delta} must be nonnegative")));
        }
        if sigma.uses(Var::T) || sigma.uses(Var::Lam) {
            return Err(FiapError::Expr(format!("rate `{sigma}` may only depend on x")));
        }
        Ok(Self { r, mu, sigma, delta })
    }

    /// Chain of a cFIAP without drift whose resets and weights are integer
    /// constants; the spike rate is the intensity itself.
    pub fn from_cfiap(spec: &CfiapSpec, delta: f64) -> Result<Self> {
        let k = spec.nodes();
        let mut r = Vec::with_capacity(k);
        for i in 0..k {
            let g = spec.fragmentation_expr(i);
            match g {
                Expr::Const(c) if *c >= 1.0 && c.fract() == 0.0 => r.push(*c as u64),
                _ => return Err(FiapError::InvalidParameter(format!("reset `{g}` of node {i} is not a positive integer"))),
            }
            if *spec.drift(i) != Drift::none() {
                return Err(FiapError::InvalidParameter(format!("node {i} drifts; the chain needs integer states")));
            }
        }
        let mut mu = vec![vec![0u64; k]; k];
        for j in 0..k {
            for i in (0..k).filter(|&i| i != j) {
                match spec.h_const(j, i) {
                    Some(c) if c >= 0.0 && c.fract() == 0.0 => mu[j][i] = c as u64,
                    _ => return Err(FiapError::InvalidParameter(format!("h_{{{j}->{i}}} is not a natural constant"))),
                }
            }
        }
        for x in 0..=64 {
            if spec.f(x as f64) != x as f64 {
                return Err(FiapError::InvalidParameter("aggregation must be the identity on naturals".into()));
            }
        }
        Self::new(r, mu, Expr::var(Var::X), delta)
    }

    pub fn nodes(&self) -> usize {
        self.r.len()
    }

    pub fn with_delta(&self, delta: f64) -> Result<Self> {
        Self::new(self.r.clone(), self.mu.clone(), self.sigma.clone(), delta)
    }

    pub fn rate(&self, x: u64) -> f64 {
        self.sigma.eval(Vars::x(x as f64))
    }

    /// `1 − e^{−σ(x)δ}`.
    pub fn spike_prob(&self, x: u64) -> f64 {
        -(-self.rate(x) * self.delta).exp_m1()
    }

    /// The replica FIAP with `σ_δ(x) = 1 − e^{−σ(x)δ}`, resets as `g1`,
    /// identity as `g2` and constant weights as `h`.
    pub fn to_dfiap(&self) -> DFiapSpec {
        let k = self.nodes();
        let sigma_delta = Expr::Sub(
            Box::new(Expr::constant(1.0)),
            Box::new(Expr::Exp(Box::new(Expr::Neg(Box::new(Expr::Mul(
                Box::new(self.sigma.clone()),
                Box::new(Expr::constant(self.delta)),
            )))))),
        );
        DFiapSpec::new(
            self.r.iter().map(|&r| Expr::constant(r as f64)).collect(),
            vec![Expr::var(Var::X); k],
            self.mu.iter().map(|row| row.iter().map(|&w| Expr::constant(w as f64)).collect()).collect(),
            vec![sigma_delta; k],
        )
        .expect("chain maps are valid FIAP maps")
    }
}

/// One δ-step: fragmentation half step, then routed aggregation.
pub fn delta_step(state: &[Vec<u64>], spec: &DeltaChainSpec, rng: &mut RngStream) -> Result<State> {
    let k = spec.nodes();
    let m = check_state(state, k)?;
    let mut next: State = state.to_vec();
    let mut resets = Vec::new();
    for n in 0..m {
        for i in 0..k {
            if rng.uniform() < spec.spike_prob(state[n][i]) {
                next[n][i] = spec.r[i];
                resets.push((n, i));
            }
        }
    }
    for (n, i) in resets {
        for j in (0..k).filter(|&j| j != i) {
            let v = route(rng, m, n)?;
            next[v][j] += spec.mu[i][j];
        }
    }
    Ok(next)
}

/// The `(replica, node)` pairs whose spikes can reach `(m, i)`.
fn sources(m_count: usize, k: usize, m: usize, i: usize) -> Vec<(usize, usize)> {
    (0..m_count).filter(|&n| n != m).flat_map(|n| (0..k).filter(move |&j| j != i).map(move |j| (n, j))).collect()
}

fn check_budget(needed: usize) -> Result<()> {
    if needed > ENUMERATION_BUDGET {
        return Err(FiapError::EnumerationBudget { needed, budget: ENUMERATION_BUDGET });
    }
    Ok(())
}

/// Law of the routed arrivals `A_{m,i}` in one δ-step, by enumeration of the
/// spiking subset `J` of the `(M − 1)(K − 1)` source coordinates. Given `J`,
/// each member's contribution lands at `m` independently with probability
/// `1/(M − 1)`; for unit weights this is the binomial
/// `C(|J|, l)(M − 1)^{−l}(1 − 1/(M − 1))^{|J|−l}`.
pub fn arrival_pmf_exact(state: &[Vec<u64>], spec: &DeltaChainSpec, m: usize, i: usize) -> Result<Pmf> {
    let k = spec.nodes();
    let mc = check_state(state, k)?;
    let src = sources(mc, k, m, i);
    check_budget(src.len())?;
    let q = 1.0 / (mc - 1) as f64;
    let p: Vec<f64> = src.iter().map(|&(n, j)| spec.spike_prob(state[n][j])).collect();
    let w: Vec<usize> = src.iter().map(|&(_, j)| spec.mu[j][i] as usize).collect();
    let width = w.iter().sum::<usize>() + 1;
    let mut out = vec![0.0; width];
    let mut landed = vec![0.0; width];
    for mask in 0u64..(1u64 << src.len()) {
        let mut weight = 1.0;
        for (b, pb) in p.iter().enumerate() {
            weight *= if mask >> b & 1 == 1 { *pb } else { 1.0 - pb };
        }
        if weight == 0.0 {
            continue;
        }
        // Landing law given J.
        landed.iter_mut().for_each(|v| *v = 0.0);
        landed[0] = 1.0;
        let mut top = 0;
        for b in (0..src.len()).filter(|b| mask >> b & 1 == 1) {
            for s in (0..=top).rev() {
                let v = landed[s];
                landed[s] = v * (1.0 - q);
                landed[s + w[b]] += v * q;
            }
            top += w[b];
        }
        for s in 0..=top {
            out[s] += weight * landed[s];
        }
    }
    let pmf = Pmf::new(0, out)?;
    Ok(pmf)
}

/// `P(X_{m,i} → l)` for the single coordinate `(m, i)`:
/// `p·P(A = l − r_i) + (1 − p)·P(A = l − k)` with `k` the current value.
pub fn transition_prob_exact(state: &[Vec<u64>], spec: &DeltaChainSpec, m: usize, i: usize, l: u64) -> Result<f64> {
    let a = arrival_pmf_exact(state, spec, m, i)?;
    let p = spec.spike_prob(state[m][i]);
    let (r, k) = (spec.r[i] as i64, state[m][i] as i64);
    Ok(p * a.prob(l as i64 - r) + (1.0 - p) * a.prob(l as i64 - k))
}

/// Full single-coordinate transition law of `(m, i)` as a pmf over targets.
pub fn transition_row_exact(state: &[Vec<u64>], spec: &DeltaChainSpec, m: usize, i: usize) -> Result<Pmf> {
    let a = arrival_pmf_exact(state, spec, m, i)?;
    let p = spec.spike_prob(state[m][i]);
    let (r, k) = (spec.r[i] as i64, state[m][i] as i64);
    let lo = r.min(k);
    let hi = r.max(k) + a.max();
    let probs = (lo..=hi).map(|l| p * a.prob(l - r) + (1.0 - p) * a.prob(l - k)).collect();
    Ok(Pmf::raw(lo, probs))
}

/// Single-coordinate kernel of a replica FIAP:
/// `σ_i(x)·P(g1_i(x) + A = l) + (1 − σ_i(x))·P(g2_i(x) + A = l)`, where `A` sums
/// the independent contributions `h_{j→i}(X_{n,j})·1{fires}·1{lands at m}`.
/// Built by direct convolution, independently of [`arrival_pmf_exact`].
pub fn rmf_dfiap_kernel_exact(state: &[Vec<u64>], spec: &DFiapSpec, m: usize, i: usize) -> Result<Pmf> {
    let k = spec.nodes();
    let mc = check_state(state, k)?;
    let q = 1.0 / (mc - 1) as f64;
    let mut arrivals = Pmf::point_mass(0);
    for (n, j) in sources(mc, k, m, i) {
        let x = state[n][j];
        let p = spec.sigma(j, x) * q;
        let w = spec.h(j, i, x)? as usize;
        let mut probs = vec![0.0; w + 1];
        probs[0] += 1.0 - p;
        probs[w] += p;
        arrivals = arrivals.convolve(&Pmf::raw(0, probs));
    }
    let x = state[m][i];
    let s = spec.sigma(i, x);
    let (a, b) = (spec.g1(i, x)? as i64, spec.g2(i, x)? as i64);
    let lo = a.min(b);
    let hi = a.max(b) + arrivals.max();
    let probs = (lo..=hi).map(|l| s * arrivals.prob(l - a) + (1.0 - s) * arrivals.prob(l - b)).collect();
    Ok(Pmf::raw(lo, probs))
}

/// All outcomes of one δ-step from `state` with their probabilities. The
/// enumeration covers every spiking subset and every routing vector.
pub fn delta_step_exact(state: &[Vec<u64>], spec: &DeltaChainSpec) -> Result<Vec<(State, f64)>> {
    let k = spec.nodes();
    let mc = check_state(state, k)?;
    let coords = mc * k;
    // Each spiking coordinate multiplies the outcomes by (M − 1)^{K − 1}.
    let per_spike = ((mc - 1) as f64).powi(k as i32 - 1);
    let needed = coords as f64 + coords as f64 * per_spike.log2();
    check_budget(needed.ceil() as usize)?;
    let route_share = 1.0 / per_spike;
    let mut out = Vec::new();
    for mask in 0u64..(1u64 << coords) {
        let mut weight = 1.0;
        let mut post = state.to_vec();
        let mut spikes = Vec::new();
        for c in 0..coords {
            let (n, i) = (c / k, c % k);
            let p = spec.spike_prob(state[n][i]);
            if mask >> c & 1 == 1 {
                weight *= p;
                post[n][i] = spec.r[i];
                spikes.push((n, i));
            } else {
                weight *= 1.0 - p;
            }
        }
        if weight == 0.0 {
            continue;
        }
        // Odometer over routing choices: one offset in 0..M−1 per (spike, target node).
        let slots: Vec<(usize, usize)> =
            spikes.iter().flat_map(|&(n, i)| (0..k).filter(move |&j| j != i).map(move |j| (n * k + i, j))).collect();
        let mut choice = vec![0usize; slots.len()];
        let w = weight * route_share.powi(spikes.len() as i32);
        loop {
            let mut next = post.clone();
            for (s, &(src, j)) in slots.iter().enumerate() {
                let (n, i) = (src / k, src % k);
                let v = (n + 1 + choice[s]) % mc;
                next[v][j] += spec.mu[i][j];
            }
            out.push((next, w));
            let mut s = 0;
            while s < choice.len() {
                choice[s] += 1;
                if choice[s] < mc - 1 {
                    break;
                }
                choice[s] = 0;
                s += 1;
            }
            if s == choice.len() {
                break;
            }
        }
    }
    Ok(out)
}

/// Generator of the replica dynamics applied to `f` at `state`:
/// `Σ_{m,i} σ(λ_{m,i}) (M − 1)^{−(K−1)} Σ_v [f(λ after (m, i) spikes with routing v) − f(λ)]`.
pub fn generator_apply(f: &dyn Fn(&[Vec<u64>]) -> f64, state: &[Vec<u64>], spec: &DeltaChainSpec) -> Result<f64> {
    let k = spec.nodes();
    let mc = check_state(state, k)?;
    let base = f(state);
    let targets: Vec<usize> = (0..k).collect();
    let mut total = 0.0;
    for m in 0..mc {
        for i in 0..k {
            let rate = spec.rate(state[m][i]);
            if rate == 0.0 {
                continue;
            }
            let others: Vec<usize> = targets.iter().copied().filter(|&j| j != i).collect();
            let mut choice = vec![0usize; others.len()];
            let mut acc = 0.0;
            let mut count = 0usize;
            loop {
                let mut next = state.to_vec();
                next[m][i] = spec.r[i];
                for (s, &j) in others.iter().enumerate() {
                    next[(m + 1 + choice[s]) % mc][j] += spec.mu[i][j];
                }
                acc += f(&next) - base;
                count += 1;
                let mut s = 0;
                while s < choice.len() {
                    choice[s] += 1;
                    if choice[s] < mc - 1 {
                        break;
                    }
                    choice[s] = 0;
                    s += 1;
                }
                if s == choice.len() {
                    break;
                }
            }
            total += rate * acc / count as f64;
        }
    }
    Ok(total)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GeneratorResidual {
    pub delta: f64,
    /// `(P_δ f)(λ)` by exact enumeration.
    pub p_delta: f64,
    pub generator: f64,
    /// `|(P_δ f − f)/δ − 𝒜f|`.
    pub residual: f64,
}

/// Residuals of the finite-difference generator for each `δ` in `deltas`,
/// for the chain of a drift-free integer-state cFIAP.
pub fn generator_residual(
    f: &dyn Fn(&[Vec<u64>]) -> f64,
    state: &[Vec<u64>],
    spec: &CfiapSpec,
    deltas: &[f64],
) -> Result<Vec<GeneratorResidual>> {
    if deltas.iter().any(|d| !(*d > 0.0)) {
        return Err(FiapError::InvalidParameter("step sizes must be positive".into()));
    }
    let chain = DeltaChainSpec::from_cfiap(spec, deltas.first().copied().unwrap_or(1.0))?;
    let generator = generator_apply(f, state, &chain)?;
    let base = f(state);
    deltas
        .iter()
        .map(|&delta| {
            let chain = chain.with_delta(delta)?;
            let p_delta: f64 = delta_step_exact(state, &chain)?.iter().map(|(s, w)| w * f(s)).sum();
            let residual = ((p_delta - base) / delta - generator).abs();
            Ok(GeneratorResidual { delta, p_delta, generator, residual })
        })
        .collect()
}

/// Largest `|P − Q|` between two kernels over every state on the relevant
/// coordinates of each `(m, i)` with values in `0..=max_state`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KernelComparison {
    pub states_checked: usize,
    pub max_abs_diff: f64,
    /// Largest mass any compared row lost to truncation (zero when rows are exact).
    pub max_mass_defect: f64,
}

/// Compares the δ-chain kernel with the kernel of its replica FIAP. For each
/// `(m, i)` the coordinates it depends on (its own value and all sources)
/// range over `0..=max_state`; other coordinates follow a fixed pattern.
pub fn compare_membership_kernels(spec: &DeltaChainSpec, replicas: usize, max_state: u64) -> Result<KernelComparison> {
    let k = spec.nodes();
    if replicas < 2 {
        return Err(FiapError::TooFewReplicas(replicas));
    }
    let dfiap = spec.to_dfiap();
    let mut checked = 0;
    let mut max_diff: f64 = 0.0;
    let mut defect: f64 = 0.0;
    for m in 0..replicas {
        for i in 0..k {
            let mut coords = vec![(m, i)];
            coords.extend(sources(replicas, k, m, i));
            check_budget(coords.len())?;
            let base = max_state + 1;
            let total = (base as u128).pow(coords.len() as u32);
            if total > 50_000_000 {
                return Err(FiapError::EnumerationBudget { needed: coords.len(), budget: ENUMERATION_BUDGET });
            }
            for code in 0..total {
                let mut state = vec![vec![0u64; k]; replicas];
                let mut c = code;
                let mut digit_sum = 0;
                for &(n, j) in &coords {
                    state[n][j] = (c % base as u128) as u64;
                    digit_sum += state[n][j];
                    c /= base as u128;
                }
                for n in 0..replicas {
                    for j in 0..k {
                        if !coords.contains(&(n, j)) {
                            state[n][j] = (digit_sum + (n * k + j) as u64) % base;
                        }
                    }
                }
                let a = transition_row_exact(&state, spec, m, i)?;
                let b = rmf_dfiap_kernel_exact(&state, &dfiap, m, i)?;
                defect = defect.max((a.total() - 1.0).abs()).max((b.total() - 1.0).abs());
                for l in a.min().min(b.min())..=a.max().max(b.max()) {
                    max_diff = max_diff.max((a.prob(l) - b.prob(l)).abs());
                }
                checked += 1;
            }
        }
    }
    Ok(KernelComparison { states_checked: checked, max_abs_diff: max_diff, max_mass_defect: defect })
}

/// CSV `m,i,k,l,probability` of every single-coordinate transition from `state`.
pub fn write_transition_table<W: Write>(state: &[Vec<u64>], spec: &DeltaChainSpec, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["m", "i", "k", "l", "probability"])?;
    for (m, row) in state.iter().enumerate() {
        for (i, &x) in row.iter().enumerate() {
            let pmf = transition_row_exact(state, spec, m, i)?;
            if (pmf.total() - 1.0).abs() > MASS_TOLERANCE {
                return Err(FiapError::InvalidParameter(format!("row ({m}, {i}) has mass {}", pmf.total())));
            }
            for (l, p) in pmf.iter().filter(|(_, p)| *p > 0.0) {
                w.write_record([m.to_string(), i.to_string(), x.to_string(), l.to_string(), format!("{p:?}")])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// CSV `step,replica,node,state` of a chain trajectory.
pub fn write_chain_trajectory<W: Write>(path: &[State], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["step", "replica", "node", "state"])?;
    for (s, state) in path.iter().enumerate() {
        for (m, row) in state.iter().enumerate() {
            for (i, x) in row.iter().enumerate() {
                w.write_record([s.to_string(), m.to_string(), i.to_string(), x.to_string()])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}
