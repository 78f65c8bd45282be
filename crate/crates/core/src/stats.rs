//! Estimators used to check the mean-field limit: total variation, concentration
//! of replica averages, Poisson-approximation bounds, independence, log-log
//! rate fits and moment bounds.
//!
//! All standard errors are bootstrap estimates with [`BOOTSTRAP_RESAMPLES`]
//! resamples drawn from a seeded auxiliary stream, so every estimator is a
//! deterministic function of its inputs and seed.

use serde::Serialize;

use crate::error::{FiapError, Result};
use crate::model::CfiapSpec;
use crate::point_process::RngStream;

pub const BOOTSTRAP_RESAMPLES: usize = 1000;

/// Tolerance on the total mass of a [`Pmf`].
pub const MASS_TOLERANCE: f64 = 1e-12;

/// Probability mass function on the integers `offset..offset + probs.len()`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Pmf {
    offset: i64,
    probs: Vec<f64>,
}

impl Pmf {
    pub fn new(offset: i64, probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(FiapError::EmptySample);
        }
        if let Some(p) = probs.iter().find(|p| !(**p >= 0.0) || !p.is_finite()) {
            return Err(FiapError::InvalidParameter(format!("negative or non-finite mass {p}")));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > MASS_TOLERANCE {
            return Err(FiapError::InvalidParameter(format!("masses sum to {total}")));
        }
        Ok(Self { offset, probs })
    }

    /// Like [`Pmf::new`] without the normalization check; for intermediate sums.
    pub(crate) fn raw(offset: i64, probs: Vec<f64>) -> Self {
        Self { offset, probs }
    }

    pub fn point_mass(k: i64) -> Self {
        Self { offset: k, probs: vec![1.0] }
    }

    /// Poisson law truncated where the remaining tail is below `1e-17`, with
    /// the tail mass folded into the last atom.
    pub fn poisson(mean: f64) -> Result<Self> {
        if !(mean >= 0.0 && mean.is_finite()) {
            return Err(FiapError::InvalidParameter(format!("Poisson mean {mean}")));
        }
        if mean == 0.0 {
            return Ok(Self::point_mass(0));
        }
        // Work outwards from the mode in log space.
        let mode = mean.floor() as usize;
        let log_mode = -mean + mode as f64 * mean.ln() - (1..=mode).map(|k| (k as f64).ln()).sum::<f64>();
        let mut up = vec![log_mode.exp()];
        let mut p = up[0];
        let mut k = mode;
        loop {
            k += 1;
            p *= mean / k as f64;
            if p < 1e-17 && k as f64 > mean {
                break;
            }
            up.push(p);
        }
        let mut down = Vec::new();
        let mut p = up[0];
        for k in (1..=mode).rev() {
            p *= k as f64 / mean;
            if p < 1e-17 {
                break;
            }
            down.push(p);
        }
        let offset = (mode - down.len()) as i64;
        down.reverse();
        down.extend(up);
        let total: f64 = down.iter().sum();
        for v in &mut down {
            *v /= total;
        }
        Ok(Self { offset, probs: down })
    }

    /// Law of `c·X` for a nonnegative integer `c`.
    pub fn scaled(&self, c: i64) -> Result<Self> {
        if c < 0 {
            return Err(FiapError::InvalidParameter(format!("scale {c}")));
        }
        if c == 0 {
            return Ok(Self::point_mass(0));
        }
        let c_us = c as usize;
        let mut probs = vec![0.0; (self.probs.len() - 1) * c_us + 1];
        for (k, p) in self.probs.iter().enumerate() {
            probs[k * c_us] = *p;
        }
        Ok(Self { offset: self.offset * c, probs })
    }

    /// Law of the sum of independent variables.
    pub fn convolve(&self, other: &Pmf) -> Pmf {
        let mut probs = vec![0.0; self.probs.len() + other.probs.len() - 1];
        for (a, p) in self.probs.iter().enumerate() {
            for (b, q) in other.probs.iter().enumerate() {
                probs[a + b] += p * q;
            }
        }
        Pmf { offset: self.offset + other.offset, probs }
    }

    pub fn prob(&self, k: i64) -> f64 {
        let d = k - self.offset;
        if d < 0 {
            0.0
        } else {
            self.probs.get(d as usize).copied().unwrap_or(0.0)
        }
    }

    pub fn min(&self) -> i64 {
        self.offset
    }

    pub fn max(&self) -> i64 {
        self.offset + self.probs.len() as i64 - 1
    }

    pub fn total(&self) -> f64 {
        self.probs.iter().sum()
    }

    pub fn mean(&self) -> f64 {
        self.iter().map(|(k, p)| k as f64 * p).sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (i64, f64)> + '_ {
        self.probs.iter().enumerate().map(move |(d, p)| (self.offset + d as i64, *p))
    }
}

/// Sample counts over integers.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EmpiricalPmf {
    offset: i64,
    counts: Vec<u64>,
    n: u64,
}

impl EmpiricalPmf {
    pub fn from_samples(xs: &[i64]) -> Result<Self> {
        let (&lo, &hi) = (xs.iter().min().ok_or(FiapError::EmptySample)?, xs.iter().max().unwrap());
        let mut counts = vec![0u64; (hi - lo + 1) as usize];
        for &x in xs {
            counts[(x - lo) as usize] += 1;
        }
        Ok(Self { offset: lo, counts, n: xs.len() as u64 })
    }

    /// Integer-valued floats (exact arrival totals) to counts. Non-integers are an error.
    pub fn from_integral_f64(xs: &[f64]) -> Result<Self> {
        let ints: Vec<i64> = xs
            .iter()
            .map(|&x| {
                if x.fract() == 0.0 && x.abs() < 9e15 {
                    Ok(x as i64)
                } else {
                    Err(FiapError::InvalidParameter(format!("{x} is not an integer")))
                }
            })
            .collect::<Result<_>>()?;
        Self::from_samples(&ints)
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn count(&self, k: i64) -> u64 {
        let d = k - self.offset;
        if d < 0 {
            0
        } else {
            self.counts.get(d as usize).copied().unwrap_or(0)
        }
    }

    pub fn to_pmf(&self) -> Pmf {
        let n = self.n as f64;
        Pmf { offset: self.offset, probs: self.counts.iter().map(|&c| c as f64 / n).collect() }
    }
}

/// Anything with integer support that [`tv_discrete`] can compare.
pub trait MassFunction {
    fn mass(&self, k: i64) -> f64;
    fn support(&self) -> (i64, i64);
}

impl MassFunction for Pmf {
    fn mass(&self, k: i64) -> f64 {
        self.prob(k)
    }

    fn support(&self) -> (i64, i64) {
        (self.min(), self.max())
    }
}

impl MassFunction for EmpiricalPmf {
    fn mass(&self, k: i64) -> f64 {
        self.count(k) as f64 / self.n as f64
    }

    fn support(&self) -> (i64, i64) {
        (self.offset, self.offset + self.counts.len() as i64 - 1)
    }
}

/// `½ Σ_k |p(k) − q(k)|` over the union of supports.
pub fn tv_discrete(p: &impl MassFunction, q: &impl MassFunction) -> f64 {
    let (a, b) = (p.support(), q.support());
    let tv = 0.5 * (a.0.min(b.0)..=a.1.max(b.1)).map(|k| (p.mass(k) - q.mass(k)).abs()).sum::<f64>();
    tv.min(1.0)
}

/// A point estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub value: f64,
    pub stderr: f64,
}

fn mean_sd(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let var = if xs.len() > 1 { xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
    (m, var.sqrt())
}

/// Sample mean with its standard error `sd/√n`.
pub fn mean_estimate(xs: &[f64]) -> Result<Estimate> {
    if xs.is_empty() {
        return Err(FiapError::EmptySample);
    }
    let (m, sd) = mean_sd(xs);
    Ok(Estimate { value: m, stderr: sd / (xs.len() as f64).sqrt() })
}

/// Bootstrap standard deviation of `stat` over resampled index sets of `0..n`.
pub fn bootstrap_stderr(n: usize, seed: u64, stat: impl Fn(&[usize]) -> f64) -> f64 {
    let mut rng = RngStream::aux(seed, 0xb007);
    let mut idx = vec![0usize; n];
    let vals: Vec<f64> = (0..BOOTSTRAP_RESAMPLES)
        .map(|_| {
            for v in idx.iter_mut() {
                *v = rng.below(n);
            }
            stat(&idx)
        })
        .collect();
    mean_sd(&vals).1
}

/// TV between an integer-valued sample and a reference law, with a bootstrap
/// standard error over the sample.
pub fn tv_sample_vs_pmf(xs: &[i64], reference: &Pmf, seed: u64) -> Result<Estimate> {
    let emp = EmpiricalPmf::from_samples(xs)?;
    let value = tv_discrete(&emp, reference);
    let lo = emp.offset;
    let labels: Vec<usize> = xs.iter().map(|&x| (x - lo) as usize).collect();
    let width = emp.counts.len();
    let stderr = bootstrap_stderr(xs.len(), seed, |idx| {
        let mut counts = vec![0u64; width];
        for &k in idx {
            counts[labels[k]] += 1;
        }
        tv_discrete(&EmpiricalPmf { offset: lo, counts, n: idx.len() as u64 }, reference)
    });
    Ok(Estimate { value, stderr })
}

/// Bin edges splitting `sorted` into about `bins` groups of equal mass. Cuts
/// fall between distinct values, so atoms are never split; bin `b` holds
/// values in `(edges[b − 1], edges[b]]`.
pub fn equal_mass_edges(sorted: &[f64], bins: usize) -> Vec<f64> {
    let n = sorted.len();
    // (value, count of samples <= value) at each distinct value except the last.
    let mut cuts: Vec<(f64, usize)> = Vec::new();
    for k in 1..n {
        if sorted[k] != sorted[k - 1] {
            cuts.push((sorted[k - 1], k));
        }
    }
    let mut edges: Vec<f64> = Vec::new();
    for q in 1..bins {
        let target = q as f64 * n as f64 / bins as f64;
        let best = cuts.partition_point(|&(_, c)| (c as f64) < target);
        let pick = [best.checked_sub(1), Some(best)]
            .into_iter()
            .flatten()
            .filter(|&b| b < cuts.len())
            .min_by(|&a, &b| {
                let da = (cuts[a].1 as f64 - target).abs();
                let db = (cuts[b].1 as f64 - target).abs();
                da.total_cmp(&db)
            });
        if let Some(b) = pick {
            if edges.last() != Some(&cuts[b].0) {
                edges.push(cuts[b].0);
            }
        }
    }
    edges
}

#[inline]
fn bin_of(edges: &[f64], x: f64) -> usize {
    edges.partition_point(|&e| e < x)
}

/// Binned TV between two continuous samples on a shared equal-mass binning of
/// the pooled sample, with half- and double-resolution sensitivity values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BinnedTv {
    pub value: f64,
    pub stderr: f64,
    pub bins: usize,
    pub half_bins: f64,
    pub double_bins: f64,
}

pub const DEFAULT_TV_BINS: usize = 64;

fn binned_tv_value(xs: &[f64], ys: &[f64], edges: &[f64]) -> f64 {
    let nb = edges.len() + 1;
    let mut cx = vec![0.0; nb];
    let mut cy = vec![0.0; nb];
    for &x in xs {
        cx[bin_of(edges, x)] += 1.0;
    }
    for &y in ys {
        cy[bin_of(edges, y)] += 1.0;
    }
    let (nx, ny) = (xs.len() as f64, ys.len() as f64);
    0.5 * cx.iter().zip(&cy).map(|(a, b)| (a / nx - b / ny).abs()).sum::<f64>()
}

pub fn tv_binned(xs: &[f64], ys: &[f64], bins: usize, seed: u64) -> Result<BinnedTv> {
    if xs.is_empty() || ys.is_empty() {
        return Err(FiapError::EmptySample);
    }
    if bins < 2 {
        return Err(FiapError::DegenerateBinning(format!("{bins} bins")));
    }
    let mut pooled: Vec<f64> = xs.iter().chain(ys).copied().collect();
    if pooled.iter().any(|v| !v.is_finite()) {
        return Err(FiapError::InvalidParameter("non-finite sample".into()));
    }
    pooled.sort_by(f64::total_cmp);
    let edges_for = |b: usize| equal_mass_edges(&pooled, b.max(2));
    let edges = edges_for(bins);
    let value = binned_tv_value(xs, ys, &edges);
    let half_bins = binned_tv_value(xs, ys, &edges_for(bins / 2));
    let double_bins = binned_tv_value(xs, ys, &edges_for(bins * 2));

    // Bootstrap both samples independently on the fixed edges.
    let nb = edges.len() + 1;
    let lx: Vec<usize> = xs.iter().map(|&x| bin_of(&edges, x)).collect();
    let ly: Vec<usize> = ys.iter().map(|&y| bin_of(&edges, y)).collect();
    let mut rng = RngStream::aux(seed, 0xb1);
    let mut vals = Vec::with_capacity(BOOTSTRAP_RESAMPLES);
    let (nx, ny) = (xs.len(), ys.len());
    for _ in 0..BOOTSTRAP_RESAMPLES {
        let mut cx = vec![0.0; nb];
        let mut cy = vec![0.0; nb];
        for _ in 0..nx {
            cx[lx[rng.below(nx)]] += 1.0;
        }
        for _ in 0..ny {
            cy[ly[rng.below(ny)]] += 1.0;
        }
        vals.push(0.5 * cx.iter().zip(&cy).map(|(a, b)| (a / nx as f64 - b / ny as f64).abs()).sum::<f64>());
    }
    Ok(BinnedTv { value, stderr: mean_sd(&vals).1, bins: nb, half_bins, double_bins })
}

fn check_counts(counts: &[Vec<f64>]) -> Result<usize> {
    let m = counts.first().map(|r| r.len()).ok_or(FiapError::EmptySample)?;
    if m < 2 {
        return Err(FiapError::TooFewReplicas(m));
    }
    if counts.len() < 2 {
        return Err(FiapError::InvalidParameter("need at least 2 replications".into()));
    }
    if counts.iter().any(|r| r.len() != m) {
        return Err(FiapError::InvalidParameter("ragged count table".into()));
    }
    Ok(m)
}

fn tlln_value(counts: &[Vec<f64>], rows: &[usize]) -> f64 {
    let m = counts[0].len();
    let grand = rows.iter().map(|&r| counts[r].iter().sum::<f64>()).sum::<f64>() / (rows.len() * m) as f64;
    rows.iter().map(|&r| (counts[r].iter().map(|n| n - grand).sum::<f64>() / (m - 1) as f64).abs()).sum::<f64>()
        / rows.len() as f64
}

/// Estimate of `E|(M − 1)^{-1} Σ_n (N_n − E[N])|` from `counts[replication][replica]`.
/// `E[N]` is the grand mean; the standard error bootstraps over replications.
pub fn tlln_deviation(counts: &[Vec<f64>], seed: u64) -> Result<Estimate> {
    check_counts(counts)?;
    let all: Vec<usize> = (0..counts.len()).collect();
    let value = tlln_value(counts, &all);
    let stderr = bootstrap_stderr(counts.len(), seed, |idx| tlln_value(counts, idx));
    Ok(Estimate { value, stderr })
}

/// Constant of the Chen-Stein bound on the distance of a sum of Bernoullis to
/// the Poisson law.
pub const CHEN_STEIN_CONSTANT: f64 = 0.74;

/// Plug-in value of the Poisson-approximation bound
/// `(1 ∧ 0.74/√E[N])·E|Σ(E[N] − N)|/(M − 1) + (1 ∧ 1/E[N])·E[N]/(M − 1)`,
/// up to the unspecified overall constant.
pub fn chen_stein_rhs(counts: &[Vec<f64>]) -> Result<f64> {
    let m = check_counts(counts)?;
    let all: Vec<usize> = (0..counts.len()).collect();
    let dev = tlln_value(counts, &all);
    let en = counts.iter().flatten().sum::<f64>() / (counts.len() * m) as f64;
    if en <= 0.0 {
        return Ok(0.0);
    }
    let inv = 1.0 / (m - 1) as f64;
    Ok((CHEN_STEIN_CONSTANT / en.sqrt()).min(1.0) * dev + inv * (1.0 / en).min(1.0) * en)
}

/// Largest cell of `|P̂(X∈B1, Y∈B2) − P̂(X∈B1)P̂(Y∈B2)|` over equal-mass
/// marginal bins.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IndependenceGap {
    pub value: f64,
    /// Bootstrap standard error of the signed difference in the maximizing cell.
    pub stderr: f64,
    pub cell: (usize, usize),
}

fn labels(xs: &[f64], bins: usize, which: &str) -> Result<(Vec<usize>, usize)> {
    let mut sorted = xs.to_vec();
    sorted.sort_by(f64::total_cmp);
    let edges = equal_mass_edges(&sorted, bins);
    if edges.is_empty() {
        return Err(FiapError::DegenerateBinning(format!("{which} is constant")));
    }
    Ok((xs.iter().map(|&x| bin_of(&edges, x)).collect(), edges.len() + 1))
}

fn cell_diffs(lx: &[usize], ly: &[usize], bx: usize, by: usize, idx: &mut dyn Iterator<Item = usize>) -> Vec<f64> {
    let mut joint = vec![0.0; bx * by];
    let mut mx = vec![0.0; bx];
    let mut my = vec![0.0; by];
    let mut n = 0.0;
    for k in idx {
        joint[lx[k] * by + ly[k]] += 1.0;
        mx[lx[k]] += 1.0;
        my[ly[k]] += 1.0;
        n += 1.0;
    }
    (0..bx * by).map(|c| joint[c] / n - (mx[c / by] / n) * (my[c % by] / n)).collect()
}

pub const MIN_INDEPENDENCE_SAMPLES: usize = 1000;

pub fn independence_gap(xs: &[f64], ys: &[f64], bins: usize, seed: u64) -> Result<IndependenceGap> {
    if xs.len() != ys.len() {
        return Err(FiapError::InvalidParameter("paired samples differ in length".into()));
    }
    if xs.len() < MIN_INDEPENDENCE_SAMPLES {
        return Err(FiapError::InvalidParameter(format!("{} pairs, need {MIN_INDEPENDENCE_SAMPLES}", xs.len())));
    }
    if bins < 2 {
        return Err(FiapError::DegenerateBinning(format!("{bins} bins")));
    }
    let (lx, bx) = labels(xs, bins, "X")?;
    let (ly, by) = labels(ys, bins, "Y")?;
    let diffs = cell_diffs(&lx, &ly, bx, by, &mut (0..xs.len()));
    let (cell, value) = diffs
        .iter()
        .enumerate()
        .map(|(c, d)| (c, d.abs()))
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .expect("at least four cells");
    let stderr = bootstrap_stderr(xs.len(), seed, |idx| cell_diffs(&lx, &ly, bx, by, &mut idx.iter().copied())[cell]);
    Ok(IndependenceGap { value, stderr, cell: (cell / by, cell % by) })
}

/// Least-squares fit of `log d` against `log M`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SlopeFit {
    /// `(log M, log d)` of the points used.
    pub points: Vec<(f64, f64)>,
    pub slope: f64,
    pub intercept: f64,
    pub residual_rms: f64,
    /// Inputs dropped because the distance was not positive.
    pub dropped: Vec<f64>,
}

pub fn loglog_slope(ms: &[f64], distances: &[f64]) -> Result<SlopeFit> {
    if ms.len() != distances.len() {
        return Err(FiapError::InvalidParameter("M values and distances differ in length".into()));
    }
    let mut points = Vec::new();
    let mut dropped = Vec::new();
    for (&m, &d) in ms.iter().zip(distances) {
        if d > 0.0 && m > 0.0 && d.is_finite() {
            points.push((m.ln(), d.ln()));
        } else {
            dropped.push(m);
        }
    }
    if points.len() < 3 {
        return Err(FiapError::TooFewPoints(points.len()));
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx == 0.0 {
        return Err(FiapError::InvalidParameter("all M values equal".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let residual_rms = (points.iter().map(|p| (p.1 - intercept - slope * p.0).powi(2)).sum::<f64>() / n).sqrt();
    Ok(SlopeFit { points, slope, intercept, residual_rms, dropped })
}

/// Empirical `E[λ^p]` at time `t` and, for `p = 1`, the Grönwall ceiling
/// `max_i E[λ_i(0)]·e^{(K−1)Ht}` of the dynamics without drift and resets.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MomentCheck {
    pub p: u32,
    pub empirical: Estimate,
    pub bound: Option<f64>,
    /// `empirical ≤ bound + 3·stderr` when a bound applies.
    pub holds: Option<bool>,
}

pub fn moment_check(samples: &[f64], spec: &CfiapSpec, t: f64, p: u32) -> Result<MomentCheck> {
    let powered: Vec<f64> = samples.iter().map(|x| x.powi(p as i32)).collect();
    let empirical = mean_estimate(&powered)?;
    let bound = (p == 1).then(|| {
        let m0 = (0..spec.nodes()).map(|i| spec.init(i).mean()).fold(f64::NEG_INFINITY, f64::max);
        m0 * ((spec.nodes() - 1) as f64 * spec.interaction_bound() * t).exp()
    });
    let holds = bound.map(|b| empirical.value <= b + 3.0 * empirical.stderr);
    Ok(MomentCheck { p, empirical, bound, holds })
}

/// Monte-Carlo `E[e^{ξλ}]`; errors if any term overflows.
pub fn exp_moment(samples: &[f64], xi: f64) -> Result<Estimate> {
    let vals: Vec<f64> = samples.iter().map(|x| (xi * x).exp()).collect();
    if let Some(v) = vals.iter().find(|v| !v.is_finite()) {
        return Err(FiapError::NonFinite { context: "exponential moment", time: f64::NAN, value: *v });
    }
    mean_estimate(&vals)
}
