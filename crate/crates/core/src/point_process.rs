//! Seeded randomness streams, drift integration and thinning.
//!
//! Every random quantity in the simulator is drawn from an [`RngStream`] keyed
//! by `(seed, trajectory, replica, node, purpose)`. The key is the ChaCha key
//! itself, so distinct keys give independent streams and identical keys give
//! identical sequences.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};

use crate::error::{FiapError, Result};
use crate::expr::{Expr, Vars};

/// What a stream is used for. Part of the stream key.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Purpose {
    /// Candidate points and acceptance marks for a node's own events.
    Thinning,
    /// Replica choices for interactions emitted by a node.
    Routing,
    /// Initial intensity draw.
    Init,
    /// Exogenous Poisson arrivals from the given source node.
    Arrivals(u32),
    /// Anything else (bootstrap, discrete chains, checks).
    Aux(u32),
}

impl Purpose {
    fn code(self) -> u32 {
        match self {
            Purpose::Thinning => 0,
            Purpose::Routing => 1,
            Purpose::Init => 2,
            Purpose::Arrivals(j) => 0x1000_0000 | j,
            Purpose::Aux(k) => 0x2000_0000 | k,
        }
    }
}

/// `(replica, node, purpose)` part of a stream key.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct StreamId {
    pub replica: u32,
    pub node: u32,
    pub purpose: Purpose,
}

impl StreamId {
    pub fn new(replica: u32, node: u32, purpose: Purpose) -> Self {
        Self { replica, node, purpose }
    }
}

/// Replica label used for quantities shared by all replicas of a trajectory.
pub const SHARED_REPLICA: u32 = u32::MAX;

/// Deterministic random stream.
#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    trajectory: u64,
    id: StreamId,
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, trajectory: u64, id: StreamId) -> Self {
        let mut key = [0u8; 32];
        key[0..8].copy_from_slice(&seed.to_le_bytes());
        key[8..16].copy_from_slice(&trajectory.to_le_bytes());
        key[16..20].copy_from_slice(&id.replica.to_le_bytes());
        key[20..24].copy_from_slice(&id.node.to_le_bytes());
        key[24..28].copy_from_slice(&id.purpose.code().to_le_bytes());
        Self { seed, trajectory, id, rng: ChaCha8Rng::from_seed(key) }
    }

    /// Stream for auxiliary (non-trajectory) use such as bootstrap resampling.
    pub fn aux(seed: u64, k: u32) -> Self {
        Self::new(seed, u64::MAX, StreamId::new(SHARED_REPLICA, SHARED_REPLICA, Purpose::Aux(k)))
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn trajectory(&self) -> u64 {
        self.trajectory
    }

    pub fn id(&self) -> StreamId {
        self.id
    }

    /// Uniform on `[0, 1)`.
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    /// Standard exponential variate.
    #[inline]
    pub fn exp1(&mut self) -> f64 {
        Exp1.sample(&mut self.rng)
    }

    /// Uniform integer in `0..n`.
    #[inline]
    pub fn below(&mut self, n: usize) -> usize {
        self.rng.random_range(0..n)
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.rng.fill_bytes(dst)
    }
}

/// Between-event evolution `dλ/ds = σ(s, λ) − λ` of one node.
#[derive(Debug, Clone, PartialEq)]
pub enum Drift {
    /// `dλ/ds = intercept + slope·λ`, integrated in closed form.
    Affine { intercept: f64, slope: f64 },
    /// General `σ`, integrated with fixed-step RK4.
    General {
        sigma: Expr,
        step: f64,
        /// `σ(s, λ) ≤ λ` was verified, so paths never increase between events.
        nonincreasing: bool,
    },
}

/// Default RK4 step for non-affine drifts.
pub const DEFAULT_RK4_STEP: f64 = 1e-3;

impl Drift {
    /// Classifies `σ`: affine and time-independent drifts get the closed form.
    pub fn from_sigma(sigma: &Expr, nonincreasing: bool) -> Self {
        match sigma.affine_in(crate::expr::Var::Lam) {
            Some((a, c)) => Drift::Affine { intercept: a, slope: c - 1.0 },
            None => Drift::General { sigma: sigma.clone(), step: DEFAULT_RK4_STEP, nonincreasing },
        }
    }

    pub fn none() -> Self {
        Drift::Affine { intercept: 0.0, slope: 0.0 }
    }

    /// True when between-event paths are monotone, so a window bound is the
    /// larger endpoint.
    pub fn is_monotone(&self) -> bool {
        match self {
            Drift::Affine { .. } => true,
            Drift::General { nonincreasing, .. } => *nonincreasing,
        }
    }

    fn rate(&self, s: f64, lam: f64) -> f64 {
        match self {
            Drift::Affine { intercept, slope } => intercept + slope * lam,
            Drift::General { sigma, .. } => sigma.eval(Vars::t_lam(s, lam)) - lam,
        }
    }

    /// Intensity at `t1` starting from `lam0` at `t0` with no events in between.
    pub fn advance(&self, t0: f64, lam0: f64, t1: f64) -> Result<f64> {
        let dt = t1 - t0;
        if dt < 0.0 {
            return Err(FiapError::InvalidParameter(format!("integration backwards from {t0} to {t1}")));
        }
        if dt == 0.0 {
            return Ok(lam0);
        }
        let out = match self {
            Drift::Affine { intercept, slope } => {
                if *slope == 0.0 {
                    lam0 + intercept * dt
                } else {
                    lam0 + (lam0 * slope + intercept) * (slope * dt).exp_m1() / slope
                }
            }
            Drift::General { step, .. } => {
                let mut lam = lam0;
                rk4_walk(self, t0, t1, *step, &mut lam, |_, _, _| ())?;
                lam
            }
        };
        if !out.is_finite() {
            return Err(FiapError::NonFinite { context: "drift integration", time: t1, value: out });
        }
        Ok(out)
    }

    /// An upper bound on `max(λ(s), 0)` over `[t0, t1]`.
    pub fn bound(&self, t0: f64, lam0: f64, t1: f64) -> Result<f64> {
        if self.is_monotone() {
            let lam1 = if matches!(self, Drift::General { .. }) { lam0 } else { self.advance(t0, lam0, t1)? };
            return Ok(lam0.max(lam1).max(0.0));
        }
        let Drift::General { step, .. } = self else { unreachable!() };
        // Sampled maximum plus the largest possible excursion within one step.
        let mut lam = lam0;
        let mut hi = lam0.max(0.0);
        let mut slope_max: f64 = 0.0;
        rk4_walk(self, t0, t1, *step, &mut lam, |s, l, _| {
            hi = hi.max(l);
            slope_max = slope_max.max(self.rate(s, l).abs());
        })?;
        Ok(hi + 2.0 * slope_max * step + 1e-12)
    }

    /// `∫_{t0}^{t1} max(λ(s), 0) ds` along the between-event path.
    pub fn integral_positive(&self, t0: f64, lam0: f64, t1: f64) -> Result<f64> {
        let dt = t1 - t0;
        if dt <= 0.0 {
            return Ok(0.0);
        }
        match self {
            Drift::Affine { .. } => {
                let lam1 = self.advance(t0, lam0, t1)?;
                if lam0 >= 0.0 && lam1 >= 0.0 {
                    Ok(self.affine_integral(lam0, dt))
                } else if lam0 <= 0.0 && lam1 <= 0.0 {
                    Ok(0.0)
                } else {
                    // Monotone path crosses zero exactly once.
                    let (mut lo, mut hi) = (0.0, dt);
                    for _ in 0..80 {
                        let mid = 0.5 * (lo + hi);
                        let v = self.advance(0.0, lam0, mid)?;
                        if (v > 0.0) == (lam0 > 0.0) {
                            lo = mid;
                        } else {
                            hi = mid;
                        }
                    }
                    let root = 0.5 * (lo + hi);
                    if lam0 > 0.0 {
                        Ok(self.affine_integral(lam0, root))
                    } else {
                        Ok(self.affine_integral(0.0, dt - root))
                    }
                }
            }
            Drift::General { step, .. } => {
                let mut lam = lam0;
                let mut acc = 0.0;
                rk4_walk(self, t0, t1, *step, &mut lam, |_, l_prev, (h, l_next)| {
                    acc += 0.5 * h * (l_prev.max(0.0) + l_next.max(0.0));
                })?;
                Ok(acc)
            }
        }
    }

    fn affine_integral(&self, lam0: f64, dt: f64) -> f64 {
        let Drift::Affine { intercept, slope } = *self else { unreachable!() };
        let x = slope * dt;
        if x.abs() < 1e-5 {
            // Series of (e^x - 1 - x)/slope^2 to avoid cancellation.
            let k = lam0 * slope + intercept;
            lam0 * dt + k * dt * dt * (0.5 + x / 6.0 + x * x / 24.0)
        } else {
            lam0 * dt + (lam0 * slope + intercept) / slope * (x.exp_m1() / slope - dt)
        }
    }
}

/// Fixed-step RK4 from `t0` to `t1`; `visit(s, λ(s), (h, λ(s + h)))` sees each step.
fn rk4_walk(
    drift: &Drift,
    t0: f64,
    t1: f64,
    step: f64,
    lam: &mut f64,
    mut visit: impl FnMut(f64, f64, (f64, f64)),
) -> Result<()> {
    let span = t1 - t0;
    if span <= 0.0 {
        return Ok(());
    }
    let n = (span / step).ceil().max(1.0) as usize;
    let h = span / n as f64;
    let mut s = t0;
    for _ in 0..n {
        let y = *lam;
        let k1 = drift.rate(s, y);
        let k2 = drift.rate(s + 0.5 * h, y + 0.5 * h * k1);
        let k3 = drift.rate(s + 0.5 * h, y + 0.5 * h * k2);
        let k4 = drift.rate(s + h, y + h * k3);
        let next = y + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        if !next.is_finite() {
            return Err(FiapError::NonFinite { context: "RK4 drift integration", time: s + h, value: next });
        }
        visit(s, y, (h, next));
        *lam = next;
        s += h;
    }
    Ok(())
}

/// Drift-only evolution of an intensity from `t0` to `t1`.
pub fn integrate_drift(lam0: f64, drift: &Drift, t0: f64, t1: f64) -> Result<f64> {
    drift.advance(t0, lam0, t1)
}

/// First accepted point in `(t0, t1]` of a rate-`dominating_rate` Poisson
/// stream thinned with acceptance probability `intensity(t) / dominating_rate`.
///
/// Negative intensities count as zero. Every candidate is checked against the
/// bound and a violation is a hard error.
pub fn next_event_thinning(
    intensity: impl Fn(f64) -> Result<f64>,
    dominating_rate: f64,
    window: (f64, f64),
    rng: &mut RngStream,
) -> Result<Option<f64>> {
    let (t0, t1) = window;
    if !dominating_rate.is_finite() {
        return Err(FiapError::NonFinite { context: "dominating rate", time: t0, value: dominating_rate });
    }
    if dominating_rate <= 0.0 {
        let here = intensity(t0)?.max(0.0);
        if here > 0.0 {
            return Err(FiapError::NonPositiveBound { time: t0, intensity: here, bound: dominating_rate });
        }
        return Ok(None);
    }
    let mut t = t0;
    loop {
        t += rng.exp1() / dominating_rate;
        if t > t1 {
            return Ok(None);
        }
        let lam = intensity(t)?.max(0.0);
        if lam > dominating_rate * (1.0 + 1e-12) {
            return Err(FiapError::BoundViolation { time: t, intensity: lam, bound: dominating_rate });
        }
        if rng.uniform() * dominating_rate < lam {
            return Ok(Some(t));
        }
    }
}

/// Right-continuous piecewise intensity path: each piece starts at a time with
/// a post-jump value and follows `drift` until the next piece.
#[derive(Debug, Clone)]
pub struct IntensityPath {
    pieces: Vec<(f64, f64)>,
    drift: Drift,
}

impl IntensityPath {
    pub fn new(drift: Drift) -> Self {
        Self { pieces: Vec::new(), drift }
    }

    /// Appends a piece. Start times must be nondecreasing; a piece at the same
    /// time as the previous one replaces it (several jumps at one instant).
    pub fn push(&mut self, start: f64, value: f64) -> Result<()> {
        if let Some(&(last, _)) = self.pieces.last() {
            if start < last {
                return Err(FiapError::InvalidParameter(format!("piece at {start} before {last}")));
            }
            if start == last {
                self.pieces.pop();
            }
        }
        self.pieces.push((start, value));
        Ok(())
    }

    pub fn pieces(&self) -> &[(f64, f64)] {
        &self.pieces
    }

    /// Value at `t` (right-continuous); `None` before the first piece.
    pub fn eval(&self, t: f64) -> Result<Option<f64>> {
        let idx = self.pieces.partition_point(|&(s, _)| s <= t);
        if idx == 0 {
            return Ok(None);
        }
        let (s, v) = self.pieces[idx - 1];
        self.drift.advance(s, v, t).map(Some)
    }

    /// Left limit at `t`.
    pub fn left_limit(&self, t: f64) -> Result<Option<f64>> {
        let idx = self.pieces.partition_point(|&(s, _)| s < t);
        if idx == 0 {
            return Ok(None);
        }
        let (s, v) = self.pieces[idx - 1];
        self.drift.advance(s, v, t).map(Some)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use statrs::distribution::{ChiSquared, ContinuousCDF, Discrete, Poisson as PoissonDist};

    fn stream(k: u32) -> RngStream {
        RngStream::new(11, 0, StreamId::new(0, k, Purpose::Thinning))
    }

    #[test]
    fn identical_keys_identical_sequences() {
        let mut a = RngStream::new(5, 3, StreamId::new(1, 2, Purpose::Routing));
        let mut b = RngStream::new(5, 3, StreamId::new(1, 2, Purpose::Routing));
        for _ in 0..100 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
    }

    #[test]
    fn distinct_streams_are_uncorrelated() {
        let n = 100_000;
        let mut a = RngStream::new(7, 0, StreamId::new(0, 0, Purpose::Thinning));
        let mut b = RngStream::new(7, 0, StreamId::new(0, 1, Purpose::Thinning));
        let mut c = RngStream::new(7, 0, StreamId::new(0, 0, Purpose::Routing));
        let xs: Vec<f64> = (0..n).map(|_| a.uniform()).collect();
        for other in [&mut b, &mut c] {
            let ys: Vec<f64> = (0..n).map(|_| other.uniform()).collect();
            let mx = xs.iter().sum::<f64>() / n as f64;
            let my = ys.iter().sum::<f64>() / n as f64;
            let cov: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum::<f64>() / n as f64;
            let corr = cov / (1.0 / 12.0);
            // 4 standard errors of a null correlation.
            assert!(corr.abs() < 4.0 / (n as f64).sqrt(), "corr = {corr}");
        }
    }

    #[test]
    fn zero_intensity_never_fires() {
        let mut rng = stream(0);
        assert_eq!(next_event_thinning(|_| Ok(0.0), 1.0, (0.0, 100.0), &mut rng).unwrap(), None);
        assert_eq!(next_event_thinning(|_| Ok(0.0), 0.0, (0.0, 100.0), &mut rng).unwrap(), None);
    }

    #[test]
    fn bound_violation_is_an_error() {
        let mut rng = stream(1);
        let err = next_event_thinning(|_| Ok(2.0), 1.0, (0.0, 100.0), &mut rng).unwrap_err();
        assert!(matches!(err, FiapError::BoundViolation { intensity, bound, .. } if intensity == 2.0 && bound == 1.0));
        let err = next_event_thinning(|_| Ok(0.5), 0.0, (0.0, 1.0), &mut rng).unwrap_err();
        assert!(matches!(err, FiapError::NonPositiveBound { .. }));
    }

    fn counts_on(rate: f64, bound: f64, window: (f64, f64), runs: usize, seed_node: u32) -> Vec<u64> {
        let mut rng = stream(seed_node);
        (0..runs)
            .map(|_| {
                let mut t = window.0;
                let mut k = 0;
                while let Some(s) = next_event_thinning(|_| Ok(rate), bound, (t, window.1), &mut rng).unwrap() {
                    k += 1;
                    t = s;
                }
                k
            })
            .collect()
    }

    #[test]
    fn constant_rate_mean_count() {
        let lam = 3.0;
        let n = 100_000;
        let counts = counts_on(lam, lam, (0.0, 1.0), n, 2);
        let mean = counts.iter().sum::<u64>() as f64 / n as f64;
        assert!((mean - lam).abs() <= 3.0 * (lam / n as f64).sqrt(), "mean = {mean}");
    }

    /// Chi-square goodness of fit of per-interval counts against Poisson, and
    /// independence of the counts on two disjoint intervals.
    #[test]
    fn counts_on_disjoint_intervals_are_independent_poisson() {
        let lam = 2.0;
        let n = 100_000;
        let mut rng = stream(3);
        let mut first = Vec::with_capacity(n);
        let mut second = Vec::with_capacity(n);
        for _ in 0..n {
            let (mut a, mut b) = (0u64, 0u64);
            let mut t = 0.0;
            while let Some(s) = next_event_thinning(|_| Ok(lam), lam, (t, 2.0), &mut rng).unwrap() {
                if s <= 1.0 {
                    a += 1
                } else {
                    b += 1
                }
                t = s;
            }
            first.push(a);
            second.push(b);
        }
        let pois = PoissonDist::new(lam).unwrap();
        for sample in [&first, &second] {
            let cells = 8u64;
            let mut obs = vec![0f64; cells as usize + 1];
            for &k in sample.iter() {
                obs[k.min(cells) as usize] += 1.0;
            }
            let mut stat = 0.0;
            for k in 0..=cells {
                let p = if k == cells { 1.0 - (0..cells).map(|j| pois.pmf(j)).sum::<f64>() } else { pois.pmf(k) };
                let e = p * n as f64;
                stat += (obs[k as usize] - e).powi(2) / e;
            }
            let pval = 1.0 - ChiSquared::new(cells as f64).unwrap().cdf(stat);
            assert!(pval > 0.01, "chi-square p = {pval}");
        }
        // Contingency test on a 4x4 table of (first, second).
        let cap = 3usize;
        let mut table = [[0f64; 4]; 4];
        for (&a, &b) in first.iter().zip(&second) {
            table[(a as usize).min(cap)][(b as usize).min(cap)] += 1.0;
        }
        let rows: Vec<f64> = table.iter().map(|r| r.iter().sum()).collect();
        let cols: Vec<f64> = (0..4).map(|j| table.iter().map(|r| r[j]).sum()).collect();
        let mut stat = 0.0;
        for i in 0..4 {
            for j in 0..4 {
                let e = rows[i] * cols[j] / n as f64;
                stat += (table[i][j] - e).powi(2) / e;
            }
        }
        let pval = 1.0 - ChiSquared::new(9.0).unwrap().cdf(stat);
        assert!(pval > 0.01, "independence p = {pval}");
    }

    /// Two-sample Kolmogorov-Smirnov: thinning rate λ/2 under bound λ against a
    /// direct rate-λ/2 stream.
    #[test]
    fn thinning_matches_direct_simulation() {
        let lam = 4.0;
        let n = 10_000;
        let mut thin_rng = stream(4);
        let mut direct_rng = stream(5);
        let mut thinned: Vec<f64> = (0..n)
            .map(|_| next_event_thinning(|_| Ok(lam / 2.0), lam, (0.0, f64::INFINITY), &mut thin_rng).unwrap().unwrap())
            .collect();
        let mut direct: Vec<f64> = (0..n)
            .map(|_| next_event_thinning(|_| Ok(lam / 2.0), lam / 2.0, (0.0, f64::INFINITY), &mut direct_rng).unwrap().unwrap())
            .collect();
        thinned.sort_by(f64::total_cmp);
        direct.sort_by(f64::total_cmp);
        let (mut i, mut j, mut d) = (0usize, 0usize, 0f64);
        while i < n && j < n {
            if thinned[i] <= direct[j] {
                i += 1;
            } else {
                j += 1;
            }
            d = d.max((i as f64 / n as f64 - j as f64 / n as f64).abs());
        }
        // 5% critical value of the two-sample statistic.
        let crit = 1.358 * (2.0 / n as f64).sqrt();
        assert!(d < crit, "KS D = {d}, critical {crit}");
    }

    #[test]
    fn identity_drift_is_constant() {
        let d = Drift::from_sigma(&Expr::parse("lam").unwrap(), true);
        assert_eq!(d, Drift::none());
        assert_eq!(integrate_drift(3.0, &d, 0.0, 17.0).unwrap(), 3.0);
    }

    #[test]
    fn gl_relaxation_closed_form() {
        let d = Drift::from_sigma(&Expr::constant(1.0), false);
        let v = integrate_drift(2.0, &d, 0.0, 1.0).unwrap();
        assert!((v - (1.0 + (-1.0f64).exp())).abs() < 1e-14, "{v}");
        assert!((v - 1.3679).abs() < 1e-4);
    }

    #[test]
    fn rk4_matches_closed_form() {
        // Same relaxation written non-affinely: max(1, 1) keeps it affine, abs() of a
        // nonnegative lam does not.
        let general = Drift::General { sigma: Expr::parse("1 + 0 * abs(lam)").unwrap(), step: DEFAULT_RK4_STEP, nonincreasing: false };
        let closed = Drift::from_sigma(&Expr::constant(1.0), false);
        let a = general.advance(0.3, 2.0, 1.3).unwrap();
        let b = closed.advance(0.3, 2.0, 1.3).unwrap();
        assert!((a - b).abs() < 1e-12);
        let ia = general.integral_positive(0.0, 2.0, 1.0).unwrap();
        let ib = closed.integral_positive(0.0, 2.0, 1.0).unwrap();
        assert!((ia - ib).abs() < 1e-6, "{ia} vs {ib}");
    }

    #[test]
    fn compliant_drift_never_increases() {
        // σ(s, λ) = λ²/(1 + λ) ≤ λ for λ ≥ 0.
        let d = Drift::General { sigma: Expr::parse("lam * lam / (1 + lam)").unwrap(), step: DEFAULT_RK4_STEP, nonincreasing: true };
        let mut prev = 5.0;
        for k in 1..20 {
            let v = d.advance(0.0, 5.0, k as f64 * 0.1).unwrap();
            assert!(v <= prev);
            prev = v;
        }
        let affine = Drift::from_sigma(&Expr::parse("0.5 * lam").unwrap(), true);
        assert!(affine.advance(0.0, 4.0, 2.0).unwrap() <= 4.0);
    }

    #[test]
    fn non_finite_drift_is_an_error() {
        let d = Drift::General { sigma: Expr::parse("exp(exp(lam))").unwrap(), step: 0.01, nonincreasing: false };
        assert!(matches!(d.advance(0.0, 5.0, 1.0), Err(FiapError::NonFinite { .. })));
    }

    #[test]
    fn affine_integral_handles_zero_crossing() {
        // dλ/ds = -1 from λ = 0.5: positive part is a triangle of area 0.125.
        let d = Drift::Affine { intercept: -1.0, slope: 0.0 };
        let v = d.integral_positive(0.0, 0.5, 3.0).unwrap();
        assert!((v - 0.125).abs() < 1e-12, "{v}");
        let up = Drift::Affine { intercept: 1.0, slope: 0.0 };
        let v = up.integral_positive(0.0, -0.5, 1.0).unwrap();
        assert!((v - 0.125).abs() < 1e-12, "{v}");
    }

    #[test]
    fn intensity_path_is_right_continuous() {
        let mut p = IntensityPath::new(Drift::from_sigma(&Expr::constant(1.0), false));
        p.push(0.0, 3.0).unwrap();
        p.push(1.0, 5.0).unwrap();
        let before = p.left_limit(1.0).unwrap().unwrap();
        assert!((before - (1.0 + 2.0 * (-1.0f64).exp())).abs() < 1e-14);
        assert_eq!(p.eval(1.0).unwrap(), Some(5.0));
        assert_eq!(p.eval(-0.1).unwrap(), None);
        assert!(p.push(0.5, 1.0).is_err());
    }
}
