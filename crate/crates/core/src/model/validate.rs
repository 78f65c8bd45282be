//! Grid-based checks of a spec against the standing model assumptions.
//!
//! Nothing here is a proof: bounds and Lipschitz constants are spot-checked on
//! deterministic grids and seeded random pairs.

use std::fmt;

use serde::Serialize;

use super::{Builtin, CfiapSpec};
use crate::point_process::RngStream;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Pass,
    Note,
    Warn,
    Fail,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Finding {
    pub check: &'static str,
    pub severity: Severity,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub findings: Vec<Finding>,
}

impl ValidationReport {
    pub fn worst(&self) -> Severity {
        self.findings.iter().map(|f| f.severity).max().unwrap_or(Severity::Pass)
    }

    pub fn has_failures(&self) -> bool {
        self.worst() == Severity::Fail
    }

    pub fn get(&self, check: &str) -> Option<&Finding> {
        self.findings.iter().find(|f| f.check == check)
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for x in &self.findings {
            writeln!(f, "{:?} {}: {}", x.severity, x.check, x.message)?;
        }
        Ok(())
    }
}

const TIME_POINTS: usize = 1000;
const LAM_MAX: f64 = 50.0;
const LAM_POINTS: usize = 201;
const LIPSCHITZ_PAIRS: usize = 2000;

fn time_grid(horizon: f64) -> impl Iterator<Item = f64> {
    (0..TIME_POINTS).map(move |a| horizon * a as f64 / (TIME_POINTS - 1) as f64)
}

fn lam_grid() -> impl Iterator<Item = f64> {
    (0..LAM_POINTS).map(|b| LAM_MAX * b as f64 / (LAM_POINTS - 1) as f64)
}

pub fn validate(spec: &CfiapSpec) -> ValidationReport {
    validate_with_seed(spec, 0)
}

/// Runs every check; `seed` drives the random Lipschitz pairs.
pub fn validate_with_seed(spec: &CfiapSpec, seed: u64) -> ValidationReport {
    let mut out = Vec::new();
    let mut push = |check, severity, message: String| out.push(Finding { check, severity, message });
    let k = spec.nodes();
    let horizon = spec.horizon();

    // Interaction bound.
    let mut worst: (f64, usize, usize, f64) = (0.0, 0, 0, 0.0);
    let mut signed = false;
    for j in 0..k {
        for i in (0..k).filter(|&i| i != j) {
            for t in time_grid(horizon) {
                let h = spec.h(j, i, t);
                signed |= h < 0.0;
                if !h.is_finite() || h.abs() > worst.0 {
                    worst = (h.abs(), j, i, t);
                }
            }
        }
    }
    if worst.0 <= spec.interaction_bound() {
        push("interaction_bound", Severity::Pass, format!("|h| <= H = {} on the check grid", spec.interaction_bound()));
    } else {
        push(
            "interaction_bound",
            Severity::Fail,
            format!("|h_{{{}->{}}}({})| = {} exceeds H = {}", worst.1, worst.2, worst.3, worst.0, spec.interaction_bound()),
        );
    }
    if signed {
        push(
            "signed_interactions",
            Severity::Note,
            "some h are negative; intensities fed to thinning are clamped at zero".into(),
        );
    }

    // Aggregation function.
    let f0 = spec.f(0.0);
    if f0 == 0.0 {
        push("f_at_zero", Severity::Pass, "f(0) = 0".into());
    } else {
        push("f_at_zero", Severity::Fail, format!("f(0) = {f0}, must be 0"));
    }
    let xs: Vec<f64> = (0..=400).map(|a| -100.0 + a as f64 * 0.5).collect();
    match xs.iter().find(|&&x| !(spec.f(x) >= 0.0)) {
        None => push("f_nonnegative", Severity::Pass, "f >= 0 on [-100, 100]".into()),
        Some(x) => push("f_nonnegative", Severity::Fail, format!("f({x}) = {} < 0", spec.f(*x))),
    }
    let mut rng = RngStream::aux(seed, 0x5a11);
    let lip = spec.lipschitz();
    let mut ratio_max: f64 = 0.0;
    for _ in 0..LIPSCHITZ_PAIRS {
        let x = 200.0 * rng.uniform() - 100.0;
        let y = 200.0 * rng.uniform() - 100.0;
        if x != y {
            ratio_max = ratio_max.max((spec.f(x) - spec.f(y)).abs() / (x - y).abs());
        }
    }
    if ratio_max <= lip * (1.0 + 1e-9) {
        push("f_lipschitz", Severity::Pass, format!("largest sampled slope {ratio_max:.6} <= L_f = {lip}"));
    } else {
        push("f_lipschitz", Severity::Fail, format!("sampled slope {ratio_max} exceeds L_f = {lip}"));
    }

    // Fragmentation and drift.
    let gordon_newell = spec.builtin_name() == Some(Builtin::GordonNewell);
    let mut g_negative = None;
    let mut g_above = None;
    let mut s_negative = None;
    let mut s_above = None;
    for i in 0..k {
        for t in time_grid(horizon).step_by(10) {
            for lam in lam_grid() {
                let g = spec.g(i, t, lam);
                let s = spec.sigma(i, t, lam);
                if !(g >= 0.0) && g_negative.is_none() {
                    g_negative = Some((i, t, lam, g));
                }
                if g > lam && g_above.is_none() {
                    g_above = Some((i, t, lam, g));
                }
                if !(s >= 0.0) && s_negative.is_none() {
                    s_negative = Some((i, t, lam, s));
                }
                if s > lam && s_above.is_none() {
                    s_above = Some((i, t, lam, s));
                }
            }
        }
    }
    match g_negative {
        None => push("g_nonnegative", Severity::Pass, "g >= 0 on the check grid".into()),
        Some((i, t, lam, g)) if gordon_newell => push(
            "g_nonnegative",
            Severity::Note,
            format!(
                "g_{i}({t}, {lam}) = {g}; g = lam - 1 is only applied at event times, where lam >= 1 for integer \
                 initial states"
            ),
        ),
        Some((i, t, lam, g)) => push("g_nonnegative", Severity::Warn, format!("g_{i}({t}, {lam}) = {g} < 0")),
    }
    match s_negative {
        None => push("sigma_nonnegative", Severity::Pass, "sigma >= 0 on the check grid".into()),
        Some((i, t, lam, s)) => push("sigma_nonnegative", Severity::Warn, format!("sigma_{i}({t}, {lam}) = {s} < 0")),
    }
    match (g_above, s_above) {
        (None, None) => push(
            "monotone_between_aggregations",
            Severity::Pass,
            "g <= lam and sigma <= lam: intensities only increase through aggregation".into(),
        ),
        (g, s) => {
            let mut parts = Vec::new();
            if let Some((i, t, lam, v)) = g {
                parts.push(format!("g_{i}({t}, {lam}) = {v} > lam"));
            }
            if let Some((i, t, lam, v)) = s {
                parts.push(format!("sigma_{i}({t}, {lam}) = {v} > lam"));
            }
            push("monotone_between_aggregations", Severity::Warn, parts.join("; "))
        }
    }

    // Initial laws.
    let mut moments = Vec::new();
    let mut moment_ok = true;
    for i in 0..k {
        let law = spec.init(i);
        let xi = if law.xi0().is_finite() { law.xi0() / 2.0 } else { 1.0 };
        let m = law.exp_moment(xi);
        moment_ok &= m.is_finite();
        moments.push(format!("node {i}: E[exp({xi} lam(0))] = {m:.6}"));
    }
    push(
        "initial_exponential_moments",
        if moment_ok { Severity::Pass } else { Severity::Fail },
        moments.join("; "),
    );

    ValidationReport { findings: out }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::Expr;
    use crate::model::{gl_desk, BuiltinParams, InitLaw, InitSpec};

    #[test]
    fn gl_excitatory_warns_on_drift() {
        let r = validate(&gl_desk(2, 2.0));
        assert_eq!(r.get("interaction_bound").unwrap().severity, Severity::Pass);
        assert_eq!(r.get("f_at_zero").unwrap().severity, Severity::Pass);
        assert_eq!(r.get("f_lipschitz").unwrap().severity, Severity::Pass);
        assert_eq!(r.get("monotone_between_aggregations").unwrap().severity, Severity::Warn);
        assert!(!r.has_failures());
    }

    #[test]
    fn shifted_aggregation_fails() {
        let base = gl_desk(2, 1.0);
        let k = 2;
        let h = (0..k).map(|j| (0..k).map(|i| base.interaction_expr(j, i).clone()).collect()).collect();
        let spec = CfiapSpec::custom(
            1.0,
            h,
            1.0,
            Expr::parse("x + 1").unwrap(),
            1.0,
            vec![Expr::constant(1.0); k],
            vec![Expr::constant(1.0); k],
            vec![InitLaw::Constant { value: 1.0 }; k],
        )
        .unwrap();
        let r = validate(&spec);
        assert_eq!(r.get("f_at_zero").unwrap().severity, Severity::Fail);
        assert!(r.has_failures());
    }

    #[test]
    fn gordon_newell_passes_with_note() {
        let spec = CfiapSpec::builtin(
            Builtin::GordonNewell,
            3,
            &BuiltinParams::default(),
            1.0,
            InitSpec::Single(InitLaw::Constant { value: 3.0 }),
        )
        .unwrap();
        let r = validate(&spec);
        assert!(!r.has_failures());
        assert_eq!(r.get("g_nonnegative").unwrap().severity, Severity::Note);
        assert_eq!(r.get("monotone_between_aggregations").unwrap().severity, Severity::Pass);
    }

    #[test]
    fn understated_bound_fails() {
        let spec = CfiapSpec::builtin(
            Builtin::GlExcitatory,
            2,
            &BuiltinParams { mu: crate::model::Weights::Matrix(vec![vec![0.0, 2.0], vec![0.5, 0.0]]), ..BuiltinParams::default() },
            1.0,
            InitSpec::Single(InitLaw::Constant { value: 1.0 }),
        )
        .unwrap();
        assert_eq!(spec.interaction_bound(), 2.0);
        let lying = CfiapSpec::custom(
            1.0,
            (0..2).map(|j| (0..2).map(|i| spec.interaction_expr(j, i).clone()).collect()).collect(),
            1.0,
            spec.aggregation_expr().clone(),
            1.0,
            vec![Expr::constant(1.0); 2],
            vec![Expr::constant(1.0); 2],
            vec![InitLaw::Constant { value: 1.0 }; 2],
        )
        .unwrap();
        assert_eq!(validate(&lying).get("interaction_bound").unwrap().severity, Severity::Fail);
    }

    #[test]
    fn validation_is_deterministic() {
        let spec = gl_desk(3, 1.0);
        assert_eq!(validate_with_seed(&spec, 4), validate_with_seed(&spec, 4));
    }
}
