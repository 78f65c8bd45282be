//! Declarative cFIAP model definitions.
//!
//! A [`CfiapSpec`] fixes the node count, the interaction weights `h_{j→i}(t)`,
//! the aggregation function `f`, per-node fragmentation `g_i(t, λ)` and drift
//! `σ_i(t, λ)`, the initial-intensity laws and the horizon. The intensity of
//! node `i` obeys
//!
//! ```text
//! λ_i(t) = λ_i(0) + f(Σ_{j≠i} ∫ h_{j→i} dN̂_{j→i}) + ∫ (g_i − λ_i) dN_i + ∫ (σ_i − λ_i) ds
//! ```

mod config;
mod validate;

pub use config::{BuiltinParams, CustomModel, InitSpec, ModelConfig, NodeValues, Weights};
pub use validate::{validate, validate_with_seed, Finding, Severity, ValidationReport};

use serde::{Deserialize, Serialize};

use crate::error::{FiapError, Result};
use crate::expr::{Expr, Var, Vars};
use crate::point_process::{Drift, RngStream};

/// Law of a node's initial intensity. All kinds have finite exponential moments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitLaw {
    Constant { value: f64 },
    Uniform { low: f64, high: f64 },
    /// Exponential with the given rate conditioned on `[0, cap]`.
    TruncatedExponential { rate: f64, cap: f64 },
}

impl InitLaw {
    pub fn check(&self) -> Result<()> {
        let ok = match *self {
            InitLaw::Constant { value } => value.is_finite(),
            InitLaw::Uniform { low, high } => low.is_finite() && high.is_finite() && low <= high,
            InitLaw::TruncatedExponential { rate, cap } => rate > 0.0 && cap > 0.0 && rate.is_finite() && cap.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(FiapError::InvalidParameter(format!("bad initial law {self:?}")))
        }
    }

    pub fn sample(&self, rng: &mut RngStream) -> f64 {
        match *self {
            InitLaw::Constant { value } => value,
            InitLaw::Uniform { low, high } => low + (high - low) * rng.uniform(),
            InitLaw::TruncatedExponential { rate, cap } => {
                let u = rng.uniform();
                -(u * (-rate * cap).exp_m1()).ln_1p() / rate
            }
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            InitLaw::Constant { value } => value,
            InitLaw::Uniform { low, high } => 0.5 * (low + high),
            InitLaw::TruncatedExponential { rate, cap } => {
                let tail = (-rate * cap).exp();
                1.0 / rate - cap * tail / (1.0 - tail)
            }
        }
    }

    /// Largest `ξ` up to which `E[e^{ξ λ(0)}]` is guaranteed finite for the
    /// untruncated family; bounded laws report infinity.
    pub fn xi0(&self) -> f64 {
        match *self {
            InitLaw::TruncatedExponential { rate, .. } => rate,
            _ => f64::INFINITY,
        }
    }

    /// `E[e^{ξ λ(0)}]` in closed form.
    pub fn exp_moment(&self, xi: f64) -> f64 {
        match *self {
            InitLaw::Constant { value } => (xi * value).exp(),
            InitLaw::Uniform { low, high } => {
                if high == low || xi == 0.0 {
                    (xi * low).exp()
                } else {
                    (xi * low).exp() * (xi * (high - low)).exp_m1() / (xi * (high - low))
                }
            }
            InitLaw::TruncatedExponential { rate, cap } => {
                let norm = rate / -(-rate * cap).exp_m1();
                let d = xi - rate;
                if d == 0.0 {
                    norm * cap
                } else {
                    norm * (d * cap).exp_m1() / d
                }
            }
        }
    }
}

/// Builtin model families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Builtin {
    GlExcitatory,
    GlInhibitory,
    GordonNewell,
}

impl Builtin {
    pub fn name(self) -> &'static str {
        match self {
            Builtin::GlExcitatory => "gl_excitatory",
            Builtin::GlInhibitory => "gl_inhibitory",
            Builtin::GordonNewell => "gordon_newell",
        }
    }
}

impl std::str::FromStr for Builtin {
    type Err = FiapError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gl_excitatory" => Ok(Builtin::GlExcitatory),
            "gl_inhibitory" => Ok(Builtin::GlInhibitory),
            "gordon_newell" => Ok(Builtin::GordonNewell),
            other => Err(FiapError::UnknownModel(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Origin {
    Builtin(Builtin, BuiltinParams),
    Custom,
}

/// Full cFIAP model definition. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct CfiapSpec {
    nodes: usize,
    horizon: f64,
    /// `interaction[j][i] = h_{j→i}(t)`; rows are sources.
    interaction: Vec<Vec<Expr>>,
    interaction_bound: f64,
    aggregation: Expr,
    lipschitz: f64,
    fragmentation: Vec<Expr>,
    sigma: Vec<Expr>,
    init: Vec<InitLaw>,
    origin: Origin,
    // Derived at construction.
    const_h: Vec<Option<f64>>,
    drifts: Vec<Drift>,
}

/// Grid used to decide whether a general drift keeps paths nonincreasing.
fn sigma_below_identity(sigma: &Expr, horizon: f64) -> bool {
    (0..=20).all(|a| {
        let s = horizon * a as f64 / 20.0;
        (0..=200).all(|b| {
            let lam = b as f64 * 0.25;
            sigma.eval(Vars::t_lam(s, lam)) <= lam
        })
    })
}

impl CfiapSpec {
    /// Builds a spec from explicit functions. Shapes are checked here; the
    /// standing assumptions are checked by [`validate`].
    #[allow(clippy::too_many_arguments)]
    pub fn custom(
        horizon: f64,
        interaction: Vec<Vec<Expr>>,
        interaction_bound: f64,
        aggregation: Expr,
        lipschitz: f64,
        fragmentation: Vec<Expr>,
        sigma: Vec<Expr>,
        init: Vec<InitLaw>,
    ) -> Result<Self> {
        Self::assemble(horizon, interaction, interaction_bound, aggregation, lipschitz, fragmentation, sigma, init, Origin::Custom)
    }

    #[allow(clippy::too_many_arguments)]
    fn assemble(
        horizon: f64,
        interaction: Vec<Vec<Expr>>,
        interaction_bound: f64,
        aggregation: Expr,
        lipschitz: f64,
        fragmentation: Vec<Expr>,
        sigma: Vec<Expr>,
        init: Vec<InitLaw>,
        origin: Origin,
    ) -> Result<Self> {
        let k = interaction.len();
        if k == 0 {
            return Err(FiapError::InvalidParameter("K must be at least 1".into()));
        }
        if interaction.iter().any(|row| row.len() != k) {
            return Err(FiapError::InvalidParameter(format!("h matrix must be {k}x{k}")));
        }
        if fragmentation.len() != k || sigma.len() != k || init.len() != k {
            return Err(FiapError::InvalidParameter(format!(
                "expected {k} fragmentation, drift and initial-law entries, got {}, {}, {}",
                fragmentation.len(),
                sigma.len(),
                init.len()
            )));
        }
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(FiapError::InvalidParameter(format!("horizon must be positive, got {horizon}")));
        }
        if !(interaction_bound >= 0.0 && lipschitz >= 0.0) {
            return Err(FiapError::InvalidParameter("H and L_f must be nonnegative".into()));
        }
        for law in &init {
            law.check()?;
        }
        for row in &interaction {
            for h in row {
                if h.uses(Var::Lam) || h.uses(Var::X) {
                    return Err(FiapError::Expr(format!("interaction `{h}` may only depend on t")));
                }
            }
        }
        if aggregation.uses(Var::T) || aggregation.uses(Var::Lam) {
            return Err(FiapError::Expr(format!("aggregation `{aggregation}` may only depend on x")));
        }
        for e in fragmentation.iter().chain(&sigma) {
            if e.uses(Var::X) {
                return Err(FiapError::Expr(format!("`{e}` may only depend on t and lam")));
            }
        }
        let const_h = interaction
            .iter()
            .flatten()
            .map(|h| h.is_constant().then(|| h.eval(Vars::default())))
            .collect();
        let drifts = sigma.iter().map(|s| Drift::from_sigma(s, sigma_below_identity(s, horizon))).collect();
        Ok(Self {
            nodes: k,
            horizon,
            interaction,
            interaction_bound,
            aggregation,
            lipschitz,
            fragmentation,
            sigma,
            init,
            origin,
            const_h,
            drifts,
        })
    }

    /// One of the three builtin families with `k` nodes.
    pub fn builtin(name: Builtin, k: usize, params: &BuiltinParams, horizon: f64, init: InitSpec) -> Result<Self> {
        let init = init.expand(k)?;
        match name {
            Builtin::GlExcitatory | Builtin::GlInhibitory => {
                let mu = params.mu.matrix(k)?;
                let r = params.r.expand(k, "r")?;
                let b = params.b.expand(k, "b")?;
                let tau = params.tau.as_ref().map(|t| t.expand(k, "tau")).transpose()?;
                if let Some(&bad) = r.iter().find(|v| !(**v > 0.0)) {
                    return Err(FiapError::InvalidParameter(format!("reset r_i must be positive, got {bad}")));
                }
                if let Some(&bad) = b.iter().find(|v| !(**v > 0.0)) {
                    return Err(FiapError::InvalidParameter(format!("base rate b_i must be positive, got {bad}")));
                }
                if let Some(&bad) = tau.iter().flatten().find(|v| !(**v > 0.0)) {
                    return Err(FiapError::InvalidParameter(format!("time constant tau_i must be positive, got {bad}")));
                }
                if name == Builtin::GlExcitatory {
                    if let Some(bad) = mu.iter().flatten().find(|v| **v < 0.0) {
                        return Err(FiapError::InvalidParameter(format!(
                            "excitatory weights must be nonnegative, got {bad}"
                        )));
                    }
                }
                let mut bound: f64 = 0.0;
                for (j, row) in mu.iter().enumerate() {
                    for (i, w) in row.iter().enumerate() {
                        if i != j {
                            bound = bound.max(w.abs());
                        }
                    }
                }
                let interaction = mu.iter().map(|row| row.iter().map(|&w| Expr::constant(w)).collect()).collect();
                let aggregation = match name {
                    Builtin::GlExcitatory => Expr::Abs(Box::new(Expr::var(Var::X))),
                    _ => Expr::Max(Box::new(Expr::constant(0.0)), Box::new(Expr::var(Var::X))),
                };
                let fragmentation = r.iter().map(|&v| Expr::constant(v)).collect();
                let sigma = (0..k)
                    .map(|i| match &tau {
                        None => Expr::constant(b[i]),
                        Some(tau) => Expr::Add(
                            Box::new(Expr::var(Var::Lam)),
                            Box::new(Expr::Div(
                                Box::new(Expr::Sub(Box::new(Expr::constant(b[i])), Box::new(Expr::var(Var::Lam)))),
                                Box::new(Expr::constant(tau[i])),
                            )),
                        ),
                    })
                    .collect();
                Self::assemble(
                    horizon,
                    interaction,
                    bound,
                    aggregation,
                    1.0,
                    fragmentation,
                    sigma,
                    init,
                    Origin::Builtin(name, params.clone()),
                )
            }
            Builtin::GordonNewell => {
                if k < 2 {
                    return Err(FiapError::InvalidParameter("gordon_newell needs K >= 2".into()));
                }
                let interaction = (0..k)
                    .map(|j| (0..k).map(|i| Expr::constant(if j == (i + 1) % k { 1.0 } else { 0.0 })).collect())
                    .collect();
                let lam = || Box::new(Expr::var(Var::Lam));
                Self::assemble(
                    horizon,
                    interaction,
                    1.0,
                    Expr::Abs(Box::new(Expr::var(Var::X))),
                    1.0,
                    vec![Expr::Sub(lam(), Box::new(Expr::constant(1.0))); k],
                    vec![Expr::var(Var::Lam); k],
                    init,
                    Origin::Builtin(name, params.clone()),
                )
            }
        }
    }

    /// Same model on a different horizon.
    pub fn with_horizon(&self, horizon: f64) -> Result<Self> {
        let mut out = self.clone();
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(FiapError::InvalidParameter(format!("horizon must be positive, got {horizon}")));
        }
        out.horizon = horizon;
        out.drifts = out.sigma.iter().map(|s| Drift::from_sigma(s, sigma_below_identity(s, horizon))).collect();
        Ok(out)
    }

    /// Same model with no drift (`σ_i(s, λ) = λ`) and no fragmentation
    /// (`g_i(s, λ) = λ`): the dominating dynamics of the moment bound.
    pub fn dominated(&self) -> Self {
        let k = self.nodes;
        let lam = Expr::var(Var::Lam);
        Self::assemble(
            self.horizon,
            self.interaction.clone(),
            self.interaction_bound,
            self.aggregation.clone(),
            self.lipschitz,
            vec![lam.clone(); k],
            vec![lam; k],
            self.init.clone(),
            Origin::Custom,
        )
        .expect("dominated dynamics of a valid spec are valid")
    }

    pub fn nodes(&self) -> usize {
        self.nodes
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn interaction_bound(&self) -> f64 {
        self.interaction_bound
    }

    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    pub fn builtin_name(&self) -> Option<Builtin> {
        match &self.origin {
            Origin::Builtin(b, _) => Some(*b),
            Origin::Custom => None,
        }
    }

    pub fn interaction_expr(&self, src: usize, dst: usize) -> &Expr {
        &self.interaction[src][dst]
    }

    pub fn aggregation_expr(&self) -> &Expr {
        &self.aggregation
    }

    pub fn fragmentation_expr(&self, i: usize) -> &Expr {
        &self.fragmentation[i]
    }

    pub fn sigma_expr(&self, i: usize) -> &Expr {
        &self.sigma[i]
    }

    pub fn init(&self, i: usize) -> &InitLaw {
        &self.init[i]
    }

    pub fn drift(&self, i: usize) -> &Drift {
        &self.drifts[i]
    }

    /// `h_{src→dst}(t)`.
    #[inline]
    pub fn h(&self, src: usize, dst: usize, t: f64) -> f64 {
        match self.const_h[src * self.nodes + dst] {
            Some(c) => c,
            None => self.interaction[src][dst].eval(Vars::t(t)),
        }
    }

    /// `h_{src→dst}` when it does not depend on time.
    pub fn h_const(&self, src: usize, dst: usize) -> Option<f64> {
        self.const_h[src * self.nodes + dst]
    }

    /// True when every off-diagonal `h` is a time-independent integer, so
    /// arrival aggregates are integer-valued.
    pub fn integer_interactions(&self) -> bool {
        (0..self.nodes).all(|j| {
            (0..self.nodes).all(|i| i == j || self.h_const(j, i).is_some_and(|c| c.fract() == 0.0))
        })
    }

    #[inline]
    pub fn f(&self, x: f64) -> f64 {
        match &self.aggregation {
            Expr::Abs(a) if matches!(**a, Expr::Var(Var::X)) => x.abs(),
            e => e.eval(Vars::x(x)),
        }
    }

    #[inline]
    pub fn g(&self, i: usize, t: f64, lam: f64) -> f64 {
        match &self.fragmentation[i] {
            Expr::Const(c) => *c,
            e => e.eval(Vars::t_lam(t, lam)),
        }
    }

    pub fn sigma(&self, i: usize, t: f64, lam: f64) -> f64 {
        self.sigma[i].eval(Vars::t_lam(t, lam))
    }

    /// Config-file form of this spec. Builtins serialize by name and
    /// parameters; custom specs by expression.
    pub fn to_config(&self) -> ModelConfig {
        let init = InitSpec::PerNode(self.init.clone());
        match &self.origin {
            Origin::Builtin(name, params) => ModelConfig {
                k: self.nodes,
                horizon: self.horizon,
                example: Some(name.name().to_string()),
                custom: None,
                params: Some(params.clone()),
                init,
            },
            Origin::Custom => self.to_custom_config(),
        }
    }

    /// Config-file form with every function written out as an expression.
    pub fn to_custom_config(&self) -> ModelConfig {
        ModelConfig {
            k: self.nodes,
            horizon: self.horizon,
            example: None,
            custom: Some(CustomModel {
                h_matrix: self.interaction.clone(),
                f: self.aggregation.clone(),
                g: self.fragmentation.clone(),
                sigma: self.sigma.clone(),
                h_bound: self.interaction_bound,
                lipschitz: self.lipschitz,
            }),
            params: None,
            init: InitSpec::PerNode(self.init.clone()),
        }
    }

    /// Drops the builtin tag, keeping the same functions.
    pub fn into_custom(mut self) -> Self {
        self.origin = Origin::Custom;
        self
    }

    pub fn from_config(cfg: &ModelConfig) -> Result<Self> {
        cfg.build()
    }
}

/// Desk configuration used throughout the tests and the acceptance suite:
/// excitatory Galves-Löcherbach with `K` nodes, `μ = r = b = 1`, `λ(0) = 1`.
pub fn gl_desk(k: usize, horizon: f64) -> CfiapSpec {
    CfiapSpec::builtin(
        Builtin::GlExcitatory,
        k,
        &BuiltinParams::gl(1.0, 1.0, 1.0),
        horizon,
        InitSpec::Single(InitLaw::Constant { value: 1.0 }),
    )
    .expect("desk parameters are valid")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::point_process::{Purpose, StreamId};

    #[test]
    fn gl_excitatory_shape() {
        let s = gl_desk(2, 2.0);
        assert_eq!(s.nodes(), 2);
        assert_eq!(s.interaction_bound(), 1.0);
        assert_eq!(s.f(-2.5), 2.5);
        assert_eq!(s.g(0, 0.3, 7.0), 1.0);
        assert_eq!(s.sigma(1, 0.0, 5.0), 1.0);
        assert_eq!(s.h(0, 1, 0.7), 1.0);
        assert!(s.integer_interactions());
        assert_eq!(*s.drift(0), Drift::Affine { intercept: 1.0, slope: -1.0 });
    }

    #[test]
    fn gordon_newell_wiring_is_cyclic_successor() {
        let s = CfiapSpec::builtin(
            Builtin::GordonNewell,
            3,
            &BuiltinParams::default(),
            1.0,
            InitSpec::Single(InitLaw::Constant { value: 2.0 }),
        )
        .unwrap();
        for j in 0..3 {
            for i in 0..3 {
                assert_eq!(s.h(j, i, 0.0), if j == (i + 1) % 3 { 1.0 } else { 0.0 }, "h[{j}->{i}]");
            }
        }
        assert_eq!(s.g(0, 0.0, 3.0), 2.0);
        assert_eq!(*s.drift(2), Drift::none());
    }

    #[test]
    fn inhibitory_aggregation_is_positive_part() {
        let s = CfiapSpec::builtin(
            Builtin::GlInhibitory,
            2,
            &BuiltinParams::gl(-0.5, 1.0, 1.0),
            1.0,
            InitSpec::Single(InitLaw::Constant { value: 1.0 }),
        )
        .unwrap();
        assert_eq!(s.f(-3.0), 0.0);
        assert_eq!(s.f(2.0), 2.0);
        assert_eq!(s.interaction_bound(), 0.5);
    }

    #[test]
    fn builtin_errors() {
        let init = || InitSpec::Single(InitLaw::Constant { value: 1.0 });
        assert!(matches!("nope".parse::<Builtin>(), Err(FiapError::UnknownModel(_))));
        assert!(CfiapSpec::builtin(Builtin::GlExcitatory, 2, &BuiltinParams::gl(1.0, -1.0, 1.0), 1.0, init()).is_err());
        assert!(CfiapSpec::builtin(Builtin::GlExcitatory, 2, &BuiltinParams::gl(1.0, 1.0, -2.0), 1.0, init()).is_err());
        assert!(CfiapSpec::builtin(Builtin::GlExcitatory, 2, &BuiltinParams::gl(-1.0, 1.0, 1.0), 1.0, init()).is_err());
        assert!(CfiapSpec::builtin(Builtin::GordonNewell, 1, &BuiltinParams::default(), 1.0, init()).is_err());
    }

    #[test]
    fn gl_time_constant_gives_affine_relaxation() {
        let mut p = BuiltinParams::gl(1.0, 1.0, 2.0);
        p.tau = Some(NodeValues::Scalar(4.0));
        let s = CfiapSpec::builtin(Builtin::GlExcitatory, 2, &p, 1.0, InitSpec::Single(InitLaw::Constant { value: 1.0 })).unwrap();
        match *s.drift(0) {
            Drift::Affine { intercept, slope } => {
                assert!((intercept - 0.5).abs() < 1e-15);
                assert!((slope + 0.25).abs() < 1e-15);
            }
            ref other => panic!("{other:?}"),
        }
    }

    #[test]
    fn init_laws() {
        let mut rng = RngStream::new(1, 0, StreamId::new(0, 0, Purpose::Init));
        let te = InitLaw::TruncatedExponential { rate: 2.0, cap: 3.0 };
        let n = 200_000;
        let xs: Vec<f64> = (0..n).map(|_| te.sample(&mut rng)).collect();
        assert!(xs.iter().all(|&x| (0.0..=3.0).contains(&x)));
        let m = xs.iter().sum::<f64>() / n as f64;
        let sd = (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n as f64).sqrt();
        assert!((m - te.mean()).abs() < 4.0 * sd / (n as f64).sqrt(), "{m} vs {}", te.mean());
        let mgf = xs.iter().map(|x| (0.5 * x).exp()).sum::<f64>() / n as f64;
        assert!((mgf / te.exp_moment(0.5) - 1.0).abs() < 0.01);
        let u = InitLaw::Uniform { low: 1.0, high: 3.0 };
        assert!((u.exp_moment(1.0) - (3f64.exp() - 1f64.exp()) / 2.0).abs() < 1e-12);
        assert!(InitLaw::Uniform { low: 2.0, high: 1.0 }.check().is_err());
        assert!(te.exp_moment(te.xi0() / 2.0).is_finite());
    }
}
