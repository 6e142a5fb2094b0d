//! Model registry: the four oscillators, their analytic nullclines and an
//! oscillation check for their default parameter sets.
//!
//! Defaults live in `config/<model>.kv` and are compiled in. Every key in a
//! model file may be overridden by name through [`make_model`].

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::integrator::{self, DdeSystem, OdeSystem, Trajectory};
use crate::kv;
use crate::nullcline::NullclineCurve;

const FHN_DEFAULTS: &str = include_str!("../config/fhn.kv");
const BICUBIC_DEFAULTS: &str = include_str!("../config/bicubic.kv");
const GENE_EXPR_DEFAULTS: &str = include_str!("../config/gene_expr.kv");
const DDE_DEFAULTS: &str = include_str!("../config/dde.kv");

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Fhn,
    Bicubic,
    GeneExpr,
    Dde,
}

impl ModelKind {
    pub const ALL: [ModelKind; 4] = [ModelKind::Fhn, ModelKind::Bicubic, ModelKind::GeneExpr, ModelKind::Dde];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Fhn => "fhn",
            ModelKind::Bicubic => "bicubic",
            ModelKind::GeneExpr => "gene_expr",
            ModelKind::Dde => "dde",
        }
    }

    pub fn default_config(self) -> &'static str {
        match self {
            ModelKind::Fhn => FHN_DEFAULTS,
            ModelKind::Bicubic => BICUBIC_DEFAULTS,
            ModelKind::GeneExpr => GENE_EXPR_DEFAULTS,
            ModelKind::Dde => DDE_DEFAULTS,
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fhn" => Ok(ModelKind::Fhn),
            "bicubic" => Ok(ModelKind::Bicubic),
            "gene_expr" => Ok(ModelKind::GeneExpr),
            "dde" => Ok(ModelKind::Dde),
            other => Err(Error::UnknownModel(other.to_string())),
        }
    }
}

/// State variable of the two-dimensional phase plane.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Var {
    U,
    V,
}

impl Var {
    pub fn index(self) -> usize {
        match self {
            Var::U => 0,
            Var::V => 1,
        }
    }

    pub fn other(self) -> Var {
        match self {
            Var::U => Var::V,
            Var::V => Var::U,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Var::U => "u",
            Var::V => "v",
        }
    }
}

impl fmt::Display for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Which equation a nullcline belongs to: `F` is `u_t = f(u, v)`, `G` is
/// `v_t = g(u, v)`. For the delay model `G` is the diagonal `u = v`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Equation {
    F,
    G,
}

impl Equation {
    pub fn index(self) -> usize {
        match self {
            Equation::F => 0,
            Equation::G => 1,
        }
    }

    pub fn from_index(i: usize) -> Result<Self> {
        match i {
            0 => Ok(Equation::F),
            1 => Ok(Equation::G),
            _ => Err(Error::Precondition(format!("equation index {i} is not 0 or 1"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub const SYMMETRIC: Interval = Interval { lo: -1.0, hi: 1.0 };
    pub const UNIT: Interval = Interval { lo: 0.0, hi: 1.0 };

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.lo && x <= self.hi
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FhnParams {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
    pub eps: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BicubicParams {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
    pub e: f64,
    pub f: f64,
    pub g: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GeneExprParams {
    pub k1: f64,
    pub s: f64,
    pub kd: f64,
    pub n: i32,
    pub kdu: f64,
    pub ksv: f64,
    pub kdv: f64,
    pub k2: f64,
    pub et: f64,
    pub km: f64,
    pub ki: f64,
}

impl GeneExprParams {
    fn hill_repression(&self, v: f64) -> f64 {
        let kdn = self.kd.powi(self.n);
        kdn / (kdn + v.powi(self.n))
    }

    fn enzymatic_degradation(&self, v: f64) -> f64 {
        self.k2 * self.et * v / (self.km + v + self.ki * v * v)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DdeParams {
    pub beta: f64,
    pub n: i32,
    /// Delay used to build the embedding `v(t) = u(t - tau)`.
    pub tau: f64,
    /// Delay of the simulated system.
    pub tau_gt: f64,
    /// Constant history `u(t) = history` for `t <= 0`.
    pub history: f64,
}

impl DdeParams {
    fn synthesis(&self, v: f64) -> f64 {
        self.beta / (1.0 + v.powi(self.n))
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Params {
    Fhn(FhnParams),
    Bicubic(BicubicParams),
    GeneExpr(GeneExprParams),
    Dde(DdeParams),
}

/// Simulation defaults carried by every model.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimDefaults {
    pub ic: [f64; 2],
    pub dt: f64,
    pub total_time: f64,
    pub transient_fraction: f64,
}

/// A registered dynamical system. Immutable once built.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelSpec {
    pub params: Params,
    pub norm_range: [Interval; 2],
    pub sim: SimDefaults,
}

/// Builds a model from its compiled-in defaults merged with `overrides`.
pub fn make_model(name: &str, overrides: &BTreeMap<String, f64>) -> Result<ModelSpec> {
    let kind: ModelKind = name.parse()?;
    let mut values = kv::parse_reals(kind.default_config())?;
    for (key, &value) in overrides {
        if !value.is_finite() {
            return Err(Error::InvalidParam { name: key.clone(), reason: format!("{value} is not finite") });
        }
        if !values.contains_key(key) {
            return Err(Error::InvalidParam {
                name: key.clone(),
                reason: format!("not a parameter of model `{kind}`"),
            });
        }
        values.insert(key.clone(), value);
    }
    ModelSpec::from_values(kind, &values)
}

/// Convenience wrapper for the default parameter set.
pub fn default_model(kind: ModelKind) -> ModelSpec {
    make_model(kind.name(), &BTreeMap::new()).expect("compiled-in defaults are valid")
}

fn get(values: &BTreeMap<String, f64>, key: &str) -> Result<f64> {
    values
        .get(key)
        .copied()
        .ok_or_else(|| Error::Config(format!("missing key `{key}`")))
}

fn positive(values: &BTreeMap<String, f64>, key: &str) -> Result<f64> {
    let x = get(values, key)?;
    if x > 0.0 {
        Ok(x)
    } else {
        Err(Error::InvalidParam { name: key.to_string(), reason: format!("must be > 0, got {x}") })
    }
}

fn non_negative(values: &BTreeMap<String, f64>, key: &str) -> Result<f64> {
    let x = get(values, key)?;
    if x >= 0.0 {
        Ok(x)
    } else {
        Err(Error::InvalidParam { name: key.to_string(), reason: format!("must be >= 0, got {x}") })
    }
}

fn hill_exponent(values: &BTreeMap<String, f64>, key: &str) -> Result<i32> {
    let x = get(values, key)?;
    if x >= 1.0 && x.fract() == 0.0 && x <= 64.0 {
        Ok(x as i32)
    } else {
        Err(Error::InvalidParam { name: key.to_string(), reason: format!("must be an integer >= 1, got {x}") })
    }
}

impl ModelSpec {
    fn from_values(kind: ModelKind, values: &BTreeMap<String, f64>) -> Result<Self> {
        let (params, norm_range) = match kind {
            ModelKind::Fhn => {
                // eps = 0 is accepted: it freezes v, which the oscillation check reports.
                let p = FhnParams {
                    a: get(values, "a")?,
                    b: get(values, "b")?,
                    c: get(values, "c")?,
                    d: get(values, "d")?,
                    eps: non_negative(values, "eps")?,
                };
                (Params::Fhn(p), [Interval::SYMMETRIC; 2])
            }
            ModelKind::Bicubic => {
                let p = BicubicParams {
                    a: get(values, "a")?,
                    b: get(values, "b")?,
                    c: get(values, "c")?,
                    d: get(values, "d")?,
                    e: get(values, "e")?,
                    f: get(values, "f")?,
                    g: get(values, "g")?,
                };
                if p.c == 0.0 || p.g == 0.0 {
                    return Err(Error::InvalidParam {
                        name: if p.c == 0.0 { "c" } else { "g" }.into(),
                        reason: "coupling must be nonzero for the nullclines to be explicit".into(),
                    });
                }
                (Params::Bicubic(p), [Interval::SYMMETRIC; 2])
            }
            ModelKind::GeneExpr => {
                let p = GeneExprParams {
                    k1: positive(values, "k1")?,
                    s: positive(values, "S")?,
                    kd: positive(values, "Kd")?,
                    n: hill_exponent(values, "n")?,
                    kdu: positive(values, "kdu")?,
                    ksv: positive(values, "ksv")?,
                    kdv: positive(values, "kdv")?,
                    k2: positive(values, "k2")?,
                    et: positive(values, "ET")?,
                    km: positive(values, "Km")?,
                    ki: positive(values, "KI")?,
                };
                (Params::GeneExpr(p), [Interval::UNIT; 2])
            }
            ModelKind::Dde => {
                let p = DdeParams {
                    beta: positive(values, "beta")?,
                    n: hill_exponent(values, "n")?,
                    tau: positive(values, "tau")?,
                    tau_gt: positive(values, "tau_gt")?,
                    history: non_negative(values, "history")?,
                };
                (Params::Dde(p), [Interval::UNIT; 2])
            }
        };
        let ic = match kind {
            ModelKind::Dde => {
                let h = get(values, "history")?;
                [h, h]
            }
            _ => [get(values, "ic_u")?, get(values, "ic_v")?],
        };
        let transient_fraction = get(values, "transient_fraction")?;
        if !(0.0..1.0).contains(&transient_fraction) {
            return Err(Error::InvalidParam {
                name: "transient_fraction".into(),
                reason: format!("must lie in [0, 1), got {transient_fraction}"),
            });
        }
        let sim = SimDefaults {
            ic,
            dt: positive(values, "dt")?,
            total_time: positive(values, "total_time")?,
            transient_fraction,
        };
        Ok(ModelSpec { params, norm_range, sim })
    }

    pub fn kind(&self) -> ModelKind {
        match self.params {
            Params::Fhn(_) => ModelKind::Fhn,
            Params::Bicubic(_) => ModelKind::Bicubic,
            Params::GeneExpr(_) => ModelKind::GeneExpr,
            Params::Dde(_) => ModelKind::Dde,
        }
    }

    pub fn name(&self) -> &'static str {
        self.kind().name()
    }

    /// Number of dynamical variables: 2 for the ODEs, 1 (plus delay) for the DDE.
    pub fn dim(&self) -> usize {
        if self.is_delay() {
            1
        } else {
            2
        }
    }

    pub fn is_delay(&self) -> bool {
        matches!(self.params, Params::Dde(_))
    }

    /// All parameters, including simulation defaults, as a flat map.
    pub fn param_map(&self) -> BTreeMap<String, f64> {
        let mut m = BTreeMap::new();
        let mut put = |k: &str, v: f64| {
            m.insert(k.to_string(), v);
        };
        match self.params {
            Params::Fhn(p) => {
                put("a", p.a);
                put("b", p.b);
                put("c", p.c);
                put("d", p.d);
                put("eps", p.eps);
            }
            Params::Bicubic(p) => {
                put("a", p.a);
                put("b", p.b);
                put("c", p.c);
                put("d", p.d);
                put("e", p.e);
                put("f", p.f);
                put("g", p.g);
            }
            Params::GeneExpr(p) => {
                put("k1", p.k1);
                put("S", p.s);
                put("Kd", p.kd);
                put("n", p.n as f64);
                put("kdu", p.kdu);
                put("ksv", p.ksv);
                put("kdv", p.kdv);
                put("k2", p.k2);
                put("ET", p.et);
                put("Km", p.km);
                put("KI", p.ki);
            }
            Params::Dde(p) => {
                put("beta", p.beta);
                put("n", p.n as f64);
                put("tau", p.tau);
                put("tau_gt", p.tau_gt);
                put("history", p.history);
            }
        }
        if !self.is_delay() {
            put("ic_u", self.sim.ic[0]);
            put("ic_v", self.sim.ic[1]);
        }
        put("dt", self.sim.dt);
        put("total_time", self.sim.total_time);
        put("transient_fraction", self.sim.transient_fraction);
        m
    }

    /// Right-hand side of the ODE models. `None` for the delay model, whose
    /// second embedding coordinate has no instantaneous vector field.
    pub fn vector_field(&self, u: f64, v: f64) -> Option<[f64; 2]> {
        match self.params {
            Params::Fhn(p) => Some([-u * u * u + p.c * u * u + p.d * u - v, p.eps * (u - p.b * v + p.a)]),
            Params::Bicubic(p) => Some([
                -u * u * u + p.a * u * u + p.b * u + p.c * v,
                p.d * v * v * v + p.e * v * v + p.f * v + p.g * u,
            ]),
            Params::GeneExpr(p) => Some([
                p.k1 * p.s * p.hill_repression(v) - p.kdu * u,
                p.ksv * u - p.kdv * v - p.enzymatic_degradation(v),
            ]),
            Params::Dde(_) => None,
        }
    }

    /// `u_t` of the delay model given the current value and `u(t - tau_gt)`.
    pub fn delayed_rate(&self, u: f64, u_delayed: f64) -> Option<f64> {
        match self.params {
            Params::Dde(p) => Some(p.synthesis(u_delayed) - u),
            _ => None,
        }
    }

    /// Residual whose zero set is the nullcline of `eq`. For the ODE models
    /// this is the corresponding RHS component (without the `eps` factor on
    /// FHN's `g`); for the delay model `F` uses `v` as the delayed value and
    /// `G` is the diagonal `u - v`.
    pub fn nullcline_residual(&self, eq: Equation, u: f64, v: f64) -> f64 {
        match (self.params, eq) {
            (Params::Fhn(p), Equation::G) => u - p.b * v + p.a,
            (Params::Dde(p), Equation::F) => p.synthesis(v) - u,
            (Params::Dde(_), Equation::G) => u - v,
            _ => self.vector_field(u, v).expect("ODE model")[eq.index()],
        }
    }

    /// The variable an explicit ground-truth nullcline is parametrized by.
    pub fn gt_sweep_var(&self, eq: Equation) -> Var {
        match (self.kind(), eq) {
            (ModelKind::Fhn, Equation::F) | (ModelKind::Bicubic, Equation::F) => Var::U,
            _ => Var::V,
        }
    }

    fn gt_domain_check(&self, eq: Equation, x: f64) -> Result<()> {
        let needs_non_negative = matches!(self.kind(), ModelKind::GeneExpr)
            || (self.kind() == ModelKind::Dde && eq == Equation::F);
        if !x.is_finite() || (needs_non_negative && x < 0.0) {
            return Err(Error::Domain(format!(
                "{} nullcline of `{}` is defined for {} >= 0, got {x}",
                if eq == Equation::F { "f" } else { "g" },
                self.name(),
                self.gt_sweep_var(eq)
            )));
        }
        Ok(())
    }

    /// Explicit ground-truth nullcline value at sweep coordinate `x`.
    pub fn gt_value(&self, eq: Equation, x: f64) -> Result<f64> {
        self.gt_domain_check(eq, x)?;
        let y = match (self.params, eq) {
            (Params::Fhn(p), Equation::F) => -x * x * x + p.c * x * x + p.d * x,
            (Params::Fhn(p), Equation::G) => p.b * x - p.a,
            (Params::Bicubic(p), Equation::F) => (x * x * x - p.a * x * x - p.b * x) / p.c,
            (Params::Bicubic(p), Equation::G) => -(p.d * x * x * x + p.e * x * x + p.f * x) / p.g,
            (Params::GeneExpr(p), Equation::F) => p.k1 * p.s * p.hill_repression(x) / p.kdu,
            (Params::GeneExpr(p), Equation::G) => (p.kdv * x + p.enzymatic_degradation(x)) / p.ksv,
            (Params::Dde(p), Equation::F) => p.synthesis(x),
            (Params::Dde(_), Equation::G) => x,
        };
        Ok(y)
    }

    pub fn dde_params(&self) -> Option<DdeParams> {
        match self.params {
            Params::Dde(p) => Some(p),
            _ => None,
        }
    }

    /// Step size actually used for simulation; the delay model is capped at a
    /// tenth of its smallest delay.
    pub fn effective_dt(&self) -> f64 {
        match self.params {
            Params::Dde(p) => self.sim.dt.min(p.tau.min(p.tau_gt) / 10.0),
            _ => self.sim.dt,
        }
    }

    pub fn default_steps(&self) -> usize {
        (self.sim.total_time / self.effective_dt()).round() as usize
    }
}

/// Ground-truth nullcline of equation `which` sampled on `grid` (values of
/// the model's explicit sweep variable, see [`ModelSpec::gt_sweep_var`]).
pub fn gt_nullcline(model: &ModelSpec, which: Equation, grid: &[f64]) -> Result<NullclineCurve> {
    let predicted = grid.iter().map(|&x| model.gt_value(which, x)).collect::<Result<Vec<_>>>()?;
    Ok(NullclineCurve {
        sweep_var: model.gt_sweep_var(which),
        sweep: grid.to_vec(),
        predicted,
        combination: None,
        norm: None,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OscillationReport {
    pub amplitude: f64,
    pub period: f64,
    pub n_peaks: usize,
    pub ok: bool,
    pub diagnostic: String,
}

/// Interpolated times of upper-half local maxima.
pub(crate) fn peak_times(t: &[f64], x: &[f64]) -> Vec<f64> {
    if x.len() < 3 {
        return Vec::new();
    }
    let (lo, hi) = min_max(x);
    let mid = 0.5 * (lo + hi);
    let dt = t[1] - t[0];
    let mut peaks = Vec::new();
    for i in 1..x.len() - 1 {
        let (a, b, c) = (x[i - 1], x[i], x[i + 1]);
        if b > a && b >= c && b > mid {
            let denom = a - 2.0 * b + c;
            let offset = if denom != 0.0 { 0.5 * (a - c) / denom } else { 0.0 };
            peaks.push(t[i] + offset * dt);
        }
    }
    peaks
}

pub(crate) fn min_max(x: &[f64]) -> (f64, f64) {
    x.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
}

/// Oscillation test on an already simulated trajectory.
pub fn oscillation_report(full: &Trajectory, transient_fraction: f64) -> OscillationReport {
    let u_full: Vec<f64> = full.column(0);
    let (full_lo, full_hi) = min_max(&u_full);
    let cut = (transient_fraction * full.len() as f64).ceil() as usize;
    let t = &full.t[cut.min(full.len())..];
    let u = &u_full[cut.min(full.len())..];
    let (lo, hi) = min_max(u);
    let amplitude = if u.is_empty() { 0.0 } else { hi - lo };
    let peaks = peak_times(t, u);
    let intervals: Vec<f64> = peaks.windows(2).map(|w| w[1] - w[0]).collect();
    let period = if intervals.is_empty() { f64::NAN } else { intervals.iter().sum::<f64>() / intervals.len() as f64 };
    if peaks.len() < 4 {
        return OscillationReport {
            amplitude,
            period,
            n_peaks: peaks.len(),
            ok: false,
            diagnostic: format!("only {} maxima after the transient (need 4)", peaks.len()),
        };
    }
    let last3 = &intervals[intervals.len() - 3..];
    let (imin, imax) = min_max(last3);
    let mean3 = last3.iter().sum::<f64>() / 3.0;
    let regular = (imax - imin) <= 0.01 * mean3;
    let large = amplitude > 0.1 * (full_hi - full_lo);
    let diagnostic = match (large, regular) {
        (true, true) => "sustained oscillation".to_string(),
        (false, _) => format!("amplitude {amplitude:.3e} below 10% of full range {:.3e}", full_hi - full_lo),
        (true, false) => format!("last inter-peak intervals {last3:?} disagree by more than 1%"),
    };
    OscillationReport { amplitude, period, n_peaks: peaks.len(), ok: large && regular, diagnostic }
}

/// Simulates `model` with its defaults and checks for a sustained limit cycle.
pub fn validate_oscillation(model: &ModelSpec) -> Result<OscillationReport> {
    let traj = integrator::simulate(model)?;
    Ok(oscillation_report(&traj, model.sim.transient_fraction))
}

impl OdeSystem for ModelSpec {
    fn dim(&self) -> usize {
        2
    }

    fn eval(&self, _t: f64, y: &[f64], dy: &mut [f64]) {
        let f = self.vector_field(y[0], y[1]).expect("integrate_ode requires an ODE model");
        dy.copy_from_slice(&f);
    }
}

impl DdeSystem for ModelSpec {
    fn delay(&self) -> f64 {
        self.dde_params().expect("integrate_dde requires the delay model").tau_gt
    }

    fn eval(&self, _t: f64, u: f64, u_delayed: f64) -> f64 {
        self.delayed_rate(u, u_delayed).expect("integrate_dde requires the delay model")
    }
}
