//! Supervised pairs for the inverse-function formulation.
//!
//! Each equation `u_t = f(u, v)` can be read as `u = f_u^-1(v, u_t)` or
//! `v = f_v^-1(u, u_t)` (and likewise for `g` with `v_t`). A
//! [`Combination`] picks one of the four readings; [`build_pairs`] turns a
//! normalized trajectory into `(state, derivative) -> target` rows.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::integrator::Trajectory;
use crate::io;
use crate::systems::{self, Equation, Interval, Var};

/// Affine map of one variable onto its target interval.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ColumnNorm {
    pub min: f64,
    pub max: f64,
    pub target: Interval,
}

impl ColumnNorm {
    pub fn new(min: f64, max: f64, target: Interval) -> Result<Self> {
        if !(max > min) {
            return Err(Error::DegenerateColumn(format!("[{min}, {max}]")));
        }
        Ok(ColumnNorm { min, max, target })
    }

    /// Multiplier from physical to normalized units (applies to derivatives).
    pub fn scale(&self) -> f64 {
        self.target.width() / (self.max - self.min)
    }

    pub fn forward(&self, x: f64) -> f64 {
        self.target.lo + (x - self.min) * self.scale()
    }

    pub fn inverse(&self, y: f64) -> f64 {
        self.min + (y - self.target.lo) * (self.max - self.min) / self.target.width()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormParams {
    pub columns: Vec<ColumnNorm>,
}

impl NormParams {
    pub fn var(&self, v: Var) -> &ColumnNorm {
        &self.columns[v.index()]
    }

    pub fn forward(&self, v: Var, x: f64) -> f64 {
        self.var(v).forward(x)
    }

    pub fn inverse(&self, v: Var, y: f64) -> f64 {
        self.var(v).inverse(y)
    }

    /// Normalization that leaves every column unchanged.
    pub fn identity(n: usize) -> Self {
        NormParams { columns: vec![ColumnNorm { min: 0.0, max: 1.0, target: Interval::UNIT }; n] }
    }
}

/// Min-max normalizes every column of `traj` onto `targets[j]`. Exact
/// derivatives, when present, are scaled by the same factor.
pub fn normalize(traj: &Trajectory, targets: &[Interval]) -> Result<(Trajectory, NormParams)> {
    if targets.len() != traj.dim() {
        return Err(Error::Precondition(format!(
            "{} target intervals for {} columns",
            targets.len(),
            traj.dim()
        )));
    }
    let names = ["u", "v"];
    let mut columns = Vec::with_capacity(traj.dim());
    for (j, target) in targets.iter().enumerate() {
        let (min, max) = systems::min_max(&traj.column(j));
        let col = ColumnNorm::new(min, max, *target)
            .map_err(|_| Error::DegenerateColumn(names.get(j).unwrap_or(&"?").to_string()))?;
        columns.push(col);
    }
    let mut out = traj.clone();
    for (j, col) in columns.iter().enumerate() {
        out.states.column_mut(j).mapv_inplace(|x| col.forward(x));
        if let Some(d) = out.derivs.as_mut() {
            let s = col.scale();
            d.column_mut(j).mapv_inplace(|x| x * s);
        }
    }
    Ok((out, NormParams { columns }))
}

/// Inverts [`normalize`].
pub fn denormalize(traj: &Trajectory, norm: &NormParams) -> Trajectory {
    let mut out = traj.clone();
    for (j, col) in norm.columns.iter().enumerate() {
        out.states.column_mut(j).mapv_inplace(|y| col.inverse(y));
        if let Some(d) = out.derivs.as_mut() {
            let s = col.scale();
            d.column_mut(j).mapv_inplace(|x| x / s);
        }
    }
    out
}

/// Second-order finite differences: central in the interior, one-sided
/// three-point stencils at both ends.
pub fn estimate_derivative(x: &[f64], dt: f64) -> Result<Vec<f64>> {
    let n = x.len();
    if n < 3 {
        return Err(Error::Precondition(format!("need at least 3 samples to differentiate, got {n}")));
    }
    let h2 = 2.0 * dt;
    let mut d = Vec::with_capacity(n);
    d.push((-3.0 * x[0] + 4.0 * x[1] - x[2]) / h2);
    d.extend(x.windows(3).map(|w| (w[2] - w[0]) / h2));
    d.push((3.0 * x[n - 1] - 4.0 * x[n - 2] + x[n - 3]) / h2);
    Ok(d)
}

/// One of the four inverse-function readings of the two equations.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Combination {
    /// `(v, u_t) -> u`
    #[serde(rename = "f_u")]
    FU,
    /// `(u, u_t) -> v`
    #[serde(rename = "f_v")]
    FV,
    /// `(v, v_t) -> u`
    #[serde(rename = "g_u")]
    GU,
    /// `(u, v_t) -> v`
    #[serde(rename = "g_v")]
    GV,
}

impl Combination {
    pub const ALL: [Combination; 4] = [Combination::FU, Combination::FV, Combination::GU, Combination::GV];

    pub fn name(self) -> &'static str {
        match self {
            Combination::FU => "f_u",
            Combination::FV => "f_v",
            Combination::GU => "g_u",
            Combination::GV => "g_v",
        }
    }

    pub fn equation(self) -> Equation {
        match self {
            Combination::FU | Combination::FV => Equation::F,
            Combination::GU | Combination::GV => Equation::G,
        }
    }

    pub fn target(self) -> Var {
        match self {
            Combination::FU | Combination::GU => Var::U,
            Combination::FV | Combination::GV => Var::V,
        }
    }

    /// The state variable fed to the network (and swept during extraction).
    pub fn state_input(self) -> Var {
        self.target().other()
    }

    /// The variable whose time derivative is the second input.
    pub fn derivative_of(self) -> Var {
        match self.equation() {
            Equation::F => Var::U,
            Equation::G => Var::V,
        }
    }

    pub fn input_labels(self) -> (String, String) {
        (self.state_input().name().to_string(), format!("{}_t", self.derivative_of()))
    }
}

impl fmt::Display for Combination {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Combination {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "f_u" => Ok(Combination::FU),
            "f_v" => Ok(Combination::FV),
            "g_u" => Ok(Combination::GU),
            "g_v" => Ok(Combination::GV),
            other => Err(Error::UnknownCombination(other.to_string())),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DerivMode {
    /// Finite differences on the normalized samples.
    #[default]
    FiniteDiff,
    /// Integrator-recorded right-hand side, rescaled; ablation only.
    ExactRhs,
}

impl FromStr for DerivMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "finite_diff" => Ok(DerivMode::FiniteDiff),
            "exact_rhs" => Ok(DerivMode::ExactRhs),
            other => Err(Error::Config(format!("unknown derivative mode `{other}`"))),
        }
    }
}

/// Derivatives of both normalized columns.
pub fn derivatives(traj_norm: &Trajectory, mode: DerivMode) -> Result<[Vec<f64>; 2]> {
    match mode {
        DerivMode::FiniteDiff => Ok([
            estimate_derivative(&traj_norm.column(0), traj_norm.dt)?,
            estimate_derivative(&traj_norm.column(1), traj_norm.dt)?,
        ]),
        DerivMode::ExactRhs => {
            let d = traj_norm.derivs.as_ref().ok_or_else(|| {
                Error::Precondition("exact_rhs needs a trajectory that carries integrator derivatives".into())
            })?;
            Ok([d.column(0).to_vec(), d.column(1).to_vec()])
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairOptions {
    pub deriv_mode: DerivMode,
    /// Fraction of rows used for training.
    pub split: f64,
    pub seed: u64,
    /// Decimate equidistantly to at most this many rows (after derivatives
    /// are taken at full resolution). `None` keeps every sample.
    pub max_pairs: Option<usize>,
    /// Constant factor on the derivative input column. Zero maps to zero, so
    /// the nullcline query is unchanged; small factors keep the fitted
    /// function close to linear across the thin band the cycle occupies in
    /// the derivative direction.
    pub deriv_scale: f64,
}

pub const DEFAULT_DERIV_SCALE: f64 = 0.03;

impl Default for PairOptions {
    fn default() -> Self {
        PairOptions {
            deriv_mode: DerivMode::FiniteDiff,
            split: 0.8,
            seed: 0,
            max_pairs: Some(5000),
            deriv_scale: DEFAULT_DERIV_SCALE,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SupervisedSet {
    pub combination: Combination,
    /// `[n x 2]`: state input, derivative input.
    pub inputs: Array2<f64>,
    pub targets: Vec<f64>,
    pub norm: NormParams,
    pub split: f64,
    pub split_seed: u64,
    pub deriv_scale: f64,
    pub train_idx: Vec<usize>,
    pub val_idx: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SupervisedMeta {
    pub combination: Combination,
    pub norm: NormParams,
    pub seed: u64,
    pub split: f64,
    pub deriv_scale: f64,
    pub n_train: usize,
    pub n_val: usize,
}

impl SupervisedSet {
    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    /// Copies the rows in `idx` into a fresh input matrix and target vector.
    pub fn gather(&self, idx: &[usize]) -> (Array2<f64>, Vec<f64>) {
        let mut x = Array2::zeros((idx.len(), 2));
        let mut y = Vec::with_capacity(idx.len());
        for (r, &i) in idx.iter().enumerate() {
            x[[r, 0]] = self.inputs[[i, 0]];
            x[[r, 1]] = self.inputs[[i, 1]];
            y.push(self.targets[i]);
        }
        (x, y)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("in1,in2,target\n");
        for i in 0..self.len() {
            out.push_str(&format!(
                "{},{},{}\n",
                io::fmt_f64(self.inputs[[i, 0]]),
                io::fmt_f64(self.inputs[[i, 1]]),
                io::fmt_f64(self.targets[i])
            ));
        }
        out
    }

    pub fn meta(&self) -> SupervisedMeta {
        SupervisedMeta {
            combination: self.combination,
            norm: self.norm.clone(),
            seed: self.split_seed,
            split: self.split,
            deriv_scale: self.deriv_scale,
            n_train: self.train_idx.len(),
            n_val: self.val_idx.len(),
        }
    }

    pub fn write(&self, dir: &Path, stem: &str) -> Result<[PathBuf; 2]> {
        let csv = dir.join(format!("{stem}.csv"));
        let json = dir.join(format!("{stem}.json"));
        io::write_text(&csv, &self.to_csv())?;
        io::write_json(&json, &self.meta())?;
        Ok([csv, json])
    }
}

/// Seeded shuffle split of `0..n` into train and validation index sets.
pub fn split_indices(n: usize, split: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_train = ((split * n as f64).round() as usize).min(n);
    let val = idx.split_off(n_train);
    (idx, val)
}

/// Assembles the supervised set for `combination` from a normalized trajectory.
pub fn build_pairs(
    traj_norm: &Trajectory,
    norm: &NormParams,
    combination: Combination,
    opts: &PairOptions,
) -> Result<SupervisedSet> {
    if !(opts.split > 0.0 && opts.split < 1.0) {
        return Err(Error::Precondition(format!("split must lie in (0, 1), got {}", opts.split)));
    }
    if !(opts.deriv_scale > 0.0 && opts.deriv_scale.is_finite()) {
        return Err(Error::Precondition(format!("deriv_scale must be positive, got {}", opts.deriv_scale)));
    }
    if traj_norm.dim() != 2 {
        return Err(Error::Precondition(format!("expected two state columns, got {}", traj_norm.dim())));
    }
    let derivs = derivatives(traj_norm, opts.deriv_mode)?;
    let n_full = traj_norm.len();
    let stride = match opts.max_pairs {
        Some(m) if m > 0 && n_full > m => n_full.div_ceil(m),
        _ => 1,
    };
    let rows: Vec<usize> = (0..n_full).step_by(stride).collect();
    let state = traj_norm.states.column(combination.state_input().index());
    let target = traj_norm.states.column(combination.target().index());
    let deriv = &derivs[combination.derivative_of().index()];
    let mut inputs = Array2::zeros((rows.len(), 2));
    let mut targets = Vec::with_capacity(rows.len());
    for (r, &i) in rows.iter().enumerate() {
        inputs[[r, 0]] = state[i];
        inputs[[r, 1]] = opts.deriv_scale * deriv[i];
        targets.push(target[i]);
    }
    let (train_idx, val_idx) = split_indices(rows.len(), opts.split, opts.seed);
    Ok(SupervisedSet {
        combination,
        inputs,
        targets,
        norm: norm.clone(),
        split: opts.split,
        split_seed: opts.seed,
        deriv_scale: opts.deriv_scale,
        train_idx,
        val_idx,
    })
}

fn orient(ax: f64, ay: f64, bx: f64, by: f64, cx: f64, cy: f64) -> f64 {
    (bx - ax) * (cy - ay) - (by - ay) * (cx - ax)
}

/// Sign of an orientation test, with values within `1e-12` of the product of
/// the two arm lengths treated as collinear.
fn orient_sign(ax: f64, ay: f64, bx: f64, by: f64, cx: f64, cy: f64) -> i8 {
    let o = orient(ax, ay, bx, by, cx, cy);
    let scale = ((bx - ax).hypot(by - ay)) * ((cx - ax).hypot(cy - ay));
    if o.abs() <= 1e-12 * scale {
        0
    } else if o > 0.0 {
        1
    } else {
        -1
    }
}

/// Number of transversal crossings between non-adjacent segments of the
/// closed polyline through `(x[i], y[i])`. Touching and collinear overlaps do
/// not count.
pub fn self_intersection_count(x: &[f64], y: &[f64]) -> Result<usize> {
    if x.len() != y.len() {
        return Err(Error::Precondition(format!("x has {} points, y has {}", x.len(), y.len())));
    }
    let n = x.len();
    if n < 4 {
        return Err(Error::Precondition(format!("need at least 4 points, got {n}")));
    }
    // Segment i joins point i to point (i + 1) mod n.
    let seg = |i: usize| (x[i], y[i], x[(i + 1) % n], y[(i + 1) % n]);
    let bbox: Vec<[f64; 4]> = (0..n)
        .map(|i| {
            let (ax, ay, bx, by) = seg(i);
            [ax.min(bx), ax.max(bx), ay.min(by), ay.max(by)]
        })
        .collect();
    let mut count = 0;
    for i in 0..n {
        let (ax, ay, bx, by) = seg(i);
        if ax == bx && ay == by {
            continue;
        }
        for j in i + 2..n {
            if i == 0 && j == n - 1 {
                continue;
            }
            let (bi, bj) = (&bbox[i], &bbox[j]);
            if bi[1] < bj[0] || bj[1] < bi[0] || bi[3] < bj[2] || bj[3] < bi[2] {
                continue;
            }
            let (cx, cy, dx, dy) = seg(j);
            let o1 = orient_sign(ax, ay, bx, by, cx, cy);
            let o2 = orient_sign(ax, ay, bx, by, dx, dy);
            if o1 * o2 >= 0 {
                continue;
            }
            let o3 = orient_sign(cx, cy, dx, dy, ax, ay);
            let o4 = orient_sign(cx, cy, dx, dy, bx, by);
            if o3 * o4 < 0 {
                count += 1;
            }
        }
    }
    Ok(count)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Separability {
    Clean,
    Ambiguous,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CombinationDiagnosis {
    pub combination: Combination,
    pub crossings: usize,
    pub label: Separability,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagnosisReport {
    pub period: f64,
    pub window_samples: usize,
    pub combinations: Vec<CombinationDiagnosis>,
}

impl DiagnosisReport {
    pub fn get(&self, c: Combination) -> &CombinationDiagnosis {
        self.combinations.iter().find(|d| d.combination == c).expect("all four combinations are diagnosed")
    }
}

/// Upper bound on points per input-plane curve; longer periods are decimated.
const DIAGNOSIS_MAX_POINTS: usize = 4000;

/// Labels each combination by whether its input-plane curve (state input
/// against derivative input) self-intersects over one period.
pub fn diagnose_combinations(traj_norm: &Trajectory, derivs: &[Vec<f64>; 2]) -> Result<DiagnosisReport> {
    let u = traj_norm.column(0);
    let peaks = systems::peak_times(&traj_norm.t, &u);
    if peaks.len() < 2 {
        return Err(Error::NoPeriod(format!("found {} maxima, need at least 2", peaks.len())));
    }
    let intervals: Vec<f64> = peaks.windows(2).map(|w| w[1] - w[0]).collect();
    let period = intervals.iter().sum::<f64>() / intervals.len() as f64;
    // Last complete period, between the final two maxima.
    let t0 = traj_norm.t[0];
    let dt = traj_norm.dt;
    let start = ((peaks[peaks.len() - 2] - t0) / dt).round() as usize;
    let period_samples = (period / dt).round() as usize;
    let end = (start + period_samples).min(traj_norm.len());
    if end - start < 4 {
        return Err(Error::NoPeriod(format!("period of {period_samples} samples is too short")));
    }
    let stride = (end - start).div_ceil(DIAGNOSIS_MAX_POINTS).max(1);
    let window: Vec<usize> = (start..end).step_by(stride).collect();
    let mut combinations = Vec::with_capacity(4);
    for c in Combination::ALL {
        let state = traj_norm.states.column(c.state_input().index());
        let deriv = &derivs[c.derivative_of().index()];
        let xs: Vec<f64> = window.iter().map(|&i| state[i]).collect();
        let ys: Vec<f64> = window.iter().map(|&i| deriv[i]).collect();
        let crossings = self_intersection_count(&xs, &ys)?;
        let label = if crossings > 0 { Separability::Ambiguous } else { Separability::Clean };
        combinations.push(CombinationDiagnosis { combination: c, crossings, label });
    }
    Ok(DiagnosisReport { period, window_samples: window.len(), combinations })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::integrator::{integrate_ode, FnOde};
    use proptest::prelude::*;

    fn circle(n: usize) -> (Vec<f64>, Vec<f64>) {
        let t: Vec<f64> = (0..n).map(|i| i as f64 * std::f64::consts::TAU / n as f64).collect();
        (t.iter().map(|s| s.cos()).collect(), t.iter().map(|s| s.sin()).collect())
    }

    /// Brute force over all segment pairs using exact sign tests only, for
    /// curves without collinear samples.
    fn naive_crossings(x: &[f64], y: &[f64]) -> usize {
        let n = x.len();
        let mut count = 0;
        for i in 0..n {
            for j in 0..n {
                if j <= i + 1 || (i == 0 && j == n - 1) {
                    continue;
                }
                let (a, b) = ((x[i], y[i]), (x[(i + 1) % n], y[(i + 1) % n]));
                let (c, d) = ((x[j], y[j]), (x[(j + 1) % n], y[(j + 1) % n]));
                let s = |p: (f64, f64), q: (f64, f64), r: (f64, f64)| {
                    ((q.0 - p.0) * (r.1 - p.1) - (q.1 - p.1) * (r.0 - p.0)).signum()
                };
                if s(a, b, c) * s(a, b, d) < 0.0 && s(c, d, a) * s(c, d, b) < 0.0 {
                    count += 1;
                }
            }
        }
        count
    }

    #[test]
    fn normalization_endpoints() {
        let col = ColumnNorm::new(-2.0, 2.0, Interval::SYMMETRIC).unwrap();
        assert_eq!(col.forward(0.0), 0.0);
        assert_eq!(col.forward(2.0), 1.0);
        assert_eq!(col.forward(-2.0), -1.0);
        assert!(ColumnNorm::new(3.0, 3.0, Interval::UNIT).is_err());
    }

    #[test]
    fn constant_column_is_degenerate() {
        let sys = FnOde::new(2, |_t, _y: &[f64], dy: &mut [f64]| {
            dy[0] = 1.0;
            dy[1] = 0.0;
        });
        let traj = integrate_ode(&sys, &[0.0, 5.0], 0.1, 10).unwrap();
        assert!(matches!(normalize(&traj, &[Interval::UNIT; 2]), Err(Error::DegenerateColumn(c)) if c == "v"));
    }

    proptest! {
        #[test]
        fn normalization_round_trip(
            xs in prop::collection::vec(-1e3f64..1e3, 2..50),
            symmetric in any::<bool>(),
        ) {
            let (min, max) = systems::min_max(&xs);
            prop_assume!(max - min > 1e-6 * max.abs().max(min.abs()).max(1.0));
            let target = if symmetric { Interval::SYMMETRIC } else { Interval::UNIT };
            let col = ColumnNorm::new(min, max, target).unwrap();
            for &x in &xs {
                let y = col.forward(x);
                prop_assert!(y >= target.lo - 1e-12 && y <= target.hi + 1e-12);
                let back = col.inverse(y);
                prop_assert!((back - x).abs() <= 1e-12 * (max.abs().max(min.abs())).max(1.0));
            }
        }

        #[test]
        fn crossing_count_is_affine_invariant(
            a in 0.2f64..5.0, d in 0.2f64..5.0, shear in -2.0f64..2.0,
            bx in -10.0f64..10.0, by in -10.0f64..10.0, flip in any::<bool>(),
        ) {
            let n = 300;
            let t: Vec<f64> = (0..n).map(|i| i as f64 * std::f64::consts::TAU / n as f64 + 0.01).collect();
            let x: Vec<f64> = t.iter().map(|s| (2.0 * s).sin() + 0.3 * s.cos()).collect();
            let y: Vec<f64> = t.iter().map(|s| s.sin()).collect();
            let base = self_intersection_count(&x, &y).unwrap();
            let sx = if flip { -a } else { a };
            let xt: Vec<f64> = x.iter().zip(&y).map(|(p, q)| sx * p + shear * q + bx).collect();
            let yt: Vec<f64> = y.iter().map(|q| d * q + by).collect();
            prop_assert_eq!(self_intersection_count(&xt, &yt).unwrap(), base);
        }
    }

    #[test]
    fn derivative_examples() {
        let dt = 0.1;
        let x: Vec<f64> = (0..21).map(|i| (i as f64 * dt).powi(2)).collect();
        let d = estimate_derivative(&x, dt).unwrap();
        assert!((d[10] - 2.0).abs() < 1e-12);
        // One-sided stencils are exact for quadratics too.
        assert!(d[0].abs() < 1e-12);
        assert!((d[20] - 4.0).abs() < 1e-12);

        assert!(estimate_derivative(&[3.0; 10], 0.5).unwrap().iter().all(|&v| v == 0.0));

        let dt = 0.01;
        let s: Vec<f64> = (0..100).map(|i| (i as f64 * dt).sin()).collect();
        assert!((estimate_derivative(&s, dt).unwrap()[0] - 1.0).abs() < 1e-4);
        let interior = estimate_derivative(&s, dt).unwrap();
        for (i, v) in interior.iter().enumerate() {
            assert!((v - (i as f64 * dt).cos()).abs() < 1e-4);
        }

        assert!(estimate_derivative(&[1.0, 2.0], 0.1).is_err());
    }

    #[test]
    fn finite_differences_are_second_order_on_fhn() {
        let model = systems::default_model(systems::ModelKind::Fhn);
        let max_err = |dt: f64| {
            let steps = (60.0 / dt).round() as usize;
            let traj = integrate_ode(&model, &[1.0, 0.0], dt, steps).unwrap();
            let (norm_traj, _) = normalize(&traj, &model.norm_range).unwrap();
            let fd = derivatives(&norm_traj, DerivMode::FiniteDiff).unwrap();
            let exact = derivatives(&norm_traj, DerivMode::ExactRhs).unwrap();
            fd[0][1..steps].iter().zip(&exact[0][1..steps]).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
        };
        let ratio = max_err(0.02) / max_err(0.01);
        assert!((ratio - 4.0).abs() < 0.4, "error ratio {ratio}");
    }

    #[test]
    fn combination_table() {
        assert_eq!(Combination::FV.state_input(), Var::U);
        assert_eq!(Combination::FV.derivative_of(), Var::U);
        assert_eq!(Combination::FV.target(), Var::V);
        assert_eq!(Combination::FU.input_labels(), ("v".to_string(), "u_t".to_string()));
        assert_eq!(Combination::GU.input_labels(), ("v".to_string(), "v_t".to_string()));
        assert_eq!(Combination::GV.input_labels(), ("u".to_string(), "v_t".to_string()));
        assert_eq!("g_v".parse::<Combination>().unwrap(), Combination::GV);
        assert!(matches!("h_u".parse::<Combination>(), Err(Error::UnknownCombination(_))));
    }

    fn fhn_norm() -> (Trajectory, NormParams) {
        let model = systems::default_model(systems::ModelKind::Fhn);
        let traj = crate::integrator::simulate_post_transient(&model).unwrap();
        normalize(&traj, &model.norm_range).unwrap()
    }

    #[test]
    fn pairs_follow_the_combination() {
        let (traj, norm) = fhn_norm();
        let opts = PairOptions { max_pairs: None, ..PairOptions::default() };
        let set = build_pairs(&traj, &norm, Combination::FV, &opts).unwrap();
        let du = estimate_derivative(&traj.column(0), traj.dt).unwrap();
        for i in [0, 17, set.len() - 1] {
            assert_eq!(set.inputs[[i, 0]], traj.states[[i, 0]]);
            assert_eq!(set.inputs[[i, 1]], opts.deriv_scale * du[i]);
            assert_eq!(set.targets[i], traj.states[[i, 1]]);
        }
        assert_eq!(set.train_idx.len() + set.val_idx.len(), set.len());
    }

    #[test]
    fn split_sizes_and_determinism() {
        let (train, val) = split_indices(1000, 0.8, 7);
        assert_eq!((train.len(), val.len()), (800, 200));
        let mut all: Vec<usize> = train.iter().chain(&val).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..1000).collect::<Vec<_>>());
        assert_eq!(split_indices(1000, 0.8, 7), (train, val));
        assert_ne!(split_indices(1000, 0.8, 8).0, split_indices(1000, 0.8, 7).0);
    }

    #[test]
    fn decimation_caps_rows() {
        let (traj, norm) = fhn_norm();
        let opts = PairOptions { max_pairs: Some(1000), ..PairOptions::default() };
        let set = build_pairs(&traj, &norm, Combination::GU, &opts).unwrap();
        assert!(set.len() <= 1000 && set.len() > 900);
        assert!(build_pairs(&traj, &norm, Combination::GU, &PairOptions { split: 1.0, ..opts }).is_err());
    }

    #[test]
    fn crossing_examples() {
        let (x, y) = circle(200);
        assert_eq!(self_intersection_count(&x, &y).unwrap(), 0);

        let n = 400;
        let t: Vec<f64> = (0..n).map(|i| i as f64 * std::f64::consts::TAU / n as f64 + 1e-3).collect();
        let x: Vec<f64> = t.iter().map(|s| (2.0 * s).sin()).collect();
        let y: Vec<f64> = t.iter().map(|s| s.sin()).collect();
        let count = self_intersection_count(&x, &y).unwrap();
        assert!(count >= 1);
        assert_eq!(count, naive_crossings(&x, &y));

        assert!(self_intersection_count(&[0.0, 1.0, 2.0], &[0.0, 1.0, 0.0]).is_err());
        assert!(self_intersection_count(&[0.0; 5], &[0.0; 4]).is_err());
    }

    #[test]
    fn collinear_back_and_forth_is_not_a_crossing() {
        // A degenerate "loop" tracing a segment out and back.
        let x = [0.0, 1.0, 2.0, 3.0, 2.0, 1.0];
        let y = [0.0; 6];
        assert_eq!(self_intersection_count(&x, &y).unwrap(), 0);
    }

    #[test]
    fn fhn_diagnosis_matches_expectations() {
        let (traj, _) = fhn_norm();
        let derivs = derivatives(&traj, DerivMode::FiniteDiff).unwrap();
        let report = diagnose_combinations(&traj, &derivs).unwrap();
        assert_eq!(report.get(Combination::FU).label, Separability::Ambiguous);
        assert_eq!(report.get(Combination::FV).label, Separability::Clean);
        assert_eq!(report.get(Combination::GU).label, Separability::Clean);
    }
}
