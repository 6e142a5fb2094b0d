//! Fixed-step integration producing equidistant trajectories.
//!
//! ODEs use classical RK4. The scalar delay equation uses the method of
//! steps: RK4 stages read delayed values from a [`HistoryBuffer`] through
//! cubic Hermite interpolation on stored `(t, u, u_t)` nodes, which keeps the
//! scheme fourth order.

use std::collections::{BTreeMap, VecDeque};
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io;
use crate::systems::ModelSpec;

/// Autonomous or non-autonomous ODE `y' = F(t, y)`.
pub trait OdeSystem {
    fn dim(&self) -> usize;
    fn eval(&self, t: f64, y: &[f64], dy: &mut [f64]);
}

/// Scalar delay equation `u' = F(t, u(t), u(t - delay))`.
pub trait DdeSystem {
    fn delay(&self) -> f64;
    fn eval(&self, t: f64, u: f64, u_delayed: f64) -> f64;
}

/// Adapts a closure into an [`OdeSystem`].
pub struct FnOde<F> {
    dim: usize,
    f: F,
}

impl<F: Fn(f64, &[f64], &mut [f64])> FnOde<F> {
    pub fn new(dim: usize, f: F) -> Self {
        FnOde { dim, f }
    }
}

impl<F: Fn(f64, &[f64], &mut [f64])> OdeSystem for FnOde<F> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval(&self, t: f64, y: &[f64], dy: &mut [f64]) {
        (self.f)(t, y, dy)
    }
}

/// Adapts a closure into a [`DdeSystem`].
pub struct FnDde<F> {
    delay: f64,
    f: F,
}

impl<F: Fn(f64, f64, f64) -> f64> FnDde<F> {
    pub fn new(delay: f64, f: F) -> Self {
        FnDde { delay, f }
    }
}

impl<F: Fn(f64, f64, f64) -> f64> DdeSystem for FnDde<F> {
    fn delay(&self) -> f64 {
        self.delay
    }

    fn eval(&self, t: f64, u: f64, u_delayed: f64) -> f64 {
        (self.f)(t, u, u_delayed)
    }
}

/// Equidistant samples of all state variables.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub t: Vec<f64>,
    /// `[n_samples x dim]`; the delay model stores `(u(t), u(t - tau))`.
    pub states: Array2<f64>,
    /// Exact right-hand side at each sample, when the integrator knows it.
    pub derivs: Option<Array2<f64>>,
    pub dt: f64,
    pub model_name: String,
    pub params: BTreeMap<String, f64>,
    pub seed: u64,
    pub transient_cut: usize,
}

/// Sidecar metadata written next to a trajectory CSV.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryMeta {
    pub model: String,
    pub params: BTreeMap<String, f64>,
    pub dt: f64,
    pub seed: u64,
    pub transient_cut: usize,
    pub n_samples: usize,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.states.ncols()
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.states.column(j).to_vec()
    }

    pub fn deriv_column(&self, j: usize) -> Option<Vec<f64>> {
        self.derivs.as_ref().map(|d| d.column(j).to_vec())
    }

    pub fn meta(&self) -> TrajectoryMeta {
        TrajectoryMeta {
            model: self.model_name.clone(),
            params: self.params.clone(),
            dt: self.dt,
            seed: self.seed,
            transient_cut: self.transient_cut,
            n_samples: self.len(),
        }
    }

    pub fn to_csv(&self) -> String {
        let names = ["u", "v", "w", "x"];
        let mut out = String::from("t");
        for name in names.iter().take(self.dim()) {
            out.push(',');
            out.push_str(name);
        }
        out.push('\n');
        for (i, t) in self.t.iter().enumerate() {
            out.push_str(&io::fmt_f64(*t));
            for j in 0..self.dim() {
                out.push(',');
                out.push_str(&io::fmt_f64(self.states[[i, j]]));
            }
            out.push('\n');
        }
        out
    }

    /// Writes `<stem>.csv` and `<stem>.json`; returns both paths.
    pub fn write(&self, dir: &Path, stem: &str) -> Result<[std::path::PathBuf; 2]> {
        let csv = dir.join(format!("{stem}.csv"));
        let json = dir.join(format!("{stem}.json"));
        io::write_text(&csv, &self.to_csv())?;
        io::write_json(&json, &self.meta())?;
        Ok([csv, json])
    }

    /// Reads a trajectory written by [`Trajectory::write`].
    pub fn read(csv: &Path, meta: &Path) -> Result<Trajectory> {
        let (header, rows) = io::read_numeric_csv(csv)?;
        if header.first().map(String::as_str) != Some("t") || header.len() < 2 {
            return Err(Error::Config(format!("{}: expected header `t,u,...`", csv.display())));
        }
        let meta: TrajectoryMeta = io::read_json(meta)?;
        let dim = header.len() - 1;
        let mut states = Array2::zeros((rows.len(), dim));
        let mut t = Vec::with_capacity(rows.len());
        for (i, row) in rows.iter().enumerate() {
            t.push(row[0]);
            for j in 0..dim {
                states[[i, j]] = row[j + 1];
            }
        }
        Ok(Trajectory {
            t,
            states,
            derivs: None,
            dt: meta.dt,
            model_name: meta.model,
            params: meta.params,
            seed: meta.seed,
            transient_cut: meta.transient_cut,
        })
    }
}

fn check_step(dt: f64) -> Result<()> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::Precondition(format!("dt must be positive and finite, got {dt}")));
    }
    Ok(())
}

/// Classical RK4 with `n_steps` fixed steps; returns `n_steps + 1` samples.
pub fn integrate_ode<S: OdeSystem + ?Sized>(sys: &S, ic: &[f64], dt: f64, n_steps: usize) -> Result<Trajectory> {
    check_step(dt)?;
    let dim = sys.dim();
    if ic.len() != dim {
        return Err(Error::Precondition(format!("initial condition has {} entries, system has {dim}", ic.len())));
    }
    if ic.iter().any(|x| !x.is_finite()) {
        return Err(Error::Precondition("initial condition is not finite".into()));
    }
    let mut states = Array2::zeros((n_steps + 1, dim));
    let mut derivs = Array2::zeros((n_steps + 1, dim));
    let mut y = ic.to_vec();
    let (mut k1, mut k2, mut k3, mut k4) = (vec![0.0; dim], vec![0.0; dim], vec![0.0; dim], vec![0.0; dim]);
    let mut tmp = vec![0.0; dim];
    for step in 0..=n_steps {
        let t = step as f64 * dt;
        sys.eval(t, &y, &mut k1);
        for j in 0..dim {
            states[[step, j]] = y[j];
            derivs[[step, j]] = k1[j];
        }
        if step == n_steps {
            break;
        }
        for j in 0..dim {
            tmp[j] = y[j] + 0.5 * dt * k1[j];
        }
        sys.eval(t + 0.5 * dt, &tmp, &mut k2);
        for j in 0..dim {
            tmp[j] = y[j] + 0.5 * dt * k2[j];
        }
        sys.eval(t + 0.5 * dt, &tmp, &mut k3);
        for j in 0..dim {
            tmp[j] = y[j] + dt * k3[j];
        }
        sys.eval(t + dt, &tmp, &mut k4);
        for j in 0..dim {
            y[j] += dt / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
        }
        if y.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite { step: step + 1 });
        }
    }
    Ok(Trajectory {
        t: (0..=n_steps).map(|i| i as f64 * dt).collect(),
        states,
        derivs: Some(derivs),
        dt,
        model_name: String::new(),
        params: BTreeMap::new(),
        seed: 0,
        transient_cut: 0,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
struct Node {
    t: f64,
    u: f64,
    du: f64,
}

/// Solution nodes covering the most recent `window` time units, preceded by a
/// constant history for `t <= 0`.
#[derive(Clone, Debug)]
pub struct HistoryBuffer {
    nodes: VecDeque<Node>,
    history: f64,
    window: f64,
}

impl HistoryBuffer {
    pub fn new(history: f64, window: f64) -> Self {
        HistoryBuffer { nodes: VecDeque::new(), history, window }
    }

    pub fn push(&mut self, t: f64, u: f64, du: f64) {
        self.nodes.push_back(Node { t, u, du });
        // Keep one node older than the window so its left edge stays bracketed.
        while self.nodes.len() > 2 && self.nodes[1].t < t - self.window {
            self.nodes.pop_front();
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Value and derivative at time `t`.
    pub fn query(&self, t: f64) -> Result<(f64, f64)> {
        if t <= 0.0 {
            return Ok((self.history, 0.0));
        }
        let first = self.nodes.front().ok_or(Error::HistoryQuery { t, start: f64::NAN })?;
        let last = self.nodes.back().expect("non-empty");
        if t < first.t {
            return Err(Error::HistoryQuery { t, start: first.t });
        }
        if t >= last.t {
            if t == last.t {
                return Ok((last.u, last.du));
            }
            return Err(Error::Precondition(format!("history query at t = {t} is ahead of the solution ({})", last.t)));
        }
        let k = self.nodes.partition_point(|n| n.t <= t) - 1;
        let (a, b) = (self.nodes[k], self.nodes[k + 1]);
        Ok(hermite(a, b, t))
    }
}

fn hermite(a: Node, b: Node, t: f64) -> (f64, f64) {
    let h = b.t - a.t;
    let s = (t - a.t) / h;
    let s2 = s * s;
    let s3 = s2 * s;
    let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
    let h10 = s3 - 2.0 * s2 + s;
    let h01 = -2.0 * s3 + 3.0 * s2;
    let h11 = s3 - s2;
    let u = h00 * a.u + h10 * h * a.du + h01 * b.u + h11 * h * b.du;
    let d00 = (6.0 * s2 - 6.0 * s) / h;
    let d10 = 3.0 * s2 - 4.0 * s + 1.0;
    let d01 = (-6.0 * s2 + 6.0 * s) / h;
    let d11 = 3.0 * s2 - 2.0 * s;
    let du = d00 * a.u + d10 * a.du + d01 * b.u + d11 * b.du;
    (u, du)
}

/// Method-of-steps RK4 for a scalar DDE with constant history.
///
/// The output has two columns, `u(t)` and the embedding `u(t - embed_delay)`,
/// both on the same grid. `embed_delay` may differ from the system delay.
pub fn integrate_dde<S: DdeSystem + ?Sized>(
    sys: &S,
    history: f64,
    dt: f64,
    n_steps: usize,
    embed_delay: f64,
) -> Result<Trajectory> {
    check_step(dt)?;
    let delay = sys.delay();
    for (name, tau) in [("system delay", delay), ("embedding delay", embed_delay)] {
        if !(tau > 0.0 && tau.is_finite()) {
            return Err(Error::Precondition(format!("{name} must be positive, got {tau}")));
        }
        if dt > tau / 10.0 {
            return Err(Error::Precondition(format!("dt = {dt} exceeds {name} / 10 = {}", tau / 10.0)));
        }
    }
    if !history.is_finite() {
        return Err(Error::Precondition("history is not finite".into()));
    }
    let mut buf = HistoryBuffer::new(history, delay.max(embed_delay) + 2.0 * dt);
    let mut states = Array2::zeros((n_steps + 1, 2));
    let mut derivs = Array2::zeros((n_steps + 1, 2));
    let mut u = history;
    for step in 0..=n_steps {
        let t = step as f64 * dt;
        let lag = |s: f64| buf.query(s - delay).map(|(x, _)| x);
        let k1 = sys.eval(t, u, lag(t)?);
        buf.push(t, u, k1);
        let (v, dv) = buf.query(t - embed_delay)?;
        states[[step, 0]] = u;
        states[[step, 1]] = v;
        derivs[[step, 0]] = k1;
        derivs[[step, 1]] = dv;
        if step == n_steps {
            break;
        }
        let lag = |s: f64| buf.query(s - delay).map(|(x, _)| x);
        let mid = lag(t + 0.5 * dt)?;
        let k2 = sys.eval(t + 0.5 * dt, u + 0.5 * dt * k1, mid);
        let k3 = sys.eval(t + 0.5 * dt, u + 0.5 * dt * k2, mid);
        let k4 = sys.eval(t + dt, u + dt * k3, lag(t + dt)?);
        u += dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        if !u.is_finite() {
            return Err(Error::NonFinite { step: step + 1 });
        }
    }
    Ok(Trajectory {
        t: (0..=n_steps).map(|i| i as f64 * dt).collect(),
        states,
        derivs: Some(derivs),
        dt,
        model_name: String::new(),
        params: BTreeMap::new(),
        seed: 0,
        transient_cut: 0,
    })
}

/// Drops the first `ceil(fraction * n)` samples.
pub fn slice_post_transient(traj: &Trajectory, fraction: f64) -> Result<Trajectory> {
    if !(0.0..1.0).contains(&fraction) {
        return Err(Error::Precondition(format!("transient fraction must lie in [0, 1), got {fraction}")));
    }
    let n = traj.len();
    let cut = (fraction * n as f64).ceil() as usize;
    let remaining = n.saturating_sub(cut);
    if remaining < 100 {
        return Err(Error::Precondition(format!(
            "only {remaining} samples remain after dropping {cut} of {n}; at least 100 are needed to train"
        )));
    }
    let rows = ndarray::s![cut.., ..];
    Ok(Trajectory {
        t: traj.t[cut..].to_vec(),
        states: traj.states.slice(rows).to_owned(),
        derivs: traj.derivs.as_ref().map(|d| d.slice(rows).to_owned()),
        dt: traj.dt,
        model_name: traj.model_name.clone(),
        params: traj.params.clone(),
        seed: traj.seed,
        transient_cut: traj.transient_cut + cut,
    })
}

/// Full-length simulation of `model` with its defaults (transient included).
pub fn simulate(model: &ModelSpec) -> Result<Trajectory> {
    simulate_for(model, model.default_steps())
}

pub fn simulate_for(model: &ModelSpec, n_steps: usize) -> Result<Trajectory> {
    let dt = model.effective_dt();
    let mut traj = match model.dde_params() {
        Some(p) => integrate_dde(model, p.history, dt, n_steps, p.tau)?,
        None => integrate_ode(model, &model.sim.ic, dt, n_steps)?,
    };
    traj.model_name = model.name().to_string();
    traj.params = model.param_map();
    Ok(traj)
}

/// Simulation with the model's transient fraction already removed.
pub fn simulate_post_transient(model: &ModelSpec) -> Result<Trajectory> {
    slice_post_transient(&simulate(model)?, model.sim.transient_fraction)
}
