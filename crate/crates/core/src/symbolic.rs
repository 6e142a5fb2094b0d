//! Sparse polynomial regression (sequentially thresholded least squares) on
//! extracted nullclines.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io;
use crate::nullcline::NullclineCurve;

/// Monomials `1, x, ..., x^max_degree` in one variable.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolyLibrary {
    pub max_degree: usize,
}

impl Default for PolyLibrary {
    fn default() -> Self {
        PolyLibrary { max_degree: 3 }
    }
}

impl PolyLibrary {
    pub fn n_terms(&self) -> usize {
        self.max_degree + 1
    }

    pub fn term_name(&self, k: usize, var: &str) -> String {
        match k {
            0 => "1".into(),
            1 => var.into(),
            _ => format!("{var}^{k}"),
        }
    }

    /// Column-major design matrix.
    pub fn design(&self, x: &[f64]) -> Vec<Vec<f64>> {
        (0..self.n_terms()).map(|k| x.iter().map(|&xi| xi.powi(k as i32)).collect()).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SparseFit {
    pub library: PolyLibrary,
    pub input: String,
    pub output: String,
    /// Coefficients of the raw monomials.
    pub coefficients: Vec<f64>,
    /// Coefficients of the unit-RMS scaled columns; the threshold applies here.
    pub scaled_coefficients: Vec<f64>,
    pub column_scales: Vec<f64>,
    pub lambda: f64,
    pub residual_rms: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Active set after each thresholding pass.
    pub active_history: Vec<Vec<bool>>,
}

impl SparseFit {
    pub fn n_active(&self) -> usize {
        self.coefficients.iter().filter(|c| **c != 0.0).count()
    }

    pub fn equation(&self) -> String {
        render_equation(self)
    }

    pub fn predict(&self, x: f64) -> f64 {
        self.coefficients.iter().rev().fold(0.0, |acc, c| acc * x + c)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        #[derive(Serialize)]
        struct Export<'a> {
            equation: String,
            terms: Vec<String>,
            #[serde(flatten)]
            fit: &'a SparseFit,
        }
        let terms = (0..self.library.n_terms()).map(|k| self.library.term_name(k, &self.input)).collect();
        io::write_json(path, &Export { equation: self.equation(), terms, fit: self })
    }
}

/// Least squares on the given columns by Householder QR. Returns the
/// coefficients, or the index (into `cols`) of the first column that is
/// numerically dependent on the earlier ones.
fn qr_lstsq(cols: &[Vec<f64>], y: &[f64]) -> std::result::Result<Vec<f64>, usize> {
    let m = y.len();
    let n = cols.len();
    let mut a: Vec<Vec<f64>> = cols.to_vec();
    let mut b = y.to_vec();
    let norm_max = cols.iter().map(|c| c.iter().map(|x| x * x).sum::<f64>().sqrt()).fold(0.0, f64::max);
    let tol = 1e-10 * norm_max.max(f64::MIN_POSITIVE);
    let mut r_diag = vec![0.0; n];
    for j in 0..n {
        if j >= m {
            return Err(j);
        }
        let alpha = a[j][j..].iter().map(|x| x * x).sum::<f64>().sqrt();
        if alpha <= tol {
            return Err(j);
        }
        let alpha = if a[j][j] > 0.0 { -alpha } else { alpha };
        let mut v: Vec<f64> = a[j][j..].to_vec();
        v[0] -= alpha;
        let vnorm2: f64 = v.iter().map(|x| x * x).sum();
        r_diag[j] = alpha;
        for col in a.iter_mut().skip(j) {
            let dot: f64 = v.iter().zip(&col[j..]).map(|(p, q)| p * q).sum();
            let s = 2.0 * dot / vnorm2;
            for (ci, vi) in col[j..].iter_mut().zip(&v) {
                *ci -= s * vi;
            }
        }
        let dot: f64 = v.iter().zip(&b[j..]).map(|(p, q)| p * q).sum();
        let s = 2.0 * dot / vnorm2;
        for (bi, vi) in b[j..].iter_mut().zip(&v) {
            *bi -= s * vi;
        }
    }
    let mut x = vec![0.0; n];
    for j in (0..n).rev() {
        let mut s = b[j];
        for k in j + 1..n {
            s -= a[k][j] * x[k];
        }
        x[j] = s / r_diag[j];
    }
    Ok(x)
}

/// STLSQ of `y` on the monomials of `x`.
///
/// Columns are scaled to unit RMS, the active set is solved by least
/// squares, scaled coefficients with magnitude below `lambda` are pruned, and
/// the loop repeats until the active set is stable or `max_iter` passes ran.
/// On exit every nonzero scaled coefficient has magnitude at least `lambda`.
pub fn stlsq(x: &[f64], y: &[f64], library: PolyLibrary, lambda: f64, max_iter: usize) -> Result<SparseFit> {
    stlsq_named(x, y, library, lambda, max_iter, "x", "y")
}

fn stlsq_named(
    x: &[f64],
    y: &[f64],
    library: PolyLibrary,
    lambda: f64,
    max_iter: usize,
    input: &str,
    output: &str,
) -> Result<SparseFit> {
    if x.len() != y.len() {
        return Err(Error::Precondition(format!("x has {} samples, y has {}", x.len(), y.len())));
    }
    if x.len() <= library.n_terms() {
        return Err(Error::Precondition(format!(
            "{} samples cannot determine {} terms; need more samples than terms",
            x.len(),
            library.n_terms()
        )));
    }
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidParam { name: "lambda".into(), reason: format!("must be finite and >= 0, got {lambda}") });
    }
    if max_iter == 0 {
        return Err(Error::InvalidParam { name: "max_iter".into(), reason: "must be at least 1".into() });
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::Precondition("samples contain non-finite values".into()));
    }
    let n = library.n_terms();
    let raw = library.design(x);
    let scales: Vec<f64> = raw
        .iter()
        .map(|c| (c.iter().map(|v| v * v).sum::<f64>() / c.len() as f64).sqrt())
        .collect();
    let names: Vec<String> = (0..n).map(|k| library.term_name(k, input)).collect();
    let scaled: Vec<Vec<f64>> = raw
        .iter()
        .zip(&scales)
        .map(|(c, &s)| if s > 0.0 { c.iter().map(|v| v / s).collect() } else { c.clone() })
        .collect();

    let mut active = vec![true; n];
    let mut xi = vec![0.0; n];
    let mut history = Vec::new();
    let mut iterations = 0;
    let mut converged = false;
    while iterations < max_iter {
        iterations += 1;
        let idx: Vec<usize> = (0..n).filter(|&k| active[k]).collect();
        xi = vec![0.0; n];
        if !idx.is_empty() {
            let cols: Vec<Vec<f64>> = idx.iter().map(|&k| scaled[k].clone()).collect();
            let sol = qr_lstsq(&cols, y).map_err(|j| Error::RankDeficient {
                term: names[idx[j]].clone(),
                others: idx[..j].iter().map(|&k| names[k].clone()).collect(),
            })?;
            for (&k, v) in idx.iter().zip(sol) {
                xi[k] = v;
            }
        }
        let next: Vec<bool> = (0..n).map(|k| active[k] && xi[k].abs() >= lambda).collect();
        history.push(next.clone());
        if next == active {
            converged = true;
            break;
        }
        active = next;
    }
    if !converged {
        // Out of passes: enforce the threshold without a further refit.
        for k in 0..n {
            if xi[k].abs() < lambda {
                xi[k] = 0.0;
            }
        }
    }
    let coefficients: Vec<f64> =
        xi.iter().zip(&scales).map(|(&c, &s)| if s > 0.0 && c != 0.0 { c / s } else { c }).collect();
    let residual_rms = {
        let ss: f64 = x
            .iter()
            .zip(y)
            .map(|(&xv, &yv)| {
                let p = coefficients.iter().rev().fold(0.0, |acc, c| acc * xv + c);
                (yv - p).powi(2)
            })
            .sum();
        (ss / x.len() as f64).sqrt()
    };
    Ok(SparseFit {
        library,
        input: input.into(),
        output: output.into(),
        coefficients,
        scaled_coefficients: xi,
        column_scales: scales,
        lambda,
        residual_rms,
        iterations,
        converged,
        active_history: history,
    })
}

/// STLSQ of the curve's output variable on its sweep variable, in whatever
/// coordinates the curve carries (see [`NullclineCurve::normalized`]).
pub fn fit_curve(curve: &NullclineCurve, library: PolyLibrary, lambda: f64, max_iter: usize) -> Result<SparseFit> {
    curve.validate()?;
    let input = curve.sweep_var.name();
    let output = curve.output_var().name();
    stlsq_named(&curve.sweep, &curve.predicted, library, lambda, max_iter, input, output)
}

/// Six significant digits, trailing zeros dropped.
fn fmt_sig(x: f64) -> String {
    let rounded: f64 = format!("{x:.5e}").parse().unwrap_or(x);
    format!("{rounded}")
}

/// `output = c0 + c1*x + ...` with zero terms omitted and unit coefficients
/// implicit; an all-zero fit renders as `output = 0`.
pub fn render_equation(fit: &SparseFit) -> String {
    let mut out = format!("{} = ", fit.output);
    let mut first = true;
    for (k, &c) in fit.coefficients.iter().enumerate() {
        if c == 0.0 {
            continue;
        }
        let mag = fmt_sig(c.abs());
        let term = fit.library.term_name(k, &fit.input);
        let body = match (k, mag.as_str()) {
            (0, _) => mag,
            (_, "1") => term,
            _ => format!("{mag}*{term}"),
        };
        match (first, c < 0.0) {
            (true, false) => out.push_str(&body),
            (true, true) => {
                let _ = write!(out, "-{body}");
            }
            (false, false) => {
                let _ = write!(out, " + {body}");
            }
            (false, true) => {
                let _ = write!(out, " - {body}");
            }
        }
        first = false;
    }
    if first {
        out.push('0');
    }
    out
}
