//! Log likelihood and maximum likelihood fits.
//!
//! The null fit fixes `x = 0` and runs the multiplicative EM update for
//! Poisson mixtures, with occasional likelihood-increasing Newton steps. The full fit maximizes over `(x, b)` with a projected
//! Newton method on the bound-constrained problem.

use std::cell::Cell;

use nalgebra::{Cholesky, DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::function::factorial::ln_factorial;

use crate::error::{Error, Result};
use crate::inference::{fisher_from_terms, hessian_from_terms, Terms};
use crate::model::{ModelParams, ShieldingModel, Spectrum};

thread_local! {
    static FULL_FITS: Cell<u64> = const { Cell::new(0) };
}

/// Number of [`fit_full`] calls made on the current thread.
pub fn full_fit_calls() -> u64 {
    FULL_FITS.with(Cell::get)
}

/// `-tau sum U_i + sum Y_i log(tau U_i) - sum log(Y_i!)` from unit-time means.
///
/// Returns `-inf` when some channel has counts but zero mean.
pub fn log_likelihood_from_rate(u: &[f64], tau: f64, y: &[u64]) -> f64 {
    let mut l = 0.0;
    for (&ui, &yi) in u.iter().zip(y) {
        l -= tau * ui;
        if yi > 0 {
            if !(ui > 0.0) {
                return f64::NEG_INFINITY;
            }
            l += yi as f64 * (tau * ui).ln() - ln_factorial(yi);
        }
    }
    l
}

/// Poisson log likelihood of `spectrum` at `params`, including the
/// `-sum log(Y_i!)` constant.
pub fn log_likelihood(model: &ShieldingModel, params: &ModelParams, spectrum: &Spectrum) -> Result<f64> {
    model.check_spectrum(spectrum)?;
    let u = model.mean_rate(params)?;
    Ok(log_likelihood_from_rate(&u, params.tau, spectrum.counts()))
}

/// Kernel of the log likelihood (drops terms free of the parameters).
fn kernel(u: &[f64], tau: f64, y: &[u64]) -> f64 {
    u.iter()
        .zip(y)
        .map(|(&ui, &yi)| {
            if yi > 0 {
                yi as f64 * ui.ln() - tau * ui
            } else {
                -tau * ui
            }
        })
        .sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub params: ModelParams,
    pub log_likelihood: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Last value of the stopping criterion.
    pub criterion_value: f64,
    /// Optimality residual at the returned point: the largest EM step for
    /// a null fit, the largest projected-gradient magnitude for a full fit.
    pub kkt_residual: f64,
    /// Log likelihood after each iteration, when requested.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EmOptions {
    /// Stop when `sum |b_new - b_old| / sum |b_old|` falls below this.
    pub tol: f64,
    pub max_iter: usize,
    /// Starting intensities; defaults to `sum Y / (J tau sum_i S_ik.)`.
    pub b_init: Option<Vec<f64>>,
    pub record_trace: bool,
}

impl Default for EmOptions {
    fn default() -> Self {
        Self {
            tol: 1e-9,
            max_iter: 100_000,
            b_init: None,
            record_trace: false,
        }
    }
}

/// Moment start `b_k = sum Y / (J tau sum_i S_ik.)`.
pub fn default_b_init(model: &ShieldingModel, spectrum: &Spectrum, tau: f64) -> Vec<f64> {
    let total = (spectrum.total() as f64).max(1.0);
    let j = model.n_nuclides() as f64;
    (0..model.n_nuclides())
        .map(|k| total / (j * tau * model.aggregated(k).iter().sum::<f64>()))
        .collect()
}

/// Constrained MLE of the intensities with every thickness fixed at zero.
///
/// Hitting `max_iter` is not an error: the result has `converged = false`.
pub fn fit_null_em(
    model: &ShieldingModel,
    spectrum: &Spectrum,
    tau: f64,
    options: &EmOptions,
) -> Result<FitResult> {
    model.check_spectrum(spectrum)?;
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::usage(format!("tau must be positive, got {tau}")));
    }
    let j_n = model.n_nuclides();
    let col_sums: Vec<f64> = (0..j_n).map(|k| model.aggregated(k).iter().sum()).collect();
    if let Some(k) = col_sums.iter().position(|s| !(*s > 0.0)) {
        return Err(Error::usage(format!(
            "nuclide '{}' has an all-zero response",
            model.library().nuclides()[k].name
        )));
    }
    let mut b = match &options.b_init {
        Some(b0) => {
            if b0.len() != j_n || b0.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
                return Err(Error::usage(format!(
                    "initial intensities must be {j_n} positive values"
                )));
            }
            b0.clone()
        }
        None => default_b_init(model, spectrum, tau),
    };
    let y = spectrum.counts();
    let n = model.n_channels();
    let positive: Vec<usize> = (0..n).filter(|&i| y[i] > 0).collect();
    let mut u = vec![0.0; n];
    let rate = |b: &[f64], u: &mut [f64]| {
        u.iter_mut().for_each(|v| *v = 0.0);
        for (k, bk) in b.iter().enumerate() {
            if *bk == 0.0 {
                continue;
            }
            for (ui, a) in u.iter_mut().zip(model.aggregated(k)) {
                *ui += bk * a;
            }
        }
    };
    rate(&b, &mut u);
    if let Some(&i) = positive.iter().find(|&&i| !(u[i] > 0.0)) {
        return Err(Error::Evaluation(format!("initial mean is zero in channel {i} which has counts")));
    }

    let check_monotone = cfg!(debug_assertions);
    let mut trace = options.record_trace.then(Vec::new);
    let mut last_kernel = if check_monotone { kernel(&u, tau, y) } else { 0.0 };
    let mut ratio = vec![0.0; n];
    let mut iterations = 0;
    let mut criterion_value = f64::INFINITY;
    let mut converged = false;
    while iterations < options.max_iter {
        if iterations > 0 && iterations % NEWTON_EVERY == 0 {
            if let Some((nb, nu)) = newton_null_step(model, &b, &u, tau, y) {
                b = nb;
                u = nu;
                if check_monotone {
                    last_kernel = kernel(&u, tau, y);
                }
            }
        }
        for &i in &positive {
            ratio[i] = y[i] as f64 / u[i];
        }
        let mut change = 0.0;
        let mut size = 0.0;
        for k in 0..j_n {
            let a = model.aggregated(k);
            let num: f64 = positive.iter().map(|&i| ratio[i] * a[i]).sum();
            let new = b[k] * num / (tau * col_sums[k]);
            change += (new - b[k]).abs();
            size += b[k].abs();
            b[k] = new;
        }
        iterations += 1;
        criterion_value = if size > 0.0 { change / size } else { 0.0 };
        rate(&b, &mut u);
        if check_monotone || trace.is_some() {
            let kern = kernel(&u, tau, y);
            if check_monotone {
                debug_assert!(
                    kern >= last_kernel - 1e-10 * (1.0 + last_kernel.abs()),
                    "EM decreased the log likelihood at iteration {iterations}: {last_kernel} -> {kern}"
                );
                last_kernel = kern;
            }
            if let Some(t) = trace.as_mut() {
                t.push(log_likelihood_from_rate(&u, tau, y));
            }
        }
        if criterion_value < options.tol {
            converged = true;
            break;
        }
    }
    if !converged {
        log::debug!("EM stopped after {iterations} iterations at criterion {criterion_value:.3e}");
    }
    let params = ModelParams::new(vec![0.0; model.n_materials()], b, tau)?;
    let log_likelihood = log_likelihood_from_rate(&u, tau, y);
    let kkt_residual = kkt_null(model, &params, &u, y);
    Ok(FitResult {
        params,
        log_likelihood,
        iterations,
        converged,
        criterion_value,
        kkt_residual,
        trace,
    })
}

/// EM iterations between attempted Newton steps.
const NEWTON_EVERY: usize = 20;

/// Projected Newton step on the intensities with a backtracking search,
/// returned only if it raises the likelihood. EM alone converges slowly
/// when an intensity tends to zero.
fn newton_null_step(
    model: &ShieldingModel,
    b: &[f64],
    u: &[f64],
    tau: f64,
    y: &[u64],
) -> Option<(Vec<f64>, Vec<f64>)> {
    let j_n = b.len();
    let mut g = DVector::zeros(j_n);
    let mut h = DMatrix::zeros(j_n, j_n);
    for k in 0..j_n {
        let ak = model.aggregated(k);
        g[k] = (0..u.len()).map(|i| ak[i] * (y[i] as f64 / u[i] - tau)).sum();
        for l in 0..=k {
            let al = model.aggregated(l);
            let v: f64 = (0..u.len())
                .filter(|&i| y[i] > 0)
                .map(|i| y[i] as f64 * ak[i] * al[i] / (u[i] * u[i]))
                .sum();
            h[(k, l)] = v;
            h[(l, k)] = v;
        }
    }
    let solve = |free: &[usize]| -> Option<DVector<f64>> {
        let hf = DMatrix::from_fn(free.len(), free.len(), |r, c| h[(free[r], free[c])]);
        let gf = DVector::from_iterator(free.len(), free.iter().map(|&k| g[k]));
        Some(Cholesky::new(hf)?.solve(&gf))
    };
    // intensities the full step would push below zero against a negative
    // gradient are taken as bound-active and shrunk toward zero
    let all: Vec<usize> = (0..j_n).filter(|&k| b[k] > 0.0 || g[k] > 0.0).collect();
    let d_all = solve(&all)?;
    let active: Vec<usize> = all
        .iter()
        .zip(d_all.iter())
        .filter(|(&k, &dk)| g[k] < 0.0 && b[k] + dk <= 0.0)
        .map(|(&k, _)| k)
        .collect();
    let free: Vec<usize> = all.iter().copied().filter(|k| !active.contains(k)).collect();
    let d = if active.is_empty() {
        d_all
    } else if free.is_empty() {
        DVector::zeros(0)
    } else {
        solve(&free)?
    };
    let current = kernel(u, tau, y);
    let mut step = 1.0;
    for _ in 0..30 {
        let mut trial = b.to_vec();
        for &k in &active {
            trial[k] = 1e-3 * b[k];
        }
        for (r, &k) in free.iter().enumerate() {
            // stay positive so later EM updates can still move it
            trial[k] = (b[k] + step * d[r]).max(1e-3 * b[k]);
        }
        let mut tu = vec![0.0; u.len()];
        for (k, bk) in trial.iter().enumerate() {
            if *bk > 0.0 {
                for (t, a) in tu.iter_mut().zip(model.aggregated(k)) {
                    *t += bk * a;
                }
            }
        }
        let feasible = (0..u.len()).all(|i| y[i] == 0 || tu[i] > 0.0);
        if feasible && kernel(&tu, tau, y) > current {
            return Some((trial, tu));
        }
        step *= 0.5;
    }
    None
}

/// Largest EM step `b_k g_k / (tau sum_i T_ik)` at a null fit: zero at an
/// interior stationary point and at the bound.
fn kkt_null(model: &ShieldingModel, params: &ModelParams, u: &[f64], y: &[u64]) -> f64 {
    (0..model.n_nuclides())
        .map(|k| {
            let a = model.aggregated(k);
            let g: f64 = a
                .iter()
                .zip(u)
                .zip(y)
                .map(|((a, ui), yi)| {
                    let q = if *yi > 0 { *yi as f64 / ui } else { 0.0 };
                    a * (q - params.tau)
                })
                .sum();
            (params.b[k] * g / (params.tau * a.iter().sum::<f64>())).abs()
        })
        .fold(0.0, f64::max)
}

fn projected(grad: f64, value: f64, lower: f64) -> f64 {
    if value <= lower && grad < 0.0 {
        0.0
    } else {
        grad.abs()
    }
}

/// Constraint on thicknesses in the full fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum XBounds {
    /// `x >= 0`, the physical parameter space.
    #[default]
    Nonnegative,
    /// Unbounded `x`, treating `x = 0` as an interior point.
    Free,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FullFitOptions {
    /// Stop when half the Newton decrement falls below this (log-likelihood
    /// units), or below the kernel's rounding error if that is larger.
    pub tol: f64,
    pub max_iter: usize,
    pub x_bounds: XBounds,
    /// Null-fit options used when no starting fit is supplied.
    pub em: EmOptions,
}

impl Default for FullFitOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 500,
            x_bounds: XBounds::Nonnegative,
            em: EmOptions::default(),
        }
    }
}

struct Eval {
    kernel: f64,
    grad: DVector<f64>,
    terms: Terms,
    q: DVector<f64>,
}

fn evaluate(model: &ShieldingModel, params: &ModelParams, y: &[u64]) -> Option<Eval> {
    let terms = Terms::new(model, params);
    let q = terms.ratios(y).ok()?;
    let kernel = kernel(terms.u.as_slice(), params.tau, y);
    if !kernel.is_finite() {
        return None;
    }
    let r = Terms::column_residuals(model, &q, params.tau);
    let m = model.n_materials();
    let mut grad = DVector::zeros(m + model.n_nuclides());
    for (c, rc) in r.iter().enumerate() {
        let j = model.column_nuclide(c);
        grad[m + j] += terms.e[c] * rc;
        let g = params.b[j] * terms.e[c] * rc;
        for (a, coef) in model.attenuation().row(c).iter().enumerate() {
            grad[a] -= g * coef;
        }
    }
    Some(Eval { kernel, grad, terms, q })
}

fn lower_bounds(m: usize, j: usize, bounds: XBounds) -> Vec<f64> {
    let xl = match bounds {
        XBounds::Nonnegative => 0.0,
        XBounds::Free => f64::NEG_INFINITY,
    };
    (0..m).map(|_| xl).chain((0..j).map(|_| 0.0)).collect()
}

/// Newton direction on the free variables from a positive-definite
/// curvature: observed information when it is PD, else Fisher, else
/// Fisher with a growing ridge.
fn newton_direction(
    model: &ShieldingModel,
    params: &ModelParams,
    ev: &Eval,
    free: &[usize],
) -> Option<DVector<f64>> {
    let nf = free.len();
    let g = DVector::from_iterator(nf, free.iter().map(|&a| ev.grad[a]));
    let sub = |h: &DMatrix<f64>| DMatrix::from_fn(nf, nf, |r, c| h[(free[r], free[c])]);
    let observed = -hessian_from_terms(model, params, &ev.terms, &ev.q);
    if let Some(ch) = Cholesky::new(sub(&observed)) {
        return Some(ch.solve(&g));
    }
    let fisher = fisher_from_terms(&ev.terms).map(|f| f.full() * params.tau);
    let base = match fisher {
        Ok(f) => sub(&f),
        Err(_) => sub(&observed),
    };
    let scale = base.diagonal().iter().fold(0.0f64, |a, v| a.max(v.abs())).max(1e-300);
    let mut ridge = 0.0;
    for _ in 0..40 {
        let mut h = base.clone();
        for d in 0..nf {
            h[(d, d)] += ridge;
        }
        if let Some(ch) = Cholesky::new(h) {
            return Some(ch.solve(&g));
        }
        ridge = if ridge == 0.0 { 1e-12 * scale } else { ridge * 10.0 };
    }
    None
}

/// Maximizes the likelihood over `(x, b)` subject to `b >= 0` and the
/// chosen bound on `x`.
///
/// Starts from `start` (a null fit, typically) or from a fresh EM fit.
pub fn fit_full(
    model: &ShieldingModel,
    spectrum: &Spectrum,
    tau: f64,
    start: Option<&FitResult>,
    options: &FullFitOptions,
) -> Result<FitResult> {
    FULL_FITS.with(|c| c.set(c.get() + 1));
    model.check_spectrum(spectrum)?;
    let owned;
    let start = match start {
        Some(s) => s,
        None => {
            owned = fit_null_em(model, spectrum, tau, &options.em)?;
            &owned
        }
    };
    let m = model.n_materials();
    let j_n = model.n_nuclides();
    let mut params = ModelParams {
        x: start.params.x.clone(),
        b: start.params.b.clone(),
        tau,
    };
    params.x.resize(m, 0.0);
    model.check_params(&params)?;
    let y = spectrum.counts();
    let lower = lower_bounds(m, j_n, options.x_bounds);
    let mut ev = evaluate(model, &params, y)
        .ok_or_else(|| Error::usage("log likelihood is not finite at the starting point"))?;
    let mut trace = start.trace.as_ref().map(|_| Vec::new());
    let mut iterations = 0;
    let mut criterion_value = f64::INFINITY;
    let mut converged = false;
    let get = |p: &ModelParams, a: usize| if a < m { p.x[a] } else { p.b[a - m] };

    while iterations < options.max_iter {
        iterations += 1;
        let free: Vec<usize> = (0..m + j_n)
            .filter(|&a| !(get(&params, a) <= lower[a] && ev.grad[a] <= 0.0))
            .collect();
        if free.is_empty() {
            criterion_value = 0.0;
            converged = true;
            break;
        }
        let Some(d) = newton_direction(model, &params, &ev, &free) else {
            break;
        };
        let decrement: f64 = free.iter().zip(d.iter()).map(|(&a, da)| ev.grad[a] * da).sum();
        criterion_value = 0.5 * decrement;
        // the kernel cannot resolve gains below its rounding error
        if criterion_value < options.tol.max(1e-15 * (1.0 + ev.kernel.abs())) {
            converged = true;
            break;
        }
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let mut trial = params.clone();
            let mut gain = 0.0;
            for (&a, da) in free.iter().zip(d.iter()) {
                let v = (get(&params, a) + step * da).max(lower[a]);
                gain += ev.grad[a] * (v - get(&params, a));
                if a < m {
                    trial.x[a] = v;
                } else {
                    trial.b[a - m] = v;
                }
            }
            if let Some(te) = evaluate(model, &trial, y) {
                if te.kernel >= ev.kernel + 1e-4 * gain && te.kernel >= ev.kernel {
                    accepted = Some((trial, te));
                    break;
                }
            }
            step *= 0.5;
        }
        let Some((p, e)) = accepted else {
            // no ascent left at working precision
            converged = criterion_value < 1e3 * options.tol.max(1e-12 * (1.0 + ev.kernel.abs()));
            break;
        };
        params = p;
        ev = e;
        if let Some(t) = trace.as_mut() {
            t.push(log_likelihood_from_rate(ev.terms.u.as_slice(), tau, y));
        }
    }
    let kkt_residual = (0..m + j_n)
        .map(|a| projected(ev.grad[a], get(&params, a), lower[a]))
        .fold(0.0, f64::max);
    let log_likelihood = log_likelihood_from_rate(ev.terms.u.as_slice(), tau, y);
    Ok(FitResult {
        params,
        log_likelihood,
        iterations,
        converged,
        criterion_value,
        kkt_residual,
        trace,
    })
}
