//! Score, Fisher information, the LM, Wald and LR tests for shielding,
//! local power, condition numbers and the identifiability diagnostic.
//!
//! Notation, with `e_c = exp(-sum_m c_cm x_m)` per response column `c` of
//! nuclide `j(c)`:
//!
//! - `u_ic = S_ic b_j e_c`, `U_i = sum_c u_ic`
//! - `W_im = sum_c u_ic c_cm`
//! - `T_ik = sum_{c in k} S_ic e_c`
//!
//! Fisher information is reported per unit time: the information in a
//! spectrum of duration `tau` is `tau * I`.

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::estimation::{fit_full, fit_null_em, EmOptions, FitResult, FullFitOptions};
use crate::model::{ModelParams, ShieldingModel, Spectrum};
use crate::stats;

/// Per-channel building blocks of the derivatives at one parameter value.
pub(crate) struct Terms {
    /// `e_c` per column.
    pub e: Vec<f64>,
    /// `U_i`.
    pub u: DVector<f64>,
    /// `W_im`, N x M.
    pub w: DMatrix<f64>,
    /// `T_ik`, N x J.
    pub t: DMatrix<f64>,
}

impl Terms {
    pub fn new(model: &ShieldingModel, params: &ModelParams) -> Self {
        let n = model.n_channels();
        let m = model.n_materials();
        let e = model.attenuation_factors(&params.x);
        let mut u = DVector::zeros(n);
        let mut w = DMatrix::zeros(n, m);
        let mut t = DMatrix::zeros(n, model.n_nuclides());
        for (c, col) in model.drf().columns().iter().enumerate() {
            let j = model.column_nuclide(c);
            let g = params.b[j] * e[c];
            let row = model.attenuation().row(c);
            for (i, s) in col.iter().enumerate() {
                if *s == 0.0 {
                    continue;
                }
                u[i] += g * s;
                t[(i, j)] += e[c] * s;
            }
            for (mm, coef) in row.iter().enumerate() {
                let gc = g * coef;
                if gc == 0.0 {
                    continue;
                }
                let mut wc = w.column_mut(mm);
                for (i, s) in col.iter().enumerate() {
                    wc[i] += gc * s;
                }
            }
        }
        Self { e, u, w, t }
    }

    /// `Y_i / U_i`, zero where `Y_i = 0`.
    pub fn ratios(&self, y: &[u64]) -> Result<DVector<f64>> {
        let mut q = DVector::zeros(y.len());
        for (i, &yi) in y.iter().enumerate() {
            if yi == 0 {
                continue;
            }
            let ui = self.u[i];
            if !(ui > 0.0) {
                return Err(Error::Evaluation(format!(
                    "mean is zero in channel {i} which has {yi} counts"
                )));
            }
            q[i] = yi as f64 / ui;
        }
        Ok(q)
    }

    /// `r_c = sum_i S_ic (Y_i/U_i - tau)` per column.
    pub fn column_residuals(model: &ShieldingModel, q: &DVector<f64>, tau: f64) -> Vec<f64> {
        model
            .drf()
            .columns()
            .iter()
            .map(|col| col.iter().zip(q.iter()).map(|(s, qi)| s * (qi - tau)).sum())
            .collect()
    }
}

/// Gradient of the log likelihood split into thickness and intensity blocks.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScoreVector {
    pub score_x: Vec<f64>,
    pub score_b: Vec<f64>,
}

impl ScoreVector {
    pub fn to_vector(&self) -> DVector<f64> {
        DVector::from_iterator(
            self.score_x.len() + self.score_b.len(),
            self.score_x.iter().chain(&self.score_b).copied(),
        )
    }
}

fn score_from_terms(
    model: &ShieldingModel,
    params: &ModelParams,
    terms: &Terms,
    q: &DVector<f64>,
) -> ScoreVector {
    let r = Terms::column_residuals(model, q, params.tau);
    let mut score_x = vec![0.0; model.n_materials()];
    let mut score_b = vec![0.0; model.n_nuclides()];
    for (c, rc) in r.iter().enumerate() {
        let j = model.column_nuclide(c);
        score_b[j] += terms.e[c] * rc;
        let g = params.b[j] * terms.e[c] * rc;
        for (sx, coef) in score_x.iter_mut().zip(model.attenuation().row(c)) {
            *sx -= g * coef;
        }
    }
    ScoreVector { score_x, score_b }
}

/// `dL/dx_m = sum_i (tau - Y_i/U_i) W_im` and `dL/db_k = sum_i (Y_i/U_i - tau) T_ik`.
pub fn score(model: &ShieldingModel, params: &ModelParams, spectrum: &Spectrum) -> Result<ScoreVector> {
    model.check_params(params)?;
    model.check_spectrum(spectrum)?;
    let terms = Terms::new(model, params);
    let q = terms.ratios(spectrum.counts())?;
    Ok(score_from_terms(model, params, &terms, &q))
}

/// Hessian of the log likelihood in `(x, b)` order.
pub fn observed_hessian(
    model: &ShieldingModel,
    params: &ModelParams,
    spectrum: &Spectrum,
) -> Result<DMatrix<f64>> {
    model.check_params(params)?;
    model.check_spectrum(spectrum)?;
    let terms = Terms::new(model, params);
    let q = terms.ratios(spectrum.counts())?;
    Ok(hessian_from_terms(model, params, &terms, &q))
}

pub(crate) fn hessian_from_terms(
    model: &ShieldingModel,
    params: &ModelParams,
    terms: &Terms,
    q: &DVector<f64>,
) -> DMatrix<f64> {
    let m = model.n_materials();
    let j_n = model.n_nuclides();
    let r = Terms::column_residuals(model, q, params.tau);
    // Y_i / U_i^2
    let yw = DVector::from_iterator(
        q.len(),
        q.iter().zip(terms.u.iter()).map(|(qi, ui)| if *qi == 0.0 { 0.0 } else { qi / ui }),
    );
    let mut h = DMatrix::zeros(m + j_n, m + j_n);
    let wy = DMatrix::from_fn(terms.w.nrows(), m, |i, a| terms.w[(i, a)] * yw[i]);
    let ty = DMatrix::from_fn(terms.t.nrows(), j_n, |i, a| terms.t[(i, a)] * yw[i]);
    let xx = terms.w.transpose() * &wy;
    let xb = wy.transpose() * &terms.t;
    let bb = terms.t.transpose() * &ty;
    h.view_mut((0, 0), (m, m)).copy_from(&(-xx));
    h.view_mut((0, m), (m, j_n)).copy_from(&xb);
    h.view_mut((m, m), (j_n, j_n)).copy_from(&(-bb));
    for (c, rc) in r.iter().enumerate() {
        let k = model.column_nuclide(c);
        let row = model.attenuation().row(c);
        let g = params.b[k] * terms.e[c] * rc;
        for a in 0..m {
            for bidx in 0..m {
                h[(a, bidx)] += g * row[a] * row[bidx];
            }
            h[(a, m + k)] -= terms.e[c] * row[a] * rc;
        }
    }
    for a in 0..m {
        for k in 0..j_n {
            h[(m + k, a)] = h[(a, m + k)];
        }
    }
    h
}

/// Per-unit-time Fisher information blocks.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FisherBlocks {
    pub i11: DMatrix<f64>,
    pub i12: DMatrix<f64>,
    pub i22: DMatrix<f64>,
    /// `I11 - I12 I22^{-1} I21`.
    pub schur: DMatrix<f64>,
}

impl FisherBlocks {
    /// Full `(M+J)` square per-unit-time information matrix.
    pub fn full(&self) -> DMatrix<f64> {
        let m = self.i11.nrows();
        let j = self.i22.nrows();
        let mut f = DMatrix::zeros(m + j, m + j);
        f.view_mut((0, 0), (m, m)).copy_from(&self.i11);
        f.view_mut((0, m), (m, j)).copy_from(&self.i12);
        f.view_mut((m, 0), (j, m)).copy_from(&self.i12.transpose());
        f.view_mut((m, m), (j, j)).copy_from(&self.i22);
        f
    }
}

fn symmetrize(a: DMatrix<f64>) -> DMatrix<f64> {
    (&a + a.transpose()) * 0.5
}

pub(crate) fn fisher_from_terms(terms: &Terms) -> Result<FisherBlocks> {
    if let Some(i) = terms.u.iter().position(|u| !(*u > 0.0)) {
        return Err(Error::Evaluation(format!(
            "Fisher information needs a positive mean in every channel; channel {i} has U = {}",
            terms.u[i]
        )));
    }
    let n = terms.u.len();
    let inv_u = DVector::from_iterator(n, terms.u.iter().map(|u| 1.0 / u));
    let wu = DMatrix::from_fn(n, terms.w.ncols(), |i, a| terms.w[(i, a)] * inv_u[i]);
    let i11 = symmetrize(terms.w.transpose() * &wu);
    let i12 = -(wu.transpose() * &terms.t);
    let tu = DMatrix::from_fn(n, terms.t.ncols(), |i, a| terms.t[(i, a)] * inv_u[i]);
    let i22 = symmetrize(terms.t.transpose() * &tu);
    let chol = Cholesky::new(i22.clone()).ok_or_else(|| {
        Error::Singular("I22 is not positive definite: nuclide responses are linearly dependent".into())
    })?;
    let schur = symmetrize(&i11 - &i12 * chol.solve(&i12.transpose()));
    Ok(FisherBlocks { i11, i12, i22, schur })
}

/// Fisher information blocks per unit time at `params` (independent of `tau`).
pub fn fisher_blocks(model: &ShieldingModel, params: &ModelParams) -> Result<FisherBlocks> {
    model.check_params(params)?;
    fisher_from_terms(&Terms::new(model, params))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TestKind {
    Lm,
    Wald,
    Lr,
}

impl std::str::FromStr for TestKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "lm" | "score" => Ok(Self::Lm),
            "wald" | "w" => Ok(Self::Wald),
            "lr" => Ok(Self::Lr),
            other => Err(Error::usage(format!("unknown test method '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TestReport {
    pub kind: TestKind,
    pub materials: Vec<String>,
    pub statistic: f64,
    pub df: usize,
    pub p_value: f64,
    /// Null fit for LM, unconstrained fit for Wald and LR.
    pub fit: FitResult,
    /// Null fit used by LR.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub null_fit: Option<FitResult>,
}

impl TestReport {
    pub fn rejects(&self, alpha: f64) -> bool {
        self.p_value <= alpha
    }
}

fn require_materials(model: &ShieldingModel) -> Result<usize> {
    match model.n_materials() {
        0 => Err(Error::usage("a shielding test needs at least one presumed material")),
        m => Ok(m),
    }
}

fn schur_cholesky(schur: &DMatrix<f64>) -> Result<Cholesky<f64, nalgebra::Dyn>> {
    Cholesky::new(schur.clone()).ok_or_else(|| {
        Error::Singular(format!(
            "Schur complement is not positive definite (condition number {:.3e})",
            condition_number(schur)
        ))
    })
}

fn clamp_statistic(v: f64, what: &str) -> f64 {
    if v < 0.0 {
        if v < -1e-8 {
            log::warn!("{what} statistic {v:.3e} is negative; clamped to 0");
        }
        0.0
    } else {
        v
    }
}

fn report(kind: TestKind, model: &ShieldingModel, statistic: f64, fit: FitResult) -> Result<TestReport> {
    let df = model.n_materials();
    Ok(TestReport {
        kind,
        materials: model.attenuation().materials().to_vec(),
        statistic,
        df,
        p_value: stats::chi2_sf(statistic, df as f64)?,
        fit,
        null_fit: None,
    })
}

/// LM statistic from a converged null fit; no alternative fit is performed.
pub fn lm_from_null_fit(
    model: &ShieldingModel,
    spectrum: &Spectrum,
    null_fit: &FitResult,
) -> Result<TestReport> {
    let m = require_materials(model)?;
    model.check_spectrum(spectrum)?;
    if !null_fit.converged {
        return Err(Error::NonConvergence {
            what: "null EM fit",
            fit: Box::new(null_fit.clone()),
        });
    }
    let params = ModelParams {
        x: vec![0.0; m],
        b: null_fit.params.b.clone(),
        tau: null_fit.params.tau,
    };
    model.check_params(&params)?;
    let terms = Terms::new(model, &params);
    let q = terms.ratios(spectrum.counts())?;
    let s = score_from_terms(model, &params, &terms, &q);
    let fisher = fisher_from_terms(&terms)?;
    let chol = schur_cholesky(&fisher.schur)?;
    let u1 = DVector::from_column_slice(&s.score_x);
    let stat = u1.dot(&chol.solve(&u1)) / params.tau;
    report(TestKind::Lm, model, clamp_statistic(stat, "LM"), null_fit.clone())
}

/// Lagrange multiplier test of `x = 0` against the presumed materials.
pub fn lm_test(
    model: &ShieldingModel,
    spectrum: &Spectrum,
    tau: f64,
    options: &EmOptions,
) -> Result<TestReport> {
    require_materials(model)?;
    let fit = fit_null_em(model, spectrum, tau, options)?;
    lm_from_null_fit(model, spectrum, &fit)
}

/// Wald statistic `tau x^T schur(phi_hat) x` from a converged full fit.
pub fn wald_from_full_fit(model: &ShieldingModel, full_fit: &FitResult) -> Result<TestReport> {
    require_materials(model)?;
    if !full_fit.converged {
        return Err(Error::NonConvergence {
            what: "full fit",
            fit: Box::new(full_fit.clone()),
        });
    }
    let p = &full_fit.params;
    if p.x.len() != model.n_materials() || p.b.len() != model.n_nuclides() {
        return Err(Error::usage("full fit does not match the model's dimensions"));
    }
    // a fit with free bounds may carry x < 0, which ModelParams validation rejects
    let fisher = fisher_from_terms(&Terms::new(model, p))?;
    let x = DVector::from_column_slice(&p.x);
    let stat = full_fit.params.tau * x.dot(&(&fisher.schur * &x));
    report(TestKind::Wald, model, clamp_statistic(stat, "Wald"), full_fit.clone())
}

pub fn wald_test(
    model: &ShieldingModel,
    spectrum: &Spectrum,
    tau: f64,
    em: &EmOptions,
    full: &FullFitOptions,
) -> Result<TestReport> {
    let null_fit = fit_null_em(model, spectrum, tau, em)?;
    let fit = fit_full(model, spectrum, tau, Some(&null_fit), full)?;
    wald_from_full_fit(model, &fit)
}

/// `2 (L(phi_hat) - L(phi_tilde))`.
pub fn lr_from_fits(
    model: &ShieldingModel,
    null_fit: &FitResult,
    full_fit: &FitResult,
) -> Result<TestReport> {
    require_materials(model)?;
    for (f, what) in [(null_fit, "null EM fit"), (full_fit, "full fit")] {
        if !f.converged {
            return Err(Error::NonConvergence { what, fit: Box::new(f.clone()) });
        }
    }
    let stat = 2.0 * (full_fit.log_likelihood - null_fit.log_likelihood);
    let mut r = report(TestKind::Lr, model, clamp_statistic(stat, "LR"), full_fit.clone())?;
    r.null_fit = Some(null_fit.clone());
    Ok(r)
}

pub fn lr_test(
    model: &ShieldingModel,
    spectrum: &Spectrum,
    tau: f64,
    em: &EmOptions,
    full: &FullFitOptions,
) -> Result<TestReport> {
    let null_fit = fit_null_em(model, spectrum, tau, em)?;
    let fit = fit_full(model, spectrum, tau, Some(&null_fit), full)?;
    lr_from_fits(model, &null_fit, &fit)
}

/// Runs one of the three tests by kind.
pub fn run_test(
    kind: TestKind,
    model: &ShieldingModel,
    spectrum: &Spectrum,
    tau: f64,
    em: &EmOptions,
    full: &FullFitOptions,
) -> Result<TestReport> {
    match kind {
        TestKind::Lm => lm_test(model, spectrum, tau, em),
        TestKind::Wald => wald_test(model, spectrum, tau, em, full),
        TestKind::Lr => lr_test(model, spectrum, tau, em, full),
    }
}

/// Noncentrality `h1^T schur h1` of the limiting LM distribution.
pub fn noncentrality(fisher: &FisherBlocks, h1: &[f64]) -> Result<f64> {
    let m = fisher.schur.nrows();
    if h1.len() != m {
        return Err(Error::usage(format!("direction has {} entries, expected {m}", h1.len())));
    }
    schur_cholesky(&fisher.schur)?;
    let h = DVector::from_column_slice(h1);
    Ok(h.dot(&(&fisher.schur * &h)).max(0.0))
}

/// Limiting rejection probability of the level-`alpha` LM test under the
/// local alternative `x = h1 / sqrt(tau)`.
pub fn local_power(fisher: &FisherBlocks, h1: &[f64], alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::usage(format!("level must lie in (0, 1), got {alpha}")));
    }
    let ncp = noncentrality(fisher, h1)?;
    let df = fisher.schur.nrows() as f64;
    if ncp == 0.0 {
        return Ok(alpha);
    }
    let crit = stats::chi2_quantile(1.0 - alpha, df)?;
    stats::noncentral_chi2_sf(crit, df, ncp)
}

/// `sqrt(lambda_max / lambda_min)` of a symmetric matrix; infinite when
/// the smallest eigenvalue is not positive.
pub fn condition_number(matrix: &DMatrix<f64>) -> f64 {
    let eig = SymmetricEigen::new(symmetrize(matrix.clone()));
    let max = eig.eigenvalues.max();
    let min = eig.eigenvalues.min();
    if !(min > 0.0) || !(max > 0.0) {
        log::warn!("matrix is singular or indefinite (eigenvalues {min:.3e} .. {max:.3e})");
        return f64::INFINITY;
    }
    (max / min).sqrt()
}

/// Numerical check of the identifiability assumption at a null parameter.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct A1Report {
    /// Singular values of the column-normalized `[v_1 .. v_{M+J}]`.
    pub singular_values: Vec<f64>,
    pub rank: usize,
    pub n_vectors: usize,
    pub rtol: f64,
    /// Smallest unit-time mean `U_i`.
    pub min_mean: f64,
    pub positive_mean: bool,
    pub passed: bool,
}

/// Builds `v_q = -sum_j b_j sum_l S_ijl c_jlq` (q <= M) and
/// `v_{M+k} = S_ik.`, and reports their numerical rank.
pub fn check_a1(model: &ShieldingModel, params: &ModelParams, rtol: f64) -> Result<A1Report> {
    model.check_params(params)?;
    if params.x.iter().any(|v| *v != 0.0) {
        return Err(Error::usage("identifiability is checked at x = 0"));
    }
    let n = model.n_channels();
    let m = model.n_materials();
    let j_n = model.n_nuclides();
    let mut v = DMatrix::zeros(n, m + j_n);
    for (c, col) in model.drf().columns().iter().enumerate() {
        let j = model.column_nuclide(c);
        for (q, coef) in model.attenuation().row(c).iter().enumerate() {
            let g = -params.b[j] * coef;
            for (i, s) in col.iter().enumerate() {
                v[(i, q)] += g * s;
            }
        }
    }
    for k in 0..j_n {
        v.column_mut(m + k).copy_from_slice(model.aggregated(k));
    }
    for mut col in v.column_iter_mut() {
        let norm = col.norm();
        if norm > 0.0 {
            col /= norm;
        }
    }
    let mut singular_values: Vec<f64> = v.singular_values().iter().copied().collect();
    singular_values.sort_by(|a, b| b.total_cmp(a));
    let top = singular_values.first().copied().unwrap_or(0.0);
    let rank = singular_values.iter().filter(|s| **s > rtol * top).count();
    let u = model.mean_rate(params)?;
    let min_mean = u.iter().copied().fold(f64::INFINITY, f64::min);
    let positive_mean = min_mean > 0.0;
    Ok(A1Report {
        singular_values,
        rank,
        n_vectors: m + j_n,
        rtol,
        min_mean,
        positive_mean,
        passed: rank == m + j_n && positive_mean,
    })
}
