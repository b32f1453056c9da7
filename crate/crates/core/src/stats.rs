//! Chi-square tails, the noncentral chi-square distribution and
//! Kolmogorov–Smirnov tests.

use statrs::distribution::{ChiSquared, ContinuousCDF};
use statrs::function::factorial::ln_factorial;
use statrs::function::gamma::{gamma_lr, gamma_ur, ln_gamma};

use crate::error::{Error, Result};

/// Poisson mixture weights below this total tail are dropped.
pub const NONCENTRAL_TAIL_TOL: f64 = 1e-12;

fn check_df(df: f64) -> Result<()> {
    if !(df > 0.0 && df.is_finite()) {
        return Err(Error::usage(format!("degrees of freedom must be positive, got {df}")));
    }
    Ok(())
}

/// `P(X <= x)` for `X ~ chi^2_df`.
pub fn chi2_cdf(x: f64, df: f64) -> Result<f64> {
    check_df(df)?;
    if x <= 0.0 {
        return Ok(0.0);
    }
    if x.is_infinite() {
        return Ok(1.0);
    }
    Ok(gamma_lr(df / 2.0, x / 2.0))
}

/// `P(X > x)` for `X ~ chi^2_df`, computed from the upper incomplete gamma.
pub fn chi2_sf(x: f64, df: f64) -> Result<f64> {
    check_df(df)?;
    if x <= 0.0 {
        return Ok(1.0);
    }
    if x.is_infinite() {
        return Ok(0.0);
    }
    Ok(gamma_ur(df / 2.0, x / 2.0))
}

/// Quantile of `chi^2_df` at probability `p`.
pub fn chi2_quantile(p: f64, df: f64) -> Result<f64> {
    check_df(df)?;
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::usage(format!("probability must lie in [0, 1], got {p}")));
    }
    let d = ChiSquared::new(df).map_err(|e| Error::usage(e.to_string()))?;
    Ok(d.inverse_cdf(p))
}

/// Sums `w_j * f(df + 2j)` over Poisson(`ncp/2`) weights `w_j`, outward
/// from the mode until the unvisited weight is below [`NONCENTRAL_TAIL_TOL`].
fn poisson_mixture(df: f64, ncp: f64, f: impl Fn(f64) -> f64) -> f64 {
    let half = ncp / 2.0;
    let log_w = |j: f64| -half + j * half.ln() - ln_gamma(j + 1.0);
    let mode = half.floor();
    let mut total = 0.0;
    let mut weight_seen = 0.0;
    let mut j = mode;
    loop {
        let w = log_w(j).exp();
        total += w * f(df + 2.0 * j);
        weight_seen += w;
        if j == 0.0 {
            break;
        }
        j -= 1.0;
        if w < NONCENTRAL_TAIL_TOL * 1e-3 && weight_seen > 0.5 {
            break;
        }
    }
    let mut j = mode + 1.0;
    while 1.0 - weight_seen > NONCENTRAL_TAIL_TOL {
        let w = log_w(j).exp();
        total += w * f(df + 2.0 * j);
        weight_seen += w;
        if w == 0.0 && j > mode + 10.0 {
            break;
        }
        j += 1.0;
    }
    total
}

fn check_ncp(ncp: f64) -> Result<()> {
    if !(ncp >= 0.0 && ncp.is_finite()) {
        return Err(Error::usage(format!("noncentrality must be >= 0, got {ncp}")));
    }
    Ok(())
}

/// `P(X <= x)` for noncentral `chi^2_df(ncp)`.
pub fn noncentral_chi2_cdf(x: f64, df: f64, ncp: f64) -> Result<f64> {
    check_df(df)?;
    check_ncp(ncp)?;
    if ncp == 0.0 {
        return chi2_cdf(x, df);
    }
    if x <= 0.0 {
        return Ok(0.0);
    }
    Ok(poisson_mixture(df, ncp, |k| gamma_lr(k / 2.0, x / 2.0)).clamp(0.0, 1.0))
}

/// `P(X > x)` for noncentral `chi^2_df(ncp)`.
pub fn noncentral_chi2_sf(x: f64, df: f64, ncp: f64) -> Result<f64> {
    check_df(df)?;
    check_ncp(ncp)?;
    if ncp == 0.0 {
        return chi2_sf(x, df);
    }
    if x <= 0.0 {
        return Ok(1.0);
    }
    Ok(poisson_mixture(df, ncp, |k| gamma_ur(k / 2.0, x / 2.0)).clamp(0.0, 1.0))
}

/// Log pmf of a Poisson(`mean`) variable at `k`.
pub fn poisson_ln_pmf(k: u64, mean: f64) -> f64 {
    if mean == 0.0 {
        return if k == 0 { 0.0 } else { f64::NEG_INFINITY };
    }
    k as f64 * mean.ln() - mean - ln_factorial(k)
}

/// Outcome of a Kolmogorov–Smirnov test.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
}

/// Kolmogorov limiting survival function `P(K > lambda)`.
pub fn kolmogorov_sf(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    if lambda < 1.18 {
        // small-lambda form of the same series, which converges fast there
        let c = std::f64::consts::PI.powi(2) / (8.0 * lambda * lambda);
        let s: f64 = (1..=20)
            .map(|k| {
                let m = (2 * k - 1) as f64;
                (-m * m * c).exp()
            })
            .sum();
        return (1.0 - (2.0 * std::f64::consts::PI).sqrt() / lambda * s).clamp(0.0, 1.0);
    }
    let s: f64 = (1..=100)
        .map(|k| {
            let k = k as f64;
            let sign = if k as u64 % 2 == 1 { 1.0 } else { -1.0 };
            sign * (-2.0 * k * k * lambda * lambda).exp()
        })
        .sum();
    (2.0 * s).clamp(0.0, 1.0)
}

fn ks_p_value(effective_n: f64, d: f64) -> f64 {
    let sn = effective_n.sqrt();
    kolmogorov_sf((sn + 0.12 + 0.11 / sn) * d)
}

fn sorted(samples: &[f64]) -> Result<Vec<f64>> {
    if samples.is_empty() {
        return Err(Error::usage("KS test needs at least one sample"));
    }
    if samples.iter().any(|v| v.is_nan()) {
        return Err(Error::usage("KS test sample contains NaN"));
    }
    let mut v = samples.to_vec();
    v.sort_by(f64::total_cmp);
    Ok(v)
}

/// One-sample KS test of `samples` against a continuous `cdf`.
pub fn ks_one_sample(samples: &[f64], cdf: impl Fn(f64) -> f64) -> Result<KsResult> {
    let v = sorted(samples)?;
    let n = v.len() as f64;
    let d = v
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).max((i + 1) as f64 / n - f)
        })
        .fold(0.0, f64::max);
    Ok(KsResult {
        statistic: d,
        p_value: ks_p_value(n, d),
    })
}

/// Two-sample KS test.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<KsResult> {
    let a = sorted(a)?;
    let b = sorted(b)?;
    let (n, m) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j, mut d) = (0usize, 0usize, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / n - j as f64 / m).abs());
    }
    Ok(KsResult {
        statistic: d,
        p_value: ks_p_value(n * m / (n + m), d),
    })
}
