//! Acceptance criteria, one PASS/FAIL line each.
//!
//! Runs as a plain binary (`harness = false`) so the lines are always
//! printed. Pass criterion numbers to run a subset:
//! `cargo test --test acceptance -- 3 5`.
//!
//! The process fails when a criterion outside `EXPECTED_FAILURES` fails.
//! A criterion listed there is still run and reported at full strength.

mod common;

use std::process::ExitCode;
use std::time::Instant;

use common::*;
use shieldscan_core::attenuation::MaterialRegistry;
use shieldscan_core::estimation::{fit_full, fit_null_em, full_fit_calls};
use shieldscan_core::inference::{
    condition_number, fisher_blocks, lm_from_null_fit, lm_test, local_power, lr_from_fits, score,
    wald_from_full_fit,
};
use shieldscan_core::montecarlo::{
    derive_seed, find_x50, paired_rate_difference, predicted_x50, run_power_study, run_sensitivity_study,
    run_size_study, run_study, simulate_spectrum, PointResult, X50Options,
};
use shieldscan_core::scenario::{
    bundled_library, preset, preset_names, Scenario, X50Method, SOURCE_B, SOURCE_TAU,
};
use shieldscan_core::stats::{chi2_cdf, chi2_quantile, ks_one_sample, noncentral_chi2_sf};
use shieldscan_core::{DetectorSpec, EmOptions, FullFitOptions, ModelParams, Result, StudyConfig, XBounds};

/// Criteria known to fail with synthetic responses; see README.
const EXPECTED_FAILURES: &[usize] = &[6];

const ALPHA: f64 = 0.05;
const MID_GRID: usize = 10;

type Check = fn(&Scenario) -> Result<(bool, String)>;

fn main() -> ExitCode {
    let only: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let criteria: [(usize, &str, Check); 10] = [
        (1, "null calibration, single materials", c1_single_sizes),
        (2, "null calibration, material pairs", c2_pair_sizes),
        (3, "chi-square(1) null distribution", c3_chi2_one),
        (4, "LM/LR/Wald asymptotic equivalence", c4_equivalence),
        (5, "local power", c5_local_power),
        (6, "robustness to the presumed material", c6_robustness),
        (7, "composite power and collinearity", c7_collinearity),
        (8, "sensitivity to response errors", c8_sensitivity),
        (9, "oracle suite", c9_oracles),
        (10, "LM-only contract", c10_lm_only),
    ];
    let scenario = Scenario::bundled().expect("bundled scenario");
    let mut unexpected = Vec::new();
    for (id, name, check) in criteria {
        if !only.is_empty() && !only.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let (pass, detail) = check(&scenario).unwrap_or_else(|e| (false, format!("error: {e}")));
        let secs = start.elapsed().as_secs_f64();
        let expected = EXPECTED_FAILURES.contains(&id);
        let tag = match (pass, expected) {
            (true, _) => "PASS",
            (false, true) => "FAIL (expected)",
            (false, false) => "FAIL",
        };
        println!("{tag} [{id}] {name}: {detail} ({secs:.1} s)");
        if !pass && !expected {
            unexpected.push(id);
        }
    }
    if unexpected.is_empty() {
        ExitCode::SUCCESS
    } else {
        println!("unexpected failures: {unexpected:?}");
        ExitCode::FAILURE
    }
}

fn in_size_band(rate: f64) -> bool {
    (0.035..=0.065).contains(&rate)
}

fn statistics(p: &PointResult) -> Vec<f64> {
    p.statistics.as_ref().expect("statistics kept").iter().flatten().copied().collect()
}

fn c1_single_sizes(s: &Scenario) -> Result<(bool, String)> {
    let mut pass = true;
    let mut parts = Vec::new();
    for name in preset_names().iter().filter(|n| n.starts_with("table1-")) {
        let cfg = preset(s, name, X50Method::Predicted)?.config;
        let r = run_size_study(s, &cfg)?;
        let p = &r.points[0];
        pass &= in_size_band(p.rate) && p.failures == 0;
        parts.push(format!("{} {:.4}", cfg.presumed[0][0], p.rate));
    }
    Ok((pass, format!("sizes {} (band 0.035-0.065)", parts.join(", "))))
}

fn c2_pair_sizes(s: &Scenario) -> Result<(bool, String)> {
    let mut pass = true;
    let mut parts = Vec::new();
    let mut min_ks: f64 = 1.0;
    for name in preset_names().iter().filter(|n| n.starts_with("table2-")) {
        let mut cfg = preset(s, name, X50Method::Predicted)?.config;
        cfg.keep_statistics = true;
        let r = run_size_study(s, &cfg)?;
        let p = &r.points[0];
        let ks = ks_one_sample(&statistics(p), |x| chi2_cdf(x, 2.0).unwrap_or(0.0))?;
        min_ks = min_ks.min(ks.p_value);
        pass &= in_size_band(p.rate) && ks.p_value > 0.01 && p.failures == 0;
        parts.push(format!("{} {:.4}", cfg.presumed[0].join("+"), p.rate));
    }
    Ok((pass, format!("sizes {}; smallest KS p-value vs chi2(2) {min_ks:.3}", parts.join(", "))))
}

fn c3_chi2_one(s: &Scenario) -> Result<(bool, String)> {
    let mut cfg = preset(s, "table1-carbon", X50Method::Predicted)?.config;
    cfg.replicates = 5000;
    cfg.keep_statistics = true;
    let r = run_size_study(s, &cfg)?;
    let stats = statistics(&r.points[0]);
    let ks = ks_one_sample(&stats, |x| chi2_cdf(x, 1.0).unwrap_or(0.0))?;
    Ok((
        ks.p_value > 0.01 && stats.len() == 5000,
        format!("KS D = {:.4}, p = {:.3} over {} statistics", ks.statistic, ks.p_value, stats.len()),
    ))
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Bundled source on a detector with about 3e5 counts per unit time, where
/// the three tests still differ visibly at `tau = 1`.
fn reduced_count_scenario() -> Result<Scenario> {
    let detector = DetectorSpec {
        counts_scale: 1e4,
        ..DetectorSpec::default()
    };
    Scenario::from_detector(bundled_library()?, &detector, MaterialRegistry::builtin())
}

fn c4_equivalence(_: &Scenario) -> Result<(bool, String)> {
    let s = reduced_count_scenario()?;
    let model = s.model(&["carbon"])?;
    let em = EmOptions::default();
    let full_opts = FullFitOptions {
        x_bounds: XBounds::Free,
        ..FullFitOptions::default()
    };
    let reps: u64 = 400;
    let mut rows = Vec::new();
    for (t, tau) in [1.0, 10.0, 100.0].into_iter().enumerate() {
        let truth = ModelParams::new(vec![0.0], SOURCE_B.to_vec(), tau)?;
        let mut d_lr = Vec::new();
        let mut d_w = Vec::new();
        let mut lm_all = Vec::new();
        for r in 0..reps {
            let y = simulate_spectrum(&model, &truth, derive_seed(&[4, t as u64, r]))?;
            let outcome = (|| {
                let null = fit_null_em(&model, &y, tau, &em)?;
                let lm = lm_from_null_fit(&model, &y, &null)?;
                let full = fit_full(&model, &y, tau, Some(&null), &full_opts)?;
                let lr = lr_from_fits(&model, &null, &full)?;
                let w = wald_from_full_fit(&model, &full)?;
                Ok::<_, shieldscan_core::Error>((lm.statistic, lr.statistic, w.statistic))
            })();
            if let Ok((lm, lr, w)) = outcome {
                d_lr.push((lm - lr).abs());
                d_w.push((lm - w).abs());
                lm_all.push(lm);
            }
        }
        rows.push((tau, median(d_lr), median(d_w), median(lm_all.clone()), lm_all.len()));
    }
    let decreasing = rows.windows(2).all(|w| w[1].1 < w[0].1 && w[1].2 < w[0].2);
    let last = rows[2];
    let small = last.1 < 0.05 * last.3 && last.2 < 0.05 * last.3;
    let detail = rows
        .iter()
        .map(|(tau, a, b, m, n)| format!("tau {tau}: |LM-LR| {a:.2e}, |LM-W| {b:.2e}, median LM {m:.3} (n {n})"))
        .collect::<Vec<_>>()
        .join("; ");
    Ok((decreasing && small && rows.iter().all(|r| r.4 as u64 >= reps * 9 / 10), detail))
}

fn c5_local_power(s: &Scenario) -> Result<(bool, String)> {
    let tau = 100.0;
    let model = s.model(&["carbon"])?;
    let fisher = fisher_blocks(&model, &ModelParams::new(vec![0.0], SOURCE_B.to_vec(), 1.0)?)?;
    // h1 giving limiting power one half
    let h1 = predicted_x50(s, "carbon", &SOURCE_B, 1.0, ALPHA)?;
    let predicted = local_power(&fisher, &[h1], ALPHA)?;
    let cfg = StudyConfig {
        name: "local-power".into(),
        b: SOURCE_B.to_vec(),
        tau,
        true_materials: vec!["carbon".into()],
        grid: vec![vec![h1 / tau.sqrt()]],
        presumed: vec![vec!["carbon".into()]],
        replicates: 10_000,
        alpha: ALPHA,
        seed: 5,
        c_scale: None,
        perturb_background: true,
        calibration_replicates: None,
        keep_statistics: false,
        em: EmOptions::default(),
    };
    let r = run_study(s, &cfg)?;
    let p = &r.points[0];
    Ok((
        (p.rate - predicted).abs() <= 0.02 && p.failures == 0,
        format!("h1 {h1:.4}: empirical {:.4} (se {:.4}), predicted {predicted:.4}", p.rate, p.se),
    ))
}

fn c6_robustness(s: &Scenario) -> Result<(bool, String)> {
    let cfg = preset(s, "power-simple-carbon", X50Method::Predicted)?.config;
    let r = run_power_study(s, &cfg)?;
    let mut worst = (0.0, 0.0);
    for g in 0..cfg.grid.len() {
        let rates: Vec<f64> = r.points.iter().filter(|p| p.grid_index == g).map(|p| p.rate).collect();
        let spread = rates.iter().cloned().fold(f64::MIN, f64::max) - rates.iter().cloned().fold(f64::MAX, f64::min);
        if spread > worst.0 {
            worst = (spread, cfg.grid[g][0]);
        }
    }
    let x_mid = cfg.grid[cfg.grid.len() / 2][0];
    let crit = chi2_quantile(1.0 - ALPHA, 1.0)?;
    let curves = cfg
        .presumed
        .iter()
        .map(|m| {
            let c = r.curve(m);
            // limiting power when `m` is presumed and carbon is true
            let f = fisher_blocks(
                &s.model(&["carbon", m[0].as_str()])?,
                &ModelParams::new(vec![0.0, 0.0], cfg.b.clone(), cfg.tau)?,
            )?;
            let sc = &f.schur;
            let ncp = cfg.tau * x_mid * x_mid * sc[(0, 1)].powi(2) / sc[(1, 1)];
            let predicted = noncentral_chi2_sf(crit, 1.0, ncp)?;
            Ok(format!("{} {:.3} (predicted {predicted:.3})", m[0], c[c.len() / 2].rate))
        })
        .collect::<Result<Vec<_>>>()?
        .join(", ");
    Ok((
        worst.0 < 0.05,
        format!(
            "largest spread {:.3} at x = {:.3} g/cm^2; power at x = {x_mid:.3}: {curves}",
            worst.0, worst.1
        ),
    ))
}

/// Mid-grid rates of a composite preset, with paired differences between
/// the composite test and each single-material test.
fn composite_mid_grid(s: &Scenario, name: &str) -> Result<(Vec<(String, f64, f64, f64)>, f64)> {
    let mut cfg = preset(s, name, X50Method::Empirical)?.config;
    cfg.grid = vec![cfg.grid[MID_GRID].clone()];
    cfg.keep_statistics = true;
    let r = run_study(s, &cfg)?.points;
    let composite = &r[0];
    let rows = r[1..]
        .iter()
        .map(|p| {
            let (d, se) = paired_rate_difference(composite, p, cfg.alpha)?;
            Ok((p.presumed[0].clone(), p.rate, d, se))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((rows, composite.rate))
}

fn c7_collinearity(s: &Scenario) -> Result<(bool, String)> {
    let (art, art_rate) = composite_mid_grid(s, "artificial-material")?;
    let dominates = art.iter().all(|(_, _, d, se)| *d > 2.0 * se);
    let (pb, pb_rate) = composite_mid_grid(s, "power-composite-carbon-lead")?;
    let pb_dominates = pb.iter().all(|(_, _, d, se)| *d > 2.0 * se);

    let cond = |m: &[&str]| -> Result<f64> {
        let model = s.model(m)?;
        let params = ModelParams::new(vec![0.0; m.len()], SOURCE_B.to_vec(), SOURCE_TAU)?;
        Ok(condition_number(&fisher_blocks(&model, &params)?.schur))
    };
    let c_pb = cond(&["carbon", "lead"])?;
    let c_art = cond(&["artificial", "carbon"])?;
    let fmt = |rows: &[(String, f64, f64, f64)]| {
        rows.iter()
            .map(|(m, r, d, se)| format!("{m} {r:.3} ({d:+.3} +- {se:.3})"))
            .collect::<Vec<_>>()
            .join(", ")
    };
    Ok((
        dominates && !pb_dominates && c_pb >= 5.0 * c_art,
        format!(
            "artificial+carbon {art_rate:.3} vs {}; carbon+lead {pb_rate:.3} vs {}; condition numbers {c_pb:.1} vs {c_art:.1} (ratio {:.1})",
            fmt(&art),
            fmt(&pb),
            c_pb / c_art
        ),
    ))
}

fn c8_sensitivity(s: &Scenario) -> Result<(bool, String)> {
    let cfg = preset(s, "sensitivity-0.00025", X50Method::Predicted)?.config;
    let perturbed = run_sensitivity_study(s, &cfg)?;
    let clean_cfg = StudyConfig {
        c_scale: None,
        ..cfg.clone()
    };
    let clean = run_power_study(s, &clean_cfg)?;
    let null = &perturbed.points[0];
    let size_inflated = null.rate > ALPHA + 2.0 * null.se;
    let corrected_size = null.corrected_rate.unwrap_or(f64::NAN);
    let size_ok = (corrected_size - ALPHA).abs() <= 0.01;
    let mut below = true;
    for (p, c) in perturbed.points.iter().zip(&clean.points) {
        let cr = p.corrected_rate.unwrap_or(f64::NAN);
        let se = (p.corrected_se.unwrap_or(0.0).powi(2) + c.se.powi(2)).sqrt();
        below &= cr <= c.rate + 2.0 * se;
    }
    let mid = cfg.grid.len() / 2;
    Ok((
        size_inflated && size_ok && below,
        format!(
            "uncorrected size {:.4} (se {:.4}), corrected size {corrected_size:.4}, corrected vs error-free power at x = {:.3}: {:.3} vs {:.3}",
            null.rate,
            null.se,
            cfg.grid[mid][0],
            perturbed.points[mid].corrected_rate.unwrap_or(f64::NAN),
            clean.points[mid].rate
        ),
    ))
}

fn c9_oracles(_: &Scenario) -> Result<(bool, String)> {
    let mut worst_score: f64 = 0.0;
    for seed in 0..100 {
        let inst = random_instance(50_000 + seed, false);
        let p = &inst.params;
        let f = |t: &[f64]| {
            shieldscan_core::estimation::log_likelihood(&inst.model, &with_theta(p, t), &inst.spectrum).unwrap()
        };
        let fd = fd_gradient(&f, &theta(p));
        let analytic = score(&inst.model, p, &inst.spectrum)?.to_vector();
        worst_score = worst_score.max(rel_err(analytic.as_slice(), &fd));
    }
    let mut worst_fisher: f64 = 0.0;
    for seed in 0..20 {
        let inst = random_instance(51_000 + seed, false);
        let p = &inst.params;
        let y = inst.model.mean_spectrum(p)?;
        let f = |t: &[f64]| expected_kernel(&inst.model, &with_theta(p, t), &y);
        let oracle = -fd_hessian(&f, &theta(p)) / p.tau;
        let fisher = fisher_blocks(&inst.model, p)?.full();
        worst_fisher = worst_fisher.max(rel_err(fisher.as_slice(), oracle.as_slice()));
    }
    let mut worst_em: f64 = 0.0;
    let mut monotone = true;
    let opts = EmOptions {
        record_trace: true,
        ..EmOptions::default()
    };
    for seed in 0..30 {
        let inst = random_instance(52_000 + seed, true);
        let tau = inst.params.tau;
        let fit = fit_null_em(&inst.model, &inst.spectrum, tau, &opts)?;
        let trace = fit.trace.as_ref().expect("trace recorded");
        monotone &= trace.windows(2).all(|w| w[1] >= w[0] - 1e-9 * w[0].abs());
        let oracle = null_mle_oracle(&inst.model, inst.spectrum.counts(), tau, &inst.params.b);
        for (a, b) in fit.params.b.iter().zip(&oracle) {
            worst_em = worst_em.max((a - b).abs());
        }
    }
    Ok((
        worst_score < 1e-5 && worst_fisher < 1e-5 && worst_em < 1e-6 && monotone,
        format!(
            "score {worst_score:.1e}, Fisher {worst_fisher:.1e}, EM vs optimizer {worst_em:.1e}, EM traces nondecreasing: {monotone}"
        ),
    ))
}

fn c10_lm_only(s: &Scenario) -> Result<(bool, String)> {
    let mut total = 0;
    let names = preset_names();
    for name in &names {
        let mut cfg = preset(s, name, X50Method::Predicted)?.config;
        cfg.replicates = 16;
        if cfg.c_scale.is_some() {
            cfg.calibration_replicates = Some(16);
        }
        total += run_study(s, &cfg)?.full_fit_calls;
    }
    let model = s.model(&["carbon", "lead"])?;
    let params = ModelParams::new(vec![0.0, 0.0], SOURCE_B.to_vec(), SOURCE_TAU)?;
    let y = simulate_spectrum(&model, &params, 10)?;
    let before = full_fit_calls();
    lm_test(&model, &y, SOURCE_TAU, &EmOptions::default())?;
    let direct = full_fit_calls() - before;
    let search = find_x50(
        s,
        "carbon",
        &X50Options {
            b: SOURCE_B.to_vec(),
            tau: SOURCE_TAU,
            alpha: ALPHA,
            replicates: 50,
            seed: 10,
            bracket: (0.0, 1.0),
            start: None,
            power_tol: 0.02,
            max_evaluations: 3,
        },
    )?;
    // the counter is live: a full fit registers
    let before = full_fit_calls();
    fit_full(&model, &y, SOURCE_TAU, None, &FullFitOptions::default())?;
    let live = full_fit_calls() - before;
    Ok((
        total == 0 && direct == 0 && search.full_fit_calls == 0 && live == 1,
        format!(
            "full fits: {total} over {} presets, {direct} in a direct LM test, {} in an x50 search; counter registers a full fit: {}",
            names.len(),
            search.full_fit_calls,
            live == 1
        ),
    ))
}
