//! Property tests over random models and data.

mod common;

use common::*;
use proptest::prelude::*;
use shieldscan_core::estimation::{fit_full, fit_null_em, log_likelihood};
use shieldscan_core::inference::{fisher_blocks, lm_from_null_fit, lr_from_fits};
use shieldscan_core::{EmOptions, FullFitOptions, ModelParams};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn mean_rate_is_monotone_in_thickness(seed in 0u64..10_000, dx in 0.01f64..1.0) {
        let inst = random_instance(seed, false);
        let p = &inst.params;
        let thicker = ModelParams::new(p.x.iter().map(|x| x + dx).collect(), p.b.clone(), p.tau).unwrap();
        let a = inst.model.mean_rate(p).unwrap();
        let b = inst.model.mean_rate(&thicker).unwrap();
        for (u, v) in a.iter().zip(&b) {
            prop_assert!(v <= u);
        }
    }

    #[test]
    fn null_fit_is_feasible_and_dominates_truth(seed in 0u64..10_000) {
        let inst = random_instance(seed, true);
        let tau = inst.params.tau;
        let fit = fit_null_em(&inst.model, &inst.spectrum, tau, &EmOptions::default()).unwrap();
        prop_assert!(fit.converged);
        prop_assert!(fit.params.b.iter().all(|b| *b >= 0.0));
        prop_assert!(fit.params.x.iter().all(|x| *x == 0.0));
        let truth = log_likelihood(&inst.model, &inst.params, &inst.spectrum).unwrap();
        prop_assert!(fit.log_likelihood >= truth - 1e-8 * truth.abs());
    }

    #[test]
    fn total_counts_are_matched_at_the_null_fit(seed in 0u64..10_000) {
        // the EM fixed point reproduces the total count
        let inst = random_instance(seed, true);
        let tau = inst.params.tau;
        let fit = fit_null_em(&inst.model, &inst.spectrum, tau, &EmOptions::default()).unwrap();
        let mu: f64 = inst.model.mean_spectrum(&fit.params).unwrap().iter().sum();
        let total = inst.spectrum.total() as f64;
        prop_assert!((mu - total).abs() < 1e-6 * total.max(1.0));
    }

    #[test]
    fn test_statistics_are_nonnegative(seed in 0u64..10_000) {
        let inst = random_instance(seed, true);
        let tau = inst.params.tau;
        let null = fit_null_em(&inst.model, &inst.spectrum, tau, &EmOptions::default()).unwrap();
        let lm = lm_from_null_fit(&inst.model, &inst.spectrum, &null);
        // a null fit that zeroes a source leaves no information about x
        prop_assume!(lm.is_ok());
        let lm = lm.unwrap();
        prop_assert!(lm.statistic >= 0.0);
        prop_assert!((0.0..=1.0).contains(&lm.p_value));
        let full = fit_full(&inst.model, &inst.spectrum, tau, Some(&null), &FullFitOptions::default()).unwrap();
        let lr = lr_from_fits(&inst.model, &null, &full).unwrap();
        prop_assert!(lr.statistic >= -1e-9 * null.log_likelihood.abs());
    }

    #[test]
    fn fisher_is_symmetric_positive_semidefinite(seed in 0u64..10_000) {
        let inst = random_instance(seed, false);
        let f = fisher_blocks(&inst.model, &inst.params).unwrap();
        let full = f.full();
        prop_assert!(rel_err(full.as_slice(), full.transpose().as_slice()) < 1e-14);
        let ev = full.symmetric_eigenvalues();
        prop_assert!(ev.min() >= -1e-9 * ev.max());
        let sev = f.schur.symmetric_eigenvalues();
        prop_assert!(sev.min() >= -1e-9 * ev.max());
    }

    #[test]
    fn lm_statistic_is_invariant_to_time_units(seed in 0u64..10_000, k in 0.1f64..10.0) {
        // rescaling tau by k and intensities by 1/k leaves the mean spectrum unchanged
        let inst = random_instance(seed, true);
        let tau = inst.params.tau;
        let opts = EmOptions { tol: 1e-12, ..EmOptions::default() };
        let a = fit_null_em(&inst.model, &inst.spectrum, tau, &opts).unwrap();
        let b = fit_null_em(&inst.model, &inst.spectrum, tau * k, &opts).unwrap();
        let la = lm_from_null_fit(&inst.model, &inst.spectrum, &a);
        let lb = lm_from_null_fit(&inst.model, &inst.spectrum, &b);
        prop_assume!(la.is_ok() && lb.is_ok());
        let (la, lb) = (la.unwrap().statistic, lb.unwrap().statistic);
        prop_assert!((la - lb).abs() < 1e-6 * la.max(1.0), "{} vs {}", la, lb);
    }
}
