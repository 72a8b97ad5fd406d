mod support;

use std::f64::consts::PI;

use ipw_core::entanglement::{
    build_state, estimate_fidelity, estimate_fidelity_exact, fidelity, fit_depol_for_fidelity, fringe_x, fringe_z,
    outcome_probabilities, simulate_measurements, CountsTable, ErrorBudget, IonPhotonState, MeasurementSettings,
};
use ipw_core::radiation::{collection_probabilities, mixing_fidelity, ApertureSpec, CollectionProbabilities};
use num_complex::Complex64 as C64;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

fn grid(n: usize) -> Vec<f64> {
    (0..n).map(|k| 2.0 * PI * k as f64 / n as f64).collect()
}

fn probs(p_v: f64) -> CollectionProbabilities {
    CollectionProbabilities { p_sigma_h: 0.5, p_sigma_v: p_v, p_pi: 0.5 - p_v, solid_angle: 1.0, collected_fraction: 0.1 }
}

fn na06() -> CollectionProbabilities {
    collection_probabilities(&ApertureSpec::from_na(0.6).unwrap(), 1e-9).unwrap()
}

fn elements(s: &IonPhotonState) -> ([f64; 4], C64) {
    let r = s.rho();
    ([r[(0, 0)].re, r[(1, 1)].re, r[(2, 2)].re, r[(3, 3)].re], r[(0, 3)])
}

#[test]
fn na06_state_fidelity() {
    let s = build_state(&na06(), 1.0, &ErrorBudget::ideal()).unwrap();
    assert!((fidelity(&s) - 0.953).abs() < 1.5e-3, "{}", fidelity(&s));
}

#[test]
fn fringes_match_hand_expansion() {
    let budgets = [
        ErrorBudget::ideal(),
        ErrorBudget { depol: 0.1, readout_err: 0.03, rotation_contrast: 0.9 },
        ErrorBudget { depol: 0.0, readout_err: 0.2, rotation_contrast: 0.5 },
    ];
    for b in budgets {
        let s = build_state(&na06(), 0.8, &b).unwrap();
        let (diag, c03) = elements(&s);
        for x in grid(13) {
            let lib = outcome_probabilities(&s, x, None, &b).unwrap();
            let oracle = support::z_joint(diag, c03, x, b.readout_err);
            let lib_x = outcome_probabilities(&s, PI / 2.0, Some(x), &b).unwrap();
            let oracle_x = support::x_joint(diag, c03, x, b.rotation_contrast, b.readout_err);
            for apd in 0..2 {
                for atom in 0..2 {
                    assert!((lib[apd][atom] - oracle[apd][atom]).abs() < 1e-14);
                    assert!((lib_x[apd][atom] - oracle_x[apd][atom]).abs() < 1e-14);
                }
            }
        }
    }
}

#[test]
fn na06_z_fringe_contrast_bound() {
    let p = na06();
    let s = build_state(&p, 1.0, &ErrorBudget::ideal()).unwrap();
    let f = fringe_z(&s, &grid(64), &ErrorBudget::ideal()).unwrap();
    let (lo, hi) = f.iter().fold((1.0f64, 0.0f64), |(lo, hi), q| (lo.min(q.p_up_apd1), hi.max(q.p_up_apd1)));
    assert!(hi - lo <= 1.0 + 1e-12);
    // ψ = 0: APD1 sees |↓H⟩ only
    assert!(f[0].p_up_apd1.abs() < 1e-14);
    // the x-fringe amplitude of P(↑|APD1) equals the coherence times 2 / P(APD1)
    let x = fringe_x(&s, &[0.0, PI], &ErrorBudget::ideal()).unwrap();
    let amp = 0.5 * (x[0].p_up_apd1 - x[1].p_up_apd1);
    let coherence = (p.p_sigma_h * p.p_pi).sqrt();
    assert!((amp - coherence).abs() < 1e-12, "{amp} vs {coherence}");
    let mix = mixing_fidelity(&p, 1.0).unwrap().fidelity;
    assert!((fidelity(&s) - mix).abs() < 1e-15);
}

#[test]
fn x_fringe_amplitude_equals_coherence() {
    for c in [0.0, 0.1, 0.3, 0.5] {
        let kappa = 2.0 * c;
        let s = build_state(&probs(0.0), kappa, &ErrorBudget::ideal()).unwrap();
        let x = fringe_x(&s, &[0.0, PI], &ErrorBudget::ideal()).unwrap();
        let amp = 0.5 * (x[0].p_up_apd1 - x[1].p_up_apd1);
        assert!((amp - c).abs() < 1e-14);
    }
    for p in [0.0, 0.2, 0.7] {
        let s = IonPhotonState::werner(1.0 - p).unwrap();
        let x = fringe_x(&s, &[0.0, PI], &ErrorBudget::ideal()).unwrap();
        assert!((0.5 * (x[0].p_up_apd1 - x[1].p_up_apd1) - 0.5 * (1.0 - p)).abs() < 1e-14);
    }
}

#[test]
fn large_sample_frequencies() {
    let s = build_state(&na06(), 1.0, &ErrorBudget { depol: 0.05, readout_err: 0.02, rotation_contrast: 0.95 }).unwrap();
    let b = ErrorBudget { depol: 0.05, readout_err: 0.02, rotation_contrast: 0.95 };
    let settings = MeasurementSettings::x_scan(&grid(6), 1_000_000, 99);
    let t = simulate_measurements(&s, &settings, &b).unwrap();
    for (k, set) in settings.iter().enumerate() {
        let p = outcome_probabilities(&s, set.photon_rotation, set.atom_phase, &b).unwrap();
        for apd in 0..2 {
            let row = t.rows[2 * k + apd];
            for (count, prob) in [(row.atom_up, p[apd][1]), (row.atom_down, p[apd][0])] {
                let sd = (1e6 * prob * (1.0 - prob)).sqrt();
                assert!((count as f64 - 1e6 * prob).abs() < 3.0 * sd + 1.0);
            }
        }
    }
}

#[test]
fn chi_square_p_values_are_uniform() {
    let s = build_state(&na06(), 0.9, &ErrorBudget { depol: 0.1, ..ErrorBudget::ideal() }).unwrap();
    let b = ErrorBudget::ideal();
    let phases = grid(5);
    let dist = ChiSquared::new(3.0 * phases.len() as f64).unwrap();
    let mut pvals: Vec<f64> = (0..200u64)
        .map(|seed| {
            let settings = MeasurementSettings::x_scan(&phases, 2000, seed);
            let t = simulate_measurements(&s, &settings, &b).unwrap();
            let mut chi2 = 0.0;
            for (k, set) in settings.iter().enumerate() {
                let p = outcome_probabilities(&s, set.photon_rotation, set.atom_phase, &b).unwrap();
                for apd in 0..2 {
                    let row = t.rows[2 * k + apd];
                    for (count, prob) in [(row.atom_up, p[apd][1]), (row.atom_down, p[apd][0])] {
                        let e = 2000.0 * prob;
                        chi2 += (count as f64 - e).powi(2) / e;
                    }
                }
            }
            1.0 - dist.cdf(chi2)
        })
        .collect();
    pvals.sort_by(f64::total_cmp);
    let n = pvals.len() as f64;
    let ks = pvals
        .iter()
        .enumerate()
        .map(|(i, &p)| (p - i as f64 / n).abs().max(((i + 1) as f64 / n - p).abs()))
        .fold(0.0, f64::max);
    // Kolmogorov-Smirnov critical value at the 1% level
    assert!(ks < 1.63 / n.sqrt(), "KS statistic {ks}");
}

#[test]
fn estimator_closure_pure_and_werner() {
    let b = ErrorBudget::ideal();
    for (state, truth) in [(IonPhotonState::target(), 1.0), (IonPhotonState::werner(0.9).unwrap(), 0.925)] {
        let z = simulate_measurements(&state, &MeasurementSettings::z_scan(&grid(8), 1_000_000, 1), &b).unwrap();
        let x = simulate_measurements(&state, &MeasurementSettings::x_scan(&grid(8), 1_000_000, 2), &b).unwrap();
        let est = estimate_fidelity(&z, &x).unwrap();
        assert!((est.fidelity - truth).abs() < 3.0 * est.sigma + 1e-4, "{} ± {} vs {truth}", est.fidelity, est.sigma);
        assert!(est.sigma < 1e-3);
    }
}

#[test]
fn estimator_closure_at_fitted_budget() {
    let p = na06();
    let depol = fit_depol_for_fidelity(&p, 1.0, 0.884).unwrap();
    let b = ErrorBudget { depol, ..ErrorBudget::ideal() };
    let s = build_state(&p, 1.0, &b).unwrap();
    assert!((fidelity(&s) - 0.884).abs() < 1e-12);
    let z = simulate_measurements(&s, &MeasurementSettings::z_scan(&grid(8), 1_000_000, 5), &b).unwrap();
    let x = simulate_measurements(&s, &MeasurementSettings::x_scan(&grid(8), 1_000_000, 6), &b).unwrap();
    let est = estimate_fidelity(&z, &x).unwrap();
    assert!((est.fidelity - 0.884).abs() < 3.0 * est.sigma, "{} ± {}", est.fidelity, est.sigma);
}

#[test]
fn sigma_matches_seed_scatter() {
    let s = IonPhotonState::werner(0.8).unwrap();
    let b = ErrorBudget::ideal();
    let estimates: Vec<(f64, f64)> = (0..60u64)
        .map(|seed| {
            let z = simulate_measurements(&s, &MeasurementSettings::z_scan(&grid(6), 5000, seed), &b).unwrap();
            let x = simulate_measurements(&s, &MeasurementSettings::x_scan(&grid(6), 5000, seed + 1000), &b).unwrap();
            let e = estimate_fidelity(&z, &x).unwrap();
            (e.fidelity, e.sigma)
        })
        .collect();
    let n = estimates.len() as f64;
    let mean = estimates.iter().map(|e| e.0).sum::<f64>() / n;
    let sd = (estimates.iter().map(|e| (e.0 - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    let sigma = estimates.iter().map(|e| e.1).sum::<f64>() / n;
    assert!((sd / sigma - 1.0).abs() < 0.3, "scatter {sd} vs reported {sigma}");
}

#[test]
fn counts_table_needs_data() {
    let empty = CountsTable::default();
    assert!(estimate_fidelity(&empty, &empty).is_err());
}

fn random_budget(rng: &mut ChaCha8Rng) -> (CollectionProbabilities, f64, ErrorBudget) {
    let pv = rng.random_range(0.0..0.2);
    let kappa = rng.random_range(0.6..1.0);
    let depol = rng.random_range(0.0..0.3);
    (probs(pv), kappa, ErrorBudget { depol, ..ErrorBudget::ideal() })
}

#[test]
fn estimator_closure_random_states() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for k in 0..10u64 {
        let (p, kappa, b) = random_budget(&mut rng);
        let (z_seed, x_seed): (u64, u64) = (rng.random(), rng.random());
        let s = build_state(&p, kappa, &b).unwrap();
        let truth = fidelity(&s);
        let z = simulate_measurements(&s, &MeasurementSettings::z_scan(&grid(8), 1_000_000, z_seed), &b).unwrap();
        let x = simulate_measurements(&s, &MeasurementSettings::x_scan(&grid(8), 1_000_000, x_seed), &b).unwrap();
        let est = estimate_fidelity(&z, &x).unwrap();
        assert!((est.fidelity - truth).abs() < 3.0 * est.sigma, "state {k}: {} ± {} vs {truth}", est.fidelity, est.sigma);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn build_state_is_density_operator(pv in 0.0f64..0.5, kappa in 0.0f64..=1.0, depol in 0.0f64..=1.0) {
        let s = build_state(&probs(pv), kappa, &ErrorBudget { depol, ..ErrorBudget::ideal() }).unwrap();
        let r = s.rho();
        let trace: C64 = r.trace();
        prop_assert!((trace.re - 1.0).abs() < 1e-12 && trace.im.abs() < 1e-15);
        prop_assert!((r - r.adjoint()).iter().all(|z| z.norm() < 1e-15));
        prop_assert!(s.min_eigenvalue() > -1e-10);
    }

    #[test]
    fn zero_budget_fidelity_equals_mixing_fidelity(pv in 0.0f64..0.5, kappa in 0.0f64..=1.0) {
        let p = probs(pv);
        let s = build_state(&p, kappa, &ErrorBudget::ideal()).unwrap();
        prop_assert_eq!(fidelity(&s), mixing_fidelity(&p, kappa).unwrap().fidelity);
    }

    #[test]
    fn fringes_are_two_pi_periodic(x in -10.0f64..10.0, pv in 0.0f64..0.3, depol in 0.0f64..0.5, r in 0.0f64..0.2, c in 0.5f64..=1.0) {
        let b = ErrorBudget { depol, readout_err: r, rotation_contrast: c };
        let s = build_state(&probs(pv), 1.0, &b).unwrap();
        let a = fringe_z(&s, &[x, x + 2.0 * PI], &b).unwrap();
        let bx = fringe_x(&s, &[x, x + 2.0 * PI], &b).unwrap();
        prop_assert!((a[0].p_up_apd1 - a[1].p_up_apd1).abs() < 1e-12 && (a[0].p_up_apd2 - a[1].p_up_apd2).abs() < 1e-12);
        prop_assert!((bx[0].p_up_apd1 - bx[1].p_up_apd1).abs() < 1e-12 && (bx[0].p_up_apd2 - bx[1].p_up_apd2).abs() < 1e-12);
    }

    /// On exact probabilities the estimator never overstates the fidelity.
    #[test]
    fn estimator_is_a_lower_bound(pv in 0.0f64..0.5, kappa in 0.01f64..=1.0, depol in 0.0f64..0.9, r in 0.0f64..0.5, c in 0.05f64..=1.0, n in 3usize..12) {
        let b = ErrorBudget { depol, readout_err: r, rotation_contrast: c };
        let s = build_state(&probs(pv), kappa, &b).unwrap();
        let z = CountsTable::from_probabilities(&s, &MeasurementSettings::z_scan(&grid(n), 1, 0), &b).unwrap();
        let x = CountsTable::from_probabilities(&s, &MeasurementSettings::x_scan(&grid(n), 1, 0), &b).unwrap();
        let est = estimate_fidelity_exact(&z, &x).unwrap();
        prop_assert!(est.fidelity <= fidelity(&s) + 1e-9, "{} > {}", est.fidelity, fidelity(&s));
    }
}
