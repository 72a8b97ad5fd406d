mod support;

use ipw_core::atomic::{AtomSpec, Sublevel};
use ipw_core::bloch::{
    double_excitation_error, double_excitation_run, evolve, scan_pulse_durations, DynamicState, PulseSpec, Resolution, Sink,
};
use proptest::prelude::*;

fn tau() -> f64 {
    AtomSpec::default().tau_e
}

#[test]
fn free_decay_branching_from_excited_state() {
    let atom = AtomSpec::default();
    let mut pulse = PulseSpec::pi_pulse(tau());
    pulse.rabi = 0.0;
    let init = DynamicState::pure(Sublevel::excited()).unwrap();
    let traj = evolve(&atom, &pulse, &init, tau() / 200.0, 30.0 * tau()).unwrap();
    let (_, end) = traj.last().unwrap();
    assert!((end.sink_total() - 0.75).abs() < 1e-4);
    assert_eq!(end.bad(), 0.0);
    // the σ⁺ : π weights from the lowering-operator construction
    let sigma = support::cg_by_lowering(0.5, -0.5, 1.0, 1.0, 0.5, 0.5).powi(2);
    let pi = support::cg_by_lowering(0.5, 0.5, 1.0, 0.0, 0.5, 0.5).powi(2);
    let ratio = end.sink(Sink::DownGood) / end.sink(Sink::UpGood);
    assert!((ratio - sigma / pi).abs() < 1e-6, "{ratio}");
    assert!((sigma / pi - 2.0).abs() < 1e-12);
}

#[test]
fn matches_ten_level_oracle() {
    let atom = AtomSpec::default();
    for f in [0.1, 1.0, 3.0] {
        let lib = double_excitation_error(&atom, f * tau()).unwrap();
        let oracle = support::double_excitation_oracle(f * tau(), tau(), 0.75, 400, 40.0);
        assert!((lib - oracle).abs() < 1e-7 + 1e-5 * oracle, "T_p = {f} tau: {lib} vs {oracle}");
    }
}

#[test]
fn anchor_and_impulsive_limit() {
    let atom = AtomSpec::default();
    let at_tau = double_excitation_error(&atom, 10e-9).unwrap();
    assert!(at_tau <= 0.004, "{at_tau}");
    assert!(at_tau > 0.002, "{at_tau}");
    let impulsive = double_excitation_error(&atom, 1e-3 * tau()).unwrap();
    assert!(impulsive < 1e-4, "{impulsive}");
}

#[test]
fn longer_pulses_are_worse_below_the_peak() {
    let atom = AtomSpec::default();
    let grid: Vec<f64> = [0.1, 1.0, 2.0, 5.0].iter().map(|f| f * tau()).collect();
    let curve = scan_pulse_durations(&atom, &grid).unwrap();
    for w in curve.points.windows(2) {
        assert!(w[1].epsilon_d > w[0].epsilon_d, "{:?}", curve.points);
    }
    let e10 = double_excitation_error(&atom, 10e-9).unwrap();
    let e20 = double_excitation_error(&atom, 20e-9).unwrap();
    assert!(e20 >= e10);
    for p in &curve.points {
        assert!((0.0..=1.0).contains(&p.epsilon_d));
    }
}

#[test]
fn single_point_grid_matches_direct_call() {
    let atom = AtomSpec::default();
    let curve = scan_pulse_durations(&atom, &[tau()]).unwrap();
    assert_eq!(curve.points[0].epsilon_d, double_excitation_error(&atom, tau()).unwrap());
    assert!(scan_pulse_durations(&atom, &[]).is_err());
    assert!(scan_pulse_durations(&atom, &[-1.0]).is_err());
}

#[test]
fn step_halving_converges() {
    let atom = AtomSpec::default();
    for f in [0.1, 1.0, 2.0] {
        let r = Resolution::default();
        let a = double_excitation_run(&atom, f * tau(), r).unwrap().epsilon_d;
        let b = double_excitation_run(&atom, f * tau(), r.refined()).unwrap().epsilon_d;
        assert!((a - b).abs() < 1e-6, "T_p = {f} tau: {a} vs {b}");
    }
}

#[test]
fn error_vanishes_without_d_return_path() {
    let mut last = f64::INFINITY;
    for leak in [1e-2, 1e-4, 1e-6] {
        let atom = AtomSpec::new(10e-9, 1.0 - leak).unwrap();
        let e = double_excitation_error(&atom, 10e-9).unwrap();
        assert!(e < last);
        assert!(e <= 1.5 * leak, "leak {leak}: {e}");
        last = e;
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    /// Trace + sinks is conserved, sinks never decrease and ρ stays positive
    /// for any pulse length and branching ratio.
    #[test]
    fn trajectory_invariants(f in 0.01f64..4.0, branch in 0.05f64..0.99) {
        let atom = AtomSpec::new(10e-9, branch).unwrap();
        let run = double_excitation_run(&atom, f * atom.tau_e, Resolution::default()).unwrap();
        prop_assert!(run.max_norm_drift < 1e-9, "drift {}", run.max_norm_drift);
        prop_assert!(run.sinks_monotone);
        prop_assert!(run.final_state.min_eigenvalue() > -1e-12);
        prop_assert!((0.0..=1.0).contains(&run.epsilon_d));
    }

    #[test]
    fn evolve_keeps_density_operator(f in 0.1f64..3.0, det in -2e8f64..2e8) {
        let atom = AtomSpec::default();
        let mut pulse = PulseSpec::pi_pulse(f * atom.tau_e);
        pulse.detuning = det;
        let init = DynamicState::pure(Sublevel::stretch()).unwrap();
        let dt = (atom.tau_e / 200.0).min(pulse.duration / 400.0);
        let traj = evolve(&atom, &pulse, &init, dt, pulse.duration + 2.0 * atom.tau_e).unwrap();
        let mut prev = [0.0; 4];
        for (_, s) in &traj {
            prop_assert!((s.total_probability() - 1.0).abs() < 1e-9);
            prop_assert!(s.sinks.iter().zip(prev.iter()).all(|(a, b)| a >= b));
            prop_assert!(s.min_eigenvalue() > -1e-10);
            prev = s.sinks;
        }
    }
}
