use std::f64::consts::TAU;
use std::path::Path;

use ipw_core::bloch::scan_pulse_durations;
use ipw_core::entanglement::{
    build_state, estimate_fidelity, fidelity, fit_depol_for_fidelity, fringe_x, fringe_z, simulate_measurements,
    write_fringe_csv, ErrorBudget, MeasurementSettings,
};
use ipw_core::fmt::fmt_sig;
use ipw_core::photon::stream_io::{read_path, write_binary, write_csv};
use ipw_core::photon::{
    coincidence_histogram, g2_window_scan, g2_zero, simulate_stream, tune_noise, write_window_scan_csv, ClickStream, G2Result,
    SourceModel, Window,
};
use ipw_core::radiation::{
    aperture_epsilon, circular_tradeoff_curve, collection_probabilities, mixing_fidelity, solid_angle,
    solve_slit_for_solid_angle, tradeoff_curve, ApertureSpec,
};

use crate::config::RunConfig;
use crate::output::{OutputDir, Plot};
use crate::CliError;

fn rt<E: std::fmt::Display>(e: E) -> CliError {
    CliError::runtime(e.to_string())
}

fn na_label(na: f64) -> String {
    format!("na{}", fmt_sig(na, 6))
}

/// The full cone at `na` plus circular and horizontal stops passing
/// `fraction` of its solid angle.
fn stop_set(na: f64, fraction: f64) -> Result<[(&'static str, ApertureSpec); 3], CliError> {
    let full = ApertureSpec::from_na(na).map_err(rt)?;
    let alpha1 = full.alpha1();
    let omega = fraction * solid_angle(&full).map_err(rt)?;
    let circ = ApertureSpec::circular((1.0 - fraction * (1.0 - alpha1.cos())).acos()).map_err(rt)?;
    let slit = ApertureSpec::slit(alpha1, solve_slit_for_solid_angle(alpha1, omega).map_err(rt)?).map_err(rt)?;
    Ok([("full", full), ("circular_stop", circ), ("slit_stop", slit)])
}

fn alphas(a: &ApertureSpec) -> (f64, f64) {
    match *a {
        ApertureSpec::Circular { alpha1 } => (alpha1, alpha1),
        ApertureSpec::Slit { alpha1, alpha2 } => (alpha1, alpha2),
    }
}

pub fn bloch(config: &RunConfig) -> Result<(), CliError> {
    let atom = config.atom_spec()?;
    let grid: Vec<f64> = config.bloch.t_p_ns.iter().map(|t| t * 1e-9).collect();
    let curve = scan_pulse_durations(&atom, &grid).map_err(rt)?;
    let out = OutputDir::create(config, "bloch")?;
    out.write_csv("bloch_error.csv", |w| curve.write_csv(w))?;
    out.plot(
        "bloch_error.gp",
        &Plot {
            title: "double-excitation error".into(),
            xlabel: "pulse duration (ns)".into(),
            ylabel: "epsilon_d".into(),
            log_x: true,
            log_y: true,
            series: vec![("bloch_error.csv".into(), 1, 2, "epsilon_d".into())],
        },
    )
}

pub fn aperture(config: &RunConfig) -> Result<(), CliError> {
    let a = &config.aperture;
    let tol = a.tolerance;
    let out = OutputDir::create(config, "aperture")?;
    let circ = circular_tradeoff_curve(a.circular_max_na.asin(), a.points, a.coherence, tol).map_err(rt)?;
    out.write_csv("circular.csv", |w| circ.write_csv(w))?;
    let mut series = vec![("circular.csv".to_string(), 1, 3, "circular".to_string())];
    for &na in &a.slit_na {
        let curve = tradeoff_curve(na.asin(), a.points, a.coherence, tol).map_err(rt)?;
        let name = format!("slit_{}.csv", na_label(na));
        out.write_csv(&name, |w| curve.write_csv(w))?;
        series.push((name, 1, 3, format!("slit, NA {}", fmt_sig(na, 6))));
    }

    let mut rows = Vec::new();
    for (label, spec) in stop_set(a.anchor_na, a.stop_fraction)? {
        let (probs, eps) = aperture_epsilon(&spec, a.coherence, tol).map_err(rt)?;
        rows.push((label, spec, probs, eps));
    }
    out.write_csv("anchors.csv", |w| {
        writeln!(w, "aperture,na,alpha1_rad,alpha2_rad,solid_angle_sr,p_sigma_h,p_sigma_v,p_pi,epsilon")?;
        for (label, spec, p, eps) in &rows {
            let (a1, a2) = alphas(spec);
            writeln!(
                w,
                "{label},{},{},{},{},{},{},{},{}",
                fmt_sig(a.anchor_na, 12),
                fmt_sig(a1, 12),
                fmt_sig(a2, 12),
                fmt_sig(p.solid_angle, 12),
                fmt_sig(p.p_sigma_h, 12),
                fmt_sig(p.p_sigma_v, 12),
                fmt_sig(p.p_pi, 12),
                fmt_sig(*eps, 12)
            )?;
        }
        Ok(())
    })?;
    for (label, _, p, eps) in &rows {
        println!("{label}: solid_angle_sr={} epsilon={}", fmt_sig(p.solid_angle, 6), fmt_sig(*eps, 6));
    }
    out.plot(
        "aperture.gp",
        &Plot {
            title: "polarization mixing vs collected solid angle".into(),
            xlabel: "solid angle (sr)".into(),
            ylabel: "epsilon".into(),
            log_x: false,
            log_y: false,
            series,
        },
    )
}

/// Source model with tuned noise applied, and the number of trials to run.
fn g2_source(config: &RunConfig) -> Result<(SourceModel, u64), CliError> {
    let g = &config.g2;
    match &g.tune {
        None => Ok((config.source, g.trials)),
        Some(t) => {
            let window = Window { offset_ps: g.window_offset_ps, width_ps: g.window_ps };
            let tuned = tune_noise(&config.source, &config.timing, window, t.dark_floor, t.g2_target)
                .map_err(|e| CliError::validation(Some("g2.tune"), e.to_string()))?;
            let model = SourceModel { dark_rate_hz: tuned.dark_rate_hz, leakage_rate_hz: tuned.leakage_rate_hz, ..config.source };
            let trials = tuned.trials_for_peak(t.norm_peak_counts);
            if trials == 0 {
                return Err(CliError::validation(Some("g2.tune.norm_peak_counts"), "tuned run needs zero trials"));
            }
            println!(
                "tuned: dark_rate_hz={} leakage_rate_hz={} trials={trials}",
                fmt_sig(model.dark_rate_hz, 8),
                fmt_sig(model.leakage_rate_hz, 8)
            );
            Ok((model, trials))
        }
    }
}

pub fn g2_simulate(config: &RunConfig) -> Result<(), CliError> {
    let (model, trials) = g2_source(config)?;
    let stream = simulate_stream(&model, &config.timing, trials, config.seed).map_err(rt)?;
    let out = OutputDir::create(config, "g2")?;
    let name = &config.g2.stream_file;
    if name.to_ascii_lowercase().ends_with(".csv") {
        out.write_csv(name, |w| write_csv(&stream, w))?;
    } else {
        let path = out.path(name);
        let file = std::fs::File::create(&path).map_err(|e| CliError::runtime(format!("{}: {e}", path.display())))?;
        write_binary(&stream, std::io::BufWriter::new(file)).map_err(|e| CliError::runtime(format!("{}: {e}", path.display())))?;
        println!("wrote {}", path.display());
    }
    analyze_stream(config, &out, &stream)
}

pub fn g2_analyze(config: &RunConfig, input: &Path) -> Result<(), CliError> {
    let stream = read_path(input).map_err(|e| CliError::validation(Some("input"), format!("{}: {e}", input.display())))?;
    let out = OutputDir::create(config, "g2")?;
    analyze_stream(config, &out, &stream)
}

fn analyze_stream(config: &RunConfig, out: &OutputDir, stream: &ClickStream) -> Result<(), CliError> {
    let g = &config.g2;
    let timing = &config.timing;
    let hist = coincidence_histogram(stream, timing, g.histogram_bin_ps, g.histogram_peaks * timing.rep_period_ps).map_err(rt)?;
    out.write_csv("g2_histogram.csv", |w| hist.write_csv(w))?;
    let scan = g2_window_scan(stream, timing, g.window_offset_ps, &g.scan_ps, g.norm_peaks).map_err(rt)?;
    out.write_csv("g2_window_scan.csv", |w| write_window_scan_csv(&scan, w))?;
    let window = Window { offset_ps: g.window_offset_ps, width_ps: g.window_ps };
    let r = g2_zero(stream, timing, window, g.norm_peaks).map_err(rt)?;
    out.write_csv("g2_summary.csv", |w| {
        writeln!(w, "window_ns,offset_ns,g2,g2_sigma,n_zero,n_norm,clicks")?;
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            fmt_sig(g.window_ps as f64 / 1000.0, 12),
            fmt_sig(g.window_offset_ps as f64 / 1000.0, 12),
            fmt_sig(r.g2, 12),
            fmt_sig(r.sigma, 12),
            r.n_zero,
            fmt_sig(r.n_norm, 12),
            stream.len()
        )
    })?;
    println!("{}", summary_line(&r));
    out.plot(
        "g2_histogram.gp",
        &Plot {
            title: "coincidence histogram".into(),
            xlabel: "delay (ps)".into(),
            ylabel: "coincidences".into(),
            log_x: false,
            log_y: false,
            series: vec![("g2_histogram.csv".into(), 1, 2, "coincidences".into())],
        },
    )?;
    out.plot(
        "g2_window_scan.gp",
        &Plot {
            title: "g2(0) vs window".into(),
            xlabel: "window (ns)".into(),
            ylabel: "g2(0)".into(),
            log_x: false,
            log_y: true,
            series: vec![("g2_window_scan.csv".into(), 1, 2, "g2(0)".into())],
        },
    )
}

fn summary_line(r: &G2Result) -> String {
    format!(
        "g2 window_ns={} g2={} sigma={} n_zero={} n_norm={}",
        fmt_sig(r.window_ps as f64 / 1000.0, 6),
        fmt_sig(r.g2, 6),
        fmt_sig(r.sigma, 6),
        r.n_zero,
        fmt_sig(r.n_norm, 8)
    )
}

fn grid(n: usize, closed: bool) -> Vec<f64> {
    let d = if closed { (n - 1) as f64 } else { n as f64 };
    (0..n).map(|k| TAU * k as f64 / d).collect()
}

pub fn entangle(config: &RunConfig) -> Result<(), CliError> {
    let e = &config.entangle;
    let tol = config.aperture.tolerance;
    let set = stop_set(e.full_na, e.stop_fraction)?;
    let probs = set
        .iter()
        .map(|(_, spec)| collection_probabilities(spec, tol).map_err(rt))
        .collect::<Result<Vec<_>, _>>()?;
    let mut budget = config.budget;
    if e.fit_budget {
        budget = ErrorBudget { depol: fit_depol_for_fidelity(&probs[0], e.kappa, e.fit_target).map_err(rt)?, ..budget };
        println!("fitted depol={} for full-aperture fidelity {}", fmt_sig(budget.depol, 8), fmt_sig(e.fit_target, 6));
    }

    let out = OutputDir::create(config, "entangle")?;
    let fringe_grid = grid(e.fringe_points, true);
    let analysis = grid(e.grid_points, false);
    let mut summary = Vec::new();
    for (i, ((label, _), p)) in set.iter().zip(&probs).enumerate() {
        let state = build_state(p, e.kappa, &budget).map_err(rt)?;
        let truth = fidelity(&state);
        let fz = fringe_z(&state, &fringe_grid, &budget).map_err(rt)?;
        let fx = fringe_x(&state, &fringe_grid, &budget).map_err(rt)?;
        out.write_csv(&format!("fringe_z_{label}.csv"), |w| write_fringe_csv(&fz, w))?;
        out.write_csv(&format!("fringe_x_{label}.csv"), |w| write_fringe_csv(&fx, w))?;

        let base = config.seed.wrapping_add(2 * i as u64);
        let z = simulate_measurements(&state, &MeasurementSettings::z_scan(&analysis, e.shots, base), &budget).map_err(rt)?;
        let x = simulate_measurements(&state, &MeasurementSettings::x_scan(&analysis, e.shots, base.wrapping_add(1)), &budget)
            .map_err(rt)?;
        out.write_csv(&format!("counts_z_{label}.csv"), |w| z.write_csv(w))?;
        out.write_csv(&format!("counts_x_{label}.csv"), |w| x.write_csv(w))?;
        let est = estimate_fidelity(&z, &x).map_err(rt)?;
        let mixing = mixing_fidelity(p, e.kappa).map_err(rt)?;
        println!(
            "{label}: fidelity_model={} fidelity_estimate={} sigma={}",
            fmt_sig(truth, 6),
            fmt_sig(est.fidelity, 6),
            fmt_sig(est.sigma, 3)
        );
        summary.push((*label, p.solid_angle, mixing.epsilon, truth, est));
    }
    out.write_csv("entangle_summary.csv", |w| {
        writeln!(w, "aperture,solid_angle_sr,mixing_epsilon,depol,fidelity_model,fidelity_estimate,fidelity_sigma")?;
        for (label, omega, eps, truth, est) in &summary {
            writeln!(
                w,
                "{label},{},{},{},{},{},{}",
                fmt_sig(*omega, 12),
                fmt_sig(*eps, 12),
                fmt_sig(budget.depol, 12),
                fmt_sig(*truth, 12),
                fmt_sig(est.fidelity, 12),
                fmt_sig(est.sigma, 12)
            )?;
        }
        Ok(())
    })?;
    out.plot(
        "entangle_fringes.gp",
        &Plot {
            title: "ion-photon analysis fringes, APD1".into(),
            xlabel: "analysis angle (rad)".into(),
            ylabel: "P(up | APD1)".into(),
            log_x: false,
            log_y: false,
            series: set
                .iter()
                .flat_map(|(label, _)| {
                    ["z", "x"].map(|b| (format!("fringe_{b}_{label}.csv"), 1, 2, format!("{b} basis, {label}")))
                })
                .collect(),
        },
    )
}
