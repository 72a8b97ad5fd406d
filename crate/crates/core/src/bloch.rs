//! Optical Bloch equations for pulsed 650 nm excitation out of D₃/₂.
//!
//! The coherent block holds the four D₃/₂ and two P₁/₂ sublevels. S₁/₂ is
//! never driven, so it is kept as four incoherent sinks tagged by which P₁/₂
//! sublevel fed them: decays out of |e⟩ = P₁/₂(+1/2) are "good", decays out
//! of P₁/₂(−1/2) are "bad". D-bound decays go back into the coherent block.

use std::io::{self, Write};

use nalgebra::SMatrix;
use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::atomic::{decay_channels, AtomSpec, Line, Sublevel, Term};
use crate::fmt::fmt_sig;

/// Number of coherently coupled levels.
pub const N_LEVELS: usize = 6;

pub type DensityMatrix = SMatrix<C64, N_LEVELS, N_LEVELS>;

/// Largest admissible step as a fraction of the excited-state lifetime.
pub const MAX_STEP_FRACTION: f64 = 1.0 / 200.0;

/// Post-pulse free decay, in lifetimes, before checking sink convergence.
const MIN_DECAY_LIFETIMES: f64 = 15.0;
const SINK_CONVERGENCE: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BlochError {
    #[error("initial state not normalized: trace + sinks = {0}")]
    NotNormalized(f64),
    #[error("step {dt:e} s exceeds tau_e/200 = {max:e} s")]
    StepTooLarge { dt: f64, max: f64 },
    #[error("invalid {name}: {value}")]
    InvalidParameter { name: &'static str, value: f64 },
}

/// Coherent-block index of a D₃/₂ or P₁/₂ sublevel. D occupies 0..4 in
/// ascending mJ, then P(−1/2), P(+1/2).
pub fn level_index(s: Sublevel) -> Option<usize> {
    let tm = s.m.twice();
    match s.term {
        Term::D32 => Some(((tm + 3) / 2) as usize),
        Term::P12 => Some(if tm < 0 { 4 } else { 5 }),
        Term::S12 => None,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PulseShape {
    Square,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PulseSpec {
    /// Pulse duration T_p in seconds.
    pub duration: f64,
    /// Rabi rate of the D₃/₂(+3/2) ↔ |e⟩ drive, rad/s.
    pub rabi: f64,
    /// Drive detuning, rad/s.
    pub detuning: f64,
    pub shape: PulseShape,
}

impl PulseSpec {
    /// Resonant square π pulse on the stretch transition: Ω = π/T_p.
    pub fn pi_pulse(duration: f64) -> Self {
        PulseSpec {
            duration,
            rabi: std::f64::consts::PI / duration,
            detuning: 0.0,
            shape: PulseShape::Square,
        }
    }

    fn validate(&self) -> Result<(), BlochError> {
        if !(self.duration > 0.0) || !self.duration.is_finite() {
            return Err(BlochError::InvalidParameter { name: "pulse duration", value: self.duration });
        }
        if !self.rabi.is_finite() || self.rabi < 0.0 {
            return Err(BlochError::InvalidParameter { name: "rabi rate", value: self.rabi });
        }
        if !self.detuning.is_finite() {
            return Err(BlochError::InvalidParameter { name: "detuning", value: self.detuning });
        }
        Ok(())
    }
}

/// Sink slots: S↓ and S↑, fed from |e⟩ (good) or from P₁/₂(−1/2) (bad).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sink {
    DownGood = 0,
    UpGood = 1,
    DownBad = 2,
    UpBad = 3,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DynamicState {
    pub rho: DensityMatrix,
    pub sinks: [f64; 4],
}

impl DynamicState {
    /// All population in one coherent-block sublevel.
    pub fn pure(level: Sublevel) -> Option<Self> {
        let i = level_index(level)?;
        let mut rho = DensityMatrix::zeros();
        rho[(i, i)] = C64::new(1.0, 0.0);
        Some(DynamicState { rho, sinks: [0.0; 4] })
    }

    pub fn population(&self, level: Sublevel) -> f64 {
        level_index(level).map_or(0.0, |i| self.rho[(i, i)].re)
    }

    pub fn sink(&self, s: Sink) -> f64 {
        self.sinks[s as usize]
    }

    pub fn good(&self) -> f64 {
        self.sinks[Sink::DownGood as usize] + self.sinks[Sink::UpGood as usize]
    }

    pub fn bad(&self) -> f64 {
        self.sinks[Sink::DownBad as usize] + self.sinks[Sink::UpBad as usize]
    }

    pub fn sink_total(&self) -> f64 {
        self.sinks.iter().sum()
    }

    /// trace(ρ) + Σ sinks.
    pub fn total_probability(&self) -> f64 {
        self.rho.trace().re + self.sink_total()
    }

    /// Smallest eigenvalue of the Hermitian part of ρ.
    pub fn min_eigenvalue(&self) -> f64 {
        let herm = (self.rho + self.rho.adjoint()) * C64::new(0.5, 0.0);
        herm.symmetric_eigenvalues().iter().cloned().fold(f64::INFINITY, f64::min)
    }

    fn axpy(&self, a: f64, d: &DynamicState) -> DynamicState {
        let mut sinks = self.sinks;
        for (s, ds) in sinks.iter_mut().zip(d.sinks.iter()) {
            *s += a * ds;
        }
        DynamicState { rho: self.rho + d.rho * C64::new(a, 0.0), sinks }
    }
}

/// Lindblad generator for one atom and drive.
#[derive(Debug, Clone)]
struct Generator {
    hamiltonian: DensityMatrix,
    /// Total decay rate of each coherent level (nonzero only for P).
    loss: [f64; N_LEVELS],
    /// (source, target, rate) for decays that return to the coherent block.
    refeed: Vec<(usize, usize, f64)>,
    /// (source, sink slot, rate) for decays into S.
    to_sink: Vec<(usize, usize, f64)>,
}

impl Generator {
    fn new(atom: &AtomSpec, pulse: Option<&PulseSpec>) -> Self {
        let mut hamiltonian = DensityMatrix::zeros();
        if let Some(p) = pulse {
            let reference = atom
                .channel(Sublevel::excited(), Sublevel::stretch())
                .map(|c| c.cg2)
                .expect("stretch transition exists");
            for c in atom.channels.iter().filter(|c| c.line == Line::Nm650 && c.q == -1) {
                let (u, l) = (level_index(c.upper).unwrap(), level_index(c.lower).unwrap());
                let half_rabi = 0.5 * p.rabi * (c.cg2 / reference).sqrt();
                hamiltonian[(u, l)] = C64::new(half_rabi, 0.0);
                hamiltonian[(l, u)] = C64::new(half_rabi, 0.0);
            }
            for i in 4..N_LEVELS {
                hamiltonian[(i, i)] = C64::new(-p.detuning, 0.0);
            }
        }

        let mut loss = [0.0; N_LEVELS];
        let mut refeed = Vec::new();
        let mut to_sink = Vec::new();
        for upper in Term::P12.sublevels() {
            let u = level_index(upper).unwrap();
            let bad = upper != Sublevel::excited();
            for (c, rate) in decay_channels(upper, atom).expect("P sublevel") {
                loss[u] += rate;
                match c.lower.term {
                    Term::D32 => refeed.push((u, level_index(c.lower).unwrap(), rate)),
                    _ => {
                        let down = c.lower.m.twice() < 0;
                        let slot = match (down, bad) {
                            (true, false) => Sink::DownGood,
                            (false, false) => Sink::UpGood,
                            (true, true) => Sink::DownBad,
                            (false, true) => Sink::UpBad,
                        };
                        to_sink.push((u, slot as usize, rate));
                    }
                }
            }
        }
        Generator { hamiltonian, loss, refeed, to_sink }
    }

    fn rhs(&self, s: &DynamicState) -> DynamicState {
        let h = &self.hamiltonian;
        let rho = &s.rho;
        let minus_i = C64::new(0.0, -1.0);
        let mut d = (h * rho - rho * h) * minus_i;
        for i in 0..N_LEVELS {
            for j in 0..N_LEVELS {
                let g = 0.5 * (self.loss[i] + self.loss[j]);
                if g != 0.0 {
                    d[(i, j)] -= rho[(i, j)] * g;
                }
            }
        }
        for &(u, l, rate) in &self.refeed {
            d[(l, l)] += rho[(u, u)] * rate;
        }
        let mut sinks = [0.0; 4];
        for &(u, slot, rate) in &self.to_sink {
            sinks[slot] += rate * rho[(u, u)].re;
        }
        DynamicState { rho: d, sinks }
    }

    fn rk4_step(&self, s: &DynamicState, dt: f64) -> DynamicState {
        let k1 = self.rhs(s);
        let k2 = self.rhs(&s.axpy(0.5 * dt, &k1));
        let k3 = self.rhs(&s.axpy(0.5 * dt, &k2));
        let k4 = self.rhs(&s.axpy(dt, &k3));
        let mut out = s.axpy(dt / 6.0, &k1);
        out = out.axpy(dt / 3.0, &k2);
        out = out.axpy(dt / 3.0, &k3);
        out.axpy(dt / 6.0, &k4)
    }

    /// `n` equal steps covering `span`.
    fn run(&self, mut s: DynamicState, span: f64, n: usize, mut observe: impl FnMut(&DynamicState)) -> DynamicState {
        let dt = span / n as f64;
        for _ in 0..n {
            s = self.rk4_step(&s, dt);
            observe(&s);
        }
        s
    }
}

fn check_normalized(s: &DynamicState) -> Result<(), BlochError> {
    let total = s.total_probability();
    if (total - 1.0).abs() > 1e-9 || s.sinks.iter().any(|&x| x < 0.0) {
        return Err(BlochError::NotNormalized(total));
    }
    Ok(())
}

fn check_step(atom: &AtomSpec, dt: f64) -> Result<(), BlochError> {
    let max = atom.tau_e * MAX_STEP_FRACTION;
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(BlochError::InvalidParameter { name: "dt", value: dt });
    }
    if dt > max * (1.0 + 1e-12) {
        return Err(BlochError::StepTooLarge { dt, max });
    }
    Ok(())
}

/// Fixed-step RK4 evolution: drive on during [0, T_p), free decay after.
/// Returns (t, state) after every step, starting with the initial state at t = 0.
/// A step straddling the pulse end is split so the drive switches off exactly
/// at T_p.
pub fn evolve(
    atom: &AtomSpec,
    pulse: &PulseSpec,
    initial: &DynamicState,
    dt: f64,
    t_end: f64,
) -> Result<Vec<(f64, DynamicState)>, BlochError> {
    pulse.validate()?;
    check_normalized(initial)?;
    check_step(atom, dt)?;
    if !(t_end >= pulse.duration) {
        return Err(BlochError::InvalidParameter { name: "t_end", value: t_end });
    }

    let driven = Generator::new(atom, Some(pulse));
    let free = Generator::new(atom, None);
    let mut out = vec![(0.0, initial.clone())];

    let n_pulse = (pulse.duration / dt).ceil() as usize;
    let mut s = initial.clone();
    let mut t = 0.0;
    s = driven.run(s, pulse.duration, n_pulse, |st| {
        t += pulse.duration / n_pulse as f64;
        out.push((t, st.clone()));
    });
    let rest = t_end - pulse.duration;
    if rest > 0.0 {
        let n_rest = (rest / dt).ceil() as usize;
        let t0 = pulse.duration;
        let mut k = 0;
        free.run(s, rest, n_rest, |st| {
            k += 1;
            out.push((t0 + rest * k as f64 / n_rest as f64, st.clone()));
        });
    }
    Ok(out)
}

/// Integration resolution for [`double_excitation_run`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Resolution {
    /// Minimum number of steps across the pulse.
    pub pulse_steps: usize,
    /// Steps per excited-state lifetime; at least 200.
    pub steps_per_lifetime: usize,
}

impl Default for Resolution {
    fn default() -> Self {
        Resolution { pulse_steps: 400, steps_per_lifetime: 200 }
    }
}

impl Resolution {
    /// Both step counts doubled.
    pub fn refined(self) -> Self {
        Resolution { pulse_steps: 2 * self.pulse_steps, steps_per_lifetime: 2 * self.steps_per_lifetime }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DoubleExcitation {
    pub epsilon_d: f64,
    /// Total population that reached S₁/₂.
    pub s_total: f64,
    pub final_state: DynamicState,
    /// Largest |trace + sinks − 1| seen along the trajectory.
    pub max_norm_drift: f64,
    /// Whether every sink was nondecreasing at every step.
    pub sinks_monotone: bool,
}

/// Full double-excitation run: π pulse out of D₃/₂(+3/2), then free decay
/// until the S population settles.
pub fn double_excitation_run(
    atom: &AtomSpec,
    t_p: f64,
    resolution: Resolution,
) -> Result<DoubleExcitation, BlochError> {
    let pulse = PulseSpec::pi_pulse(t_p);
    pulse.validate()?;
    if resolution.steps_per_lifetime < 200 || resolution.pulse_steps == 0 {
        return Err(BlochError::InvalidParameter {
            name: "steps_per_lifetime",
            value: resolution.steps_per_lifetime as f64,
        });
    }
    let tau = atom.tau_e;
    let dt_max = tau / resolution.steps_per_lifetime as f64;
    let n_pulse = resolution.pulse_steps.max((t_p / dt_max).ceil() as usize);

    let driven = Generator::new(atom, Some(&pulse));
    let free = Generator::new(atom, None);

    let mut max_norm_drift = 0.0f64;
    let mut sinks_monotone = true;
    let mut prev = [0.0; 4];
    let mut watch = |s: &DynamicState| {
        max_norm_drift = max_norm_drift.max((s.total_probability() - 1.0).abs());
        if s.sinks.iter().zip(prev.iter()).any(|(a, b)| a < b) {
            sinks_monotone = false;
        }
        prev = s.sinks;
    };

    let initial = DynamicState::pure(Sublevel::stretch()).unwrap();
    let mut s = driven.run(initial, t_p, n_pulse, &mut watch);

    let n_decay = (MIN_DECAY_LIFETIMES * resolution.steps_per_lifetime as f64).round() as usize;
    s = free.run(s, MIN_DECAY_LIFETIMES * tau, n_decay, &mut watch);
    loop {
        let before = s.sink_total();
        s = free.run(s, tau, resolution.steps_per_lifetime, &mut watch);
        if s.sink_total() - before < SINK_CONVERGENCE {
            break;
        }
    }

    let s_total = s.sink_total();
    let epsilon_d = if s_total > 0.0 { s.bad() / s_total } else { 0.0 };
    Ok(DoubleExcitation { epsilon_d, s_total, final_state: s, max_norm_drift, sinks_monotone })
}

/// Fraction of S₁/₂ population that came from P₁/₂(−1/2) after a π pulse of
/// length `t_p` seconds.
pub fn double_excitation_error(atom: &AtomSpec, t_p: f64) -> Result<f64, BlochError> {
    double_excitation_run(atom, t_p, Resolution::default()).map(|r| r.epsilon_d)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorPoint {
    /// Pulse duration, seconds.
    pub t_p: f64,
    pub epsilon_d: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ErrorCurve {
    pub points: Vec<ErrorPoint>,
}

impl ErrorCurve {
    pub const CSV_HEADER: &'static str = "t_p_ns,epsilon_d";

    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "{}", Self::CSV_HEADER)?;
        for p in &self.points {
            writeln!(w, "{},{}", fmt_sig(p.t_p * 1e9, 12), fmt_sig(p.epsilon_d, 12))?;
        }
        Ok(())
    }
}

pub fn scan_pulse_durations(atom: &AtomSpec, t_p_grid: &[f64]) -> Result<ErrorCurve, BlochError> {
    if t_p_grid.is_empty() {
        return Err(BlochError::InvalidParameter { name: "pulse grid length", value: 0.0 });
    }
    if let Some(&bad) = t_p_grid.iter().find(|&&t| !(t > 0.0) || !t.is_finite()) {
        return Err(BlochError::InvalidParameter { name: "pulse duration", value: bad });
    }
    let points = t_p_grid
        .par_iter()
        .map(|&t_p| double_excitation_error(atom, t_p).map(|epsilon_d| ErrorPoint { t_p, epsilon_d }))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(ErrorCurve { points })
}
