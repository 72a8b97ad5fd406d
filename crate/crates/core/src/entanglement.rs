//! Ion-photon density operator, analysis fringes and the fidelity estimator.
//!
//! Basis order is (|↓H⟩, |↓V⟩, |↑H⟩, |↑V⟩), index `2·atom + photon`. APD1
//! detects H and APD2 detects V after the wave plate.
//!
//! The wave plate is an x rotation of the polarization qubit by the Bloch
//! angle ψ (twice the physical plate angle). The atom analysis pulse is a π/2
//! rotation about `cos φ·X + sin φ·Y`. With these conventions Ψ_d gives
//! P(↑|APD1) = (1 − cos ψ)/2 in the z protocol and P(↑|APD1) = (1 + cos φ)/2
//! in the x protocol (photon at ψ = π/2), so the x fringe has zero phase
//! offset.

use std::f64::consts::FRAC_1_SQRT_2;
use std::io::{self, Write};

use nalgebra::{DMatrix, DVector, Matrix2, Matrix3, Matrix4, Vector3};
use num_complex::Complex64 as C64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fmt::fmt_sig;
use crate::radiation::{CollectionProbabilities, RadiationError};

pub type Matrix = Matrix4<C64>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EntanglementError {
    #[error("invalid {name}: {value}")]
    InvalidParameter { name: &'static str, value: f64 },
    #[error("not a density operator: {0}")]
    NotDensity(String),
    #[error("APD{apd} has zero detection probability at setting {setting}")]
    ZeroProbabilityBranch { apd: u8, setting: f64 },
    #[error("degenerate fringe fit: {0}")]
    DegenerateFit(String),
    #[error(transparent)]
    Radiation(#[from] RadiationError),
}

fn c(re: f64) -> C64 {
    C64::new(re, 0.0)
}

/// A validated two-qubit density operator.
#[derive(Debug, Clone, PartialEq)]
pub struct IonPhotonState {
    rho: Matrix,
}

impl IonPhotonState {
    /// Checks trace (1e−12), Hermiticity (1e−12) and positivity (−1e−10).
    pub fn new(rho: Matrix) -> Result<Self, EntanglementError> {
        if rho.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(EntanglementError::NotDensity("non-finite entry".into()));
        }
        let trace = rho.trace();
        if (trace - c(1.0)).norm() > 1e-12 {
            return Err(EntanglementError::NotDensity(format!("trace {trace}")));
        }
        let skew = (rho - rho.adjoint()).iter().fold(0.0f64, |m, z| m.max(z.norm()));
        if skew > 1e-12 {
            return Err(EntanglementError::NotDensity(format!("anti-Hermitian part {skew:e}")));
        }
        let min = min_eigenvalue(&rho);
        if min < -1e-10 {
            return Err(EntanglementError::NotDensity(format!("eigenvalue {min:e}")));
        }
        Ok(IonPhotonState { rho })
    }

    /// |Ψ_d⟩⟨Ψ_d| with Ψ_d = (|↓H⟩ + |↑V⟩)/√2.
    pub fn target() -> Self {
        let mut rho = Matrix::zeros();
        for (i, j) in [(0, 0), (0, 3), (3, 0), (3, 3)] {
            rho[(i, j)] = c(0.5);
        }
        IonPhotonState { rho }
    }

    /// w·|Ψ_d⟩⟨Ψ_d| + (1 − w)·I/4.
    pub fn werner(w: f64) -> Result<Self, EntanglementError> {
        if !(0.0..=1.0).contains(&w) {
            return Err(EntanglementError::InvalidParameter { name: "werner weight", value: w });
        }
        Ok(IonPhotonState { rho: depolarize(&Self::target().rho, 1.0 - w) })
    }

    pub fn rho(&self) -> &Matrix {
        &self.rho
    }

    pub fn min_eigenvalue(&self) -> f64 {
        min_eigenvalue(&self.rho)
    }
}

fn min_eigenvalue(rho: &Matrix) -> f64 {
    let herm = (rho + rho.adjoint()) * c(0.5);
    herm.symmetric_eigenvalues().iter().cloned().fold(f64::INFINITY, f64::min)
}

fn depolarize(rho: &Matrix, p: f64) -> Matrix {
    rho * c(1.0 - p) + Matrix::identity() * c(p / 4.0)
}

/// Phenomenological error budget. `depol` acts on the state; `readout_err`
/// and `rotation_contrast` act on the analysis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ErrorBudget {
    pub depol: f64,
    pub readout_err: f64,
    pub rotation_contrast: f64,
}

impl Default for ErrorBudget {
    fn default() -> Self {
        ErrorBudget::ideal()
    }
}

impl ErrorBudget {
    pub fn ideal() -> Self {
        ErrorBudget { depol: 0.0, readout_err: 0.0, rotation_contrast: 1.0 }
    }

    pub fn validate(&self) -> Result<(), EntanglementError> {
        for (name, v) in [("depol", self.depol), ("readout_err", self.readout_err), ("rotation_contrast", self.rotation_contrast)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(EntanglementError::InvalidParameter { name, value: v });
            }
        }
        Ok(())
    }
}

/// Collected state: coherent {|↓H⟩, |↑V⟩} block with coherence
/// κ·√(p_σH·p_π), incoherent |↓V⟩ weight p_σV, then depolarization.
pub fn build_state(probs: &CollectionProbabilities, kappa: f64, budget: &ErrorBudget) -> Result<IonPhotonState, EntanglementError> {
    probs.validate()?;
    budget.validate()?;
    if !(0.0..=1.0).contains(&kappa) {
        return Err(EntanglementError::InvalidParameter { name: "kappa", value: kappa });
    }
    let total = probs.p_sigma_h + probs.p_sigma_v + probs.p_pi;
    let (h, v, p) = (probs.p_sigma_h / total, probs.p_sigma_v / total, probs.p_pi / total);
    let mut rho = Matrix::zeros();
    rho[(0, 0)] = c(h);
    rho[(1, 1)] = c(v);
    rho[(3, 3)] = c(p);
    let coh = kappa * (h * p).sqrt();
    rho[(0, 3)] = c(coh);
    rho[(3, 0)] = c(coh);
    IonPhotonState::new(depolarize(&rho, budget.depol))
}

/// ⟨Ψ_d|ρ|Ψ_d⟩.
pub fn fidelity(state: &IonPhotonState) -> f64 {
    let r = &state.rho;
    0.5 * (r[(0, 0)].re + r[(3, 3)].re) + r[(0, 3)].re
}

/// Depolarization that brings the ideal-analysis state built from `probs`
/// and `kappa` to fidelity `target`.
pub fn fit_depol_for_fidelity(probs: &CollectionProbabilities, kappa: f64, target: f64) -> Result<f64, EntanglementError> {
    let f0 = fidelity(&build_state(probs, kappa, &ErrorBudget::ideal())?);
    // F(p) = (1 − p)·F0 + p/4 is linear in p
    let p = (f0 - target) / (f0 - 0.25);
    if !(0.0..=1.0).contains(&p) || !p.is_finite() {
        return Err(EntanglementError::InvalidParameter { name: "target fidelity", value: target });
    }
    Ok(p)
}

fn photon_rotation(psi: f64) -> Matrix2<C64> {
    let (s, co) = (0.5 * psi).sin_cos();
    let mis = C64::new(0.0, -s);
    Matrix2::new(c(co), mis, mis, c(co))
}

fn atom_half_pi(phi: f64) -> Matrix2<C64> {
    let s = FRAC_1_SQRT_2;
    let minus_i = C64::new(0.0, -1.0);
    Matrix2::new(
        c(s),
        minus_i * C64::from_polar(s, -phi),
        minus_i * C64::from_polar(s, phi),
        c(s),
    )
}

/// Joint detection probabilities `[apd][atom]` (apd 0 = APD1, atom 1 = ↑
/// as reported by readout) for one analysis setting.
pub fn outcome_probabilities(state: &IonPhotonState, psi: f64, atom_phase: Option<f64>, budget: &ErrorBudget) -> Result<[[f64; 2]; 2], EntanglementError> {
    budget.validate()?;
    if !psi.is_finite() || atom_phase.is_some_and(|p| !p.is_finite()) {
        return Err(EntanglementError::InvalidParameter { name: "analysis angle", value: psi });
    }
    let atom = atom_phase.map_or_else(Matrix2::identity, atom_half_pi);
    let u: Matrix = atom.kronecker(&photon_rotation(psi));
    let mut rho = u * state.rho * u.adjoint();
    if atom_phase.is_some() {
        // contrast loss on the atom pulse: partial depolarization of the atom
        let k = budget.rotation_contrast;
        let mut mixed = Matrix::zeros();
        for a in 0..2 {
            for p in 0..2 {
                for q in 0..2 {
                    let reduced = rho[(p, q)] + rho[(2 + p, 2 + q)];
                    mixed[(2 * a + p, 2 * a + q)] = reduced * c(0.5);
                }
            }
        }
        rho = rho * c(k) + mixed * c(1.0 - k);
    }
    let r = budget.readout_err;
    let mut out = [[0.0; 2]; 2];
    for (apd, row) in out.iter_mut().enumerate() {
        let down = rho[(apd, apd)].re.max(0.0);
        let up = rho[(2 + apd, 2 + apd)].re.max(0.0);
        row[1] = (1.0 - r) * up + r * down;
        row[0] = (1.0 - r) * down + r * up;
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FringePoint {
    pub setting: f64,
    pub p_up_apd1: f64,
    pub p_up_apd2: f64,
}

pub const FRINGE_CSV_HEADER: &str = "setting_value,p_up_apd1,p_up_apd2";

fn conditional(joint: [[f64; 2]; 2], setting: f64) -> Result<FringePoint, EntanglementError> {
    let mut p = [0.0; 2];
    for apd in 0..2 {
        let n = joint[apd][0] + joint[apd][1];
        if n <= 1e-15 {
            return Err(EntanglementError::ZeroProbabilityBranch { apd: apd as u8 + 1, setting });
        }
        p[apd] = joint[apd][1] / n;
    }
    Ok(FringePoint { setting, p_up_apd1: p[0], p_up_apd2: p[1] })
}

/// P(↑|APD1), P(↑|APD2) against wave-plate rotation ψ, atom read in z.
pub fn fringe_z(state: &IonPhotonState, psi_grid: &[f64], budget: &ErrorBudget) -> Result<Vec<FringePoint>, EntanglementError> {
    psi_grid.iter().map(|&psi| conditional(outcome_probabilities(state, psi, None, budget)?, psi)).collect()
}

/// P(↑|APD1), P(↑|APD2) against atom pulse phase φ with the photon rotated
/// by π/2.
pub fn fringe_x(state: &IonPhotonState, phi_grid: &[f64], budget: &ErrorBudget) -> Result<Vec<FringePoint>, EntanglementError> {
    phi_grid
        .iter()
        .map(|&phi| conditional(outcome_probabilities(state, std::f64::consts::FRAC_PI_2, Some(phi), budget)?, phi))
        .collect()
}

pub fn write_fringe_csv<W: Write>(points: &[FringePoint], mut w: W) -> io::Result<()> {
    writeln!(w, "{FRINGE_CSV_HEADER}")?;
    for p in points {
        writeln!(w, "{},{},{}", fmt_sig(p.setting, 12), fmt_sig(p.p_up_apd1, 12), fmt_sig(p.p_up_apd2, 12))?;
    }
    Ok(())
}

/// One analysis setting. `atom_phase = None` is the z protocol.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeasurementSettings {
    pub photon_rotation: f64,
    pub atom_phase: Option<f64>,
    pub shots: u64,
    pub seed: u64,
}

impl MeasurementSettings {
    pub fn value(&self) -> f64 {
        self.atom_phase.unwrap_or(self.photon_rotation)
    }

    /// z-protocol settings at the given wave-plate angles.
    pub fn z_scan(psi_grid: &[f64], shots: u64, seed: u64) -> Vec<Self> {
        psi_grid.iter().map(|&psi| MeasurementSettings { photon_rotation: psi, atom_phase: None, shots, seed }).collect()
    }

    /// x-protocol settings at the given atom phases.
    pub fn x_scan(phi_grid: &[f64], shots: u64, seed: u64) -> Vec<Self> {
        phi_grid
            .iter()
            .map(|&phi| MeasurementSettings { photon_rotation: std::f64::consts::FRAC_PI_2, atom_phase: Some(phi), shots, seed })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct CountsRow {
    pub setting: f64,
    /// 1 or 2.
    pub apd: u8,
    pub atom_up: u64,
    pub atom_down: u64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct CountsTable {
    pub rows: Vec<CountsRow>,
}

pub const COUNTS_CSV_HEADER: &str = "setting_value,apd,atom_up,atom_down";

impl CountsTable {
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "{COUNTS_CSV_HEADER}")?;
        for r in &self.rows {
            writeln!(w, "{},{},{},{}", fmt_sig(r.setting, 12), r.apd, r.atom_up, r.atom_down)?;
        }
        Ok(())
    }

    /// Build a table from exact probabilities scaled to `shots`, without
    /// rounding. Used to test the estimator in the infinite-shot limit.
    pub fn from_probabilities(state: &IonPhotonState, settings: &[MeasurementSettings], budget: &ErrorBudget) -> Result<ExactTable, EntanglementError> {
        let mut rows = Vec::with_capacity(settings.len());
        for s in settings {
            let p = outcome_probabilities(state, s.photon_rotation, s.atom_phase, budget)?;
            rows.push((s.value(), p));
        }
        Ok(ExactTable { rows })
    }
}

/// Exact joint probabilities per setting, `[apd][atom]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExactTable {
    pub rows: Vec<(f64, [[f64; 2]; 2])>,
}

/// Multinomial counts per setting drawn from [`outcome_probabilities`].
/// Setting `i` uses ChaCha stream `i` of its seed.
pub fn simulate_measurements(state: &IonPhotonState, settings: &[MeasurementSettings], budget: &ErrorBudget) -> Result<CountsTable, EntanglementError> {
    for s in settings {
        if s.shots == 0 {
            return Err(EntanglementError::InvalidParameter { name: "shots", value: 0.0 });
        }
    }
    let blocks: Vec<Result<[CountsRow; 2], EntanglementError>> = settings
        .par_iter()
        .enumerate()
        .map(|(i, s)| {
            let p = outcome_probabilities(state, s.photon_rotation, s.atom_phase, budget)?;
            let mut rng = ChaCha8Rng::seed_from_u64(s.seed);
            rng.set_stream(i as u64);
            let probs = [p[0][1], p[0][0], p[1][1], p[1][0]];
            let n = multinomial(&mut rng, s.shots, &probs);
            Ok([
                CountsRow { setting: s.value(), apd: 1, atom_up: n[0], atom_down: n[1] },
                CountsRow { setting: s.value(), apd: 2, atom_up: n[2], atom_down: n[3] },
            ])
        })
        .collect();
    let mut rows = Vec::with_capacity(2 * settings.len());
    for b in blocks {
        rows.extend(b?);
    }
    Ok(CountsTable { rows })
}

fn multinomial(rng: &mut ChaCha8Rng, n: u64, probs: &[f64; 4]) -> [u64; 4] {
    let total: f64 = probs.iter().sum();
    let mut left = n;
    let mut mass = total;
    let mut out = [0; 4];
    for (k, &p) in probs.iter().enumerate() {
        if k == probs.len() - 1 {
            out[k] = left;
            break;
        }
        let q = if mass > 0.0 { (p / mass).clamp(0.0, 1.0) } else { 0.0 };
        let draw = Binomial::new(left, q).expect("probability in [0, 1]").sample(rng);
        out[k] = draw;
        left -= draw;
        mass -= p;
    }
    out
}

/// Least-squares fit of `m + a·cos x + b·sin x` with fixed 2π period.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SinusoidFit {
    pub mean: f64,
    pub cos: f64,
    pub sin: f64,
    pub cov: Matrix3<f64>,
}

impl SinusoidFit {
    pub fn amplitude(&self) -> f64 {
        self.cos.hypot(self.sin)
    }

    pub fn at(&self, x: f64) -> f64 {
        self.mean + self.cos * x.cos() + self.sin * x.sin()
    }
}

/// Unweighted fit; `variances` propagate into the parameter covariance.
pub fn fit_sinusoid(x: &[f64], y: &[f64], variances: &[f64]) -> Result<SinusoidFit, EntanglementError> {
    let n = x.len();
    if y.len() != n || variances.len() != n {
        return Err(EntanglementError::DegenerateFit("length mismatch".into()));
    }
    let mut distinct: Vec<f64> = x.iter().map(|v| v.rem_euclid(std::f64::consts::TAU)).collect();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup_by(|a, b| (*a - *b).abs() < 1e-9);
    if distinct.len() >= 2 && (distinct[0] + std::f64::consts::TAU - distinct[distinct.len() - 1]).abs() < 1e-9 {
        distinct.pop();
    }
    if distinct.len() < 3 {
        return Err(EntanglementError::DegenerateFit(format!("{} distinct settings, need 3", distinct.len())));
    }
    let design = DMatrix::from_fn(n, 3, |i, j| match j {
        0 => 1.0,
        1 => x[i].cos(),
        _ => x[i].sin(),
    });
    let normal = design.transpose() * &design;
    let inv = normal
        .try_inverse()
        .ok_or_else(|| EntanglementError::DegenerateFit("singular normal matrix".into()))?;
    let theta = &inv * design.transpose() * DVector::from_column_slice(y);
    let meat = design.transpose() * DMatrix::from_diagonal(&DVector::from_column_slice(variances)) * &design;
    let cov = &inv * meat * &inv;
    Ok(SinusoidFit {
        mean: theta[0],
        cos: theta[1],
        sin: theta[2],
        cov: Matrix3::from_fn(|i, j| cov[(i, j)]),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FidelityEstimate {
    pub fidelity: f64,
    pub sigma: f64,
    /// Fitted z correlation at ψ = 0.
    pub z_correlation: f64,
    /// Fitted x-fringe correlation amplitude.
    pub x_contrast: f64,
    /// Phase offset of the fitted x fringe, taken from P(↑|APD1).
    pub x_phase: f64,
}

/// Per-setting correlation ⟨Z_atom Z_photon⟩-type estimate and its binomial
/// variance: (n(↓,1) + n(↑,2) − n(↑,1) − n(↓,2)) / N.
fn correlations(rows: &[(f64, [[f64; 2]; 2], f64)]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let mut x = Vec::new();
    let mut e = Vec::new();
    let mut v = Vec::new();
    for &(s, p, n) in rows {
        let total = p[0][0] + p[0][1] + p[1][0] + p[1][1];
        let corr = (p[0][0] + p[1][1] - p[0][1] - p[1][0]) / total;
        x.push(s);
        e.push(corr);
        v.push(if n.is_finite() { (1.0 - corr * corr).max(0.0) / n } else { 0.0 });
    }
    (x, e, v)
}

fn group(table: &CountsTable) -> Result<Vec<(f64, [[f64; 2]; 2], f64)>, EntanglementError> {
    let mut out: Vec<(f64, [[f64; 2]; 2], f64)> = Vec::new();
    for r in &table.rows {
        if r.apd != 1 && r.apd != 2 {
            return Err(EntanglementError::InvalidParameter { name: "apd", value: r.apd as f64 });
        }
        let slot = match out.iter_mut().find(|(s, _, _)| *s == r.setting) {
            Some(slot) => slot,
            None => {
                out.push((r.setting, [[0.0; 2]; 2], 0.0));
                out.last_mut().unwrap()
            }
        };
        let a = (r.apd - 1) as usize;
        slot.1[a][0] += r.atom_down as f64;
        slot.1[a][1] += r.atom_up as f64;
        slot.2 += (r.atom_down + r.atom_up) as f64;
    }
    if let Some((s, _, _)) = out.iter().find(|(_, _, n)| *n == 0.0) {
        return Err(EntanglementError::DegenerateFit(format!("no counts at setting {s}")));
    }
    Ok(out)
}

/// F = ½·P_z + ½·A_x with P_z = (1 + E_z(0))/2 from the fitted z fringe and
/// A_x the fitted x-fringe correlation amplitude. σ propagates the binomial
/// variance of each setting through both fits.
pub fn estimate_fidelity(z_counts: &CountsTable, x_counts: &CountsTable) -> Result<FidelityEstimate, EntanglementError> {
    estimate_from_rows(&group(z_counts)?, &group(x_counts)?)
}

/// The estimator evaluated on exact probabilities (σ = 0).
pub fn estimate_fidelity_exact(z: &ExactTable, x: &ExactTable) -> Result<FidelityEstimate, EntanglementError> {
    let to_rows = |t: &ExactTable| t.rows.iter().map(|&(s, p)| (s, p, f64::INFINITY)).collect::<Vec<_>>();
    estimate_from_rows(&to_rows(z), &to_rows(x))
}

fn estimate_from_rows(z: &[(f64, [[f64; 2]; 2], f64)], x: &[(f64, [[f64; 2]; 2], f64)]) -> Result<FidelityEstimate, EntanglementError> {
    let (zs, ze, zv) = correlations(z);
    let (xs, mut xe, xv) = correlations(x);
    // x fringe reported with the sign of the APD1 ↑ probability
    xe.iter_mut().for_each(|e| *e = -*e);
    let zf = fit_sinusoid(&zs, &ze, &zv)?;
    let xf = fit_sinusoid(&xs, &xe, &xv)?;
    let amp = xf.amplitude();
    if amp <= 1e-12 {
        return Err(EntanglementError::DegenerateFit("x fringe has no contrast".into()));
    }
    let ez = zf.mean + zf.cos;
    let fidelity = 0.25 * (1.0 + ez) + 0.5 * amp;

    let gz = Vector3::new(0.25, 0.25, 0.0);
    let gx = Vector3::new(0.0, 0.5 * xf.cos / amp, 0.5 * xf.sin / amp);
    let var = (gz.transpose() * zf.cov * gz)[0] + (gx.transpose() * xf.cov * gx)[0];
    let sigma = var.max(0.0).sqrt();

    let limit = 1.0 + 5.0 * sigma + 1e-9;
    if amp > limit || ez.abs() > limit {
        return Err(EntanglementError::DegenerateFit(format!("fitted contrast exceeds 1: x {amp}, z {ez}")));
    }
    Ok(FidelityEstimate { fidelity, sigma, z_correlation: ez, x_contrast: amp, x_phase: xf.sin.atan2(xf.cos) })
}
