//! Dipole emission patterns integrated over collection apertures.
//!
//! Quantization axis is z, light is collected around +x. A direction is
//! (θ, φ) in the usual spherical coordinates about z, so the collection axis
//! sits at θ = π/2, φ = 0. H is the φ̂ polarization and V the θ̂ polarization
//! at each direction, mapped to fixed detector axes by an ideal lens.
//!
//! Integrals are nested: an outer adaptive rule over θ and an inner one over
//! φ whose limits come from the aperture geometry in closed form, so the
//! region boundary is never sampled through an indicator function.

use std::f64::consts::{FRAC_PI_2, PI, TAU};
use std::io::{self, Write};

use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::atomic::AtomSpec;
use crate::fmt::fmt_sig;
use crate::quadrature::{integrate, integrate_pieces, QuadError, Tolerance};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RadiationError {
    #[error("invalid aperture: {0}")]
    InvalidAperture(String),
    #[error("angle out of range: {name} = {value}")]
    AngleOutOfRange { name: &'static str, value: f64 },
    #[error("photon index q must be -1, 0 or 1, got {0}")]
    BadPhotonIndex(i32),
    #[error("invalid parameter {name} = {value}")]
    InvalidParameter { name: &'static str, value: f64 },
    #[error("target solid angle {target} sr outside (0, {max}] sr")]
    TargetOutOfRange { target: f64, max: f64 },
    #[error(transparent)]
    Quadrature(#[from] QuadError),
}

/// Collection geometry about the +x axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ApertureSpec {
    /// Cone of half-angle `alpha1` about +x.
    Circular { alpha1: f64 },
    /// The same cone with horizontal stops passing only
    /// θ ∈ [π/2 − alpha2, π/2 + alpha2].
    Slit { alpha1: f64, alpha2: f64 },
}

impl ApertureSpec {
    pub fn circular(alpha1: f64) -> Result<Self, RadiationError> {
        let a = ApertureSpec::Circular { alpha1 };
        a.validate()?;
        Ok(a)
    }

    pub fn slit(alpha1: f64, alpha2: f64) -> Result<Self, RadiationError> {
        let a = ApertureSpec::Slit { alpha1, alpha2 };
        a.validate()?;
        Ok(a)
    }

    /// Circular aperture of an objective with numerical aperture `na` in vacuum.
    pub fn from_na(na: f64) -> Result<Self, RadiationError> {
        if !(na > 0.0 && na <= 1.0) {
            return Err(RadiationError::InvalidParameter { name: "numerical aperture", value: na });
        }
        Self::circular(na.asin())
    }

    pub fn validate(&self) -> Result<(), RadiationError> {
        let alpha1 = self.alpha1();
        if !(alpha1 > 0.0 && alpha1 <= PI) {
            return Err(RadiationError::InvalidAperture(format!("alpha1 = {alpha1} not in (0, pi]")));
        }
        if let ApertureSpec::Slit { alpha2, .. } = *self {
            if !(alpha2 > 0.0 && alpha2 <= alpha1) {
                return Err(RadiationError::InvalidAperture(format!(
                    "alpha2 = {alpha2} not in (0, alpha1 = {alpha1}]"
                )));
            }
        }
        Ok(())
    }

    pub fn alpha1(&self) -> f64 {
        match *self {
            ApertureSpec::Circular { alpha1 } | ApertureSpec::Slit { alpha1, .. } => alpha1,
        }
    }

    /// Whether a unit direction lies inside the aperture.
    pub fn contains(&self, dir: [f64; 3]) -> bool {
        let in_cone = dir[0] >= self.alpha1().cos();
        match *self {
            ApertureSpec::Circular { .. } => in_cone,
            ApertureSpec::Slit { alpha2, .. } => in_cone && (alpha2 >= FRAC_PI_2 || dir[2].abs() <= alpha2.sin()),
        }
    }

    /// Polar range admitted by the aperture, before the cone test on φ.
    fn theta_range(&self) -> (f64, f64) {
        let alpha1 = self.alpha1();
        let (mut lo, mut hi) = if alpha1 < FRAC_PI_2 { (FRAC_PI_2 - alpha1, FRAC_PI_2 + alpha1) } else { (0.0, PI) };
        if let ApertureSpec::Slit { alpha2, .. } = *self {
            lo = lo.max(FRAC_PI_2 - alpha2);
            hi = hi.min(FRAC_PI_2 + alpha2);
        }
        (lo.max(0.0), hi.min(PI))
    }

    /// θ breakpoints: range ends, the equator, and where the φ window
    /// becomes the full circle.
    fn theta_breaks(&self) -> Vec<f64> {
        let (lo, hi) = self.theta_range();
        let mut pts = vec![lo, hi, FRAC_PI_2];
        let c = self.alpha1().cos();
        if c < 0.0 {
            let t = (-c).asin();
            pts.push(t);
            pts.push(PI - t);
        }
        pts.retain(|&t| t >= lo && t <= hi);
        pts.sort_by(f64::total_cmp);
        pts.dedup();
        pts
    }

    /// Half-width of the admitted φ window around φ = 0 at polar angle θ;
    /// `None` for the full circle.
    fn phi_half_width(&self, theta: f64) -> Option<f64> {
        let c = self.alpha1().cos();
        let s = theta.sin();
        if s <= 0.0 {
            return if c < 0.0 { None } else if c == 0.0 { Some(FRAC_PI_2) } else { Some(0.0) };
        }
        let r = c / s;
        if r <= -1.0 {
            None
        } else if r >= 1.0 {
            Some(0.0)
        } else {
            Some(r.acos())
        }
    }
}

/// Far-field amplitude of a dipole decay with photon index `q`, split into
/// θ̂ and φ̂ components.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmissionAmplitude {
    pub q: i32,
    pub theta: C64,
    pub phi: C64,
}

impl EmissionAmplitude {
    pub fn intensity(&self) -> f64 {
        self.theta.norm_sqr() + self.phi.norm_sqr()
    }
}

fn amplitude_unchecked(q: i32, theta: f64, phi: f64) -> EmissionAmplitude {
    let i = C64::i();
    match q {
        0 => EmissionAmplitude {
            q,
            theta: i * (3.0 / (8.0 * PI)).sqrt() * theta.sin(),
            phi: C64::new(0.0, 0.0),
        },
        _ => {
            let sign = q as f64;
            let pre = i * C64::from_polar(1.0, sign * phi) * (3.0 / (16.0 * PI)).sqrt();
            EmissionAmplitude { q, theta: pre * theta.cos(), phi: pre * i * sign }
        }
    }
}

/// π = i√(3/8π) sinθ θ̂ and σ± = i e^{±iφ} √(3/16π) (cosθ θ̂ ± i φ̂).
pub fn pattern_amplitude(q: i32, theta: f64, phi: f64) -> Result<EmissionAmplitude, RadiationError> {
    if !(-1..=1).contains(&q) {
        return Err(RadiationError::BadPhotonIndex(q));
    }
    if !(0.0..=PI).contains(&theta) {
        return Err(RadiationError::AngleOutOfRange { name: "theta", value: theta });
    }
    if !(0.0..TAU).contains(&phi) {
        return Err(RadiationError::AngleOutOfRange { name: "phi", value: phi });
    }
    Ok(amplitude_unchecked(q, theta, phi))
}

/// ∫∫ f(θ, φ) sinθ dθ dφ over the aperture.
fn integrate_aperture<const N: usize, F>(aperture: &ApertureSpec, f: F, tol: Tolerance) -> Result<[f64; N], RadiationError>
where
    F: Fn(f64, f64) -> [f64; N],
{
    aperture.validate()?;
    let inner_tol = Tolerance { abs: 1e-15, rel: tol.rel * 1e-2, max_intervals: tol.max_intervals };
    let failure = std::cell::RefCell::new(None);
    let outer = |theta: f64| -> [f64; N] {
        let (a, b) = match aperture.phi_half_width(theta) {
            None => (-PI, PI),
            Some(w) => (-w, w),
        };
        if b <= a {
            return [0.0; N];
        }
        match integrate(|phi| f(theta, phi), a, b, inner_tol) {
            Ok(r) => r.value.map(|v| v * theta.sin()),
            Err(e) => {
                failure.borrow_mut().get_or_insert(e);
                [0.0; N]
            }
        }
    };
    let result = integrate_pieces(outer, &aperture.theta_breaks(), tol);
    if let Some(e) = failure.into_inner() {
        return Err(e.into());
    }
    Ok(result?.value)
}

/// Solid angle admitted by the aperture, in steradians.
pub fn solid_angle(aperture: &ApertureSpec) -> Result<f64, RadiationError> {
    aperture.validate()?;
    match *aperture {
        ApertureSpec::Circular { alpha1 } => Ok(TAU * (1.0 - alpha1.cos())),
        ApertureSpec::Slit { .. } => {
            let tol = Tolerance { abs: 1e-13, rel: 0.0, max_intervals: 20_000 };
            Ok(integrate_aperture(aperture, |_, _| [1.0], tol)?[0])
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CollectionProbabilities {
    pub p_sigma_h: f64,
    pub p_sigma_v: f64,
    pub p_pi: f64,
    /// Steradians.
    pub solid_angle: f64,
    /// Unnormalized collected fraction of all |e⟩ → S emission.
    pub collected_fraction: f64,
}

impl CollectionProbabilities {
    /// Probabilities of an ideal on-axis point collector.
    pub fn ideal() -> Self {
        CollectionProbabilities { p_sigma_h: 0.5, p_sigma_v: 0.0, p_pi: 0.5, solid_angle: 0.0, collected_fraction: 0.0 }
    }

    pub fn validate(&self) -> Result<(), RadiationError> {
        for (name, p) in [("p_sigma_h", self.p_sigma_h), ("p_sigma_v", self.p_sigma_v), ("p_pi", self.p_pi)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(RadiationError::InvalidParameter { name, value: p });
            }
        }
        let sum = self.p_sigma_h + self.p_sigma_v + self.p_pi;
        if (sum - 1.0).abs() > 1e-6 {
            return Err(RadiationError::InvalidParameter { name: "probability sum", value: sum });
        }
        Ok(())
    }
}

/// CG-weighted H, V and π intensities collected through the aperture,
/// normalized to unit total. `tol` is the absolute accuracy of the
/// normalized probabilities.
pub fn collection_probabilities(aperture: &ApertureSpec, tol: f64) -> Result<CollectionProbabilities, RadiationError> {
    collection_probabilities_for(&AtomSpec::default(), aperture, tol)
}

pub fn collection_probabilities_for(
    atom: &AtomSpec,
    aperture: &ApertureSpec,
    tol: f64,
) -> Result<CollectionProbabilities, RadiationError> {
    if !(tol > 0.0 && tol <= 1e-3) {
        return Err(RadiationError::InvalidParameter { name: "tol", value: tol });
    }
    let w_sigma = atom.excited_to_ground_weight(1);
    let w_pi = atom.excited_to_ground_weight(0);
    let weight_sum = w_sigma + w_pi;
    let quad_tol = Tolerance { abs: 0.0, rel: tol / 8.0, max_intervals: 20_000 };
    let [h, v, p, omega] = integrate_aperture(
        aperture,
        |theta, phi| {
            let s = amplitude_unchecked(1, theta, phi);
            let z = amplitude_unchecked(0, theta, phi);
            [w_sigma * s.phi.norm_sqr(), w_sigma * s.theta.norm_sqr(), w_pi * z.theta.norm_sqr(), 1.0]
        },
        quad_tol,
    )?;
    let total = h + v + p;
    let solid_angle = match aperture {
        ApertureSpec::Circular { .. } => solid_angle(aperture)?,
        ApertureSpec::Slit { .. } => omega,
    };
    Ok(CollectionProbabilities {
        p_sigma_h: h / total,
        p_sigma_v: v / total,
        p_pi: p / total,
        solid_angle,
        collected_fraction: total / weight_sum,
    })
}

/// Normalized overlap of the collected σ-H and π-V amplitude fields,
/// including the e^{iφ} phase of the σ pattern. 1 for a vanishing aperture.
pub fn coherence_overlap(aperture: &ApertureSpec, tol: f64) -> Result<f64, RadiationError> {
    if !(tol > 0.0 && tol <= 1e-3) {
        return Err(RadiationError::InvalidParameter { name: "tol", value: tol });
    }
    let quad_tol = Tolerance { abs: 0.0, rel: tol / 8.0, max_intervals: 20_000 };
    let [re, im, nh, nv] = integrate_aperture(
        aperture,
        |theta, phi| {
            let s = amplitude_unchecked(1, theta, phi).phi;
            let z = amplitude_unchecked(0, theta, phi).theta;
            let o = s.conj() * z;
            [o.re, o.im, s.norm_sqr(), z.norm_sqr()]
        },
        quad_tol,
    )?;
    Ok((re.hypot(im) / (nh * nv).sqrt()).min(1.0))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MixingFidelity {
    pub fidelity: f64,
    pub epsilon: f64,
}

/// Overlap of the collected ion-photon state with (|↓H⟩ + |↑V⟩)/√2; the
/// |↓V⟩ weight only removes population.
pub fn mixing_fidelity(probs: &CollectionProbabilities, kappa: f64) -> Result<MixingFidelity, RadiationError> {
    probs.validate()?;
    if !(0.0..=1.0).contains(&kappa) {
        return Err(RadiationError::InvalidParameter { name: "kappa", value: kappa });
    }
    let fidelity = 0.5 * (probs.p_sigma_h + probs.p_pi) + kappa * (probs.p_sigma_h * probs.p_pi).sqrt();
    Ok(MixingFidelity { fidelity, epsilon: 1.0 - fidelity })
}

/// How the σ-H / π-V coherence is set when computing ε along a curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CoherenceModel {
    /// Fixed overlap factor.
    Fixed(f64),
    /// Overlap integral of the collected fields.
    Overlap,
}

impl Default for CoherenceModel {
    fn default() -> Self {
        CoherenceModel::Fixed(1.0)
    }
}

/// Polarization-mixing error for one aperture.
pub fn aperture_epsilon(aperture: &ApertureSpec, coherence: CoherenceModel, tol: f64) -> Result<(CollectionProbabilities, f64), RadiationError> {
    let probs = collection_probabilities(aperture, tol)?;
    let kappa = match coherence {
        CoherenceModel::Fixed(k) => k,
        CoherenceModel::Overlap => coherence_overlap(aperture, tol)?,
    };
    Ok((probs, mixing_fidelity(&probs, kappa)?.epsilon))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TradeoffPoint {
    pub aperture: ApertureSpec,
    pub solid_angle: f64,
    pub epsilon: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TradeoffCurve {
    pub points: Vec<TradeoffPoint>,
}

impl TradeoffCurve {
    pub const CSV_HEADER: &'static str = "solid_angle_sr,solid_angle_fraction,epsilon";

    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "{}", Self::CSV_HEADER)?;
        for p in &self.points {
            writeln!(
                w,
                "{},{},{}",
                fmt_sig(p.solid_angle, 12),
                fmt_sig(p.solid_angle / (4.0 * PI), 12),
                fmt_sig(p.epsilon, 12)
            )?;
        }
        Ok(())
    }

    /// Linear interpolation of ε at a solid angle inside the curve's span.
    pub fn epsilon_at(&self, solid_angle: f64) -> Option<f64> {
        self.points.windows(2).find_map(|w| {
            let (a, b) = (&w[0], &w[1]);
            let (lo, hi) = if a.solid_angle <= b.solid_angle { (a, b) } else { (b, a) };
            if solid_angle < lo.solid_angle || solid_angle > hi.solid_angle {
                return None;
            }
            let span = hi.solid_angle - lo.solid_angle;
            if span == 0.0 {
                return Some(lo.epsilon);
            }
            let t = (solid_angle - lo.solid_angle) / span;
            Some(lo.epsilon + t * (hi.epsilon - lo.epsilon))
        })
    }
}

fn sweep(apertures: Vec<ApertureSpec>, coherence: CoherenceModel, tol: f64) -> Result<TradeoffCurve, RadiationError> {
    let points = apertures
        .into_par_iter()
        .map(|aperture| {
            let (probs, epsilon) = aperture_epsilon(&aperture, coherence, tol)?;
            Ok(TradeoffPoint { aperture, solid_angle: probs.solid_angle, epsilon })
        })
        .collect::<Result<Vec<_>, RadiationError>>()?;
    Ok(TradeoffCurve { points })
}

/// Smallest sweep parameter, as a fraction of the largest.
const SWEEP_START: f64 = 1e-3;

fn sweep_grid(max: f64, n_points: usize) -> Vec<f64> {
    (0..n_points)
        .map(|i| max * (i as f64 / (n_points - 1) as f64).max(SWEEP_START))
        .collect()
}

/// Horizontal-stop sweep at fixed cone half-angle: alpha2 from ~0 to alpha1.
pub fn tradeoff_curve(alpha1: f64, n_points: usize, coherence: CoherenceModel, tol: f64) -> Result<TradeoffCurve, RadiationError> {
    ApertureSpec::circular(alpha1)?;
    if n_points < 2 {
        return Err(RadiationError::InvalidParameter { name: "n_points", value: n_points as f64 });
    }
    let apertures = sweep_grid(alpha1, n_points)
        .into_iter()
        .map(|alpha2| ApertureSpec::slit(alpha1, alpha2.min(alpha1)))
        .collect::<Result<Vec<_>, _>>()?;
    sweep(apertures, coherence, tol)
}

/// Plain circular sweep: alpha1 from ~0 to `alpha_max`.
pub fn circular_tradeoff_curve(alpha_max: f64, n_points: usize, coherence: CoherenceModel, tol: f64) -> Result<TradeoffCurve, RadiationError> {
    ApertureSpec::circular(alpha_max)?;
    if n_points < 2 {
        return Err(RadiationError::InvalidParameter { name: "n_points", value: n_points as f64 });
    }
    let apertures = sweep_grid(alpha_max, n_points)
        .into_iter()
        .map(ApertureSpec::circular)
        .collect::<Result<Vec<_>, _>>()?;
    sweep(apertures, coherence, tol)
}

/// Horizontal-stop half-range that admits `omega_target` steradians
/// through a cone of half-angle `alpha1`.
pub fn solve_slit_for_solid_angle(alpha1: f64, omega_target: f64) -> Result<f64, RadiationError> {
    let full = solid_angle(&ApertureSpec::circular(alpha1)?)?;
    if !(omega_target > 0.0 && omega_target <= full * (1.0 + 1e-12)) {
        return Err(RadiationError::TargetOutOfRange { target: omega_target, max: full });
    }
    if (omega_target - full).abs() <= 1e-9 {
        return Ok(alpha1);
    }
    let mut lo = 0.0;
    let mut hi = alpha1;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let omega = solid_angle(&ApertureSpec::Slit { alpha1, alpha2: mid })?;
        if (omega - omega_target).abs() <= 1e-10 || hi - lo < 1e-15 {
            return Ok(mid);
        }
        if omega < omega_target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}
