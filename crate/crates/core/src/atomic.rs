//! Level structure of ¹³⁸Ba⁺ restricted to S₁/₂, P₁/₂ and D₃/₂.
//!
//! Angular momenta are stored as twice their value so that half-integers are
//! exact. Dipole weights come from the Racah closed form for Clebsch-Gordan
//! coefficients rather than from a table.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AtomError {
    #[error("{0} is not an integer or half-integer")]
    NotHalfInteger(f64),
    #[error("angular momentum must be non-negative, got {0}")]
    NegativeJ(f64),
    #[error("photon index q must be in -1..=1, got {0}")]
    BadPhotonIndex(i32),
    #[error("projection m={m} incompatible with j={j}")]
    BadProjection { j: f64, m: f64 },
    #[error("{0} is not a P1/2 sublevel")]
    NotExcited(Sublevel),
    #[error("invalid atom parameter {name} = {value}")]
    InvalidParameter { name: &'static str, value: f64 },
}

/// An integer or half-integer, stored as twice its value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct HalfInt(i32);

impl HalfInt {
    pub const fn from_twice(twice: i32) -> Self {
        HalfInt(twice)
    }

    pub fn from_f64(x: f64) -> Result<Self, AtomError> {
        let twice = 2.0 * x;
        if !twice.is_finite() || (twice - twice.round()).abs() > 1e-9 {
            return Err(AtomError::NotHalfInteger(x));
        }
        Ok(HalfInt(twice.round() as i32))
    }

    pub const fn twice(self) -> i32 {
        self.0
    }

    pub fn value(self) -> f64 {
        self.0 as f64 / 2.0
    }
}

impl fmt::Display for HalfInt {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0 % 2 == 0 {
            write!(f, "{}", self.0 / 2)
        } else {
            write!(f, "{}/2", self.0)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Term {
    S12,
    P12,
    D32,
}

impl Term {
    pub const fn j(self) -> HalfInt {
        match self {
            Term::S12 | Term::P12 => HalfInt::from_twice(1),
            Term::D32 => HalfInt::from_twice(3),
        }
    }

    /// Sublevels in ascending mJ.
    pub fn sublevels(self) -> impl Iterator<Item = Sublevel> {
        let tj = self.j().twice();
        (-tj..=tj)
            .step_by(2)
            .map(move |tm| Sublevel { term: self, m: HalfInt::from_twice(tm) })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Sublevel {
    pub term: Term,
    pub m: HalfInt,
}

impl Sublevel {
    pub fn new(term: Term, m: f64) -> Result<Self, AtomError> {
        let m_half = HalfInt::from_f64(m)?;
        let tj = term.j().twice();
        if m_half.twice().abs() > tj || (tj - m_half.twice()) % 2 != 0 {
            return Err(AtomError::BadProjection { j: term.j().value(), m });
        }
        Ok(Sublevel { term, m: m_half })
    }

    pub const fn from_twice(term: Term, twice_m: i32) -> Self {
        Sublevel { term, m: HalfInt::from_twice(twice_m) }
    }

    /// Qubit state |↓⟩ = S₁/₂(−1/2).
    pub const fn down() -> Self {
        Self::from_twice(Term::S12, -1)
    }

    /// Qubit state |↑⟩ = S₁/₂(+1/2).
    pub const fn up() -> Self {
        Self::from_twice(Term::S12, 1)
    }

    /// Excited state |e⟩ = P₁/₂(+1/2).
    pub const fn excited() -> Self {
        Self::from_twice(Term::P12, 1)
    }

    /// D₃/₂ stretch state (+3/2), the initialization target.
    pub const fn stretch() -> Self {
        Self::from_twice(Term::D32, 3)
    }
}

impl fmt::Display for Sublevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}({})", self.term, self.m)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Line {
    Nm493,
    Nm650,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransitionChannel {
    pub upper: Sublevel,
    pub lower: Sublevel,
    /// Photon Δm = mJ(upper) − mJ(lower): −1 σ⁻, 0 π, +1 σ⁺.
    pub q: i32,
    pub cg2: f64,
    pub line: Line,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AtomSpec {
    /// Excited-state lifetime in seconds.
    pub tau_e: f64,
    /// Fraction of P₁/₂ decays that land in S₁/₂.
    pub branch_s: f64,
    pub channels: Vec<TransitionChannel>,
}

impl Default for AtomSpec {
    fn default() -> Self {
        AtomSpec::new(10e-9, 0.75).expect("default atom parameters are valid")
    }
}

impl AtomSpec {
    pub fn new(tau_e: f64, branch_s: f64) -> Result<Self, AtomError> {
        if !(tau_e > 0.0) || !tau_e.is_finite() {
            return Err(AtomError::InvalidParameter { name: "tau_e", value: tau_e });
        }
        if !(branch_s > 0.0 && branch_s < 1.0) {
            return Err(AtomError::InvalidParameter { name: "branch_s", value: branch_s });
        }
        let mut channels = Vec::new();
        for upper in Term::P12.sublevels() {
            for (term, line) in [(Term::S12, Line::Nm493), (Term::D32, Line::Nm650)] {
                for lower in term.sublevels() {
                    let dq = upper.m.twice() - lower.m.twice();
                    if dq.abs() > 2 {
                        continue;
                    }
                    let q = dq / 2;
                    let cg2 = cg2_exact(term.j(), lower.m, q, Term::P12.j(), upper.m);
                    if cg2 > 0.0 {
                        channels.push(TransitionChannel { upper, lower, q, cg2, line });
                    }
                }
            }
        }
        Ok(AtomSpec { tau_e, branch_s, channels })
    }

    pub fn gamma(&self) -> f64 {
        1.0 / self.tau_e
    }

    /// Branching fraction into a lower term.
    pub fn branch(&self, term: Term) -> f64 {
        match term {
            Term::S12 => self.branch_s,
            Term::D32 => 1.0 - self.branch_s,
            Term::P12 => 0.0,
        }
    }

    /// The channel linking two sublevels, if dipole-allowed.
    pub fn channel(&self, upper: Sublevel, lower: Sublevel) -> Option<&TransitionChannel> {
        self.channels.iter().find(|c| c.upper == upper && c.lower == lower)
    }

    /// Relative dipole weight of the S-bound decay with photon index `q`
    /// out of |e⟩. Used to weight the emission patterns.
    pub fn excited_to_ground_weight(&self, q: i32) -> f64 {
        self.channels
            .iter()
            .find(|c| c.upper == Sublevel::excited() && c.lower.term == Term::S12 && c.q == q)
            .map_or(0.0, |c| c.cg2)
    }
}

/// Spontaneous decay channels out of a P₁/₂ sublevel with their rates
/// Γ·branch·cg2 (in s⁻¹).
pub fn decay_channels(
    upper: Sublevel,
    atom: &AtomSpec,
) -> Result<Vec<(TransitionChannel, f64)>, AtomError> {
    if upper.term != Term::P12 {
        return Err(AtomError::NotExcited(upper));
    }
    let gamma = atom.gamma();
    Ok(atom
        .channels
        .iter()
        .filter(|c| c.upper == upper)
        .map(|c| (*c, gamma * atom.branch(c.lower.term) * c.cg2))
        .collect())
}

/// |⟨j_lower m_lower; 1 q | j_upper m_upper⟩|².
pub fn clebsch_gordan_sq(
    j_lower: f64,
    m_lower: f64,
    q: i32,
    j_upper: f64,
    m_upper: f64,
) -> Result<f64, AtomError> {
    if !(-1..=1).contains(&q) {
        return Err(AtomError::BadPhotonIndex(q));
    }
    let jl = checked_j(j_lower)?;
    let ju = checked_j(j_upper)?;
    let ml = checked_m(jl, m_lower)?;
    let mu = checked_m(ju, m_upper)?;
    Ok(cg2_exact(jl, ml, q, ju, mu))
}

/// Signed Clebsch-Gordan coefficient ⟨j1 m1; j2 m2 | j m⟩ (Condon-Shortley phase).
pub fn clebsch_gordan(j1: f64, m1: f64, j2: f64, m2: f64, j: f64, m: f64) -> Result<f64, AtomError> {
    let (j1, j2, j) = (checked_j(j1)?, checked_j(j2)?, checked_j(j)?);
    let (m1, m2, m) = (checked_m(j1, m1)?, checked_m(j2, m2)?, checked_m(j, m)?);
    Ok(racah(j1, m1, j2, m2, j, m))
}

fn cg2_exact(jl: HalfInt, ml: HalfInt, q: i32, ju: HalfInt, mu: HalfInt) -> f64 {
    let c = racah(jl, ml, HalfInt::from_twice(2), HalfInt::from_twice(2 * q), ju, mu);
    c * c
}

fn checked_j(j: f64) -> Result<HalfInt, AtomError> {
    let h = HalfInt::from_f64(j)?;
    if h.twice() < 0 {
        return Err(AtomError::NegativeJ(j));
    }
    Ok(h)
}

fn checked_m(j: HalfInt, m: f64) -> Result<HalfInt, AtomError> {
    let h = HalfInt::from_f64(m)?;
    if h.twice().abs() > j.twice() || (j.twice() - h.twice()) % 2 != 0 {
        return Err(AtomError::BadProjection { j: j.value(), m });
    }
    Ok(h)
}

fn factorial(n: i32) -> f64 {
    (1..=n).fold(1.0, |acc, k| acc * k as f64)
}

/// Racah's closed form. Returns 0 for any violated selection rule.
fn racah(j1: HalfInt, m1: HalfInt, j2: HalfInt, m2: HalfInt, j: HalfInt, m: HalfInt) -> f64 {
    let (tj1, tm1, tj2, tm2, tj, tm) =
        (j1.twice(), m1.twice(), j2.twice(), m2.twice(), j.twice(), m.twice());
    if tm1 + tm2 != tm {
        return 0.0;
    }
    if tj < (tj1 - tj2).abs() || tj > tj1 + tj2 || (tj1 + tj2 + tj) % 2 != 0 {
        return 0.0;
    }
    if tm1.abs() > tj1 || tm2.abs() > tj2 || tm.abs() > tj {
        return 0.0;
    }
    // every argument below is an integer once the triangle rule holds
    let a = (tj1 + tj2 - tj) / 2;
    let b = (tj1 - tm1) / 2;
    let c = (tj2 + tm2) / 2;
    let d = (tj - tj2 + tm1) / 2;
    let e = (tj - tj1 - tm2) / 2;

    let norm = ((tj + 1) as f64
        * factorial((tj + tj1 - tj2) / 2)
        * factorial((tj - tj1 + tj2) / 2)
        * factorial(a)
        / factorial((tj1 + tj2 + tj) / 2 + 1))
        .sqrt();
    let proj = (factorial((tj + tm) / 2)
        * factorial((tj - tm) / 2)
        * factorial((tj1 - tm1) / 2)
        * factorial((tj1 + tm1) / 2)
        * factorial((tj2 - tm2) / 2)
        * factorial((tj2 + tm2) / 2))
        .sqrt();

    let k_min = 0.max(-d).max(-e);
    let k_max = a.min(b).min(c);
    let sum: f64 = (k_min..=k_max)
        .map(|k| {
            let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
            sign / (factorial(k)
                * factorial(a - k)
                * factorial(b - k)
                * factorial(c - k)
                * factorial(d + k)
                * factorial(e + k))
        })
        .sum();
    norm * proj * sum
}
