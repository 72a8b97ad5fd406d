//! Independent reference implementations used as test oracles. None of these
//! share code with the library.

#![allow(dead_code)]

use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

// ---------------------------------------------------------------------------
// Clebsch-Gordan coefficients by explicit lowering in the product basis.

/// ⟨j1 m1; j2 m2 | J M⟩ from repeated application of J₋ = J₁₋ + J₂₋ and
/// Gram-Schmidt against the higher-J multiplets, with the Condon-Shortley
/// sign fixed by ⟨j1 j1; j2 (J − j1) | J J⟩ > 0.
pub fn cg_by_lowering(j1: f64, m1: f64, j2: f64, m2: f64, jj: f64, mm: f64) -> f64 {
    if (m1 + m2 - mm).abs() > 1e-9 || jj > j1 + j2 + 1e-9 || jj < (j1 - j2).abs() - 1e-9 {
        return 0.0;
    }
    let n1 = (2.0 * j1 + 1.0).round() as usize;
    let n2 = (2.0 * j2 + 1.0).round() as usize;
    let idx = |a: usize, b: usize| a * n2 + b;
    let m_of = |j: f64, k: usize| j - k as f64; // k = 0 is m = j
    let lower = |v: &Vec<f64>| -> Vec<f64> {
        let mut out = vec![0.0; n1 * n2];
        for a in 0..n1 {
            for b in 0..n2 {
                let amp = v[idx(a, b)];
                if amp == 0.0 {
                    continue;
                }
                let ma = m_of(j1, a);
                let mb = m_of(j2, b);
                if a + 1 < n1 {
                    out[idx(a + 1, b)] += amp * (j1 * (j1 + 1.0) - ma * (ma - 1.0)).sqrt();
                }
                if b + 1 < n2 {
                    out[idx(a, b + 1)] += amp * (j2 * (j2 + 1.0) - mb * (mb - 1.0)).sqrt();
                }
            }
        }
        out
    };
    let normalize = |v: &mut Vec<f64>| {
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.iter_mut().for_each(|x| *x /= n);
    };
    // multiplets[J index] = list of states from M = J downward
    let mut multiplets: Vec<(f64, Vec<Vec<f64>>)> = Vec::new();
    let mut big_j = j1 + j2;
    while big_j >= (j1 - j2).abs() - 1e-9 {
        // highest-weight state: orthogonal to all existing multiplets at M = J
        let mut top = vec![0.0; n1 * n2];
        for a in 0..n1 {
            for b in 0..n2 {
                if (m_of(j1, a) + m_of(j2, b) - big_j).abs() < 1e-9 {
                    top[idx(a, b)] = 1.0;
                }
            }
        }
        // seed with the m1 = j1 component dominant
        let seed_b = (0..n2).find(|&b| (j1 + m_of(j2, b) - big_j).abs() < 1e-9);
        if let Some(b) = seed_b {
            top.iter_mut().for_each(|x| *x = 0.0);
            top[idx(0, b)] = 1.0;
            for a in 1..n1 {
                for bb in 0..n2 {
                    if (m_of(j1, a) + m_of(j2, bb) - big_j).abs() < 1e-9 {
                        top[idx(a, bb)] = 0.5;
                    }
                }
            }
        }
        for (jprev, states) in &multiplets {
            let k = (jprev - big_j).round() as usize;
            let other = &states[k];
            let dot: f64 = top.iter().zip(other).map(|(x, y)| x * y).sum();
            top.iter_mut().zip(other).for_each(|(x, y)| *x -= dot * y);
        }
        normalize(&mut top);
        if let Some(b) = seed_b {
            if top[idx(0, b)] < 0.0 {
                top.iter_mut().for_each(|x| *x = -*x);
            }
        }
        let mut states = vec![top];
        for _ in 0..(2.0 * big_j).round() as usize {
            let mut next = lower(states.last().unwrap());
            normalize(&mut next);
            states.push(next);
        }
        multiplets.push((big_j, states));
        big_j -= 1.0;
    }
    let (_, states) = multiplets.iter().find(|(j, _)| (j - jj).abs() < 1e-9).unwrap();
    let state = &states[(jj - mm).round() as usize];
    let a = (j1 - m1).round() as usize;
    let b = (j2 - m2).round() as usize;
    state[idx(a, b)]
}

// ---------------------------------------------------------------------------
// Monte Carlo collection probabilities from Cartesian dipole fields.

#[derive(Debug, Clone, Copy)]
pub enum OracleAperture {
    Circular { alpha1: f64 },
    Slit { alpha1: f64, alpha2: f64 },
}

#[derive(Debug, Clone, Copy)]
pub struct McEstimate {
    pub p: [f64; 3],
    pub se: [f64; 3],
    /// Accepted fraction of the full sphere.
    pub sphere_fraction: f64,
    pub sphere_fraction_se: f64,
}

fn dot(a: [C64; 3], b: [f64; 3]) -> C64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

/// Samples directions uniformly on the cap within `alpha1` of +x, rejects
/// those outside the slit, and projects the far fields of a σ⁺ dipole
/// (x̂ + iŷ)/√2 and a π dipole ẑ on the horizontal (φ̂) and vertical (θ̂)
/// polarization vectors. Returns (P_σH, P_σV, P_π) with delta-method
/// standard errors of the ratios.
pub fn mc_collection(aperture: OracleAperture, n: usize, seed: u64) -> McEstimate {
    let (alpha1, alpha2) = match aperture {
        OracleAperture::Circular { alpha1 } => (alpha1, std::f64::consts::FRAC_PI_2),
        OracleAperture::Slit { alpha1, alpha2 } => (alpha1, alpha2),
    };
    let w_sigma = 2.0 / 3.0;
    let w_pi = 1.0 / 3.0;
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let sigma = [C64::new(s, 0.0), C64::new(0.0, s), C64::new(0.0, 0.0)];
    let pi = [C64::new(0.0, 0.0), C64::new(0.0, 0.0), C64::new(1.0, 0.0)];

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cos_a = alpha1.cos();
    let cap_fraction = (1.0 - cos_a) / 2.0;
    let (mut sum, mut sum2, mut cross) = ([0.0; 3], [0.0; 3], [0.0; 3]);
    let (mut tot, mut tot2) = (0.0, 0.0);
    let mut accepted = 0usize;
    for _ in 0..n {
        let nx = cos_a + (1.0 - cos_a) * rng.random::<f64>();
        let az = std::f64::consts::TAU * rng.random::<f64>();
        let r = (1.0 - nx * nx).max(0.0).sqrt();
        let dir = [nx, r * az.cos(), r * az.sin()];
        if dir[2].abs() > alpha2.sin() {
            continue;
        }
        accepted += 1;
        let theta = dir[2].clamp(-1.0, 1.0).acos();
        let phi = dir[1].atan2(dir[0]);
        let e_theta = [theta.cos() * phi.cos(), theta.cos() * phi.sin(), -theta.sin()];
        let e_phi = [-phi.sin(), phi.cos(), 0.0];
        let v = [
            w_sigma * dot(sigma, e_phi).norm_sqr(),
            w_sigma * dot(sigma, e_theta).norm_sqr(),
            w_pi * dot(pi, e_theta).norm_sqr(),
        ];
        let t: f64 = v.iter().sum();
        for k in 0..3 {
            sum[k] += v[k];
            sum2[k] += v[k] * v[k];
            cross[k] += v[k] * t;
        }
        tot += t;
        tot2 += t * t;
    }
    let nf = n as f64;
    let mut p = [0.0; 3];
    let mut se = [0.0; 3];
    for k in 0..3 {
        p[k] = sum[k] / tot;
        // ratio estimator variance: Var(X − pT)/(n·mean(T)²)
        let mx = sum[k] / nf;
        let mt = tot / nf;
        let var_x = sum2[k] / nf - mx * mx;
        let var_t = tot2 / nf - mt * mt;
        let cov = cross[k] / nf - mx * mt;
        let var = (var_x - 2.0 * p[k] * cov + p[k] * p[k] * var_t).max(0.0);
        se[k] = (var / nf).sqrt() / mt;
    }
    let frac = accepted as f64 / nf;
    McEstimate {
        p,
        se,
        sphere_fraction: cap_fraction * frac,
        sphere_fraction_se: cap_fraction * (frac * (1.0 - frac) / nf).sqrt(),
    }
}

// ---------------------------------------------------------------------------
// Closed-form g²(0) expectation for the click-stream model.

#[derive(Debug, Clone, Copy)]
pub struct G2Inputs {
    pub p_emit: f64,
    pub p_double: f64,
    pub eta: f64,
    pub tau_ps: f64,
    pub dark_hz: f64,
    pub leak_hz: f64,
    /// Window [a, b] measured from the pulse start, ps.
    pub window: (f64, f64),
}

#[derive(Debug, Clone, Copy)]
pub struct G2Expectation {
    /// Mean zero-delay coincidences per trial.
    pub zero: f64,
    /// Mean coincidences per trial in one non-zero peak.
    pub cross: f64,
    pub g2: f64,
    /// Mean in-window signal clicks per trial, both channels.
    pub signal: f64,
    /// Mean in-window noise clicks per trial and channel.
    pub noise: f64,
}

/// Emission times E₁ and E₁ + E₂ with E ~ Exp(τ); each photon is detected
/// with probability η and routed 50/50; noise is Poisson per channel.
pub fn g2_expectation(x: G2Inputs) -> G2Expectation {
    let (a, b) = x.window;
    let t = x.tau_ps;
    let width = b - a;
    let a1 = (-a / t).exp() - (-b / t).exp();
    // Gamma(2, τ) CDF
    let gamma2 = |u: f64| 1.0 - (-u / t).exp() * (1.0 + u / t);
    let a2 = gamma2(b) - gamma2(a);
    let a12 = (-a / t).exp() - (-b / t).exp() - (width / t) * (-b / t).exp();
    let signal = (x.p_emit - x.p_double) * x.eta * a1 + x.p_double * x.eta * (a1 + a2);
    let noise = x.dark_hz * width * 1e-12 + 0.5 * x.leak_hz * width * 1e-12;
    let zero = 0.5 * x.p_double * x.eta * x.eta * a12 + signal * noise + noise * noise;
    let per_channel = 0.5 * signal + noise;
    let cross = per_channel * per_channel;
    G2Expectation { zero, cross, g2: zero / cross, signal, noise }
}

// ---------------------------------------------------------------------------
// Fringe probabilities expanded by hand from the matrix elements.

/// Joint probabilities `[apd][atom]` (atom 1 = ↑) for a state whose only
/// nonzero elements are the diagonal and ρ₀₃ = ρ₃₀*, in the z protocol at
/// wave-plate angle ψ.
pub fn z_joint(diag: [f64; 4], c03: C64, psi: f64, readout: f64) -> [[f64; 2]; 2] {
    let (co2, si2) = ((psi / 2.0).cos().powi(2), (psi / 2.0).sin().powi(2));
    let _ = c03; // ρ₀₃ couples different atom states and drops out of z
    let down_h = co2 * diag[0] + si2 * diag[1];
    let down_v = si2 * diag[0] + co2 * diag[1];
    let up_h = co2 * diag[2] + si2 * diag[3];
    let up_v = si2 * diag[2] + co2 * diag[3];
    confuse([[down_h, up_h], [down_v, up_v]], readout)
}

/// Same state class, x protocol: P(↑, H) = ¼·Σρᵢᵢ + ½·Re(e^{iφ}ρ₀₃)·contrast.
pub fn x_joint(diag: [f64; 4], c03: C64, phi: f64, contrast: f64, readout: f64) -> [[f64; 2]; 2] {
    let base = 0.25 * diag.iter().sum::<f64>();
    let osc = 0.5 * (C64::from_polar(1.0, phi) * c03).re * contrast;
    confuse([[base - osc, base + osc], [base + osc, base - osc]], readout)
}

fn confuse(p: [[f64; 2]; 2], r: f64) -> [[f64; 2]; 2] {
    let mut out = [[0.0; 2]; 2];
    for apd in 0..2 {
        out[apd][1] = (1.0 - r) * p[apd][1] + r * p[apd][0];
        out[apd][0] = (1.0 - r) * p[apd][0] + r * p[apd][1];
    }
    out
}

// ---------------------------------------------------------------------------
// Double-excitation error from a ten-level Lindblad model in which the four
// tagged S outcomes are ordinary basis states.

/// Levels: 0..4 = D₃/₂(m = −3/2 … +3/2), 4 = P(−1/2), 5 = P(+1/2),
/// 6 = S↓ from P(+1/2), 7 = S↑ from P(+1/2), 8 = S↓ from P(−1/2),
/// 9 = S↑ from P(−1/2). Square π pulse of length `t_p` on
/// D(+3/2) ↔ P(+1/2), started from D(+3/2); returns bad / (all S).
pub fn double_excitation_oracle(t_p: f64, tau: f64, branch_s: f64, steps_per_tau: usize, decay_taus: f64) -> f64 {
    type M = nalgebra::SMatrix<C64, 10, 10>;
    let gamma = 1.0 / tau;
    let d_index = |m: f64| (m + 1.5).round() as usize;
    let p_index = |m: f64| if m < 0.0 { 4 } else { 5 };

    let mut jumps: Vec<M> = Vec::new();
    for &mu in &[-0.5, 0.5] {
        for q in -1..=1 {
            let ml = mu - q as f64;
            // D₃/₂ channels
            if ml.abs() <= 1.5 {
                let w = cg_by_lowering(1.5, ml, 1.0, q as f64, 0.5, mu).powi(2);
                if w > 0.0 {
                    let mut l = M::zeros();
                    l[(d_index(ml), p_index(mu))] = C64::new((gamma * (1.0 - branch_s) * w).sqrt(), 0.0);
                    jumps.push(l);
                }
            }
            // S₁/₂ channels
            if ml.abs() <= 0.5 {
                let w = cg_by_lowering(0.5, ml, 1.0, q as f64, 0.5, mu).powi(2);
                if w > 0.0 {
                    let target = match (mu > 0.0, ml < 0.0) {
                        (true, true) => 6,
                        (true, false) => 7,
                        (false, true) => 8,
                        (false, false) => 9,
                    };
                    let mut l = M::zeros();
                    l[(target, p_index(mu))] = C64::new((gamma * branch_s * w).sqrt(), 0.0);
                    jumps.push(l);
                }
            }
        }
    }

    let rabi = std::f64::consts::PI / t_p;
    let main = cg_by_lowering(1.5, 1.5, 1.0, -1.0, 0.5, 0.5);
    let mut h = M::zeros();
    for &ml in &[1.5, 0.5] {
        let amp = cg_by_lowering(1.5, ml, 1.0, -1.0, 0.5, ml - 1.0) / main;
        let (a, b) = (d_index(ml), p_index(ml - 1.0));
        h[(a, b)] = C64::new(0.5 * rabi * amp, 0.0);
        h[(b, a)] = C64::new(0.5 * rabi * amp, 0.0);
    }
    let anti: M = jumps.iter().fold(M::zeros(), |acc, l| acc + l.adjoint() * l);

    let generator = |rho: &M, drive: bool| -> M {
        let i = C64::new(0.0, 1.0);
        let mut d = M::zeros();
        if drive {
            d -= (h * rho - rho * h) * i;
        }
        for l in &jumps {
            d += l * rho * l.adjoint();
        }
        d - (anti * rho + rho * anti) * C64::new(0.5, 0.0)
    };
    let step = |rho: &M, dt: f64, drive: bool| -> M {
        let c = |x: f64| C64::new(x, 0.0);
        let k1 = generator(rho, drive);
        let k2 = generator(&(rho + k1 * c(dt / 2.0)), drive);
        let k3 = generator(&(rho + k2 * c(dt / 2.0)), drive);
        let k4 = generator(&(rho + k3 * c(dt)), drive);
        rho + (k1 + k2 * c(2.0) + k3 * c(2.0) + k4) * c(dt / 6.0)
    };

    let mut rho = M::zeros();
    rho[(3, 3)] = C64::new(1.0, 0.0);
    let dt_max = tau / steps_per_tau as f64;
    let n_pulse = ((t_p / dt_max).ceil() as usize).max(400);
    for _ in 0..n_pulse {
        rho = step(&rho, t_p / n_pulse as f64, true);
    }
    let n_decay = (decay_taus * steps_per_tau as f64).ceil() as usize;
    for _ in 0..n_decay {
        rho = step(&rho, decay_taus * tau / n_decay as f64, false);
    }
    let good = rho[(6, 6)].re + rho[(7, 7)].re;
    let bad = rho[(8, 8)].re + rho[(9, 9)].re;
    bad / (good + bad)
}
