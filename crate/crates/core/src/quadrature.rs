//! Globally adaptive Gauss–Kronrod (7/15) quadrature for small vector-valued
//! integrands.
//!
//! Every component is integrated on the same set of subintervals; the interval
//! with the largest error (maximum over components) is bisected until the
//! total error meets `max(abs, rel·max_c |I_c|)`.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QuadError {
    #[error("quadrature did not converge: error estimate {estimate:e} > target {target:e} after {intervals} intervals")]
    NoConvergence { estimate: f64, target: f64, intervals: usize },
    #[error("integrand returned a non-finite value at x = {0}")]
    NonFinite(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerance {
    pub abs: f64,
    pub rel: f64,
    pub max_intervals: usize,
}

impl Tolerance {
    pub fn absolute(abs: f64) -> Self {
        Tolerance { abs, rel: 0.0, max_intervals: 4000 }
    }

    pub fn relative(rel: f64) -> Self {
        Tolerance { abs: 0.0, rel, max_intervals: 4000 }
    }

    fn target(&self, norm: f64) -> f64 {
        self.abs.max(self.rel * norm)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Integral<const N: usize> {
    pub value: [f64; N],
    pub error: f64,
    pub intervals: usize,
}

const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.0,
];

const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];

// Gauss weights for the odd Kronrod nodes XGK[1], XGK[3], XGK[5], XGK[7].
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

#[derive(Debug, Clone, Copy)]
struct Segment<const N: usize> {
    a: f64,
    b: f64,
    value: [f64; N],
    error: f64,
}

fn gk15<const N: usize, F: Fn(f64) -> [f64; N]>(f: &F, a: f64, b: f64) -> Result<Segment<N>, QuadError> {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let mut kronrod = [0.0; N];
    let mut gauss = [0.0; N];
    for (i, (&x, &wk)) in XGK.iter().zip(WGK.iter()).enumerate() {
        let nodes: &[f64] = if x == 0.0 { &[center] } else { &[center - half * x, center + half * x] };
        for &t in nodes {
            let y = f(t);
            if y.iter().any(|v| !v.is_finite()) {
                return Err(QuadError::NonFinite(t));
            }
            for c in 0..N {
                kronrod[c] += wk * y[c];
                if i % 2 == 1 {
                    gauss[c] += WG[i / 2] * y[c];
                }
            }
        }
    }
    let mut error = 0.0f64;
    for c in 0..N {
        kronrod[c] *= half;
        gauss[c] *= half;
        error = error.max((kronrod[c] - gauss[c]).abs());
    }
    Ok(Segment { a, b, value: kronrod, error })
}

/// Integrate over [a, b].
pub fn integrate<const N: usize, F>(f: F, a: f64, b: f64, tol: Tolerance) -> Result<Integral<N>, QuadError>
where
    F: Fn(f64) -> [f64; N],
{
    integrate_pieces(f, &[a, b], tol)
}

/// Integrate over consecutive pieces `[p0, p1], [p1, p2], …`. Breakpoints
/// should sit on kinks or endpoint singularities of the integrand.
pub fn integrate_pieces<const N: usize, F>(f: F, breaks: &[f64], tol: Tolerance) -> Result<Integral<N>, QuadError>
where
    F: Fn(f64) -> [f64; N],
{
    let mut segments = Vec::new();
    for w in breaks.windows(2) {
        if w[1] > w[0] {
            segments.push(gk15(&f, w[0], w[1])?);
        }
    }
    if segments.is_empty() {
        return Ok(Integral { value: [0.0; N], error: 0.0, intervals: 0 });
    }

    loop {
        let mut value = [0.0; N];
        let mut error = 0.0;
        for s in &segments {
            for c in 0..N {
                value[c] += s.value[c];
            }
            error += s.error;
        }
        let norm = value.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let target = tol.target(norm);
        if error <= target {
            return Ok(Integral { value, error, intervals: segments.len() });
        }

        let (worst, _) = segments
            .iter()
            .enumerate()
            .max_by(|x, y| x.1.error.total_cmp(&y.1.error))
            .expect("nonempty");
        let s = segments[worst];
        let mid = 0.5 * (s.a + s.b);
        let exhausted = segments.len() >= tol.max_intervals || mid <= s.a || mid >= s.b;
        if exhausted {
            return Err(QuadError::NoConvergence { estimate: error, target, intervals: segments.len() });
        }
        segments[worst] = gk15(&f, s.a, mid)?;
        segments.push(gk15(&f, mid, s.b)?);
    }
}
