//! Scalar special functions for Gaussian constraint tightening.
//!
//! Every inverse is polished by Newton iterations on the forward function, so
//! the accuracy of the initial rational approximations never reaches the
//! tightened constraint right-hand sides.

use std::f64::consts::{PI, SQRT_2};

const TWO_OVER_SQRT_PI: f64 = std::f64::consts::FRAC_2_SQRT_PI;
/// Quantile arguments are clamped into `[PROB_CLAMP, 1 − PROB_CLAMP]`.
const PROB_CLAMP: f64 = 1e-15;

#[derive(Debug, Clone, Copy, PartialEq, thiserror::Error)]
pub enum DomainError {
    #[error("probability {0} is outside the open interval (0, 1)")]
    Probability(f64),
    #[error("erf_inv argument {0} is outside the open interval (-1, 1)")]
    ErfArgument(f64),
    #[error("degrees of freedom must be at least 1")]
    DegreesOfFreedom,
}

/// A probability strictly inside `(0, 1)`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct Probability(f64);

impl Probability {
    pub fn new(value: f64) -> Result<Self, DomainError> {
        if value > 0.0 && value < 1.0 {
            Ok(Self(value))
        } else {
            Err(DomainError::Probability(value))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for Probability {
    type Error = DomainError;
    fn try_from(value: f64) -> Result<Self, DomainError> {
        Self::new(value)
    }
}

/// Error function, accurate to about 1e-15 absolute.
pub fn erf(x: f64) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    let ax = x.abs();
    let r = if ax < 2.5 {
        erf_series(ax)
    } else {
        1.0 - erfc_cf(ax)
    };
    r.copysign(x)
}

/// Complementary error function with full relative accuracy in the upper tail.
pub fn erfc(x: f64) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    if x < 0.0 {
        2.0 - erfc(-x)
    } else if x < 0.5 {
        1.0 - erf_series(x)
    } else if x < 2.5 {
        erfc_series_mid(x)
    } else {
        erfc_cf(x)
    }
}

fn erf_series(x: f64) -> f64 {
    // erf(x) = 2/√π Σ (-1)^n x^(2n+1) / (n! (2n+1))
    let x2 = x * x;
    let mut term = x;
    let mut sum = x;
    for n in 1..200 {
        term *= -x2 / n as f64;
        let contrib = term / (2 * n + 1) as f64;
        sum += contrib;
        if contrib.abs() <= 1e-17 * sum.abs() {
            break;
        }
    }
    TWO_OVER_SQRT_PI * sum
}

fn erfc_series_mid(x: f64) -> f64 {
    // Kummer form: erf(x) = 2x/√π e^{-x²} Σ (2x²)^n / (1·3·…·(2n+1)); all terms positive.
    let x2 = x * x;
    let mut term = 1.0;
    let mut sum = 1.0;
    for n in 1..400 {
        term *= 2.0 * x2 / (2 * n + 1) as f64;
        sum += term;
        if term <= 1e-17 * sum {
            break;
        }
    }
    let erf_val = TWO_OVER_SQRT_PI * x * (-x2).exp() * sum;
    1.0 - erf_val
}

fn erfc_cf(x: f64) -> f64 {
    // erfc(x) = e^{-x²}/√π · 1/(x + (1/2)/(x + 1/(x + (3/2)/(x + …)))) evaluated by modified Lentz.
    if x > 27.0 {
        return 0.0;
    }
    let tiny = 1e-300;
    let mut f = x;
    let mut c = x;
    let mut d = 0.0;
    for n in 1..500 {
        let an = n as f64 * 0.5;
        d = x + an * d;
        if d.abs() < tiny {
            d = tiny;
        }
        c = x + an / c;
        if c.abs() < tiny {
            c = tiny;
        }
        d = 1.0 / d;
        let delta = c * d;
        f *= delta;
        if (delta - 1.0).abs() < 1e-16 {
            break;
        }
    }
    (-x * x).exp() / (PI.sqrt() * f)
}

/// Giles' single-precision rational approximation, used as a Newton seed.
fn erf_inv_seed(p: f64, w: f64) -> f64 {
    let poly = if w < 5.0 {
        let w = w - 2.5;
        let mut r = 2.810_226_36e-08;
        for c in [
            3.432_739_39e-07,
            -3.523_387_7e-06,
            -4.391_506_54e-06,
            0.000_218_580_87,
            -0.001_253_725_03,
            -0.004_177_681_64,
            0.246_640_727,
            1.501_409_41,
        ] {
            r = c + r * w;
        }
        r
    } else {
        let w = w.sqrt() - 3.0;
        let mut r = -0.000_200_214_257;
        for c in [
            0.000_100_950_558,
            0.001_349_343_22,
            -0.003_673_428_44,
            0.005_739_507_73,
            -0.007_622_461_3,
            0.009_438_870_47,
            1.001_674_06,
            2.832_976_82,
        ] {
            r = c + r * w;
        }
        r
    };
    poly * p
}

/// Solves `erfc(x) = q` for `q ∈ (0, 1]`, returning `x ≥ 0`.
fn erfc_inv(q: f64) -> f64 {
    debug_assert!(q > 0.0 && q <= 1.0);
    let p = 1.0 - q;
    let w = -(q * (2.0 - q)).ln();
    let mut x = erf_inv_seed(p, w).max(0.0);
    for _ in 0..8 {
        let deriv = TWO_OVER_SQRT_PI * (-x * x).exp();
        if deriv == 0.0 {
            break;
        }
        // erfc is decreasing: x ← x + (erfc(x) − q)/(2/√π e^{−x²})
        let step = (erfc(x) - q) / deriv;
        x += step;
        if step.abs() <= 1e-16 * x.abs().max(1e-300) {
            break;
        }
    }
    x
}

/// Inverse error function on `(−1, 1)`.
pub fn erf_inv(p: f64) -> Result<f64, DomainError> {
    if p.is_nan() || p.abs() >= 1.0 {
        return Err(DomainError::ErfArgument(p));
    }
    if p == 0.0 {
        return Ok(0.0);
    }
    let ap = p.abs();
    let x = if ap <= 0.5 {
        let w = -((1.0 - ap) * (1.0 + ap)).ln();
        let mut x = erf_inv_seed(ap, w);
        for _ in 0..4 {
            let step = (erf(x) - ap) / (TWO_OVER_SQRT_PI * (-x * x).exp());
            x -= step;
        }
        x
    } else {
        erfc_inv(1.0 - ap)
    };
    Ok(x.copysign(p))
}

/// Standard normal CDF `Φ(z) = ½·erfc(−z/√2)`.
pub fn normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / SQRT_2)
}

fn clamp_probability(p: f64) -> Result<f64, DomainError> {
    if !(p > 0.0 && p < 1.0) {
        return Err(DomainError::Probability(p));
    }
    if !(PROB_CLAMP..=1.0 - PROB_CLAMP).contains(&p) {
        log::warn!("probability {p:e} clamped to [{PROB_CLAMP:e}, 1-{PROB_CLAMP:e}]");
        Ok(p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP))
    } else {
        Ok(p)
    }
}

/// Standard normal quantile `Φ⁻¹(p)`.
pub fn normal_quantile(p: f64) -> Result<f64, DomainError> {
    let p = clamp_probability(p)?;
    Ok(if p < 0.5 {
        -SQRT_2 * erfc_inv(2.0 * p)
    } else {
        SQRT_2 * erfc_inv(2.0 * (1.0 - p))
    })
}

/// Natural log of the gamma function (Lanczos, g = 7).
pub fn ln_gamma(x: f64) -> f64 {
    const G: f64 = 7.0;
    const COEF: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        return (PI / (PI * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut a = COEF[0];
    let t = x + G + 0.5;
    for (i, &c) in COEF.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    0.5 * (2.0 * PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

/// Regularized lower incomplete gamma `P(a, x)`.
///
/// Series below `x = a + 1`, Lentz continued fraction for the complement above.
pub fn gamma_p(a: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    let ln_pre = a * x.ln() - x - ln_gamma(a);
    if x < a + 1.0 {
        let mut ap = a;
        let mut del = 1.0 / a;
        let mut sum = del;
        for _ in 0..10_000 {
            ap += 1.0;
            del *= x / ap;
            sum += del;
            if del.abs() < sum.abs() * 1e-17 {
                break;
            }
        }
        (sum * ln_pre.exp()).min(1.0)
    } else {
        1.0 - gamma_q_cf(a, x, ln_pre)
    }
}

fn gamma_q_cf(a: f64, x: f64, ln_pre: f64) -> f64 {
    let tiny = 1e-300;
    let mut b = x + 1.0 - a;
    let mut c = 1.0 / tiny;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..10_000 {
        let an = -(i as f64) * (i as f64 - a);
        b += 2.0;
        d = an * d + b;
        if d.abs() < tiny {
            d = tiny;
        }
        c = b + an / c;
        if c.abs() < tiny {
            c = tiny;
        }
        d = 1.0 / d;
        let delta = d * c;
        h *= delta;
        if (delta - 1.0).abs() < 1e-16 {
            break;
        }
    }
    ln_pre.exp() * h
}

/// χ² CDF with `n` degrees of freedom.
pub fn chi2_cdf(x: f64, n: u32) -> f64 {
    gamma_p(0.5 * n as f64, 0.5 * x)
}

fn chi2_pdf(x: f64, n: u32) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    let k = 0.5 * n as f64;
    ((k - 1.0) * x.ln() - 0.5 * x - k * 2f64.ln() - ln_gamma(k)).exp()
}

/// χ² quantile `F⁻¹(p, n)`: Wilson–Hilferty seed, safeguarded Newton polish.
pub fn chi2_inv(p: f64, n: u32) -> Result<f64, DomainError> {
    if n == 0 {
        return Err(DomainError::DegreesOfFreedom);
    }
    let p = clamp_probability(p)?;
    let nf = n as f64;
    let z = normal_quantile(p)?;
    let h = 2.0 / (9.0 * nf);
    let mut x = nf * (1.0 - h + z * h.sqrt()).powi(3);
    if x.is_nan() || x <= 0.0 {
        x = 1e-3 * nf;
    }
    // Bracket [lo, hi] on the monotone CDF; Newton steps leaving it fall back to bisection.
    let (mut lo, mut hi) = (0.0, x.max(1.0));
    while chi2_cdf(hi, n) < p {
        lo = hi;
        hi *= 2.0;
    }
    for _ in 0..200 {
        let f = chi2_cdf(x, n) - p;
        if f.abs() <= 1e-15 {
            break;
        }
        if f < 0.0 {
            lo = lo.max(x);
        } else {
            hi = hi.min(x);
        }
        let dens = chi2_pdf(x, n);
        let mut next = if dens > 0.0 { x - f / dens } else { f64::NAN };
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        if (next - x).abs() <= 1e-15 * x {
            x = next;
            break;
        }
        x = next;
    }
    Ok(x)
}
