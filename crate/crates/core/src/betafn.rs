//! Regularized incomplete beta function `I_x(a, b)` and its inverse in `x`.
//!
//! The forward function is a modified-Lentz continued fraction with the usual
//! symmetry switch `I_x(a, b) = 1 - I_{1-x}(b, a)` for `x > (a+1)/(a+b+2)`. The
//! prefactor `x^a (1-x)^b / B(a, b)` is assembled from Stirling-corrected
//! logarithms so that it stays accurate when `a` and `b` are in the thousands,
//! which is where calibration sets of a few hundred to a few thousand points
//! put the quantile computation.
//!
//! The inverse is Newton's method on the CDF, safeguarded by a bracketing
//! interval that falls back to bisection whenever a Newton step leaves it.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Iteration cap shared by the continued fraction and the inverse solver.
pub const MAX_ITERATIONS: usize = 200;

/// Target residual `|I_x(a, b) - p|` for the inverse.
pub const INVERSE_TOLERANCE: f64 = 1e-12;

const TINY: f64 = 1e-300;

/// Shape parameters of a Beta distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaParams {
    a: f64,
    b: f64,
}

impl BetaParams {
    pub fn new(a: f64, b: f64) -> Result<Self> {
        if !(a > 0.0 && a.is_finite() && b > 0.0 && b.is_finite()) {
            return Err(Error::Domain(format!(
                "beta shape parameters must be positive and finite, got a={a}, b={b}"
            )));
        }
        Ok(BetaParams { a, b })
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn b(&self) -> f64 {
        self.b
    }
}

/// Beta CDF, i.e. the regularized incomplete beta function `I_x(a, b)`.
pub fn beta_cdf(p: BetaParams, x: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::Domain(format!("beta_cdf needs x in [0, 1], got {x}")));
    }
    if x == 0.0 {
        return Ok(0.0);
    }
    if x == 1.0 {
        return Ok(1.0);
    }
    let (a, b) = (p.a, p.b);
    let y = 1.0 - x;
    let value = if x > (a + 1.0) / (a + b + 2.0) {
        1.0 - continued_fraction(b, a, y, x)?
    } else {
        continued_fraction(a, b, x, y)?
    };
    Ok(value.clamp(0.0, 1.0))
}

/// Beta density at `x`.
pub fn beta_pdf(p: BetaParams, x: f64) -> f64 {
    if x <= 0.0 || x >= 1.0 {
        return 0.0;
    }
    let y = 1.0 - x;
    (ln_power_terms(p.a, p.b, x, y)).exp() / (x * y)
}

/// Quantile of the Beta distribution: the `x` with `I_x(a, b) = level`.
pub fn beta_inv_cdf(p: BetaParams, level: f64) -> Result<f64> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::Domain(format!(
            "beta_inv_cdf needs a level in (0, 1), got {level}"
        )));
    }
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    let mut x = initial_guess(p.a, p.b, level).clamp(1e-300, 1.0 - f64::EPSILON);
    let mut residual = f64::INFINITY;
    // Newton steps taken after the residual target is met. A small residual
    // can still leave a sizeable error in x where the density is low, so a
    // few polishing steps run until the step itself is negligible.
    let mut polish = 0;

    for _ in 0..MAX_ITERATIONS {
        residual = beta_cdf(p, x)? - level;
        if residual == 0.0 {
            return Ok(x);
        }
        if residual.abs() <= INVERSE_TOLERANCE {
            let density = beta_pdf(p, x);
            let step = residual / density;
            if polish >= 3 || !step.is_finite() || step.abs() <= 4.0 * f64::EPSILON * x {
                return Ok(x);
            }
            polish += 1;
        }
        if residual > 0.0 {
            hi = x;
        } else {
            lo = x;
        }
        // Bracket collapsed to adjacent floats: x is as good as f64 allows.
        if hi - lo <= 4.0 * f64::EPSILON * hi.max(f64::MIN_POSITIVE) {
            return Ok(x);
        }
        let density = beta_pdf(p, x);
        let newton = if density > 0.0 && density.is_finite() {
            x - residual / density
        } else {
            f64::NAN
        };
        x = if newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
    }
    Err(Error::NonConvergence {
        routine: "beta_inv_cdf",
        iterations: MAX_ITERATIONS,
        residual,
    })
}

/// `I_x(a, b)` by the continued fraction, valid for `x <= (a+1)/(a+b+2)`.
/// `y` must equal `1 - x`; it is passed separately so the caller's exact
/// complement is used.
fn continued_fraction(a: f64, b: f64, x: f64, y: f64) -> Result<f64> {
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;

    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    let mut last_change = f64::INFINITY;

    for m in 1..=MAX_ITERATIONS {
        let m = m as f64;
        let m2 = 2.0 * m;

        let even = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + even * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + even / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;

        let odd = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + odd * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + odd / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let step = d * c;
        h *= step;
        last_change = (step - 1.0).abs();

        if last_change <= f64::EPSILON {
            return Ok(ln_power_terms(a, b, x, y).exp() * h / a);
        }
    }
    Err(Error::NonConvergence {
        routine: "beta_cdf continued fraction",
        iterations: MAX_ITERATIONS,
        residual: last_change,
    })
}

/// `ln( x^a y^b / B(a, b) )` with `y = 1 - x`.
///
/// Written as `a ln(x (a+b)/a) + b ln(y (a+b)/b) + ln sqrt(ab / (2 pi (a+b)))`
/// plus Stirling remainders, which avoids subtracting the large `ln Gamma`
/// values directly.
fn ln_power_terms(a: f64, b: f64, x: f64, y: f64) -> f64 {
    let s = a + b;
    let lx = ln_scaled(x, y, a, b);
    let ly = ln_scaled(y, x, b, a);
    a * lx + b * ly + 0.5 * (a.ln() + b.ln() - s.ln() - (2.0 * PI).ln()) - stirling_remainder(a)
        - stirling_remainder(b)
        + stirling_remainder(s)
}

/// `ln(x (p + q) / p)` where `x + y = 1`.
fn ln_scaled(x: f64, y: f64, p: f64, q: f64) -> f64 {
    let t = (x * q - y * p) / p;
    if t.abs() < 0.5 {
        t.ln_1p()
    } else {
        x.ln() + (q / p).ln_1p()
    }
}

/// `ln Gamma(z) - [(z - 1/2) ln z - z + ln sqrt(2 pi)]`.
fn stirling_remainder(z: f64) -> f64 {
    if z >= 10.0 {
        return stirling_series(z);
    }
    // Shift upward with ln Gamma(z) = ln Gamma(z + n) - sum ln(z + k).
    let n = (10.0 - z).ceil();
    let shifted = z + n;
    let mut log_rising = 0.0;
    let mut k = 0.0;
    while k < n {
        log_rising += (z + k).ln();
        k += 1.0;
    }
    stirling_series(shifted) + stirling_main(shifted) - log_rising - stirling_main(z)
}

fn stirling_main(z: f64) -> f64 {
    (z - 0.5) * z.ln() - z + 0.5 * (2.0 * PI).ln()
}

fn stirling_series(z: f64) -> f64 {
    let r = 1.0 / z;
    let r2 = r * r;
    r * (1.0 / 12.0
        - r2 * (1.0 / 360.0
            - r2 * (1.0 / 1260.0
                - r2 * (1.0 / 1680.0
                    - r2 * (1.0 / 1188.0 - r2 * (691.0 / 360_360.0 - r2 / 156.0))))))
}

/// `ln Gamma(z)` for `z > 0`.
pub fn ln_gamma(z: f64) -> f64 {
    stirling_main(z) + stirling_remainder(z)
}

/// Starting point for the inverse (normal / power-law approximations).
fn initial_guess(a: f64, b: f64, p: f64) -> f64 {
    if a >= 1.0 && b >= 1.0 {
        let pp = if p < 0.5 { p } else { 1.0 - p };
        let t = (-2.0 * pp.ln()).sqrt();
        let mut z = (2.30753 + t * 0.27061) / (1.0 + t * (0.99229 + t * 0.04481)) - t;
        if p < 0.5 {
            z = -z;
        }
        let al = (z * z - 3.0) / 6.0;
        let h = 2.0 / (1.0 / (2.0 * a - 1.0) + 1.0 / (2.0 * b - 1.0));
        let w = z * (al + h).sqrt() / h
            - (1.0 / (2.0 * b - 1.0) - 1.0 / (2.0 * a - 1.0)) * (al + 5.0 / 6.0 - 2.0 / (3.0 * h));
        a / (a + b * (2.0 * w).exp())
    } else {
        let lna = (a / (a + b)).ln();
        let lnb = (b / (a + b)).ln();
        let t = (a * lna).exp() / a;
        let u = (b * lnb).exp() / b;
        let w = t + u;
        if p < t / w {
            (a * w * p).powf(1.0 / a)
        } else {
            1.0 - (b * w * (1.0 - p)).powf(1.0 / b)
        }
    }
}
