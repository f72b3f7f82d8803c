//! Slow, independent reference computations for test suites.
//!
//! Nothing here shares code with the production routines: the beta CDF is a
//! ratio of adaptively integrated densities scaled at the mode (so no gamma
//! function is involved), the inverse is plain bisection on that ratio, and
//! the conformal quantile is read off a sorted copy of the scores.

/// Unnormalized beta density divided by its value at the mode; `a, b ≥ 1`.
fn scaled_density(a: f64, b: f64, mode: f64, t: f64) -> f64 {
    if t <= 0.0 {
        return if a == 1.0 { ((1.0 - t) / (1.0 - mode)).powf(b - 1.0) } else { 0.0 };
    }
    if t >= 1.0 {
        return if b == 1.0 { (t / mode).powf(a - 1.0) } else { 0.0 };
    }
    let mut ln = 0.0;
    if a != 1.0 {
        ln += (a - 1.0) * (t / mode).ln();
    }
    if b != 1.0 {
        ln += (b - 1.0) * ((1.0 - t) / (1.0 - mode)).ln();
    }
    ln.exp()
}

const GK_NODES: [f64; 8] = [
    0.991_455_371_120_812_639,
    0.949_107_912_342_758_525,
    0.864_864_423_359_769_073,
    0.741_531_185_599_394_440,
    0.586_087_235_467_691_130,
    0.405_845_151_377_397_167,
    0.207_784_955_007_898_468,
    0.0,
];
const GK_WEIGHTS: [f64; 8] = [
    0.022_935_322_010_529_225,
    0.063_092_092_629_978_553,
    0.104_790_010_322_250_184,
    0.140_653_259_715_525_919,
    0.169_004_726_639_267_903,
    0.190_350_578_064_785_410,
    0.204_432_940_075_298_892,
    0.209_482_141_084_727_828,
];
const GAUSS_WEIGHTS: [f64; 4] = [
    0.129_484_966_168_869_693,
    0.279_705_391_489_276_668,
    0.381_830_050_505_118_945,
    0.417_959_183_673_469_388,
];

/// 15-point Kronrod estimate and its difference from the embedded 7-point Gauss rule.
fn kronrod(f: &impl Fn(f64) -> f64, lo: f64, hi: f64) -> (f64, f64) {
    let c = 0.5 * (lo + hi);
    let h = 0.5 * (hi - lo);
    let centre = f(c);
    let mut k = GK_WEIGHTS[7] * centre;
    let mut g = GAUSS_WEIGHTS[3] * centre;
    for i in 0..7 {
        let pair = f(c - h * GK_NODES[i]) + f(c + h * GK_NODES[i]);
        k += GK_WEIGHTS[i] * pair;
        if i % 2 == 1 {
            g += GAUSS_WEIGHTS[i / 2] * pair;
        }
    }
    (k * h, (k - g).abs() * h)
}

/// Adaptive Gauss–Kronrod integration to absolute tolerance `tol`. A panel
/// also stops once its error estimate falls below `1e-12` of its value: large
/// shape parameters put relative rounding noise near `1e-13` into the
/// integrand, and halving further cannot get under that floor.
pub fn integrate(f: &impl Fn(f64) -> f64, lo: f64, hi: f64, tol: f64) -> f64 {
    fn recurse(f: &impl Fn(f64) -> f64, lo: f64, hi: f64, tol: f64, depth: u32) -> f64 {
        let (value, err) = kronrod(f, lo, hi);
        if err <= tol || err <= 1e-12 * value.abs() || depth >= 40 {
            return value;
        }
        let mid = 0.5 * (lo + hi);
        recurse(f, lo, mid, 0.5 * tol, depth + 1) + recurse(f, mid, hi, 0.5 * tol, depth + 1)
    }
    if hi <= lo {
        return 0.0;
    }
    recurse(f, lo, hi, tol, 0)
}

fn mode(a: f64, b: f64) -> f64 {
    if a + b > 2.0 {
        (a - 1.0) / (a + b - 2.0)
    } else {
        0.5
    }
}

/// Integral of the scaled density over `[lo, hi]` after the substitution
/// `t = lo + (hi - lo)(3w^2 - 2w^3)`, whose vanishing end slopes smooth out
/// the `t^(a-1)` and `(1-t)^(b-1)` endpoint behavior for shapes below 2.
fn panel(a: f64, b: f64, m: f64, lo: f64, hi: f64) -> f64 {
    let width = hi - lo;
    let f = |w: f64| {
        let t = lo + width * w * w * (3.0 - 2.0 * w);
        scaled_density(a, b, m, t) * 6.0 * w * (1.0 - w) * width
    };
    integrate(&f, 0.0, 1.0, 1e-15)
}

fn mass(a: f64, b: f64, m: f64, lo: f64, hi: f64) -> f64 {
    // Split at the mode so the peak is always a subinterval boundary.
    let split = m.clamp(lo, hi);
    let mut total = 0.0;
    if split > lo {
        total += panel(a, b, m, lo, split);
    }
    if hi > split {
        total += panel(a, b, m, split, hi);
    }
    total
}

/// Regularized incomplete beta function by quadrature, for `a, b ≥ 1`.
pub fn beta_cdf_quadrature(a: f64, b: f64, x: f64) -> f64 {
    assert!(a >= 1.0 && b >= 1.0, "oracle covers a, b >= 1");
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let m = mode(a, b);
    let left = mass(a, b, m, 0.0, x);
    let right = mass(a, b, m, x, 1.0);
    left / (left + right)
}

/// Beta quantile by bisection on [`beta_cdf_quadrature`].
pub fn beta_inv_bisection(a: f64, b: f64, level: f64) -> f64 {
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if beta_cdf_quadrature(a, b, mid) < level {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Conformal quantile for `epsilon_hat = v/(n+1)`: the `(n+1−v)`-th smallest
/// score, or 1 when that rank exceeds `n`.
pub fn naive_quantile(scores: &[f64], epsilon_hat: f64) -> f64 {
    let n = scores.len();
    let v = (epsilon_hat * (n + 1) as f64).round() as usize;
    let rank = n + 1 - v;
    if rank > n {
        return 1.0;
    }
    let mut sorted = scores.to_vec();
    sorted.sort_by(|x, y| x.partial_cmp(y).expect("finite scores"));
    sorted[rank - 1]
}

/// Adjusted level by brute force: the largest feasible `v` over every
/// integer, using the quadrature quantile.
pub fn adjusted_epsilon_bruteforce(epsilon: f64, delta: f64, n: usize) -> Option<f64> {
    let top = ((n + 1) as f64 * epsilon).floor() as usize;
    (1..=top)
        .filter(|&v| beta_inv_bisection((n + 1 - v) as f64, v as f64, delta) >= 1.0 - epsilon)
        .max()
        .map(|v| v as f64 / (n + 1) as f64)
}
