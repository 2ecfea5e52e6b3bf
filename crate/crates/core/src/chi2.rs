//! χ² distribution numerics for integer degrees of freedom.
//!
//! The CDF is the regularized lower incomplete gamma function `P(k/2, x/2)`,
//! evaluated with the power series below `a + 1` and Lentz's continued
//! fraction for the upper tail above it. Whichever of `P` and `Q = 1 - P` is
//! computed directly is the smaller side, so both the CDF and the survival
//! function keep their relative accuracy in the tails.

use crate::error::{Error, Result};
use crate::scalar::Real;

const MAX_SERIES_TERMS: usize = 1_000_000;
const MAX_ROOT_ITERS: usize = 400;

/// Degrees of freedom of a χ² distribution; always at least one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct DegreesOfFreedom(u64);

impl DegreesOfFreedom {
    pub fn new(k: u64) -> Result<Self> {
        if k == 0 {
            return Err(Error::invalid("degrees of freedom must be >= 1"));
        }
        Ok(Self(k))
    }

    #[inline]
    pub fn get(self) -> u64 {
        self.0
    }

    #[inline]
    fn shape<T: Real>(self) -> T {
        T::count(self.0) / T::lit(2.0)
    }
}

impl TryFrom<u64> for DegreesOfFreedom {
    type Error = Error;
    fn try_from(k: u64) -> Result<Self> {
        Self::new(k)
    }
}

const LANCZOS_G: f64 = 7.0;
const LANCZOS_COEF: [f64; 9] = [
    0.999_999_999_999_809_93,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_13,
    -176.615_029_162_140_59,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_571_6e-6,
    1.505_632_735_149_311_6e-7,
];

/// Natural log of the gamma function for `z > 0` (Lanczos, g = 7).
pub fn ln_gamma<T: Real>(z: T) -> T {
    let half = T::lit(0.5);
    if z < half {
        // reflection keeps the approximation in its accurate half-plane
        let pi = T::PI();
        return (pi / (pi * z).sin()).ln() - ln_gamma(T::one() - z);
    }
    let z = z - T::one();
    let mut acc = T::lit(LANCZOS_COEF[0]);
    for (i, &c) in LANCZOS_COEF.iter().enumerate().skip(1) {
        acc = acc + T::lit(c) / (z + T::count(i as u64));
    }
    let t = z + T::lit(LANCZOS_G) + half;
    half * (T::TAU()).ln() + (z + half) * t.ln() - t + acc.ln()
}

/// Both regularized incomplete gamma functions `(P(a, x), Q(a, x))`.
pub fn regularized_gamma<T: Real>(a: T, x: T) -> Result<(T, T)> {
    if !(a > T::zero()) || !a.is_finite() {
        return Err(Error::invalid("gamma shape must be positive and finite"));
    }
    if x.is_nan() || x < T::zero() {
        return Err(Error::invalid("gamma argument must be non-negative"));
    }
    if x == T::zero() {
        return Ok((T::zero(), T::one()));
    }
    if x.is_infinite() {
        return Ok((T::one(), T::zero()));
    }
    if x < a + T::one() {
        let p = lower_series(a, x)?;
        Ok((p, T::one() - p))
    } else {
        let q = upper_continued_fraction(a, x)?;
        Ok((T::one() - q, q))
    }
}

/// `ln(x/a) - (x-a)/a`, by series when `x` is close to `a`.
fn log_ratio_minus_delta<T: Real>(x: T, a: T) -> T {
    let d = (x - a) / a;
    if d.abs() >= T::lit(0.5) {
        return (x / a).ln() - d;
    }
    let eps = T::epsilon();
    let mut pow = d * d;
    let mut sum = -pow / T::lit(2.0);
    for n in 3..200u64 {
        pow = -pow * d;
        let term = -pow / T::count(n);
        sum = sum + term;
        if term.abs() <= eps * sum.abs() {
            break;
        }
    }
    sum
}

/// `ln Γ(a) - [(a - ½) ln a - a + ½ ln 2π]` for `a >= 10`.
fn stirling_correction<T: Real>(a: T) -> T {
    let r = T::one() / a;
    let r2 = r * r;
    let c = [
        1.0 / 12.0,
        -1.0 / 360.0,
        1.0 / 1260.0,
        -1.0 / 1680.0,
        1.0 / 1188.0,
        -691.0 / 360_360.0,
    ];
    let mut acc = T::zero();
    for &ci in c.iter().rev() {
        acc = acc * r2 + T::lit(ci);
    }
    acc * r
}

/// `ln(x^a e^{-x} / Γ(a))`.
fn log_prefactor<T: Real>(a: T, x: T) -> T {
    if a < T::lit(10.0) {
        return a * x.ln() - x - ln_gamma(a);
    }
    // Stirling form: the O(a) terms cancel analytically
    a * log_ratio_minus_delta(x, a) + T::lit(0.5) * (a / T::TAU()).ln() - stirling_correction(a)
}

fn lower_series<T: Real>(a: T, x: T) -> Result<T> {
    let eps = T::epsilon();
    let mut ap = a;
    let mut term = T::one() / a;
    let mut sum = term;
    for _ in 0..MAX_SERIES_TERMS {
        ap = ap + T::one();
        term = term * x / ap;
        sum = sum + term;
        if term.abs() < sum.abs() * eps {
            return Ok((log_prefactor(a, x).exp() * sum).min(T::one()));
        }
    }
    Err(Error::Numeric(format!(
        "incomplete gamma series did not converge (a={a}, x={x})"
    )))
}

fn upper_continued_fraction<T: Real>(a: T, x: T) -> Result<T> {
    let eps = T::epsilon();
    let tiny = T::min_positive_value() / eps;
    let two = T::lit(2.0);
    let mut b = x + T::one() - a;
    let mut c = T::one() / tiny;
    let mut d = T::one() / b;
    let mut h = d;
    for i in 1..MAX_SERIES_TERMS {
        let i = T::count(i as u64);
        let an = -i * (i - a);
        b = b + two;
        d = an * d + b;
        if d.abs() < tiny {
            d = tiny;
        }
        c = b + an / c;
        if c.abs() < tiny {
            c = tiny;
        }
        d = T::one() / d;
        let delta = d * c;
        h = h * delta;
        if (delta - T::one()).abs() < eps {
            return Ok((log_prefactor(a, x).exp() * h).min(T::one()));
        }
    }
    Err(Error::Numeric(format!(
        "incomplete gamma continued fraction did not converge (a={a}, x={x})"
    )))
}

fn check_x<T: Real>(x: T) -> Result<()> {
    if x.is_nan() || x < T::zero() {
        return Err(Error::invalid(format!("χ² argument must be >= 0, got {x}")));
    }
    Ok(())
}

/// `F_k(x)`, the χ² cumulative distribution function.
pub fn chi2_cdf<T: Real>(x: T, k: DegreesOfFreedom) -> Result<T> {
    check_x(x)?;
    Ok(regularized_gamma(k.shape::<T>(), x / T::lit(2.0))?.0)
}

/// `1 - F_k(x)` computed directly in the upper tail.
pub fn chi2_sf<T: Real>(x: T, k: DegreesOfFreedom) -> Result<T> {
    check_x(x)?;
    Ok(regularized_gamma(k.shape::<T>(), x / T::lit(2.0))?.1)
}

/// Upper-tail p-value clipped to `[1e-300, 1]`.
pub fn chi2_p_value<T: Real>(x: T, k: DegreesOfFreedom) -> Result<T> {
    Ok(chi2_sf(x, k)?.max(T::p_floor()).min(T::one()))
}

/// χ² probability density.
pub fn chi2_pdf<T: Real>(x: T, k: DegreesOfFreedom) -> T {
    if x <= T::zero() {
        return match k.get() {
            1 => T::infinity(),
            2 => T::lit(0.5),
            _ => T::zero(),
        };
    }
    let a = k.shape::<T>();
    ((a - T::one()) * x.ln() - x / T::lit(2.0) - a * T::LN_2() - ln_gamma(a)).exp()
}

/// Upper-tail standard normal quantile for `q <= 0.5`, rational
/// approximation good to ~4.5e-4. Only used to seed the root finder.
fn normal_upper_quantile_rough(q: f64) -> f64 {
    let t = (-2.0 * q.max(1e-300).ln()).sqrt();
    let num = 2.515_517 + 0.802_853 * t + 0.010_328 * t * t;
    let den = 1.0 + 1.432_788 * t + 0.189_269 * t * t + 0.001_308 * t * t * t;
    t - num / den
}

/// Starting point for the quantile search. `tail` is the target mass on
/// the side being solved (`<= 0.5`).
fn initial_guess(tail: f64, upper_side: bool, k: f64) -> f64 {
    let z = normal_upper_quantile_rough(tail);
    let z = if upper_side { z } else { -z };
    // Wilson–Hilferty
    let s = 2.0 / (9.0 * k);
    let v = 1.0 - s + z * s.sqrt();
    if v > 0.0 && (upper_side || tail > 1e-3) {
        return k * v * v * v;
    }
    // leading term of the small-x series
    let a = k / 2.0;
    let ln_x = (tail.ln() + ln_gamma(a + 1.0)) / a + std::f64::consts::LN_2;
    ln_x.exp().max(f64::MIN_POSITIVE)
}

/// Solves `cdf(x) = target` on the lower side or `sf(x) = target` on the
/// upper side. Newton steps are taken while they stay inside the current
/// bracket; otherwise the bracket is bisected.
fn solve<T: Real>(target: T, upper_side: bool, k: DegreesOfFreedom) -> Result<T> {
    let eval = |x: T| -> Result<T> {
        let (p, q) = regularized_gamma(k.shape::<T>(), x / T::lit(2.0))?;
        // increasing in x on both sides
        Ok(if upper_side { target - q } else { p - target })
    };

    let kf = T::count(k.get());
    let mut lo = T::zero();
    let mut hi = kf.max(T::one());
    while eval(hi)? < T::zero() {
        lo = hi;
        hi = hi * T::lit(2.0);
        if !hi.is_finite() {
            return Err(Error::Numeric("χ² quantile bracket overflow".into()));
        }
    }

    let mut x = T::lit(initial_guess(target.to_f64_lossy(), upper_side, k.get() as f64));
    if !(x > lo && x < hi) {
        x = (lo + hi) / T::lit(2.0);
    }

    let eps = T::epsilon();
    for _ in 0..MAX_ROOT_ITERS {
        let g = eval(x)?;
        if g == T::zero() {
            return Ok(x);
        }
        if g < T::zero() {
            lo = x;
        } else {
            hi = x;
        }
        if hi - lo <= T::lit(4.0) * eps * hi {
            return Ok(x);
        }
        let slope = chi2_pdf(x, k);
        let newton = x - g / slope;
        let next = if slope.is_finite() && slope > T::zero() && newton > lo && newton < hi {
            newton
        } else if lo > T::zero() && hi / lo > T::lit(1e3) {
            (lo * hi).sqrt()
        } else {
            (lo + hi) / T::lit(2.0)
        };
        if (next - x).abs() <= T::lit(2.0) * eps * x {
            return Ok(next);
        }
        x = next;
    }
    Ok(x)
}

/// `F_k^{-1}(p)` for `p` in `[0, 1)`.
///
/// Above the median the root is taken on the survival function with
/// `1 - p`, so quantiles far in the upper tail stay accurate.
pub fn chi2_inv_cdf<T: Real>(p: T, k: DegreesOfFreedom) -> Result<T> {
    if p.is_nan() || p < T::zero() || p >= T::one() {
        return Err(Error::invalid(format!("probability must lie in [0, 1), got {p}")));
    }
    if p == T::zero() {
        return Ok(T::zero());
    }
    if p > T::lit(0.5) {
        solve(T::one() - p, true, k)
    } else {
        solve(p, false, k)
    }
}

/// Inverse survival function: the `x` with `1 - F_k(x) = q`, `q` in `(0, 1]`.
pub fn chi2_inv_sf<T: Real>(q: T, k: DegreesOfFreedom) -> Result<T> {
    if q.is_nan() || q <= T::zero() || q > T::one() {
        return Err(Error::invalid(format!("tail probability must lie in (0, 1], got {q}")));
    }
    if q == T::one() {
        return Ok(T::zero());
    }
    if q < T::lit(0.5) {
        solve(q, true, k)
    } else {
        solve(T::one() - q, false, k)
    }
}
