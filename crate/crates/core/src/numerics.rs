//! Standard normal functions and the bisection root finder shared by both
//! inverse solvers.
//!
//! `Φ` and `Ψ = 1 − Φ` are evaluated through the complementary error function
//! so that the upper tail never goes through `1 − Φ(x)`.

use crate::error::{Error, Result};

const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Default absolute tolerance for scalar root solves.
pub const DEFAULT_ROOT_TOL: f64 = 1e-10;

/// Default iteration cap for [`find_root_midpoint`].
pub const DEFAULT_MAX_ITER: usize = 200;

/// Standard normal density.
#[inline]
pub fn std_normal_pdf(x: f64) -> f64 {
    FRAC_1_SQRT_2PI * (-0.5 * x * x).exp()
}

/// Standard normal distribution function `Φ(x)`.
#[inline]
pub fn std_normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x * std::f64::consts::FRAC_1_SQRT_2)
}

/// Survival function `Ψ(x) = 1 − Φ(x)`, evaluated in complementary form.
#[inline]
pub fn survival(x: f64) -> f64 {
    0.5 * libm::erfc(x * std::f64::consts::FRAC_1_SQRT_2)
}

/// Mills ratio `Ψ(x) / φ(x)` for `x ≥ 0`.
///
/// Beyond `x = 25` the quotient is evaluated by its continued fraction,
/// since both numerator and denominator underflow near `x ≈ 38`.
pub fn mills_ratio(x: f64) -> f64 {
    debug_assert!(x >= 0.0);
    if x < 25.0 {
        return survival(x) / std_normal_pdf(x);
    }
    // m(x) = 1/(x + 1/(x + 2/(x + 3/(x + ...))))
    let mut tail = x;
    for k in (1..=60).rev() {
        tail = x + k as f64 / tail;
    }
    1.0 / tail
}

/// Inverse of the survival function: returns `x` with `Ψ(x) = p`.
///
/// Bisection on `Ψ` over `[-10, 10]`, widened until it brackets `p`.
pub fn survival_inv(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::Domain(format!(
            "survival_inv requires p in (0, 1), got {p}"
        )));
    }
    let mut half = 10.0;
    while !(survival(-half) >= p && survival(half) <= p) {
        half *= 2.0;
        if half > 1e3 {
            return Err(Error::Domain(format!("survival_inv: cannot bracket p = {p}")));
        }
    }
    let (mut lo, mut hi) = (-half, half);
    for _ in 0..DEFAULT_MAX_ITER {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let s = survival(mid);
        if s == p {
            return Ok(mid);
        }
        // Ψ is decreasing: Ψ(mid) > p means the root is to the right.
        if s > p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let (flo, fhi) = ((survival(lo) - p).abs(), (survival(hi) - p).abs());
    Ok(if flo <= fhi { lo } else { hi })
}

/// A closed interval `[lo, hi]` with `lo < hi`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bracket {
    pub lo: f64,
    pub hi: f64,
}

impl Bracket {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::Domain(format!("invalid bracket [{lo}, {hi}]")));
        }
        Ok(Bracket { lo, hi })
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }
}

/// Bisection ("middle point method") on a sign-changing bracket.
///
/// Halves the bracket until its width is at most `tol`, then returns the end
/// of the final interval with the smaller `|f|`. An exact zero at a probed
/// point is returned immediately. When `tol` is below the floating-point
/// spacing of the bracket, iteration stops once the midpoint can no longer
/// separate the ends.
pub fn find_root_midpoint<F>(mut f: F, bracket: Bracket, tol: f64, max_iter: usize) -> Result<f64>
where
    F: FnMut(f64) -> f64,
{
    if !(tol > 0.0) {
        return Err(Error::Domain(format!("tolerance must be positive, got {tol}")));
    }
    let (mut lo, mut hi) = (bracket.lo, bracket.hi);
    let (mut flo, mut fhi) = (f(lo), f(hi));
    if flo == 0.0 {
        return Ok(lo);
    }
    if fhi == 0.0 {
        return Ok(hi);
    }
    if flo.is_nan() || fhi.is_nan() || flo.signum() == fhi.signum() {
        return Err(Error::NoSignChange { lo, hi });
    }
    let mut iterations = 0;
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if iterations == max_iter {
            return Err(Error::MaxIterations { iterations });
        }
        iterations += 1;
        let fm = f(mid);
        if fm == 0.0 {
            return Ok(mid);
        }
        if fm.is_nan() {
            return Err(Error::NumericalFailure(format!("function is NaN at {mid}")));
        }
        if fm.signum() == flo.signum() {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
            fhi = fm;
        }
    }
    Ok(if flo.abs() <= fhi.abs() { lo } else { hi })
}

/// Knots `h, 2h, …, nh` (knot `i` computed as `i·h`, not by accumulation).
pub fn uniform_grid(h: f64, n: usize) -> Vec<f64> {
    (1..=n).map(|i| i as f64 * h).collect()
}

/// Number of steps of size `h` that make up `horizon`, which must be an
/// integer multiple of `h` up to a relative `1e-9`.
pub fn steps_for_horizon(h: f64, horizon: f64) -> Result<usize> {
    if !(h > 0.0 && horizon > 0.0) || !h.is_finite() || !horizon.is_finite() {
        return Err(Error::Config(format!(
            "step and horizon must be positive and finite (h = {h}, horizon = {horizon})"
        )));
    }
    let n = (horizon / h).round();
    if ((n * h - horizon) / horizon).abs() > 1e-9 || n < 1.0 {
        return Err(Error::Config(format!("horizon {horizon} is not a multiple of h = {h}")));
    }
    Ok(n as usize)
}
