//! Target first-passage densities, interval masses, and small-time limits.

use std::io::Read;

use crate::boundaries::DanielsBoundary;
use crate::bridge::segment_cross_mass;
use crate::error::{Error, Result};
use crate::numerics::{find_root_midpoint, std_normal_pdf, Bracket, DEFAULT_MAX_ITER};

/// Absolute tolerance of the adaptive Simpson rule.
pub const QUADRATURE_TOL: f64 = 1e-10;
const QUADRATURE_MAX_LEVEL: u32 = 20;
const QUADRATURE_PANEL: f64 = 0.25;
const DANIELS_LOWER_LIMIT: f64 = 1e-12;
/// Tabulated densities whose value at zero is below this are classified as
/// vanishing at zero.
pub const SMALL_TIME_ZERO_THRESHOLD: f64 = 1e-8;

/// Bachelier–Lévy density of the first passage through `α + β(t − t0)` for a
/// Wiener process started at `x0` at time `t0`.
pub fn fpt_density_linear(t: f64, alpha: f64, beta: f64, x0: f64, t0: f64) -> Result<f64> {
    if !(t > t0) {
        return Err(Error::Domain(format!("linear-boundary density needs t > t0, got t = {t}")));
    }
    if !(alpha > x0) {
        return Err(Error::Domain(format!("linear-boundary density needs α > x0 ({alpha} ≤ {x0})")));
    }
    let s = t - t0;
    let sq = s.sqrt();
    Ok((alpha - x0) / (s * sq) * std_normal_pdf((alpha + beta * s - x0) / sq))
}

/// `P(τ ≤ t)` for the line `α + βt` and a process started at 0.
pub fn fpt_cdf_linear(t: f64, alpha: f64, beta: f64) -> f64 {
    if t <= 0.0 {
        return 0.0;
    }
    segment_cross_mass(beta, 0.0, alpha, t)
}

/// Daniels' closed-form density for the boundary [`DanielsBoundary`].
pub fn fpt_density_daniels(t: f64, boundary: &DanielsBoundary) -> Result<f64> {
    if !(t > 0.0) {
        return Err(Error::Domain(format!("Daniels density needs t > 0, got {t}")));
    }
    let d = boundary.eval(t)?;
    let sq = t.sqrt();
    let v = (std_normal_pdf(d / sq) - 0.5 * boundary.beta * std_normal_pdf((d - boundary.alpha) / sq))
        / (t * sq);
    Ok(v.max(0.0))
}

/// `f_g(0+) = e^{−c/2} / sqrt(4π)` for the upper function `g` with constant `c`.
pub fn peskir_limit(c: f64) -> f64 {
    (-0.5 * c).exp() / (4.0 * std::f64::consts::PI).sqrt()
}

/// The constant `c` for which `peskir_limit(c) == kappa`.
pub fn c_from_kappa(kappa: f64) -> Result<f64> {
    if !(kappa > 0.0) || !kappa.is_finite() {
        return Err(Error::Domain(format!("kappa must be positive, got {kappa}")));
    }
    Ok(-2.0 * (kappa * (4.0 * std::f64::consts::PI).sqrt()).ln())
}

/// Leading-order small-time flux relation `f = b / sqrt(2π t³) · e^{−b²/(2t)}`.
pub fn flux_density(b: f64, t: f64) -> f64 {
    b / (2.0 * std::f64::consts::PI * t * t * t).sqrt() * (-b * b / (2.0 * t)).exp()
}

/// Solves the small-time flux relation for `b` on the branch `b ≥ sqrt(t)`.
pub fn flux_small_time_solve(f_val: f64, t: f64, b_max: f64) -> Result<f64> {
    if !(t > 0.0) || !(f_val > 0.0) {
        return Err(Error::Domain(format!(
            "flux solve needs t > 0 and f > 0 (t = {t}, f = {f_val})"
        )));
    }
    let peak_b = t.sqrt();
    let peak = flux_density(peak_b, t);
    // the peak itself, up to rounding in how the caller computed it
    if (f_val - peak).abs() <= 4.0 * f64::EPSILON * peak {
        return Ok(peak_b);
    }
    if f_val > peak {
        return Err(Error::NoSolution(format!(
            "density {f_val} exceeds the flux maximum {peak} at t = {t}"
        )));
    }
    if !(b_max > peak_b) || flux_density(b_max, t) > f_val {
        return Err(Error::NoSolution(format!(
            "no sign change of the flux relation on [{peak_b}, {b_max}]"
        )));
    }
    let bracket = Bracket::new(peak_b, b_max)?;
    // absolute residual below 1e-12 needs a tight step in b
    find_root_midpoint(|b| flux_density(b, t) - f_val, bracket, 1e-15, DEFAULT_MAX_ITER)
}

/// Piecewise-linear density through `(t_i, f_i)`.
///
/// Below the first knot the density is linear from `(0, f0)` to the first
/// knot, where `f0` is the first segment extrapolated to zero and clamped at
/// zero.
#[derive(Debug, Clone, PartialEq)]
pub struct TabulatedDensity {
    times: Vec<f64>,
    values: Vec<f64>,
    at_zero: f64,
}

impl TabulatedDensity {
    pub fn new(times: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if times.len() != values.len() {
            return Err(Error::LengthMismatch {
                expected: times.len(),
                got: values.len(),
            });
        }
        if times.len() < 2 {
            return Err(Error::Config("tabulated density needs at least two knots".into()));
        }
        let mut problems = Vec::new();
        if !(times[0] >= 0.0) {
            problems.push("t must be nonnegative".to_string());
        }
        if let Some(i) = times.windows(2).position(|w| !(w[1] > w[0])) {
            problems.push(format!("t must be strictly increasing (row {})", i + 2));
        }
        if let Some(i) = values.iter().position(|f| !(f.is_finite() && *f >= 0.0)) {
            problems.push(format!("f must be finite and nonnegative (row {})", i + 1));
        }
        if !problems.is_empty() {
            return Err(Error::Config(problems.join("; ")));
        }
        let at_zero = if times[0] == 0.0 {
            values[0]
        } else {
            let slope = (values[1] - values[0]) / (times[1] - times[0]);
            (values[0] - slope * times[0]).max(0.0)
        };
        Ok(TabulatedDensity {
            times,
            values,
            at_zero,
        })
    }

    /// Reads a CSV with header `t,f`.
    pub fn from_csv_reader<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
        let headers = rdr
            .headers()
            .map_err(|e| Error::Config(format!("tabulated density CSV: {e}")))?;
        let cols: Vec<&str> = headers.iter().map(str::trim).collect();
        if cols != ["t", "f"] {
            return Err(Error::Config(format!(
                "tabulated density CSV header must be `t,f`, got `{}`",
                cols.join(",")
            )));
        }
        let (mut times, mut values) = (Vec::new(), Vec::new());
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| Error::Config(format!("tabulated density CSV: {e}")))?;
            let parse = |k: usize| -> Result<f64> {
                let s = rec.get(k).unwrap_or("").trim();
                s.parse::<f64>().map_err(|_| {
                    Error::Config(format!("tabulated density CSV line {}: bad number `{s}`", i + 2))
                })
            };
            times.push(parse(0)?);
            values.push(parse(1)?);
        }
        Self::new(times, values)
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn value_at_zero(&self) -> f64 {
        self.at_zero
    }

    pub fn last_time(&self) -> f64 {
        *self.times.last().unwrap()
    }

    /// Knots including the implicit `(0, f0)` one.
    fn knot(&self, i: usize) -> (f64, f64) {
        if self.times[0] > 0.0 {
            if i == 0 {
                (0.0, self.at_zero)
            } else {
                (self.times[i - 1], self.values[i - 1])
            }
        } else {
            (self.times[i], self.values[i])
        }
    }

    fn knot_count(&self) -> usize {
        self.times.len() + usize::from(self.times[0] > 0.0)
    }

    pub fn eval(&self, t: f64) -> Result<f64> {
        if t <= 0.0 {
            return Ok(self.at_zero);
        }
        if t > self.last_time() {
            return Err(Error::Domain(format!(
                "tabulated density defined up to {}, got t = {t}",
                self.last_time()
            )));
        }
        let n = self.knot_count();
        let i = (1..n).find(|&i| self.knot(i).0 >= t).unwrap_or(n - 1);
        let ((t0, f0), (t1, f1)) = (self.knot(i - 1), self.knot(i));
        Ok(f0 + (t - t0) / (t1 - t0) * (f1 - f0))
    }

    /// Exact integral of the interpolant over `[s, t]`.
    pub fn integrate(&self, s: f64, t: f64) -> Result<f64> {
        if t > self.last_time() {
            return Err(Error::Domain(format!(
                "tabulated density defined up to {}, got t = {t}",
                self.last_time()
            )));
        }
        let mut total = 0.0;
        for i in 1..self.knot_count() {
            let ((t0, f0), (t1, f1)) = (self.knot(i - 1), self.knot(i));
            let (a, b) = (s.max(t0), t.min(t1));
            if b <= a {
                continue;
            }
            let lin = |x: f64| f0 + (x - t0) / (t1 - t0) * (f1 - f0);
            total += 0.5 * (lin(a) + lin(b)) * (b - a);
        }
        Ok(total)
    }
}

/// A prescribed first-passage density.
#[derive(Debug, Clone, PartialEq)]
pub enum FptDensity {
    /// Bachelier–Lévy density of the line `α + β(t − t0)` from `(t0, x0)`.
    LinearBoundary { alpha: f64, beta: f64, x0: f64, t0: f64 },
    Daniels(DanielsBoundary),
    Exponential { lambda: f64 },
    Tabulated(TabulatedDensity),
}

/// Behaviour of `f_b(0+)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SmallTimeClass {
    Zero,
    Infinite,
    Finite { kappa: f64 },
}

impl FptDensity {
    pub fn linear_boundary(alpha: f64, beta: f64) -> Result<Self> {
        Self::linear_boundary_from(alpha, beta, 0.0, 0.0)
    }

    pub fn linear_boundary_from(alpha: f64, beta: f64, x0: f64, t0: f64) -> Result<Self> {
        if ![alpha, beta, x0, t0].iter().all(|v| v.is_finite()) {
            return Err(Error::Config("linear-boundary density parameters must be finite".into()));
        }
        if !(alpha > x0) {
            return Err(Error::Config(format!("linear-boundary density needs α > x0 ({alpha} ≤ {x0})")));
        }
        if t0 < 0.0 {
            return Err(Error::Config("linear-boundary density needs t0 ≥ 0".into()));
        }
        Ok(FptDensity::LinearBoundary { alpha, beta, x0, t0 })
    }

    pub fn daniels(alpha: f64, beta: f64, gamma: f64) -> Result<Self> {
        Ok(FptDensity::Daniels(DanielsBoundary::new(alpha, beta, gamma)?))
    }

    pub fn exponential(lambda: f64) -> Result<Self> {
        if !(lambda > 0.0) || !lambda.is_finite() {
            return Err(Error::Config(format!("exponential rate must be positive, got {lambda}")));
        }
        Ok(FptDensity::Exponential { lambda })
    }

    /// Density value; for `t` at or before the start the right limit `f(0+)`.
    pub fn eval(&self, t: f64) -> Result<f64> {
        match self {
            FptDensity::LinearBoundary { alpha, beta, x0, t0 } => {
                if t <= *t0 {
                    Ok(0.0)
                } else {
                    fpt_density_linear(t, *alpha, *beta, *x0, *t0)
                }
            }
            FptDensity::Daniels(d) => {
                if t <= 0.0 {
                    Ok(0.0)
                } else {
                    fpt_density_daniels(t, d)
                }
            }
            FptDensity::Exponential { lambda } => Ok(if t < 0.0 { 0.0 } else { lambda * (-lambda * t).exp() }),
            FptDensity::Tabulated(tab) => tab.eval(t),
        }
    }

    /// `f(0+)`.
    pub fn value_at_zero(&self) -> f64 {
        match self {
            FptDensity::LinearBoundary { .. } | FptDensity::Daniels(_) => 0.0,
            FptDensity::Exponential { lambda } => *lambda,
            FptDensity::Tabulated(tab) => tab.value_at_zero(),
        }
    }

    /// Largest time at which the density can be evaluated.
    pub fn horizon(&self) -> f64 {
        match self {
            FptDensity::Tabulated(tab) => tab.last_time(),
            _ => f64::INFINITY,
        }
    }

    /// `∫_s^t f`.
    pub fn interval_mass(&self, s: f64, t: f64) -> Result<f64> {
        if !(s >= 0.0) || !(t >= s) {
            return Err(Error::Domain(format!("interval mass needs 0 ≤ s ≤ t, got [{s}, {t}]")));
        }
        if s == t {
            return Ok(0.0);
        }
        match self {
            FptDensity::LinearBoundary { alpha, beta, x0, t0 } => {
                let cdf = |u: f64| fpt_cdf_linear(u - t0, alpha - x0, *beta);
                Ok((cdf(t) - cdf(s)).max(0.0))
            }
            FptDensity::Exponential { lambda } => {
                // e^{-λs} - e^{-λt} = e^{-λs}(1 - e^{-λ(t-s)})
                Ok(-(-lambda * s).exp() * (-lambda * (t - s)).exp_m1())
            }
            FptDensity::Daniels(d) => {
                let lo = s.max(DANIELS_LOWER_LIMIT);
                if t <= lo {
                    return Ok(0.0);
                }
                adaptive_simpson(|u| fpt_density_daniels(u, d).unwrap_or(0.0), lo, t, QUADRATURE_TOL)
            }
            FptDensity::Tabulated(tab) => tab.integrate(s, t),
        }
    }
}

/// Limit behaviour of `f(0+)`.
pub fn classify_small_time(d: &FptDensity) -> SmallTimeClass {
    match d {
        FptDensity::LinearBoundary { .. } | FptDensity::Daniels(_) => SmallTimeClass::Zero,
        FptDensity::Exponential { lambda } => SmallTimeClass::Finite { kappa: *lambda },
        FptDensity::Tabulated(tab) => {
            let f0 = tab.value_at_zero();
            if f0 < SMALL_TIME_ZERO_THRESHOLD {
                SmallTimeClass::Zero
            } else {
                SmallTimeClass::Finite { kappa: f0 }
            }
        }
    }
}

/// Limit behaviour of `f_b(0+)` read off the boundary near zero.
pub fn classify_boundary(b: &crate::boundaries::Boundary) -> SmallTimeClass {
    use crate::boundaries::Boundary;
    match b {
        Boundary::PeskirG(g) => SmallTimeClass::Finite {
            kappa: peskir_limit(g.c),
        },
        other => {
            if other.initial_level() > 0.0 {
                SmallTimeClass::Zero
            } else {
                SmallTimeClass::Infinite
            }
        }
    }
}

fn simpson(fa: f64, fm: f64, fb: f64, width: f64) -> f64 {
    width / 6.0 * (fa + 4.0 * fm + fb)
}

/// Adaptive composite Simpson rule with absolute tolerance `tol`.
///
/// The range is first cut into panels of width at most 0.25 so that narrow
/// peaks on long ranges are not stepped over; each panel gets a share of the
/// tolerance proportional to its width.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> Result<f64> {
    if b <= a {
        return Ok(0.0);
    }
    let panels = ((b - a) / QUADRATURE_PANEL).ceil().max(1.0) as usize;
    let width = (b - a) / panels as f64;
    let mut total = 0.0;
    for p in 0..panels {
        let lo = a + p as f64 * width;
        let hi = if p + 1 == panels { b } else { lo + width };
        let (fa, fm, fb) = (f(lo), f(0.5 * (lo + hi)), f(hi));
        let whole = simpson(fa, fm, fb, hi - lo);
        total += simpson_step(&f, lo, hi, fa, fm, fb, whole, tol / panels as f64, 0)?;
    }
    Ok(total)
}

#[allow(clippy::too_many_arguments)]
fn simpson_step<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    level: u32,
) -> Result<f64> {
    let m = 0.5 * (a + b);
    let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
    let (flm, frm) = (f(lm), f(rm));
    let left = simpson(fa, flm, fm, m - a);
    let right = simpson(fm, frm, fb, b - m);
    let delta = left + right - whole;
    if delta.abs() <= 15.0 * tol {
        return Ok(left + right + delta / 15.0);
    }
    if level >= QUADRATURE_MAX_LEVEL {
        return Err(Error::QuadratureFailure { lo: a, hi: b });
    }
    Ok(simpson_step(f, a, m, fa, flm, fm, left, 0.5 * tol, level + 1)?
        + simpson_step(f, m, b, fm, frm, fb, right, 0.5 * tol, level + 1)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::survival;

    #[test]
    fn linear_density_reference_values() {
        let v = fpt_density_linear(1.0, 1.0, 0.0, 0.0, 0.0).unwrap();
        assert!((v - 0.24197072451914337).abs() < 1e-16);
        for &t in &[0.1, 0.7, 3.0] {
            let v = fpt_density_linear(t, 2.0, 0.0, 0.0, 0.0).unwrap();
            assert!((v * t.powf(1.5) / 2.0 - std_normal_pdf(2.0 / t.sqrt())).abs() < 1e-15);
        }
        assert!(fpt_density_linear(0.0, 1.0, 0.0, 0.0, 0.0).is_err());
        assert!(fpt_density_linear(1.0, 0.0, 0.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn linear_cdf_reference_values() {
        assert_eq!(fpt_cdf_linear(0.0, 1.0, 0.5), 0.0);
        assert!(fpt_cdf_linear(1e-6, 1.0, 0.5) < 1e-100);
        assert!((fpt_cdf_linear(1.0, 1.0, 0.0) - 0.31731050786291415).abs() < 1e-15);
        assert!((fpt_cdf_linear(1.0, 1.0, 0.0) - 2.0 * survival(1.0)).abs() < 1e-15);
    }

    #[test]
    fn daniels_density_reduces_to_constant_boundary() {
        let d = DanielsBoundary::new(1.0, 0.0, 1.0).unwrap();
        assert!((fpt_density_daniels(1.0, &d).unwrap() - 0.24197072451914337).abs() < 1e-15);
        let d = DanielsBoundary::new(1.0, 0.5, 0.5).unwrap();
        assert!(fpt_density_daniels(1e-4, &d).unwrap() < 1e-100);
        assert!(fpt_density_daniels(0.0, &d).is_err());
    }

    #[test]
    fn interval_mass_closed_forms() {
        let e = FptDensity::exponential(1.0).unwrap();
        assert!((e.interval_mass(0.0, 40.0).unwrap() - (1.0 - (-40f64).exp())).abs() < 1e-15);
        assert_eq!(e.interval_mass(0.3, 0.3).unwrap(), 0.0);
        let l = FptDensity::linear_boundary(1.0, 0.0).unwrap();
        assert!((l.interval_mass(0.0, 1.0).unwrap() - 0.31731050786291415).abs() < 1e-15);
        assert!(l.interval_mass(1.0, 0.5).is_err());
    }

    #[test]
    fn peskir_limit_and_inverse() {
        assert!((peskir_limit(0.0) - 0.28209479177387814).abs() < 1e-16);
        assert!(peskir_limit(800.0) < 1e-170);
        let c = -(4.0 * std::f64::consts::PI).ln();
        assert!((peskir_limit(c) - 1.0).abs() < 1e-15);
        assert!((c_from_kappa(1.0).unwrap() - c).abs() < 1e-15);
        assert!((c_from_kappa(1.0).unwrap() + 2.5310242469692907).abs() < 1e-15);
        assert!(c_from_kappa(0.28209479177387814).unwrap().abs() < 1e-15);
        for &k in &[0.1, 1.0, 5.0] {
            assert!((peskir_limit(c_from_kappa(k).unwrap()) - k).abs() < 1e-12);
        }
        assert!(c_from_kappa(0.0).is_err());
    }

    #[test]
    fn flux_solve() {
        let t = 0.01;
        let peak = (-0.5f64).exp() / ((2.0 * std::f64::consts::PI).sqrt() * t);
        assert_eq!(flux_small_time_solve(peak, t, 5.0).unwrap(), t.sqrt());
        let f = (-0.01f64).exp();
        let b = flux_small_time_solve(f, t, 5.0).unwrap();
        assert!(b >= t.sqrt());
        assert!((flux_density(b, t) - f).abs() < 1e-10);
        assert!(matches!(
            flux_small_time_solve(2.0 * peak, t, 5.0),
            Err(Error::NoSolution(_))
        ));
        assert!(matches!(
            flux_small_time_solve(1e-300, t, 0.5),
            Err(Error::NoSolution(_))
        ));
    }

    #[test]
    fn small_time_classes() {
        assert_eq!(
            classify_small_time(&FptDensity::exponential(1.0).unwrap()),
            SmallTimeClass::Finite { kappa: 1.0 }
        );
        assert_eq!(
            classify_small_time(&FptDensity::linear_boundary(1.0, 0.0).unwrap()),
            SmallTimeClass::Zero
        );
        assert_eq!(
            classify_small_time(&FptDensity::daniels(1.0, 0.5, 0.5).unwrap()),
            SmallTimeClass::Zero
        );
        let tab = TabulatedDensity::new(vec![0.1, 0.2], vec![1.0, 0.5]).unwrap();
        assert_eq!(
            classify_small_time(&FptDensity::Tabulated(tab)),
            SmallTimeClass::Finite { kappa: 1.5 }
        );
        let tab = TabulatedDensity::new(vec![0.1, 0.2], vec![0.1, 0.5]).unwrap();
        assert_eq!(classify_small_time(&FptDensity::Tabulated(tab)), SmallTimeClass::Zero);
    }

    #[test]
    fn tabulated_interpolation_and_mass() {
        let tab = TabulatedDensity::new(vec![0.0, 1.0, 2.0], vec![0.0, 1.0, 0.0]).unwrap();
        assert_eq!(tab.eval(0.5).unwrap(), 0.5);
        assert_eq!(tab.integrate(0.0, 2.0).unwrap(), 1.0);
        assert!((tab.integrate(0.5, 1.5).unwrap() - 0.75).abs() < 1e-15);
        assert!(tab.eval(2.5).is_err());
        // implicit first piece from zero
        let tab = TabulatedDensity::new(vec![1.0, 2.0], vec![1.0, 1.0]).unwrap();
        assert_eq!(tab.value_at_zero(), 1.0);
        assert_eq!(tab.integrate(0.0, 2.0).unwrap(), 2.0);
    }

    #[test]
    fn tabulated_csv() {
        let csv = "t,f\n0,0\n0.5,1.5\n1.0,0.25\n";
        let tab = TabulatedDensity::from_csv_reader(csv.as_bytes()).unwrap();
        assert_eq!(tab.times(), &[0.0, 0.5, 1.0]);
        let bad = "t,f\n0,0\n0.5,1.5\n0.4,0.25\n";
        let e = TabulatedDensity::from_csv_reader(bad.as_bytes()).unwrap_err();
        assert!(e.to_string().contains("strictly increasing"));
        let bad = "time,f\n0,0\n";
        assert!(TabulatedDensity::from_csv_reader(bad.as_bytes()).is_err());
        let bad = "t,f\n0,1,000\n1,2\n";
        assert!(TabulatedDensity::from_csv_reader(bad.as_bytes()).is_err());
    }

    #[test]
    fn adaptive_simpson_polynomial_and_failure() {
        let v = adaptive_simpson(|x| x * x * x, 0.0, 2.0, 1e-12).unwrap();
        assert!((v - 4.0).abs() < 1e-12);
        let e = adaptive_simpson(|x| if x < 0.1234567 { 0.0 } else { 1.0 / (x - 0.1234567).sqrt() }, 0.0, 0.25, 1e-14);
        assert!(matches!(e, Err(Error::QuadratureFailure { .. })));
    }
}
