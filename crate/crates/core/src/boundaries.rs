//! Boundary families: linear, Daniels, oscillating, the small-time upper
//! function `g`, and piecewise-linear boundaries.

use crate::error::{Error, Result};

/// `c(t) = alpha + beta * t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearBoundary {
    pub alpha: f64,
    pub beta: f64,
}

impl LinearBoundary {
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        if !alpha.is_finite() || !beta.is_finite() {
            return Err(Error::Config("linear boundary parameters must be finite".into()));
        }
        Ok(LinearBoundary { alpha, beta })
    }

    pub fn eval(&self, t: f64) -> f64 {
        self.alpha + self.beta * t
    }
}

/// Daniels' curved boundary
/// `d(t) = α/2 − (t/α) log(β/2 + sqrt(β²/4 + γ e^{−α²/t}))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DanielsBoundary {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl DanielsBoundary {
    pub fn new(alpha: f64, beta: f64, gamma: f64) -> Result<Self> {
        let mut violated = Vec::new();
        if !(alpha > 0.0) {
            violated.push("α > 0");
        }
        if !(beta >= 0.0) {
            violated.push("β ≥ 0");
        }
        if !(gamma > -beta * beta / 4.0) {
            violated.push("γ > −β²/4");
        }
        if !violated.is_empty() {
            return Err(Error::Config(format!(
                "Daniels parameters violate {}",
                violated.join(", ")
            )));
        }
        Ok(DanielsBoundary { alpha, beta, gamma })
    }

    /// `log(β/2 + sqrt(β²/4 + γ e^{−α²/t}))`, stable for small `t`.
    fn log_term(&self, t: f64) -> f64 {
        let a2 = self.alpha * self.alpha;
        if self.beta == 0.0 {
            return 0.5 * self.gamma.ln() - a2 / (2.0 * t);
        }
        let half_beta = 0.5 * self.beta;
        // ratio = γ e^{−α²/t} / (β²/4); ln(β/2) + ln(1 + sqrt(1 + ratio))
        let ratio = self.gamma * (-a2 / t).exp() / (half_beta * half_beta);
        half_beta.ln() + (1.0 + (1.0 + ratio).sqrt()).ln()
    }

    pub fn eval(&self, t: f64) -> Result<f64> {
        if !(t > 0.0) {
            return Err(Error::Domain(format!("Daniels boundary requires t > 0, got {t}")));
        }
        Ok(0.5 * self.alpha - t / self.alpha * self.log_term(t))
    }

    /// `d(0+)`: `α/2` when `β > 0`, otherwise `α`.
    pub fn initial_level(&self) -> f64 {
        if self.beta > 0.0 {
            0.5 * self.alpha
        } else {
            self.alpha
        }
    }
}

/// `b(t) = alpha + beta cos(gamma t)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OscillatingBoundary {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl OscillatingBoundary {
    pub fn new(alpha: f64, beta: f64, gamma: f64) -> Result<Self> {
        if ![alpha, beta, gamma].iter().all(|v| v.is_finite()) {
            return Err(Error::Config("oscillating boundary parameters must be finite".into()));
        }
        Ok(OscillatingBoundary { alpha, beta, gamma })
    }

    pub fn eval(&self, t: f64) -> f64 {
        self.alpha + self.beta * (self.gamma * t).cos()
    }

    pub fn derivative(&self, t: f64) -> f64 {
        -self.beta * self.gamma * (self.gamma * t).sin()
    }
}

/// The small-time upper function
/// `g(t) = sqrt(2t log(1/t) + t log log(1/t) + c t)` on `(0, delta_c]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PeskirGBoundary {
    pub c: f64,
    pub delta_c: f64,
}

fn peskir_radicand(c: f64, t: f64) -> f64 {
    let l = (1.0 / t).ln();
    t * (2.0 * l + l.ln() + c)
}

impl PeskirGBoundary {
    /// Builds `g` with the default right end: the largest point of a
    /// geometric scan of `(0, 0.1]` up to which the radicand stays positive.
    pub fn new(c: f64) -> Result<Self> {
        if !c.is_finite() {
            return Err(Error::Config("g boundary constant c must be finite".into()));
        }
        let mut delta = None;
        // 1e-12 .. 0.1, 400 points per decade
        let n = 11 * 400;
        for k in 0..=n {
            let t = 1e-12 * 10f64.powf(k as f64 / 400.0);
            let t = t.min(0.1);
            if peskir_radicand(c, t) > 0.0 {
                delta = Some(t);
            } else {
                break;
            }
        }
        let delta_c = delta.ok_or_else(|| {
            Error::Config(format!("g boundary with c = {c} has no positive domain"))
        })?;
        Ok(PeskirGBoundary { c, delta_c })
    }

    pub fn with_domain_end(c: f64, delta_c: f64) -> Result<Self> {
        if !(delta_c > 0.0 && delta_c < (-1f64).exp()) {
            return Err(Error::Config(format!(
                "g boundary domain end must lie in (0, 1/e), got {delta_c}"
            )));
        }
        let g = PeskirGBoundary { c, delta_c };
        if peskir_radicand(c, delta_c) < 0.0 {
            return Err(Error::Config(format!(
                "g boundary radicand is negative at delta_c = {delta_c}"
            )));
        }
        Ok(g)
    }

    pub fn eval(&self, t: f64) -> Result<f64> {
        if !(t > 0.0 && t <= self.delta_c) {
            return Err(Error::Domain(format!(
                "g boundary is defined on (0, {}], got t = {t}",
                self.delta_c
            )));
        }
        let r = peskir_radicand(self.c, t);
        if r < 0.0 {
            return Err(Error::Domain(format!("g boundary radicand negative at t = {t}")));
        }
        Ok(r.sqrt())
    }
}

/// Continuous piecewise-linear boundary through knots `(t_i, c_i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseLinearBoundary {
    times: Vec<f64>,
    levels: Vec<f64>,
}

impl PiecewiseLinearBoundary {
    pub fn new(times: Vec<f64>, levels: Vec<f64>) -> Result<Self> {
        if times.len() != levels.len() {
            return Err(Error::LengthMismatch {
                expected: times.len(),
                got: levels.len(),
            });
        }
        if times.is_empty() {
            return Err(Error::Config("piecewise-linear boundary needs at least one knot".into()));
        }
        if !(times[0] >= 0.0) {
            return Err(Error::Config("first knot time must be nonnegative".into()));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Config("knot times must be strictly increasing".into()));
        }
        if levels.iter().any(|c| !c.is_finite()) {
            return Err(Error::Config("knot levels must be finite".into()));
        }
        Ok(PiecewiseLinearBoundary { times, levels })
    }

    /// Knots `(t, b(t))` sampled from `b` on `grid`.
    pub fn from_sampling(b: &Boundary, grid: &[f64]) -> Result<Self> {
        let levels = grid.iter().map(|&t| b.eval(t)).collect::<Result<Vec<_>>>()?;
        Self::new(grid.to_vec(), levels)
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    /// Number of segments.
    pub fn segments(&self) -> usize {
        self.times.len() - 1
    }

    /// `(α_i, β_i)` of segment `i` (1-based), so that `c(t) = α_i + β_i t`
    /// on `[t_{i−1}, t_i]`.
    pub fn segment_coeffs(&self, i: usize) -> Result<(f64, f64)> {
        if i == 0 || i > self.segments() {
            return Err(Error::Domain(format!(
                "segment index {i} outside 1..={}",
                self.segments()
            )));
        }
        let (t0, t1) = (self.times[i - 1], self.times[i]);
        let (c0, c1) = (self.levels[i - 1], self.levels[i]);
        let beta = (c1 - c0) / (t1 - t0);
        Ok((c0 - beta * t0, beta))
    }

    fn locate(&self, t: f64) -> Result<usize> {
        let (first, last) = (self.times[0], *self.times.last().unwrap());
        if !(t >= first && t <= last) {
            return Err(Error::Domain(format!(
                "t = {t} outside piecewise-linear domain [{first}, {last}]"
            )));
        }
        if self.times.len() == 1 {
            return Ok(0);
        }
        // first segment whose right end is >= t
        let idx = self.times.partition_point(|&x| x < t);
        Ok(idx.max(1))
    }

    pub fn eval(&self, t: f64) -> Result<f64> {
        let i = self.locate(t)?;
        if i == 0 {
            return Ok(self.levels[0]);
        }
        let (t0, t1) = (self.times[i - 1], self.times[i]);
        let (c0, c1) = (self.levels[i - 1], self.levels[i]);
        if t == t1 {
            return Ok(c1);
        }
        let w = (t - t0) / (t1 - t0);
        Ok(c0 + w * (c1 - c0))
    }

    /// Right-continuous slope (left slope at the final knot).
    pub fn derivative(&self, t: f64) -> Result<f64> {
        if self.segments() == 0 {
            return Ok(0.0);
        }
        let mut i = self.locate(t)?;
        if i < self.segments() && t == self.times[i] {
            i += 1;
        }
        Ok(self.segment_coeffs(i.max(1))?.1)
    }
}

/// Any boundary the solvers can evaluate.
#[derive(Debug, Clone, PartialEq)]
pub enum Boundary {
    Linear(LinearBoundary),
    Daniels(DanielsBoundary),
    Oscillating(OscillatingBoundary),
    PeskirG(PeskirGBoundary),
    PiecewiseLinear(PiecewiseLinearBoundary),
}

const FD_REL_STEP: f64 = 1e-6;

impl Boundary {
    pub fn eval(&self, t: f64) -> Result<f64> {
        match self {
            Boundary::Linear(b) => Ok(b.eval(t)),
            Boundary::Daniels(b) => b.eval(t),
            Boundary::Oscillating(b) => Ok(b.eval(t)),
            Boundary::PeskirG(b) => b.eval(t),
            Boundary::PiecewiseLinear(b) => b.eval(t),
        }
    }

    /// `b(0+)`.
    pub fn initial_level(&self) -> f64 {
        match self {
            Boundary::Linear(b) => b.alpha,
            Boundary::Daniels(b) => b.initial_level(),
            Boundary::Oscillating(b) => b.alpha + b.beta,
            Boundary::PeskirG(_) => 0.0,
            Boundary::PiecewiseLinear(b) => b.levels[0],
        }
    }

    /// `b'(t)`: analytic where available, central differences otherwise.
    pub fn derivative(&self, t: f64) -> Result<f64> {
        match self {
            Boundary::Linear(b) => Ok(b.beta),
            Boundary::Oscillating(b) => Ok(b.derivative(t)),
            Boundary::PiecewiseLinear(b) => b.derivative(t),
            Boundary::Daniels(_) | Boundary::PeskirG(_) => {
                let step = FD_REL_STEP * t.max(1.0);
                let hi = self.eval(t + step);
                let lo = if t - step > 0.0 { self.eval(t - step).ok() } else { None };
                match (lo, hi) {
                    (Some(lo), Ok(hi)) => Ok((hi - lo) / (2.0 * step)),
                    (None, Ok(hi)) => Ok((hi - self.eval(t)?) / step),
                    (Some(lo), Err(_)) => Ok((self.eval(t)? - lo) / step),
                    (None, Err(e)) => Err(e),
                }
            }
        }
    }
}

impl From<LinearBoundary> for Boundary {
    fn from(b: LinearBoundary) -> Self {
        Boundary::Linear(b)
    }
}

impl From<DanielsBoundary> for Boundary {
    fn from(b: DanielsBoundary) -> Self {
        Boundary::Daniels(b)
    }
}

impl From<OscillatingBoundary> for Boundary {
    fn from(b: OscillatingBoundary) -> Self {
        Boundary::Oscillating(b)
    }
}

impl From<PeskirGBoundary> for Boundary {
    fn from(b: PeskirGBoundary) -> Self {
        Boundary::PeskirG(b)
    }
}

impl From<PiecewiseLinearBoundary> for Boundary {
    fn from(b: PiecewiseLinearBoundary) -> Self {
        Boundary::PiecewiseLinear(b)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn daniels_reduces_to_constant() {
        let d = DanielsBoundary::new(1.0, 0.0, 1.0).unwrap();
        for k in 1..=1000 {
            let t = k as f64 * 0.01;
            assert!((d.eval(t).unwrap() - 1.0).abs() < 1e-12);
        }
        assert_eq!(d.initial_level(), 1.0);
    }

    #[test]
    fn daniels_small_time_limit() {
        let d = DanielsBoundary::new(1.0, 0.5, 0.5).unwrap();
        assert!((d.eval(1e-6).unwrap() - 0.5).abs() < 1e-5);
        assert!((d.eval(1e-300).unwrap() - 0.5).abs() < 1e-12);
        assert_eq!(d.initial_level(), 0.5);
        assert!(d.eval(0.0).is_err());
    }

    #[test]
    fn daniels_rejects_invalid_parameters() {
        let e = DanielsBoundary::new(1.0, 0.0, -1.0).unwrap_err();
        assert!(e.to_string().contains("γ > −β²/4"));
        assert!(DanielsBoundary::new(0.0, 0.5, 0.5).is_err());
        assert!(DanielsBoundary::new(1.0, -0.5, 0.5).is_err());
        // negative gamma is fine while gamma > -beta^2/4
        assert!(DanielsBoundary::new(1.0, 1.0, -0.2).is_ok());
    }

    #[test]
    fn oscillating_at_zero() {
        let b = OscillatingBoundary::new(1.0, 0.5, 2.0).unwrap();
        assert_eq!(b.eval(0.0), 1.5);
        assert_eq!(Boundary::from(b).initial_level(), 1.5);
    }

    #[test]
    fn segment_coefficients() {
        let pl = PiecewiseLinearBoundary::new(vec![0.0, 1.0], vec![1.0, 2.0]).unwrap();
        assert_eq!(pl.segment_coeffs(1).unwrap(), (1.0, 1.0));
        let pl = PiecewiseLinearBoundary::new(vec![0.0, 1.0], vec![1.0, 1.0]).unwrap();
        assert_eq!(pl.segment_coeffs(1).unwrap(), (1.0, 0.0));
        let pl =
            PiecewiseLinearBoundary::new(vec![0.0, 0.5, 1.0], vec![1.0, 1.2, 1.1]).unwrap();
        let (a, b) = pl.segment_coeffs(2).unwrap();
        assert!((a - 1.3).abs() < 1e-12 && (b + 0.2).abs() < 1e-12);
        assert!(pl.segment_coeffs(0).is_err());
        assert!(pl.segment_coeffs(3).is_err());
    }

    #[test]
    fn piecewise_linear_eval_and_domain() {
        let pl =
            PiecewiseLinearBoundary::new(vec![0.0, 0.5, 1.0], vec![1.0, 1.2, 1.1]).unwrap();
        assert_eq!(pl.eval(0.5).unwrap(), 1.2);
        assert!((pl.eval(0.25).unwrap() - 1.1).abs() < 1e-15);
        assert!((pl.eval(0.75).unwrap() - 1.15).abs() < 1e-15);
        assert!(pl.eval(1.01).is_err());
        assert!(pl.eval(-0.01).is_err());
        assert!((pl.derivative(0.5).unwrap() + 0.2).abs() < 1e-12);
        assert!((pl.derivative(0.2).unwrap() - 0.4).abs() < 1e-12);
        assert!(PiecewiseLinearBoundary::new(vec![0.0, 0.0], vec![1.0, 1.0]).is_err());
    }

    #[test]
    fn sampling_a_line_reproduces_it() {
        let line = Boundary::from(LinearBoundary::new(1.0, 0.3).unwrap());
        let grid: Vec<f64> = (0..=10).map(|i| i as f64 * 0.137).collect();
        let pl = PiecewiseLinearBoundary::from_sampling(&line, &grid).unwrap();
        for k in 0..=100 {
            let t = k as f64 * 0.0137;
            assert!((pl.eval(t).unwrap() - line.eval(t).unwrap()).abs() < 1e-14);
        }
        let flat = Boundary::from(LinearBoundary::new(2.0, 0.0).unwrap());
        let pl = PiecewiseLinearBoundary::from_sampling(&flat, &grid).unwrap();
        assert!(pl.levels().iter().all(|&c| c == 2.0));
    }

    #[test]
    fn sampling_daniels() {
        let d = DanielsBoundary::new(1.0, 0.5, 0.5).unwrap();
        let pl = PiecewiseLinearBoundary::from_sampling(&d.into(), &[0.5, 1.0]).unwrap();
        assert_eq!(pl.levels()[0], d.eval(0.5).unwrap());
        assert_eq!(pl.levels()[1], d.eval(1.0).unwrap());
        // sampling outside the domain propagates the error
        assert!(PiecewiseLinearBoundary::from_sampling(&d.into(), &[0.0, 1.0]).is_err());
    }

    #[test]
    fn peskir_g_domain_and_asymptotics() {
        let g = PeskirGBoundary::new(-(4.0 * std::f64::consts::PI).ln()).unwrap();
        assert!(g.delta_c > 0.0 && g.delta_c <= 0.1);
        for &t in &[1e-4, 1e-6] {
            let ratio = g.eval(t).unwrap() / (2.0 * t * (1.0 / t).ln()).sqrt();
            assert!((0.9..=1.1).contains(&ratio), "ratio {ratio} at {t}");
        }
        assert!(g.eval(0.0).is_err());
        assert!(g.eval(g.delta_c * 1.01).is_err());
        // a very negative c shrinks the domain
        let g = PeskirGBoundary::new(-12.0).unwrap();
        assert!(g.delta_c < 0.1);
        assert!(g.eval(g.delta_c).unwrap() >= 0.0);
        assert!(PeskirGBoundary::with_domain_end(0.0, 0.5).is_err());
    }

    #[test]
    fn derivatives() {
        let osc = Boundary::from(OscillatingBoundary::new(1.0, 0.5, 2.0).unwrap());
        let t = 0.7;
        let fd = (osc.eval(t + 1e-6).unwrap() - osc.eval(t - 1e-6).unwrap()) / 2e-6;
        assert!((osc.derivative(t).unwrap() - fd).abs() < 1e-8);
        let dan = Boundary::from(DanielsBoundary::new(1.0, 0.5, 0.5).unwrap());
        let fd = (dan.eval(t + 1e-4).unwrap() - dan.eval(t - 1e-4).unwrap()) / 2e-4;
        assert!((dan.derivative(t).unwrap() - fd).abs() < 1e-6);
        // near zero the forward difference is used
        assert!(dan.derivative(1e-7).unwrap().is_finite());
    }
}
