//! Volterra-integral-equation inversion.
//!
//! For a process started at 0 the boundary satisfies
//! `Ψ(b(t)/√t) = ∫_0^t Ψ((b(t) − b(s))/√(t − s)) f(s) ds`.
//! Discretizing the integral on `t_i = ih` gives a triangular system: knot
//! `i` only involves `b_1, …, b_i`, and is solved by bisection.

use crate::densities::{flux_density, flux_small_time_solve, FptDensity};
use crate::error::{Error, Result};
use crate::numerics::{
    find_root_midpoint, std_normal_pdf, survival, survival_inv, Bracket, DEFAULT_MAX_ITER, DEFAULT_ROOT_TOL,
};

const SCAN_POINTS: usize = 64;
const MAX_DOUBLINGS: usize = 20;
/// Largest level searched by the small-time flux solve.
const FLUX_B_MAX: f64 = 100.0;
/// Relative density error above which a flux-corrected knot is reported.
pub const FLUX_WARN_REL: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    /// Rectangle rule, weight 1 on every knot but `j = 0`.
    Euler,
    /// Trapezoid rule, weights `½, 1, …, 1, ½`.
    Trapezoid,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VieConfig {
    pub h: f64,
    pub n: usize,
    pub scheme: Scheme,
    /// `b(0+)`; the trapezoid rule needs it when `f(0+) > 0`.
    pub b0: Option<f64>,
    pub root_tol: f64,
    pub flux_correction_knots: usize,
    pub flux_epsilon: f64,
    /// Initial half-width of the search bracket; `5√h + 0.5` when unset.
    pub bracket_halfwidth: Option<f64>,
}

impl VieConfig {
    pub fn new(h: f64, n: usize, scheme: Scheme) -> Self {
        VieConfig {
            h,
            n,
            scheme,
            b0: None,
            root_tol: DEFAULT_ROOT_TOL,
            flux_correction_knots: 0,
            flux_epsilon: 0.05,
            bracket_halfwidth: None,
        }
    }

    /// All violated invariants for solving against `d`.
    pub fn violations(&self, d: &FptDensity) -> Vec<String> {
        let mut v = Vec::new();
        if !(self.h > 0.0) || !self.h.is_finite() {
            v.push(format!("h must be positive, got {}", self.h));
        }
        if !(self.root_tol > 0.0) {
            v.push(format!("root_tol must be positive, got {}", self.root_tol));
        }
        if !(self.flux_epsilon > 0.0) {
            v.push(format!("flux_epsilon must be positive, got {}", self.flux_epsilon));
        }
        if let Some(w) = self.bracket_halfwidth {
            if !(w > 0.0) || !w.is_finite() {
                v.push(format!("bracket_halfwidth must be positive, got {w}"));
            }
        }
        if self.scheme == Scheme::Trapezoid && d.value_at_zero() > 0.0 && self.b0.is_none() {
            v.push("the trapezoid rule needs b0 when f(0+) > 0".into());
        }
        if self.flux_correction_knots > self.n {
            v.push(format!(
                "flux_correction_knots ({}) exceeds the number of knots ({})",
                self.flux_correction_knots, self.n
            ));
        } else if self.flux_correction_knots > 0 {
            let t_last = self.flux_correction_knots as f64 * self.h;
            if !(t_last < self.flux_epsilon) {
                v.push(format!(
                    "flux correction of knot {} at t = {t_last} needs t < flux_epsilon = {}",
                    self.flux_correction_knots, self.flux_epsilon
                ));
            }
        }
        let horizon = self.n as f64 * self.h;
        if horizon > d.horizon() * (1.0 + 1e-12) {
            v.push(format!(
                "the target density is only known up to t = {}, the run needs {horizon}",
                d.horizon()
            ));
        }
        v
    }

    fn halfwidth(&self) -> f64 {
        self.bracket_halfwidth.unwrap_or(5.0 * self.h.sqrt() + 0.5)
    }
}

/// Notes produced while solving.
#[derive(Debug, Clone, PartialEq)]
pub enum VieDiagnostic {
    /// Several sign changes were found in the search bracket; the one closest
    /// to the previous knot was taken.
    MultiRoot { knot: usize, roots: usize },
    /// The small-time flux relation reproduces the density poorly at a
    /// corrected knot.
    FluxUnreliable { knot: usize, relative_error: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct VieResult {
    pub grid: Vec<f64>,
    pub b_star: Vec<f64>,
    /// `G_i(b_i)` of the discretized equation.
    pub residuals: Vec<f64>,
    pub corrected_knots: usize,
    pub diagnostics: Vec<VieDiagnostic>,
}

/// `b(t_1) = √t_1 Ψ⁻¹(f_1 t_1 / 2)`, the rectangle-rule first knot.
pub fn vie_first_knot(f1: f64, t1: f64) -> Result<f64> {
    let p = 0.5 * f1 * t1;
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::Domain(format!(
            "first knot needs 0 < f₁t₁/2 < 1, got {p}; the equation has no solution this close to zero"
        )));
    }
    Ok(t1.sqrt() * survival_inv(p)?)
}

/// Discretized equation at knot `i` (0-based) as a function of `b_i`.
struct Knot<'a> {
    t: f64,
    h: f64,
    grid: &'a [f64],
    prev: &'a [f64],
    f: &'a [f64],
    diag: f64,
    /// `(½h f(0), b0)` for the trapezoid end term.
    start: Option<(f64, f64)>,
}

impl Knot<'_> {
    fn g(&self, b: f64) -> f64 {
        let mut sum = 0.0;
        for j in 0..self.prev.len() {
            sum += survival((b - self.prev[j]) / (self.t - self.grid[j]).sqrt()) * self.f[j];
        }
        let mut v = survival(b / self.t.sqrt()) - self.h * sum - self.diag;
        if let Some((w, b0)) = self.start {
            v -= w * survival((b - b0) / self.t.sqrt());
        }
        v
    }

    /// Value as `b → −∞`.
    fn g_minus_inf(&self) -> f64 {
        let sum: f64 = self.f[..self.prev.len()].iter().sum();
        1.0 - self.h * sum - self.diag - self.start.map_or(0.0, |(w, _)| w)
    }

    /// Upper bound of `|G'|`.
    fn lipschitz(&self) -> f64 {
        let p0 = std_normal_pdf(0.0);
        let mut l = p0 / self.t.sqrt();
        for j in 0..self.prev.len() {
            l += self.h * self.f[j] * p0 / (self.t - self.grid[j]).sqrt();
        }
        if let Some((w, _)) = self.start {
            l += w * p0 / self.t.sqrt();
        }
        l
    }
}

struct Solver<'a> {
    cfg: &'a VieConfig,
    grid: Vec<f64>,
    f: Vec<f64>,
    f0: f64,
}

impl<'a> Solver<'a> {
    fn new(d: &FptDensity, cfg: &'a VieConfig) -> Result<Self> {
        let v = cfg.violations(d);
        if !v.is_empty() {
            return Err(Error::Config(v.join("; ")));
        }
        let grid: Vec<f64> = (1..=cfg.n).map(|i| i as f64 * cfg.h).collect();
        let f = grid
            .iter()
            .enumerate()
            .map(|(i, &t)| d.eval(t).map_err(|e| e.at_knot(i + 1)))
            .collect::<Result<Vec<_>>>()?;
        Ok(Solver {
            cfg,
            grid,
            f,
            f0: d.value_at_zero(),
        })
    }

    fn knot<'s>(&'s self, i: usize, prev: &'s [f64]) -> Knot<'s> {
        let h = self.cfg.h;
        let (diag, start) = match self.cfg.scheme {
            Scheme::Euler => (0.5 * h * self.f[i], None),
            Scheme::Trapezoid => {
                let start = if self.f0 > 0.0 {
                    Some((0.5 * h * self.f0, self.cfg.b0.unwrap_or(0.0)))
                } else {
                    None
                };
                (0.25 * h * self.f[i], start)
            }
        };
        Knot {
            t: self.grid[i],
            h,
            grid: &self.grid,
            prev,
            f: &self.f,
            diag,
            start,
        }
    }

    /// Solves knot `i` given `b_1..b_{i}` in `prev`; returns `(b, G(b))`.
    fn solve_knot(&self, i: usize, prev: &[f64], diags: &mut Vec<VieDiagnostic>) -> Result<(f64, f64)> {
        let k = self.knot(i, prev);
        if k.g_minus_inf() <= 0.0 {
            return Err(Error::MassOverflow);
        }
        let closed_form = i == 0 && k.start.is_none();
        if closed_form {
            let p = k.diag;
            if !(p > 0.0 && p < 1.0) {
                return Err(Error::Domain(format!(
                    "first knot needs 0 < p < 1, got {p}; the equation has no solution this close to zero"
                )));
            }
            let b = k.t.sqrt() * survival_inv(p)?;
            return Ok((b, k.g(b)));
        }
        let center = match prev.last() {
            Some(&b) => b,
            None => self.cfg.b0.unwrap_or(0.0),
        };
        let mut w = self.cfg.halfwidth();
        for _ in 0..=MAX_DOUBLINGS {
            let (lo, hi) = (center - w, center + w);
            let step = (hi - lo) / SCAN_POINTS as f64;
            let xs: Vec<f64> = (0..=SCAN_POINTS).map(|m| lo + m as f64 * step).collect();
            let gs: Vec<f64> = xs.iter().map(|&x| k.g(x)).collect();
            let mut changes = Vec::new();
            for m in 0..SCAN_POINTS {
                if gs[m] == 0.0 {
                    changes.push((xs[m], xs[m]));
                } else if gs[m].signum() != gs[m + 1].signum() && gs[m + 1] != 0.0 {
                    changes.push((xs[m], xs[m + 1]));
                }
            }
            if gs[SCAN_POINTS] == 0.0 {
                changes.push((xs[SCAN_POINTS], xs[SCAN_POINTS]));
            }
            if changes.is_empty() {
                w *= 2.0;
                continue;
            }
            if changes.len() > 1 {
                diags.push(VieDiagnostic::MultiRoot {
                    knot: i + 1,
                    roots: changes.len(),
                });
            }
            let dist = |(a, b): &(f64, f64)| (0.5 * (a + b) - center).abs();
            let (a, b) = *changes
                .iter()
                .min_by(|x, y| dist(x).total_cmp(&dist(y)))
                .unwrap();
            if a == b {
                return Ok((a, 0.0));
            }
            let tol = self.cfg.root_tol / k.lipschitz();
            let root = find_root_midpoint(|x| k.g(x), Bracket::new(a, b)?, tol, DEFAULT_MAX_ITER)?;
            return Ok((root, k.g(root)));
        }
        Err(Error::NoSignChange {
            lo: center - w,
            hi: center + w,
        })
    }

    /// Solves knots `from..n` on top of the fixed prefix `b[..from]`.
    fn solve_from(&self, mut b: Vec<f64>, mut residuals: Vec<f64>, diags: &mut Vec<VieDiagnostic>) -> Result<(Vec<f64>, Vec<f64>)> {
        for i in b.len()..self.grid.len() {
            let (bi, gi) = self.solve_knot(i, &b, diags).map_err(|e| e.at_knot(i + 1))?;
            b.push(bi);
            residuals.push(gi);
        }
        Ok((b, residuals))
    }
}

/// Solves the discretized equation knot by knot, then applies the flux
/// correction to the first `flux_correction_knots` knots.
pub fn vie_solve(d: &FptDensity, cfg: &VieConfig) -> Result<VieResult> {
    let solver = Solver::new(d, cfg)?;
    let mut diagnostics = Vec::new();
    let (b_star, residuals) = solver.solve_from(Vec::new(), Vec::new(), &mut diagnostics)?;
    let res = VieResult {
        grid: solver.grid.clone(),
        b_star,
        residuals,
        corrected_knots: 0,
        diagnostics,
    };
    vie_flux_correct(res, d, cfg)
}

/// Replaces the first `flux_correction_knots` knots by solutions of the
/// small-time flux relation and re-solves the knots after them.
///
/// Each corrected knot is checked by plugging it into the two-term flux
/// expression `(b/t − b′) φ(b/√t) / √t` and comparing with the target; a
/// relative error above 5% is reported as [`VieDiagnostic::FluxUnreliable`].
pub fn vie_flux_correct(result: VieResult, d: &FptDensity, cfg: &VieConfig) -> Result<VieResult> {
    let k = cfg.flux_correction_knots;
    if k == 0 {
        return Ok(result);
    }
    let solver = Solver::new(d, cfg)?;
    let mut b = Vec::with_capacity(cfg.n);
    let mut residuals = Vec::with_capacity(cfg.n);
    let mut diagnostics = result.diagnostics;
    for i in 0..k {
        let (t, fi) = (solver.grid[i], solver.f[i]);
        let bi = flux_small_time_solve(fi, t, FLUX_B_MAX).map_err(|e| e.at_knot(i + 1))?;
        b.push(bi);
        residuals.push(flux_density(bi, t) - fi);
    }
    let (b, residuals) = solver.solve_from(b, residuals, &mut diagnostics)?;
    for i in 0..k {
        let t = solver.grid[i];
        let slope = if i + 1 < b.len() {
            (b[i + 1] - b[i]) / cfg.h
        } else if i > 0 {
            (b[i] - b[i - 1]) / cfg.h
        } else {
            0.0
        };
        let f_hat = (b[i] / t - slope) * std_normal_pdf(b[i] / t.sqrt()) / t.sqrt();
        let rel = (f_hat - solver.f[i]).abs() / solver.f[i];
        if rel > FLUX_WARN_REL {
            diagnostics.push(VieDiagnostic::FluxUnreliable {
                knot: i + 1,
                relative_error: rel,
            });
        }
    }
    Ok(VieResult {
        grid: solver.grid,
        b_star: b,
        residuals,
        corrected_knots: k,
        diagnostics,
    })
}

/// `G_i(b)` for the given knot values, for checking a solution.
pub fn vie_residual(d: &FptDensity, cfg: &VieConfig, b: &[f64], i: usize) -> Result<f64> {
    let solver = Solver::new(d, cfg)?;
    if i >= b.len() || b.len() > cfg.n {
        return Err(Error::LengthMismatch {
            expected: cfg.n,
            got: b.len(),
        });
    }
    Ok(solver.knot(i, &b[..i]).g(b[i]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::boundaries::DanielsBoundary;

    #[test]
    fn first_knot_examples() {
        assert_eq!(vie_first_knot(100.0, 0.01).unwrap(), 0.0);
        let arg = 0.01 * (-0.01f64).exp() / 2.0;
        let b = vie_first_knot((-0.01f64).exp(), 0.01).unwrap();
        assert!((survival(b / 0.1) - arg).abs() < 1e-15);
        assert!((b - 0.2577).abs() < 5e-4);
        assert!(matches!(vie_first_knot(240.0, 0.01), Err(Error::Domain(_))));
    }

    #[test]
    fn residual_contract_and_triangularity() {
        let d = FptDensity::daniels(1.0, 0.5, 0.5).unwrap();
        let cfg = VieConfig::new(0.02, 100, Scheme::Euler);
        let r = vie_solve(&d, &cfg).unwrap();
        assert!(r.residuals.iter().all(|g| g.abs() <= cfg.root_tol));
        for i in [5, 50, 99] {
            assert!(vie_residual(&d, &cfg, &r.b_star, i).unwrap().abs() <= cfg.root_tol);
        }
        let again = vie_solve(&d, &cfg).unwrap();
        assert_eq!(r, again);
    }

    #[test]
    fn euler_daniels_accuracy() {
        let db = DanielsBoundary::new(1.0, 0.5, 0.5).unwrap();
        let d = FptDensity::Daniels(db);
        let r = vie_solve(&d, &VieConfig::new(0.01, 200, Scheme::Euler)).unwrap();
        let s: f64 = r
            .grid
            .iter()
            .zip(&r.b_star)
            .map(|(t, b)| (db.eval(*t).unwrap() - b).powi(2))
            .sum::<f64>()
            / 200.0;
        assert!(s > 4.3e-5 / 3.0 && s < 4.3e-5 * 3.0, "σ = {s}");
    }

    #[test]
    fn flux_correction() {
        let d = FptDensity::exponential(1.0).unwrap();
        let mut cfg = VieConfig::new(0.01, 50, Scheme::Euler);
        let plain = vie_solve(&d, &cfg).unwrap();
        cfg.flux_correction_knots = 2;
        let corrected = vie_solve(&d, &cfg).unwrap();
        assert_eq!(corrected.corrected_knots, 2);
        assert!(corrected.b_star[0] > plain.b_star[0]);
        assert!(corrected.b_star[1] > plain.b_star[1]);
        for i in 0..2 {
            let t = corrected.grid[i];
            assert!((flux_density(corrected.b_star[i], t) - d.eval(t).unwrap()).abs() < 1e-10);
        }
        cfg.flux_correction_knots = 0;
        assert_eq!(vie_flux_correct(plain.clone(), &d, &cfg).unwrap(), plain);
        cfg.flux_correction_knots = 6;
        assert!(matches!(vie_solve(&d, &cfg), Err(Error::Config(_))));
    }

    #[test]
    fn mass_overflow_is_reported_with_knot() {
        use crate::densities::TabulatedDensity;
        // total mass 3 on [0, 2]
        let tab = TabulatedDensity::new(vec![0.1, 2.0], vec![1.5, 1.5]).unwrap();
        let d = FptDensity::Tabulated(tab);
        let cfg = VieConfig::new(0.1, 20, Scheme::Euler);
        let err = vie_solve(&d, &cfg).unwrap_err();
        assert_eq!(err.root_cause(), &Error::MassOverflow);
        assert_eq!(err.knot(), Some(8));
    }

    #[test]
    fn trapezoid_needs_b0_when_density_starts_positive() {
        let d = FptDensity::exponential(1.0).unwrap();
        let cfg = VieConfig::new(0.01, 10, Scheme::Trapezoid);
        assert!(matches!(vie_solve(&d, &cfg), Err(Error::Config(_))));
        let mut cfg = cfg;
        cfg.b0 = Some(0.0);
        let r = vie_solve(&d, &cfg).unwrap();
        assert!(r.residuals.iter().all(|g| g.abs() <= cfg.root_tol));
    }
}
