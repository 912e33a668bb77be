//! Piecewise-linear Monte Carlo inversion.
//!
//! The boundary is built one chord at a time. On each interval the slope is
//! chosen so that the probability of a first crossing inside the interval,
//! estimated from weighted paths that have survived the chords so far,
//! equals the target mass of the interval.

use crate::boundaries::{PeskirGBoundary, PiecewiseLinearBoundary};
use crate::bridge::{segment_cross_mass, PathEnsemble, MIN_ESS};
use crate::densities::{c_from_kappa, classify_small_time, FptDensity, SmallTimeClass};
use crate::error::{Error, Result};
use crate::numerics::{find_root_midpoint, survival_inv, Bracket, DEFAULT_MAX_ITER, DEFAULT_ROOT_TOL};

/// Cumulative target mass above which the run stops early.
pub const MASS_EXHAUSTION: f64 = 1.0 - 1e-9;
const MAX_DOUBLINGS: usize = 60;

/// How the first interval is handled.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Startup {
    /// Start the first chord at a given `b(0+) > 0`.
    Standard,
    /// `f(0+) = κ > 0`: the first chord follows the small-time upper
    /// function matching `κ`, starting from 0.
    PeskirG,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlmcConfig {
    pub h: f64,
    pub n_steps: usize,
    pub mc_samples: usize,
    pub seed: u64,
    /// Confidence level of the slope intervals, e.g. 0.95.
    pub confidence: f64,
    pub root_tol: f64,
    pub b0: Option<f64>,
    pub startup: Startup,
}

impl PlmcConfig {
    pub fn new(h: f64, n_steps: usize, mc_samples: usize, b0: Option<f64>) -> Self {
        PlmcConfig {
            h,
            n_steps,
            mc_samples,
            seed: 0,
            confidence: 0.95,
            root_tol: DEFAULT_ROOT_TOL,
            b0,
            startup: Startup::Standard,
        }
    }

    /// All violated invariants, empty when the configuration is usable.
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        if !(self.h > 0.0) || !self.h.is_finite() {
            v.push(format!("h must be positive, got {}", self.h));
        }
        if self.mc_samples < 1000 {
            v.push(format!("mc_samples must be at least 1000, got {}", self.mc_samples));
        }
        if !(self.root_tol > 0.0) {
            v.push(format!("root_tol must be positive, got {}", self.root_tol));
        }
        if !(self.confidence > 0.0 && self.confidence < 1.0) {
            v.push(format!("confidence must lie in (0, 1), got {}", self.confidence));
        }
        match (self.startup, self.b0) {
            (Startup::Standard, None) => v.push("standard startup needs b0".into()),
            (Startup::Standard, Some(b0)) if !(b0 > 0.0) || !b0.is_finite() => {
                v.push(format!("b0 must be positive, got {b0}"))
            }
            _ => {}
        }
        v
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(v.join("; ")))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlmcResult {
    /// Knots `(0, c_0), (h, c_1), …`.
    pub boundary: PiecewiseLinearBoundary,
    pub slopes: Vec<f64>,
    /// `α_i` with `c(t) = α_i + β_i t` on interval `i`.
    pub intercepts: Vec<f64>,
    /// Slope interval per step at the configured confidence.
    pub ci: Vec<(f64, f64)>,
    /// Whether an interval end had to be clipped to the searched slope range.
    pub ci_clipped: Vec<bool>,
    pub ess_per_step: Vec<f64>,
    pub target_masses: Vec<f64>,
    /// Standard error of the Monte Carlo crossing-mass estimate at each
    /// returned slope (zero where the mass is computed in closed form).
    pub mass_std_errors: Vec<f64>,
    /// Set when the run stopped because the target mass was used up.
    pub truncated: bool,
    pub notes: Vec<String>,
}

/// Slope of the first chord from level `alpha1` at time 0 such that a path
/// from the origin crosses it before `t1` with probability `k1`.
pub fn plmc_step1(k1: f64, alpha1: f64, t1: f64, root_tol: f64) -> Result<f64> {
    if !(alpha1 > 0.0) || !(t1 > 0.0) {
        return Err(Error::Domain(format!("first step needs α₁ > 0 and t₁ > 0 (α₁ = {alpha1}, t₁ = {t1})")));
    }
    if k1 >= 1.0 {
        return Err(Error::InfeasibleMass {
            target: k1,
            attainable: 1.0,
        });
    }
    if !(k1 > 0.0) {
        return Err(Error::NoSignChange {
            lo: f64::NEG_INFINITY,
            hi: f64::INFINITY,
        });
    }
    solve_slope(|beta| segment_cross_mass(beta, 0.0, alpha1, t1) - k1, 0.0, t1, root_tol)
}

/// Bisection for a decreasing `g(β)`, on `[−B, B]` with
/// `B = max(5, 5/√h)(1 + |β_prev|)` doubled until it brackets the root.
fn solve_slope<F: Fn(f64) -> f64>(g: F, beta_prev: f64, h: f64, tol: f64) -> Result<f64> {
    let bracket = slope_bracket(&g, beta_prev, h)?;
    find_root_midpoint(g, bracket, tol, DEFAULT_MAX_ITER)
}

fn slope_bracket<F: Fn(f64) -> f64>(g: &F, beta_prev: f64, h: f64) -> Result<Bracket> {
    let mut b = (5.0f64).max(5.0 / h.sqrt()) * (1.0 + beta_prev.abs());
    for _ in 0..=MAX_DOUBLINGS {
        let (lo, hi) = (g(-b), g(b));
        if lo >= 0.0 && hi <= 0.0 {
            return Bracket::new(-b, b);
        }
        b *= 2.0;
    }
    Err(Error::NoSignChange { lo: -b, hi: b })
}

/// One slope with its confidence interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub beta: f64,
    pub ci: (f64, f64),
    pub ci_clipped: bool,
    pub ess: f64,
    pub std_error: f64,
}

/// Solves for the slope of the next chord, starting at level `c_n`, so that
/// the weighted paths cross it within `h` with mean probability `k_next`.
///
/// All slope trials reuse the same paths, so the left side is a fixed,
/// nonincreasing function of the slope. The interval comes from solving the
/// same equation with the target shifted by `±z·se`.
pub fn plmc_step_n(
    paths: &PathEnsemble,
    c_n: f64,
    beta_prev: f64,
    k_next: f64,
    h: f64,
    confidence: f64,
    root_tol: f64,
) -> Result<StepOutcome> {
    let attainable = paths.survival();
    if k_next >= attainable {
        return Err(Error::InfeasibleMass {
            target: k_next,
            attainable,
        });
    }
    let ess = paths.ess();
    if ess < MIN_ESS {
        return Err(Error::DegenerateSample { ess });
    }
    let lhs = |beta: f64| paths.crossing_mass(beta, c_n, h);
    let bracket = slope_bracket(&|b| lhs(b) - k_next, beta_prev, h)?;
    let beta = find_root_midpoint(|b| lhs(b) - k_next, bracket, root_tol, DEFAULT_MAX_ITER)?;
    let est = paths.estimate_crossing_mass(beta, c_n, h)?;
    let z = survival_inv(0.5 * (1.0 - confidence))?;
    let delta = z * est.std_error;

    let mut clipped = false;
    let (lo_target, hi_target) = (k_next + delta, k_next - delta);
    // larger mass means a lower chord
    let beta_lo = if delta == 0.0 {
        beta
    } else if lo_target < attainable {
        let br = slope_bracket(&|b| lhs(b) - lo_target, beta_prev, h)?;
        find_root_midpoint(|b| lhs(b) - lo_target, br, root_tol, DEFAULT_MAX_ITER)?
    } else {
        clipped = true;
        bracket.lo
    };
    let beta_hi = if delta == 0.0 {
        beta
    } else if hi_target > 0.0 {
        let br = slope_bracket(&|b| lhs(b) - hi_target, beta_prev, h)?;
        find_root_midpoint(|b| lhs(b) - hi_target, br, root_tol, DEFAULT_MAX_ITER)?
    } else {
        clipped = true;
        bracket.hi
    };
    Ok(StepOutcome {
        beta,
        ci: (beta_lo.min(beta), beta_hi.max(beta)),
        ci_clipped: clipped,
        ess: est.ess,
        std_error: est.std_error,
    })
}

/// Reconstructs the boundary on `h, 2h, …, n_steps·h`.
pub fn plmc_solve(d: &FptDensity, cfg: &PlmcConfig) -> Result<PlmcResult> {
    cfg.validate()?;
    let h = cfg.h;
    let horizon = cfg.n_steps as f64 * h;
    if horizon > d.horizon() * (1.0 + 1e-12) {
        return Err(Error::Config(format!(
            "the target density is only known up to t = {}, the run needs {horizon}",
            d.horizon()
        )));
    }
    let mut notes = Vec::new();
    let mut ens = PathEnsemble::new(cfg.mc_samples, cfg.seed);
    let mut times = vec![0.0];
    let (mut levels, startup_g) = match cfg.startup {
        Startup::Standard => {
            notes.push("b0 is taken as given; the boundary error cannot fall below its error".into());
            (vec![cfg.b0.unwrap()], None)
        }
        Startup::PeskirG => {
            let kappa = match classify_small_time(d) {
                SmallTimeClass::Finite { kappa } => kappa,
                other => {
                    return Err(Error::Config(format!(
                        "the g startup needs a finite positive f(0+), the target has {other:?}"
                    )))
                }
            };
            let g = PeskirGBoundary::new(c_from_kappa(kappa)?)?;
            if h > g.delta_c {
                return Err(Error::Config(format!(
                    "h = {h} exceeds the domain (0, {}] of the small-time upper function",
                    g.delta_c
                )));
            }
            (vec![0.0], Some(g))
        }
    };
    let mut res = PlmcResult {
        boundary: PiecewiseLinearBoundary::new(vec![0.0], levels.clone())?,
        slopes: Vec::new(),
        intercepts: Vec::new(),
        ci: Vec::new(),
        ci_clipped: Vec::new(),
        ess_per_step: Vec::new(),
        target_masses: Vec::new(),
        mass_std_errors: Vec::new(),
        truncated: false,
        notes: Vec::new(),
    };
    let mut cumulative = 0.0;
    let mut alpha_prev = levels[0];
    let mut beta_prev = 0.0;
    for n in 1..=cfg.n_steps {
        let (t_prev, t) = ((n - 1) as f64 * h, n as f64 * h);
        let k = d.interval_mass(t_prev, t).map_err(|e| e.at_knot(n))?;
        if cumulative + k > MASS_EXHAUSTION {
            res.truncated = true;
            notes.push(format!("target mass exhausted; stopped after {} steps", n - 1));
            break;
        }
        cumulative += k;
        let c_prev = *levels.last().unwrap();
        let outcome = match (n, startup_g) {
            (1, Some(g)) => {
                let c1 = g.eval(t)?;
                let beta = c1 / h;
                StepOutcome {
                    beta,
                    ci: (beta, beta),
                    ci_clipped: false,
                    ess: cfg.mc_samples as f64,
                    std_error: 0.0,
                }
            }
            (1, None) => {
                let beta = plmc_step1(k, c_prev, h, cfg.root_tol).map_err(|e| e.at_knot(n))?;
                StepOutcome {
                    beta,
                    ci: (beta, beta),
                    ci_clipped: false,
                    ess: cfg.mc_samples as f64,
                    std_error: 0.0,
                }
            }
            _ => plmc_step_n(&ens, c_prev, beta_prev, k, h, cfg.confidence, cfg.root_tol)
                .map_err(|e| e.at_knot(n))?,
        };
        let c = c_prev + outcome.beta * h;
        // keep α_n + β_n t_n = α_{n+1} + β_{n+1} t_n exactly in the recurrence
        let alpha = if n == 1 {
            levels[0]
        } else {
            alpha_prev + (beta_prev - outcome.beta) * t_prev
        };
        if n == 1 && startup_g.is_some() {
            // crossings near zero are disregarded: only the endpoint counts
            ens.extend_endpoint_only(c, h);
        } else {
            ens.extend(c_prev, c, h);
        }
        if outcome.ci_clipped {
            notes.push(format!("confidence interval clipped at step {n}"));
        }
        times.push(t);
        levels.push(c);
        res.slopes.push(outcome.beta);
        res.intercepts.push(alpha);
        res.ci.push(outcome.ci);
        res.ci_clipped.push(outcome.ci_clipped);
        res.ess_per_step.push(outcome.ess);
        res.target_masses.push(k);
        res.mass_std_errors.push(outcome.std_error);
        alpha_prev = alpha;
        beta_prev = outcome.beta;
    }
    res.boundary = PiecewiseLinearBoundary::new(times, levels)?;
    res.notes = notes;
    Ok(res)
}
