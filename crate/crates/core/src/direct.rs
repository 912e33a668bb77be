//! Direct first-passage solvers: given a boundary, compute the law of the
//! crossing time. Used as oracles for the inverse solvers.

use std::sync::OnceLock;

use crate::boundaries::{Boundary, LinearBoundary};
use crate::bridge::PathEnsemble;
use crate::densities::fpt_density_linear;
use crate::error::{Error, Result};
use crate::numerics::{std_normal_pdf, uniform_grid};

/// Smallest path count accepted by [`direct_fpt_mc`].
pub const MIN_MC_SAMPLES: usize = 1000;

/// Negative densities above this are treated as round-off and set to zero.
pub const NEGATIVE_CLAMP: f64 = -1e-10;

/// Output of a direct solver on the grid `t_1 < … < t_n`.
#[derive(Debug, Clone, PartialEq)]
pub struct DirectResult {
    pub grid: Vec<f64>,
    /// `P(τ ∈ (t_{i−1}, t_i])` with `t_0 = 0`.
    pub interval_masses: Vec<f64>,
    pub density_values: Option<Vec<f64>>,
    pub std_errors: Option<Vec<f64>>,
    /// Mean weight of the paths that survived to `t_n` (Monte Carlo only).
    pub survival: Option<f64>,
}

fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::Config("grid must not be empty".into()));
    }
    if !(grid[0] > 0.0) || grid.iter().any(|t| !t.is_finite()) {
        return Err(Error::Config("grid times must be positive and finite".into()));
    }
    if grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::Config("grid times must be strictly increasing".into()));
    }
    Ok(())
}

/// Monte Carlo crossing masses of `b` replaced by its chords on the grid.
///
/// Paths start at 0 below `b(0+)` and are absorbed with Brownian-bridge
/// weights on every chord. The returned masses and the surviving weight add
/// up to one up to summation round-off.
pub fn direct_fpt_mc(b: &Boundary, grid: &[f64], samples: usize, seed: u64) -> Result<DirectResult> {
    check_grid(grid)?;
    if samples < MIN_MC_SAMPLES {
        return Err(Error::Config(format!(
            "direct Monte Carlo needs at least {MIN_MC_SAMPLES} samples, got {samples}"
        )));
    }
    let mut ens = PathEnsemble::new(samples, seed);
    let mut masses = Vec::with_capacity(grid.len());
    let mut errors = Vec::with_capacity(grid.len());
    let (mut t_prev, mut c_prev) = (0.0, b.initial_level());
    for (i, &t) in grid.iter().enumerate() {
        let c = b.eval(t).map_err(|e| e.at_knot(i + 1))?;
        let loss = ens.extend(c_prev, c, t - t_prev);
        masses.push(loss.mass);
        errors.push(loss.std_error);
        t_prev = t;
        c_prev = c;
    }
    Ok(DirectResult {
        grid: grid.to_vec(),
        interval_masses: masses,
        density_values: None,
        std_errors: Some(errors),
        survival: Some(ens.survival()),
    })
}

/// `k(t | y, τ) = ½ [b'(t) − (b(t) − y)/(t − τ)] φ((b(t) − y)/√(t − τ)) / √(t − τ)`.
fn kernel(bt: f64, dbt: f64, t: f64, y: f64, tau: f64) -> f64 {
    let s = t - tau;
    let sq = s.sqrt();
    let gap = bt - y;
    0.5 * (dbt - gap / s) * std_normal_pdf(gap / sq) / sq
}

fn uniform_step(grid: &[f64]) -> Result<f64> {
    let h = grid[0];
    for (i, &t) in grid.iter().enumerate() {
        let want = (i + 1) as f64 * h;
        if ((t - want) / want).abs() > 1e-9 {
            return Err(Error::Config(format!(
                "the integral-equation solver needs a uniform grid starting at h; knot {} is {t}, expected {want}",
                i + 1
            )));
        }
    }
    Ok(h)
}

fn vie_unchecked(b: &Boundary, grid: &[f64]) -> Result<DirectResult> {
    check_grid(grid)?;
    let h = uniform_step(grid)?;
    if !(b.initial_level() > 0.0) {
        return Err(Error::Domain(format!(
            "the integral-equation solver needs b(0+) > 0, got {}",
            b.initial_level()
        )));
    }
    let n = grid.len();
    let levels = grid
        .iter()
        .enumerate()
        .map(|(i, &t)| b.eval(t).map_err(|e| e.at_knot(i + 1)))
        .collect::<Result<Vec<_>>>()?;
    let mut f = Vec::with_capacity(n);
    for i in 0..n {
        let t = grid[i];
        let (bt, dbt) = (levels[i], b.derivative(t).map_err(|e| e.at_knot(i + 1))?);
        let mut v = -2.0 * kernel(bt, dbt, t, 0.0, 0.0);
        // f(0) = 0 and the diagonal kernel term vanishes, so the trapezoid
        // weights reduce to h on interior knots
        let mut acc = 0.0;
        for j in 0..i {
            acc += f[j] * kernel(bt, dbt, t, levels[j], grid[j]);
        }
        v += 2.0 * h * acc;
        if v < 0.0 {
            if v > NEGATIVE_CLAMP {
                v = 0.0;
            } else {
                return Err(Error::NumericalFailure(format!("negative density {v:e} at t = {t}")).at_knot(i + 1));
            }
        }
        f.push(v);
    }
    let masses = (0..n)
        .map(|i| 0.5 * h * (if i == 0 { 0.0 } else { f[i - 1] } + f[i]))
        .collect();
    Ok(DirectResult {
        grid: grid.to_vec(),
        interval_masses: masses,
        density_values: Some(f),
        std_errors: None,
        survival: None,
    })
}

/// Outcome of the one-off kernel check: the largest deviation from the
/// closed-form density on a linear boundary.
fn kernel_check() -> &'static std::result::Result<f64, String> {
    static CHECK: OnceLock<std::result::Result<f64, String>> = OnceLock::new();
    CHECK.get_or_init(|| {
        let (alpha, beta) = (1.0, 0.3);
        let b = Boundary::Linear(LinearBoundary { alpha, beta });
        let grid = uniform_grid(0.02, 100);
        let res = vie_unchecked(&b, &grid).map_err(|e| e.to_string())?;
        let mut worst: f64 = 0.0;
        for (t, v) in grid.iter().zip(res.density_values.unwrap()) {
            let exact = fpt_density_linear(*t, alpha, beta, 0.0, 0.0).map_err(|e| e.to_string())?;
            worst = worst.max((v - exact).abs());
        }
        if worst <= 1e-10 {
            Ok(worst)
        } else {
            Err(format!("kernel check deviates by {worst:e} on a linear boundary"))
        }
    })
}

/// Density of the crossing time of a smooth boundary with `b(0+) > 0`, by
/// forward trapezoidal stepping of a second-kind Volterra equation with a
/// nonsingular kernel.
///
/// The grid must be `h, 2h, …, nh`. Before the first use the kernel is
/// checked against the closed-form density of a straight line, and the solver
/// refuses to run if that check fails.
pub fn direct_fpt_vie(b: &Boundary, grid: &[f64]) -> Result<DirectResult> {
    if let Err(msg) = kernel_check() {
        return Err(Error::NumericalFailure(msg.clone()));
    }
    vie_unchecked(b, grid)
}
