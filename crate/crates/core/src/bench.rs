//! Accuracy measures and the benchmark suite: mean-square deviation from a
//! known boundary, empirical convergence orders, the four curved-boundary
//! test cases, and the exponential-density comparison of both solvers.

use std::io::Write;
use std::time::Instant;

use rayon::prelude::*;

use crate::boundaries::{Boundary, DanielsBoundary, OscillatingBoundary, PiecewiseLinearBoundary};
use crate::densities::{FptDensity, TabulatedDensity};
use crate::direct::{direct_fpt_mc, direct_fpt_vie};
use crate::error::{Error, Result};
use crate::numerics::{steps_for_horizon, uniform_grid};
use crate::plmc::{plmc_solve, PlmcConfig, PlmcResult, Startup};
use crate::vie::{vie_solve, Scheme, VieConfig};

/// Per-knot errors of an estimate against a known boundary.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorReport {
    /// `b(t_j) − b̂(t_j)`.
    pub per_knot_error: Vec<f64>,
    /// Sum of squared errors divided by the number of knots with `t > 0`.
    pub sigma: f64,
    pub max_abs_error: f64,
    pub n: usize,
}

/// Mean-square deviation of `estimate` from `truth` on `grid`.
///
/// A knot at `t = 0` is compared with `b(0+)` and contributes to the sum but
/// not to the divisor, so `σ = (1/n) Σ_{j=0}^{n} ε_j²` when the grid starts at
/// zero and `(1/n) Σ_{j=1}^{n} ε_j²` otherwise.
pub fn mean_square_deviation(truth: &Boundary, estimate: &[f64], grid: &[f64]) -> Result<ErrorReport> {
    if estimate.len() != grid.len() {
        return Err(Error::LengthMismatch {
            expected: grid.len(),
            got: estimate.len(),
        });
    }
    let mut errors = Vec::with_capacity(grid.len());
    for (&t, &b_hat) in grid.iter().zip(estimate) {
        let b = if t == 0.0 { truth.initial_level() } else { truth.eval(t)? };
        errors.push(b - b_hat);
    }
    let n = grid.iter().filter(|&&t| t > 0.0).count();
    let sum_sq: f64 = errors.iter().map(|e| e * e).sum();
    let sigma = if n == 0 { 0.0 } else { sum_sq / n as f64 };
    let max_abs_error = errors.iter().fold(0.0f64, |m, e| m.max(e.abs()));
    Ok(ErrorReport {
        per_knot_error: errors,
        sigma,
        max_abs_error,
        n,
    })
}

/// Empirical order of convergence.
#[derive(Debug, Clone, PartialEq)]
pub struct OrderEstimate {
    pub h_values: Vec<f64>,
    pub errors: Vec<f64>,
    /// Least-squares slope of `log(error)` against `log(h)`.
    pub slope: f64,
}

/// Fits the log–log slope of `errors` against `h_values`.
pub fn order_from_errors(h_values: &[f64], errors: &[f64]) -> Result<OrderEstimate> {
    if h_values.len() != errors.len() {
        return Err(Error::LengthMismatch {
            expected: h_values.len(),
            got: errors.len(),
        });
    }
    if h_values.len() < 3 {
        return Err(Error::Config("an order estimate needs at least three step sizes".into()));
    }
    if h_values.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(Error::Config("step sizes must be strictly decreasing".into()));
    }
    if errors.iter().chain(h_values).any(|v| !(*v > 0.0)) {
        return Err(Error::Domain("step sizes and errors must be positive".into()));
    }
    let xs: Vec<f64> = h_values.iter().map(|h| h.ln()).collect();
    let ys: Vec<f64> = errors.iter().map(|e| e.ln()).collect();
    let m = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / m, ys.iter().sum::<f64>() / m);
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    Ok(OrderEstimate {
        h_values: h_values.to_vec(),
        errors: errors.to_vec(),
        slope: sxy / sxx,
    })
}

/// Knots at or after this time enter the order estimate.
pub const ORDER_T_MIN: f64 = 0.5;

/// Runs `solver(h)` for every step size, takes the largest error against
/// `truth` over knots with `t ≥ 0.5`, and fits the order.
///
/// The solver returns knot times and estimates.
pub fn convergence_order<F>(mut solver: F, h_values: &[f64], truth: &Boundary) -> Result<OrderEstimate>
where
    F: FnMut(f64) -> Result<(Vec<f64>, Vec<f64>)>,
{
    let mut errors = Vec::with_capacity(h_values.len());
    for &h in h_values {
        let (grid, est) = solver(h).map_err(|e| Error::NumericalFailure(format!("solver failed at h = {h}: {e}")))?;
        errors.push(max_error_after(truth, &grid, &est, ORDER_T_MIN)?);
    }
    order_from_errors(h_values, &errors)
}

/// Largest `|b(t) − b̂(t)|` over knots with `t ≥ t_min`.
pub fn max_error_after(truth: &Boundary, grid: &[f64], estimate: &[f64], t_min: f64) -> Result<f64> {
    let report = mean_square_deviation(truth, estimate, grid)?;
    Ok(grid
        .iter()
        .zip(&report.per_knot_error)
        .filter(|(t, _)| **t >= t_min)
        .fold(0.0f64, |m, (_, e)| m.max(e.abs())))
}

/// Both solvers on the unit exponential density.
#[derive(Debug, Clone, PartialEq)]
pub struct ShiryaevReport {
    pub times: Vec<f64>,
    pub plmc: Vec<f64>,
    pub vie: Vec<f64>,
    /// `max |b̂_PLMC − b̂_VIE|` over knots in `[0.1, horizon]`.
    pub max_discrepancy: f64,
    pub plmc_rise_then_fall: bool,
    pub vie_rise_then_fall: bool,
    pub both_positive: bool,
}

/// Start of the comparison window.
pub const SHIRYAEV_T_MIN: f64 = 0.1;
const SHAPE_MARGIN: f64 = 0.01;

/// True when the maximum is strictly inside and both ends lie at least
/// 0.01 below it.
pub fn rise_then_fall(values: &[f64]) -> bool {
    if values.len() < 3 {
        return false;
    }
    let (arg, max) = values
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(ai, am), (i, &v)| if v > am { (i, v) } else { (ai, am) });
    arg > 0
        && arg + 1 < values.len()
        && values[0] <= max - SHAPE_MARGIN
        && values[values.len() - 1] <= max - SHAPE_MARGIN
}

/// Solves for the boundary of the unit exponential density with both
/// methods: PLMC with the small-time upper-function start, and the Euler
/// integral-equation solver with the first two knots flux-corrected.
pub fn shiryaev_compare(h: f64, horizon: f64, samples: usize, seed: u64) -> Result<ShiryaevReport> {
    if h > 0.01 {
        return Err(Error::Config(format!("the comparison needs h ≤ 0.01, got {h}")));
    }
    let n = steps_for_horizon(h, horizon)?;
    let d = FptDensity::exponential(1.0)?;
    let mut pcfg = PlmcConfig::new(h, n, samples, None);
    pcfg.seed = seed;
    pcfg.startup = Startup::PeskirG;
    let mut vcfg = VieConfig::new(h, n, Scheme::Euler);
    vcfg.flux_correction_knots = 2;
    let (p, v) = rayon::join(|| plmc_solve(&d, &pcfg), || vie_solve(&d, &vcfg));
    let (p, v) = (p?, v?);
    let m = p.slopes.len().min(v.b_star.len());
    let times = v.grid[..m].to_vec();
    let plmc = p.boundary.levels()[1..=m].to_vec();
    let vie = v.b_star[..m].to_vec();
    let max_discrepancy = times
        .iter()
        .zip(plmc.iter().zip(&vie))
        .filter(|(t, _)| **t >= SHIRYAEV_T_MIN - 1e-12)
        .fold(0.0f64, |acc, (_, (a, b))| acc.max((a - b).abs()));
    Ok(ShiryaevReport {
        plmc_rise_then_fall: rise_then_fall(&plmc),
        vie_rise_then_fall: rise_then_fall(&vie),
        both_positive: plmc.iter().chain(&vie).all(|b| *b > 0.0),
        times,
        plmc,
        vie,
        max_discrepancy,
    })
}

/// One of the four curved-boundary test problems on `[0, 2]`.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchCase {
    pub name: String,
    pub truth: Boundary,
    pub density: FptDensity,
}

pub const SECTION7_HORIZON: f64 = 2.0;
/// Grid step of the tabulated oscillating-boundary densities.
pub const TABULATION_STEP: f64 = 0.0025;

/// Target density of a boundary without a closed form, tabulated from the
/// direct integral-equation solver.
pub fn tabulate_density(b: &Boundary, h: f64, horizon: f64) -> Result<TabulatedDensity> {
    let grid = uniform_grid(h, steps_for_horizon(h, horizon)?);
    let res = direct_fpt_vie(b, &grid)?;
    TabulatedDensity::new(grid, res.density_values.unwrap())
}

/// Daniels `(1, 0.5, 0.5)`, `(1, 1, 0.5)` and oscillating `(1, 0.5, 2)`,
/// `(1, 1, 2)`.
pub fn section7_cases() -> Result<Vec<BenchCase>> {
    let mut cases = Vec::new();
    for (a, b, g) in [(1.0, 0.5, 0.5), (1.0, 1.0, 0.5)] {
        let db = DanielsBoundary::new(a, b, g)?;
        cases.push(BenchCase {
            name: format!("daniels-{a}-{b}-{g}"),
            truth: Boundary::Daniels(db),
            density: FptDensity::Daniels(db),
        });
    }
    for (a, b, g) in [(1.0, 0.5, 2.0), (1.0, 1.0, 2.0)] {
        let ob = Boundary::Oscillating(OscillatingBoundary::new(a, b, g)?);
        let tab = tabulate_density(&ob, TABULATION_STEP, SECTION7_HORIZON)?;
        cases.push(BenchCase {
            name: format!("oscillating-{a}-{b}-{g}"),
            truth: ob,
            density: FptDensity::Tabulated(tab),
        });
    }
    Ok(cases)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Plmc,
    Vie,
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::Plmc => "plmc",
            Method::Vie => "vie",
        }
    }
}

/// Solver settings of a benchmark cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellSettings {
    pub plmc_h: f64,
    pub plmc_samples: usize,
    pub vie_h: f64,
    pub seed: u64,
}

impl Default for CellSettings {
    fn default() -> Self {
        CellSettings {
            plmc_h: 0.2,
            plmc_samples: 10_000,
            vie_h: 0.01,
            seed: 0,
        }
    }
}

/// Result of one (case, method) run.
#[derive(Debug, Clone, PartialEq)]
pub struct CellResult {
    pub case: String,
    pub method: Method,
    pub h: f64,
    pub samples: Option<usize>,
    pub times: Vec<f64>,
    pub b_true: Vec<f64>,
    pub b_hat: Vec<f64>,
    pub report: ErrorReport,
    pub runtime_seconds: Option<f64>,
    /// PLMC solution, kept for follow-up checks.
    pub plmc: Option<PlmcResult>,
}

/// Runs one solver on one case over `[0, 2]`. PLMC starts from the known
/// `b(0+)` and its grid includes `t = 0`.
pub fn run_cell(case: &BenchCase, method: Method, settings: &CellSettings, record_runtime: bool) -> Result<CellResult> {
    let start = Instant::now();
    let (h, samples, times, b_hat, plmc) = match method {
        Method::Plmc => {
            let h = settings.plmc_h;
            let mut cfg = PlmcConfig::new(
                h,
                steps_for_horizon(h, SECTION7_HORIZON)?,
                settings.plmc_samples,
                Some(case.truth.initial_level()),
            );
            cfg.seed = settings.seed;
            let r = plmc_solve(&case.density, &cfg)?;
            let times = r.boundary.times().to_vec();
            let levels = r.boundary.levels().to_vec();
            (h, Some(settings.plmc_samples), times, levels, Some(r))
        }
        Method::Vie => {
            let h = settings.vie_h;
            let cfg = VieConfig::new(h, steps_for_horizon(h, SECTION7_HORIZON)?, Scheme::Euler);
            let r = vie_solve(&case.density, &cfg)?;
            (h, None, r.grid, r.b_star, None)
        }
    };
    let runtime = start.elapsed().as_secs_f64();
    let report = mean_square_deviation(&case.truth, &b_hat, &times)?;
    let b_true = times
        .iter()
        .map(|&t| if t == 0.0 { Ok(case.truth.initial_level()) } else { case.truth.eval(t) })
        .collect::<Result<Vec<_>>>()?;
    Ok(CellResult {
        case: case.name.clone(),
        method,
        h,
        samples,
        times,
        b_true,
        b_hat,
        report,
        runtime_seconds: record_runtime.then_some(runtime),
        plmc,
    })
}

/// All eight cells, in case order with PLMC before VIE.
pub fn run_section7(settings: &CellSettings, record_runtime: bool) -> Result<Vec<CellResult>> {
    let cases = section7_cases()?;
    let jobs: Vec<(&BenchCase, Method)> = cases
        .iter()
        .flat_map(|c| [(c, Method::Plmc), (c, Method::Vie)])
        .collect();
    jobs.par_iter()
        .map(|(c, m)| run_cell(c, *m, settings, record_runtime).map_err(|e| annotate(e, &c.name, *m)))
        .collect()
}

fn annotate(e: Error, case: &str, m: Method) -> Error {
    match e {
        Error::NumericalFailure(msg) => Error::NumericalFailure(format!("{case}/{}: {msg}", m.name())),
        other => other,
    }
}

/// Round-trip check of a reconstructed boundary.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundTrip {
    pub masses: Vec<f64>,
    pub std_errors: Vec<f64>,
    /// Whether each interval lies within `3·se + tol` of its target.
    pub within: Vec<bool>,
    pub fraction_within: f64,
}

/// Feeds `boundary` to the Monte Carlo direct solver and compares its
/// interval masses with `targets`. `extra_se` adds an independent standard
/// error per interval (that of the inverse solver's own estimate).
pub fn round_trip(
    boundary: &PiecewiseLinearBoundary,
    targets: &[f64],
    extra_se: Option<&[f64]>,
    samples: usize,
    seed: u64,
    tol: f64,
) -> Result<RoundTrip> {
    let grid = &boundary.times()[1..];
    if grid.len() != targets.len() {
        return Err(Error::LengthMismatch {
            expected: grid.len(),
            got: targets.len(),
        });
    }
    let res = direct_fpt_mc(&Boundary::PiecewiseLinear(boundary.clone()), grid, samples, seed)?;
    let se = res.std_errors.unwrap();
    let within: Vec<bool> = (0..targets.len())
        .map(|i| {
            let extra = extra_se.map_or(0.0, |e| e[i]);
            let s = (se[i] * se[i] + extra * extra).sqrt();
            (res.interval_masses[i] - targets[i]).abs() <= 3.0 * s + tol
        })
        .collect();
    let fraction_within = within.iter().filter(|w| **w).count() as f64 / within.len().max(1) as f64;
    Ok(RoundTrip {
        masses: res.interval_masses,
        std_errors: se,
        within,
        fraction_within,
    })
}

/// Shortest decimal form that reads back to the same binary64 value is not
/// stable across formatters, so numbers are written with 17 significant
/// digits in scientific notation.
pub fn format_number(x: f64) -> String {
    format!("{x:.16e}")
}

fn csv_err(e: csv::Error) -> Error {
    Error::NumericalFailure(format!("csv output failed: {e}"))
}

/// Writes `t, b_true, b_hat, err` rows of one cell.
pub fn write_cell_csv<W: Write>(out: W, cell: &CellResult) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["t", "b_true", "b_hat", "err"]).map_err(csv_err)?;
    for i in 0..cell.times.len() {
        w.write_record([
            format_number(cell.times[i]),
            format_number(cell.b_true[i]),
            format_number(cell.b_hat[i]),
            format_number(cell.report.per_knot_error[i]),
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::NumericalFailure(e.to_string()))
}

/// Writes the one-line-per-cell summary.
pub fn write_summary_csv<W: Write>(out: W, cells: &[CellResult]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["case", "method", "h", "M", "sigma", "max_abs_err", "runtime_seconds"])
        .map_err(csv_err)?;
    for c in cells {
        w.write_record([
            c.case.clone(),
            c.method.name().to_string(),
            format_number(c.h),
            c.samples.map(|m| m.to_string()).unwrap_or_default(),
            format_number(c.report.sigma),
            format_number(c.report.max_abs_error),
            c.runtime_seconds.map(format_number).unwrap_or_default(),
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::NumericalFailure(e.to_string()))
}
