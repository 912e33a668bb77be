//! Run configuration: a TOML document, checked in full before anything runs.
//!
//! ```toml
//! [density]
//! kind = "daniels"        # exponential | linear_boundary | daniels | tabulated
//! alpha = 1.0
//! beta = 0.5
//! gamma = 0.5
//!
//! [method]
//! name = "vie"            # plmc | vie for `inverse`, mc | vie for `direct`
//! scheme = "euler"
//! h = 0.01
//! t_max = 2.0             # or `steps`
//!
//! [output]
//! path = "boundary.csv"
//! ```
//!
//! `direct` reads a `[boundary]` table instead of `[density]`, `limits` takes
//! either one, and `bench` reads an optional `[bench]` table.

use std::fs::File;
use std::path::{Path, PathBuf};

use ifpt_core::bench::CellSettings;
use ifpt_core::boundaries::{
    Boundary, DanielsBoundary, LinearBoundary, OscillatingBoundary, PeskirGBoundary, PiecewiseLinearBoundary,
};
use ifpt_core::densities::{classify_small_time, FptDensity, SmallTimeClass, TabulatedDensity};
use ifpt_core::numerics::{steps_for_horizon, uniform_grid, DEFAULT_ROOT_TOL};
use ifpt_core::plmc::{PlmcConfig, Startup};
use ifpt_core::vie::{Scheme, VieConfig};
use serde::Deserialize;
use thiserror::Error;

pub const DEFAULT_VIE_H: f64 = 0.01;
pub const DEFAULT_PLMC_H: f64 = 0.2;
pub const DEFAULT_MC_SAMPLES: usize = 10_000;
pub const DEFAULT_CONFIDENCE: f64 = 0.95;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {message}")]
    Read { path: PathBuf, message: String },
    #[error("parse error: {0}")]
    Parse(String),
    #[error("invalid configuration:\n  - {}", .0.join("\n  - "))]
    Invalid(Vec<String>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Inverse,
    Direct,
    Bench,
    Limits,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct Document {
    density: Option<DensitySpec>,
    boundary: Option<BoundarySpec>,
    method: Option<MethodSpec>,
    output: Option<OutputSpec>,
    bench: Option<BenchSpec>,
}

#[derive(Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
enum DensitySpec {
    Exponential {
        lambda: f64,
    },
    LinearBoundary {
        alpha: f64,
        beta: f64,
        #[serde(default)]
        x0: f64,
        #[serde(default)]
        t0: f64,
    },
    Daniels {
        alpha: f64,
        beta: f64,
        gamma: f64,
    },
    Tabulated {
        path: PathBuf,
    },
}

#[derive(Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
enum BoundarySpec {
    Linear { alpha: f64, beta: f64 },
    Daniels { alpha: f64, beta: f64, gamma: f64 },
    Oscillating { alpha: f64, beta: f64, gamma: f64 },
    PiecewiseLinear { times: Vec<f64>, levels: Vec<f64> },
    PeskirG { c: f64, delta_c: Option<f64> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
enum MethodName {
    Plmc,
    Vie,
    Mc,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(rename_all = "snake_case")]
enum SchemeName {
    Euler,
    Trapezoid,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(rename_all = "snake_case")]
enum StartupName {
    Standard,
    PeskirG,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct MethodSpec {
    name: MethodName,
    scheme: Option<SchemeName>,
    h: Option<f64>,
    steps: Option<usize>,
    t_max: Option<f64>,
    mc_samples: Option<usize>,
    seed: Option<u64>,
    confidence: Option<f64>,
    root_tol: Option<f64>,
    b0: Option<f64>,
    startup: Option<StartupName>,
    flux_correction_knots: Option<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct OutputSpec {
    path: PathBuf,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct BenchSpec {
    suite: Option<String>,
    plmc_h: Option<f64>,
    plmc_samples: Option<usize>,
    vie_h: Option<f64>,
    seed: Option<u64>,
    #[serde(default)]
    record_runtime: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub enum InverseSolver {
    Plmc(PlmcConfig),
    Vie(VieConfig),
}

#[derive(Debug, Clone, PartialEq)]
pub enum DirectMethod {
    MonteCarlo { samples: usize, seed: u64 },
    Vie,
}

#[derive(Debug, Clone, PartialEq)]
pub enum LimitsTarget {
    Density(FptDensity),
    Boundary(Boundary),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Task {
    Inverse { density: FptDensity, solver: InverseSolver },
    Direct { boundary: Boundary, grid: Vec<f64>, method: DirectMethod },
    Bench { settings: CellSettings, record_runtime: bool },
    Limits(LimitsTarget),
}

/// A validated run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub task: Task,
    /// Output file, or directory for `bench`. Not used by `limits`.
    pub output: Option<PathBuf>,
}

/// Command-line values that take precedence over the document.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub suite: Option<String>,
}

/// Reads and validates the configuration file at `path`. Relative paths
/// inside it are taken relative to its directory.
pub fn load_config(path: &Path, command: Command, overrides: &Overrides) -> Result<RunConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Read {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    let base = path.parent().unwrap_or(Path::new("."));
    parse_config(&text, command, base, overrides)
}

/// Parses `text` and checks every field, reporting all violations at once.
pub fn parse_config(text: &str, command: Command, base: &Path, overrides: &Overrides) -> Result<RunConfig, ConfigError> {
    let doc: Document = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
    let mut v = Violations::default();
    let task = match command {
        Command::Inverse => inverse_task(&doc, base, overrides, &mut v),
        Command::Direct => direct_task(&doc, overrides, &mut v),
        Command::Bench => bench_task(&doc, overrides, &mut v),
        Command::Limits => limits_task(&doc, base, &mut v),
    };
    let output = overrides.out.clone().or_else(|| doc.output.as_ref().map(|o| o.path.clone()));
    if command != Command::Limits && output.is_none() {
        v.push("an output path is required ([output] path or --out)");
    }
    match task {
        Some(task) if v.0.is_empty() => Ok(RunConfig { task, output }),
        _ => Err(ConfigError::Invalid(v.0)),
    }
}

#[derive(Default)]
struct Violations(Vec<String>);

impl Violations {
    fn push(&mut self, msg: impl Into<String>) {
        self.0.push(msg.into());
    }

    fn check<T>(&mut self, section: &str, r: ifpt_core::Result<T>) -> Option<T> {
        r.map_err(|e| {
            let msg = match e.root_cause() {
                ifpt_core::Error::Config(m) => m.clone(),
                other => other.to_string(),
            };
            self.push(format!("[{section}] {msg}"))
        })
        .ok()
    }
}

fn build_density(spec: &DensitySpec, base: &Path, v: &mut Violations) -> Option<FptDensity> {
    let r = match spec {
        DensitySpec::Exponential { lambda } => FptDensity::exponential(*lambda),
        DensitySpec::LinearBoundary { alpha, beta, x0, t0 } => FptDensity::linear_boundary_from(*alpha, *beta, *x0, *t0),
        DensitySpec::Daniels { alpha, beta, gamma } => FptDensity::daniels(*alpha, *beta, *gamma),
        DensitySpec::Tabulated { path } => {
            let full = base.join(path);
            match File::open(&full) {
                Ok(f) => TabulatedDensity::from_csv_reader(f).map(FptDensity::Tabulated),
                Err(e) => {
                    v.push(format!("[density] cannot open {}: {e}", full.display()));
                    return None;
                }
            }
        }
    };
    v.check("density", r)
}

fn build_boundary(spec: &BoundarySpec, v: &mut Violations) -> Option<Boundary> {
    let r = match spec {
        BoundarySpec::Linear { alpha, beta } => LinearBoundary::new(*alpha, *beta).map(Boundary::Linear),
        BoundarySpec::Daniels { alpha, beta, gamma } => DanielsBoundary::new(*alpha, *beta, *gamma).map(Boundary::Daniels),
        BoundarySpec::Oscillating { alpha, beta, gamma } => {
            OscillatingBoundary::new(*alpha, *beta, *gamma).map(Boundary::Oscillating)
        }
        BoundarySpec::PiecewiseLinear { times, levels } => {
            PiecewiseLinearBoundary::new(times.clone(), levels.clone()).map(Boundary::PiecewiseLinear)
        }
        BoundarySpec::PeskirG { c, delta_c } => match delta_c {
            Some(dc) => PeskirGBoundary::with_domain_end(*c, *dc),
            None => PeskirGBoundary::new(*c),
        }
        .map(Boundary::PeskirG),
    };
    v.check("boundary", r)
}

/// Step count from `steps` or `t_max`; exactly one must be given.
fn step_count(m: &MethodSpec, h: f64, v: &mut Violations) -> Option<usize> {
    match (m.steps, m.t_max) {
        (Some(_), Some(_)) => {
            v.push("[method] give either steps or t_max, not both");
            None
        }
        (None, None) => {
            v.push("[method] steps or t_max is required");
            None
        }
        (Some(0), None) => {
            v.push("[method] steps must be at least 1");
            None
        }
        (Some(n), None) => Some(n),
        (None, Some(t)) => {
            if !(h > 0.0) {
                return None;
            }
            v.check("method", steps_for_horizon(h, t))
        }
    }
}

fn reject_fields(method: &str, fields: &[(&str, bool)], v: &mut Violations) {
    for (name, present) in fields {
        if *present {
            v.push(format!("[method] {name} does not apply to method {method}"));
        }
    }
}

fn inverse_task(doc: &Document, base: &Path, ov: &Overrides, v: &mut Violations) -> Option<Task> {
    if doc.boundary.is_some() {
        v.push("inverse takes a [density] table, not [boundary]");
    }
    if doc.bench.is_some() {
        v.push("[bench] only applies to the bench command");
    }
    let density = match &doc.density {
        Some(spec) => build_density(spec, base, v),
        None => {
            v.push("inverse needs a [density] table");
            None
        }
    };
    let Some(m) = &doc.method else {
        v.push("inverse needs a [method] table");
        return None;
    };
    let root_tol = m.root_tol.unwrap_or(DEFAULT_ROOT_TOL);
    let solver = match m.name {
        MethodName::Plmc => {
            reject_fields("plmc",
                &[("scheme", m.scheme.is_some()), ("flux_correction_knots", m.flux_correction_knots.is_some())],
                v,
            );
            let h = m.h.unwrap_or(DEFAULT_PLMC_H);
            let n = step_count(m, h, v);
            let startup = match (m.startup, m.b0, density.as_ref().map(classify_small_time)) {
                (Some(StartupName::Standard), ..) => Startup::Standard,
                (Some(StartupName::PeskirG), ..) => Startup::PeskirG,
                (None, None, Some(SmallTimeClass::Finite { .. })) => Startup::PeskirG,
                (None, ..) => Startup::Standard,
            };
            let mut cfg = PlmcConfig::new(h, n.unwrap_or(0), m.mc_samples.unwrap_or(DEFAULT_MC_SAMPLES), m.b0);
            cfg.seed = ov.seed.or(m.seed).unwrap_or(0);
            cfg.confidence = m.confidence.unwrap_or(DEFAULT_CONFIDENCE);
            cfg.root_tol = root_tol;
            cfg.startup = startup;
            for msg in cfg.violations() {
                v.push(format!("[method] {msg}"));
            }
            if let Some(d) = &density {
                let horizon = cfg.n_steps as f64 * h;
                if horizon > d.horizon() * (1.0 + 1e-12) {
                    v.push(format!(
                        "[method] the density is only known up to t = {}, the run needs {horizon}",
                        d.horizon()
                    ));
                }
            }
            n.map(|_| InverseSolver::Plmc(cfg))
        }
        MethodName::Vie => {
            reject_fields("vie",
                &[
                    ("mc_samples", m.mc_samples.is_some()),
                    ("confidence", m.confidence.is_some()),
                    ("startup", m.startup.is_some()),
                    ("seed", m.seed.is_some()),
                ],
                v,
            );
            let h = m.h.unwrap_or(DEFAULT_VIE_H);
            let n = step_count(m, h, v);
            let scheme = match m.scheme.unwrap_or(SchemeName::Euler) {
                SchemeName::Euler => Scheme::Euler,
                SchemeName::Trapezoid => Scheme::Trapezoid,
            };
            let mut cfg = VieConfig::new(h, n.unwrap_or(0), scheme);
            cfg.b0 = m.b0;
            cfg.root_tol = root_tol;
            cfg.flux_correction_knots = m.flux_correction_knots.unwrap_or(0);
            match &density {
                Some(d) => {
                    for msg in cfg.violations(d) {
                        v.push(format!("[method] {msg}"));
                    }
                }
                None => {
                    if !(h > 0.0) || !h.is_finite() {
                        v.push(format!("[method] h must be positive, got {h}"));
                    }
                    if !(root_tol > 0.0) {
                        v.push(format!("[method] root_tol must be positive, got {root_tol}"));
                    }
                }
            }
            n.map(|_| InverseSolver::Vie(cfg))
        }
        MethodName::Mc => {
            v.push("[method] inverse supports plmc and vie");
            None
        }
    };
    Some(Task::Inverse {
        density: density?,
        solver: solver?,
    })
}

fn direct_task(doc: &Document, ov: &Overrides, v: &mut Violations) -> Option<Task> {
    if doc.density.is_some() {
        v.push("direct takes a [boundary] table, not [density]");
    }
    if doc.bench.is_some() {
        v.push("[bench] only applies to the bench command");
    }
    let boundary = match &doc.boundary {
        Some(spec) => build_boundary(spec, v),
        None => {
            v.push("direct needs a [boundary] table");
            None
        }
    };
    let Some(m) = &doc.method else {
        v.push("direct needs a [method] table");
        return None;
    };
    reject_fields("direct",
        &[
            ("scheme", m.scheme.is_some()),
            ("confidence", m.confidence.is_some()),
            ("root_tol", m.root_tol.is_some()),
            ("b0", m.b0.is_some()),
            ("startup", m.startup.is_some()),
            ("flux_correction_knots", m.flux_correction_knots.is_some()),
        ],
        v,
    );
    let h = m.h.unwrap_or(DEFAULT_VIE_H);
    if !(h > 0.0) || !h.is_finite() {
        v.push(format!("[method] h must be positive, got {h}"));
    }
    let n = step_count(m, h, v);
    let method = match m.name {
        MethodName::Mc => {
            let samples = m.mc_samples.unwrap_or(DEFAULT_MC_SAMPLES);
            if samples < ifpt_core::direct::MIN_MC_SAMPLES {
                v.push(format!(
                    "[method] mc_samples must be at least {}, got {samples}",
                    ifpt_core::direct::MIN_MC_SAMPLES
                ));
            }
            Some(DirectMethod::MonteCarlo {
                samples,
                seed: ov.seed.or(m.seed).unwrap_or(0),
            })
        }
        MethodName::Vie => {
            reject_fields("vie", &[("mc_samples", m.mc_samples.is_some()), ("seed", m.seed.is_some())], v);
            Some(DirectMethod::Vie)
        }
        MethodName::Plmc => {
            v.push("[method] direct supports mc and vie");
            None
        }
    };
    if let (Some(b), Some(n)) = (&boundary, n) {
        let t_end = n as f64 * h;
        if let Boundary::PiecewiseLinear(pl) = b {
            let last = *pl.times().last().unwrap();
            if t_end > last * (1.0 + 1e-12) {
                v.push(format!("[method] the boundary ends at t = {last}, the grid runs to {t_end}"));
            }
        }
        if !(b.initial_level() > 0.0) {
            v.push(format!("[boundary] the process starts at 0, so b(0+) must be positive, got {}", b.initial_level()));
        }
    }
    Some(Task::Direct {
        boundary: boundary?,
        grid: uniform_grid(h, n?),
        method: method?,
    })
}

fn bench_task(doc: &Document, ov: &Overrides, v: &mut Violations) -> Option<Task> {
    for (present, name) in [
        (doc.density.is_some(), "[density]"),
        (doc.boundary.is_some(), "[boundary]"),
        (doc.method.is_some(), "[method]"),
    ] {
        if present {
            v.push(format!("bench runs fixed cases; {name} is not accepted"));
        }
    }
    let empty = BenchSpec::default();
    let b = doc.bench.as_ref().unwrap_or(&empty);
    let suite = ov.suite.clone().or_else(|| b.suite.clone());
    match suite.as_deref() {
        Some("section7") => {}
        Some(other) => v.push(format!("unknown bench suite `{other}`; available: section7")),
        None => v.push("a bench suite is required (--suite section7)"),
    }
    let d = CellSettings::default();
    let settings = CellSettings {
        plmc_h: b.plmc_h.unwrap_or(d.plmc_h),
        plmc_samples: b.plmc_samples.unwrap_or(d.plmc_samples),
        vie_h: b.vie_h.unwrap_or(d.vie_h),
        seed: ov.seed.or(b.seed).unwrap_or(d.seed),
    };
    for (name, h) in [("plmc_h", settings.plmc_h), ("vie_h", settings.vie_h)] {
        if !(h > 0.0) {
            v.push(format!("[bench] {name} must be positive, got {h}"));
        } else if steps_for_horizon(h, ifpt_core::bench::SECTION7_HORIZON).is_err() {
            v.push(format!("[bench] {name} = {h} does not divide the horizon 2"));
        }
    }
    if settings.plmc_samples < 1000 {
        v.push(format!("[bench] plmc_samples must be at least 1000, got {}", settings.plmc_samples));
    }
    Some(Task::Bench {
        settings,
        record_runtime: b.record_runtime,
    })
}

fn limits_task(doc: &Document, base: &Path, v: &mut Violations) -> Option<Task> {
    if doc.method.is_some() || doc.bench.is_some() {
        v.push("limits takes only a [density] or a [boundary] table");
    }
    match (&doc.density, &doc.boundary) {
        (Some(d), None) => build_density(d, base, v).map(|d| Task::Limits(LimitsTarget::Density(d))),
        (None, Some(b)) => build_boundary(b, v).map(|b| Task::Limits(LimitsTarget::Boundary(b))),
        _ => {
            v.push("limits needs exactly one of [density] or [boundary]");
            None
        }
    }
}
