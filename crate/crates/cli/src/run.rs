//! Executes a validated [`RunConfig`] and writes its CSV output.

use std::fs;
use std::io::{self, Write};
use std::path::Path;

use ifpt_core::bench::{format_number, run_section7, write_cell_csv, write_summary_csv};
use ifpt_core::densities::{c_from_kappa, classify_boundary, classify_small_time, SmallTimeClass};
use ifpt_core::direct::{direct_fpt_mc, direct_fpt_vie};
use ifpt_core::plmc::plmc_solve;
use ifpt_core::vie::{vie_solve, VieDiagnostic};
use tempfile::NamedTempFile;
use thiserror::Error;

use crate::config::{DirectMethod, InverseSolver, LimitsTarget, RunConfig, Task};

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Numerical(#[from] ifpt_core::Error),
    #[error("cannot write {path}: {source}")]
    Io { path: String, source: io::Error },
}

/// What a run produced: the line for stdout and any notes for stderr.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Outcome {
    pub summary: String,
    pub notes: Vec<String>,
}

pub fn execute(cfg: &RunConfig) -> Result<Outcome, RunError> {
    match &cfg.task {
        Task::Inverse { density, solver } => {
            let out = cfg.output.as_deref().expect("validated");
            match solver {
                InverseSolver::Plmc(p) => {
                    let r = plmc_solve(density, p)?;
                    let t = r.boundary.times();
                    let c = r.boundary.levels();
                    let mut rows = Vec::with_capacity(r.slopes.len());
                    for n in 0..r.slopes.len() {
                        rows.push(vec![t[n + 1], c[n + 1], r.slopes[n], r.ci[n].0, r.ci[n].1, r.ess_per_step[n]]);
                    }
                    write_rows(out, &["t", "b_hat", "beta", "ci_lo", "ci_hi", "ess"], &rows)?;
                    let mut notes = r.notes.clone();
                    for (n, clipped) in r.ci_clipped.iter().enumerate() {
                        if *clipped {
                            notes.push(format!("confidence interval clipped at knot {}", n + 1));
                        }
                    }
                    if r.truncated {
                        notes.push(format!("target mass exhausted; stopped after {} knots", r.slopes.len()));
                    }
                    Ok(Outcome {
                        summary: format!("inverse plmc: {} knots written to {}", rows.len(), out.display()),
                        notes,
                    })
                }
                InverseSolver::Vie(v) => {
                    let r = vie_solve(density, v)?;
                    let rows: Vec<Vec<f64>> = r.grid.iter().zip(&r.b_star).map(|(t, b)| vec![*t, *b]).collect();
                    write_rows(out, &["t", "b_hat"], &rows)?;
                    let notes = r
                        .diagnostics
                        .iter()
                        .map(|d| match d {
                            VieDiagnostic::MultiRoot { knot, roots } => {
                                format!("knot {knot}: {roots} roots in the search bracket, took the nearest")
                            }
                            VieDiagnostic::FluxUnreliable { knot, relative_error } => {
                                format!("knot {knot}: flux relation off by {relative_error:.3e} (relative)")
                            }
                        })
                        .collect();
                    Ok(Outcome {
                        summary: format!("inverse vie: {} knots written to {}", rows.len(), out.display()),
                        notes,
                    })
                }
            }
        }
        Task::Direct { boundary, grid, method } => {
            let out = cfg.output.as_deref().expect("validated");
            let (name, header, rows) = match method {
                DirectMethod::MonteCarlo { samples, seed } => {
                    let r = direct_fpt_mc(boundary, grid, *samples, *seed)?;
                    let se = r.std_errors.unwrap_or_default();
                    let rows: Vec<Vec<f64>> = (0..grid.len()).map(|i| vec![grid[i], r.interval_masses[i], se[i]]).collect();
                    ("mc", vec!["t", "mass", "std_err"], rows)
                }
                DirectMethod::Vie => {
                    let r = direct_fpt_vie(boundary, grid)?;
                    let f = r.density_values.unwrap_or_default();
                    let rows: Vec<Vec<f64>> = (0..grid.len()).map(|i| vec![grid[i], f[i], r.interval_masses[i]]).collect();
                    ("vie", vec!["t", "f_hat", "mass"], rows)
                }
            };
            write_rows(out, &header, &rows)?;
            Ok(Outcome {
                summary: format!("direct {name}: {} rows written to {}", rows.len(), out.display()),
                notes: Vec::new(),
            })
        }
        Task::Bench { settings, record_runtime } => {
            let dir = cfg.output.as_deref().expect("validated");
            fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
            let cells = run_section7(settings, *record_runtime)?;
            let mut buf = Vec::new();
            write_summary_csv(&mut buf, &cells)?;
            write_atomic(&dir.join("summary.csv"), &buf)?;
            for cell in &cells {
                let mut buf = Vec::new();
                write_cell_csv(&mut buf, cell)?;
                write_atomic(&dir.join(format!("{}_{}.csv", cell.case, cell.method.name())), &buf)?;
            }
            Ok(Outcome {
                summary: format!("bench section7: {} cells written to {}", cells.len(), dir.display()),
                notes: Vec::new(),
            })
        }
        Task::Limits(target) => {
            let class = match target {
                LimitsTarget::Density(d) => classify_small_time(d),
                LimitsTarget::Boundary(b) => classify_boundary(b),
            };
            Ok(Outcome {
                summary: limits_line(class)?,
                notes: Vec::new(),
            })
        }
    }
}

/// `Zero`, `Infinite`, or `Finite, kappa=…, c=…` with the matching
/// upper-function constant.
pub fn limits_line(class: SmallTimeClass) -> Result<String, ifpt_core::Error> {
    Ok(match class {
        SmallTimeClass::Zero => "Zero".to_string(),
        SmallTimeClass::Infinite => "Infinite".to_string(),
        SmallTimeClass::Finite { kappa } => format!("Finite, kappa={kappa}, c={}", c_from_kappa(kappa)?),
    })
}

fn io_err(path: &Path, source: io::Error) -> RunError {
    RunError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn write_rows(path: &Path, header: &[&str], rows: &[Vec<f64>]) -> Result<(), RunError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_io = |e: csv::Error| io_err(path, io::Error::other(e));
    w.write_record(header).map_err(csv_io)?;
    for row in rows {
        w.write_record(row.iter().map(|x| format_number(*x))).map_err(csv_io)?;
    }
    let buf = w.into_inner().map_err(|e| io_err(path, e.into_error()))?;
    write_atomic(path, &buf)
}

/// Writes through a temporary file in the target directory so a failed run
/// never leaves a partial file behind.
fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), RunError> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = NamedTempFile::new_in(dir).map_err(|e| io_err(path, e))?;
    tmp.write_all(bytes).map_err(|e| io_err(path, e))?;
    tmp.persist(path).map_err(|e| io_err(path, e.error))?;
    Ok(())
}
