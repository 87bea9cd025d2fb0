//! The three experiment drivers. Each writes its result files plus a
//! `manifest.json` recording every parameter of the run, with fixed field
//! ordering and fixed number formatting so that identical configurations
//! produce byte-identical output.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::time::Instant;

use serde_json::{json, Value};

use ptlab_core::navier_stokes::{cavity_rhs, run_cavity_parareal_detailed, CavityConfig};
use ptlab_core::stability::{sweep, Scheme, StabilityGrid};
use ptlab_core::{
    propagate, speedup_bound, Method, PararealError, PararealOptions, PropagatorSpec,
    SliceDecomposition, StepError,
};

use crate::config::{steps_per_slice, ExperimentConfig, OutputFormat};
use crate::error::CliError;

/// Parameter-level failures from the core are configuration errors; all
/// other failures are computation errors.
fn from_parareal(e: PararealError) -> CliError {
    match e {
        PararealError::InvalidConfig(_) => CliError::Config(e.to_string()),
        other => CliError::Computation(other.to_string()),
    }
}

fn write_file(dir: &Path, name: &str, content: &str) -> Result<(), CliError> {
    fs::write(dir.join(name), content).map_err(|e| {
        CliError::Computation(format!("cannot write {}: {e}", dir.join(name).display()))
    })
}

fn write_manifest(dir: &Path, manifest: &Value) -> Result<(), CliError> {
    let mut text =
        serde_json::to_string_pretty(manifest).expect("manifest serialization cannot fail");
    text.push('\n');
    write_file(dir, "manifest.json", &text)
}

// ---------------------------------------------------------------------------
// Stability sweep
// ---------------------------------------------------------------------------

fn scheme_file_stem(scheme: Scheme) -> String {
    match scheme {
        Scheme::CoarseSerial => "coarse_serial".into(),
        Scheme::FineSerial => "fine_serial".into(),
        Scheme::Parareal(k) => format!("parareal_k{k}"),
    }
}

/// JSON document for one layer; non-finite values (overflow sentinels)
/// serialize as `null`.
fn layer_json(grid: &StabilityGrid, scheme: Scheme) -> String {
    let s = grid.scheme_index(scheme).expect("scheme present in grid");
    let table = |pick: fn((f64, f64)) -> f64| -> Vec<Vec<Value>> {
        (0..grid.re_samples.len())
            .map(|r| {
                (0..grid.im_samples.len())
                    .map(|i| json!(pick(grid.value(s, r, i))))
                    .collect()
            })
            .collect()
    };
    let doc = json!({
        "scheme": scheme.to_string(),
        "re_samples": grid.re_samples,
        "im_samples": grid.im_samples,
        "amplification": table(|v| v.0),
        "accuracy_error": table(|v| v.1),
    });
    let mut text = serde_json::to_string_pretty(&doc).expect("layer serialization cannot fail");
    text.push('\n');
    text
}

pub fn cmd_stability(config: &ExperimentConfig, out_dir: &Path) -> Result<(), CliError> {
    let s = &config.stability;
    let d = &config.decomposition;
    let decomp = SliceDecomposition::new(
        d.t_end,
        d.n_slices,
        s.coarse_steps_per_slice,
        s.fine_steps_per_slice,
    )
    .map_err(from_parareal)?;
    let grid = sweep(
        (s.re_min, s.re_max),
        (s.im_min, s.im_max),
        s.resolution,
        &s.iterations,
        &decomp,
    )
    .map_err(from_parareal)?;

    let format = config.format();
    let mut files = Vec::new();
    for &scheme in &grid.schemes {
        let name = format!("{}.{}", scheme_file_stem(scheme), format.extension());
        let content = match format {
            OutputFormat::Csv => grid
                .layer_to_csv(scheme)
                .expect("scheme present in its own grid"),
            OutputFormat::Json => layer_json(&grid, scheme),
        };
        write_file(out_dir, &name, &content)?;
        files.push(name);
    }

    write_manifest(
        out_dir,
        &json!({
            "experiment": "stability",
            "format": format.name(),
            "decomposition": {"t_end": d.t_end, "n_slices": d.n_slices},
            "stability": {
                "re_min": s.re_min,
                "re_max": s.re_max,
                "im_min": s.im_min,
                "im_max": s.im_max,
                "resolution": s.resolution,
                "iterations": s.iterations,
                "coarse_steps_per_slice": s.coarse_steps_per_slice,
                "fine_steps_per_slice": s.fine_steps_per_slice,
            },
            "files": files,
        }),
    )
}

// ---------------------------------------------------------------------------
// Cavity convergence study
// ---------------------------------------------------------------------------

/// A divergence of either propagator or of the serial reference marks the
/// case as unstable (recorded as a flagged row); any other failure is a
/// hard per-case error.
fn is_instability(e: &PararealError) -> bool {
    matches!(
        e,
        PararealError::Diverged { .. }
            | PararealError::ReferenceDiverged { .. }
            | PararealError::StepFailed {
                source: StepError::NonFiniteState,
                ..
            }
            | PararealError::ReferenceStepFailed {
                source: StepError::NonFiniteState,
                ..
            }
    )
}

struct CavityCase {
    nx: usize,
    nu: f64,
    dt_coarse: f64,
    core: CavityConfig,
    decomp: SliceDecomposition,
}

/// One convergence-history row: iteration index, error against the serial
/// fine reference (`None` for a flagged unstable case), instability flag.
struct HistoryRow {
    k: usize,
    error: Option<f64>,
    flagged_unstable: bool,
}

fn cavity_case_csv(case: &CavityCase, dt_fine: f64, rows: &[HistoryRow]) -> String {
    let mut out = String::from("nx,nu,dt_coarse,dt_fine,k,error,flagged_unstable\n");
    for row in rows {
        let error = match row.error {
            Some(e) => format!("{e:.16e}"),
            None => "NaN".into(),
        };
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            case.nx, case.nu, case.dt_coarse, dt_fine, row.k, error, row.flagged_unstable
        )
        .expect("writing to a string cannot fail");
    }
    out
}

fn cavity_case_json(case: &CavityCase, dt_fine: f64, rows: &[HistoryRow]) -> String {
    let rows: Vec<Value> = rows
        .iter()
        .map(|row| {
            json!({
                "k": row.k,
                "error": row.error,
                "flagged_unstable": row.flagged_unstable,
            })
        })
        .collect();
    let doc = json!({
        "nx": case.nx,
        "nu": case.nu,
        "dt_coarse": case.dt_coarse,
        "dt_fine": dt_fine,
        "rows": rows,
    });
    let mut text = serde_json::to_string_pretty(&doc).expect("case serialization cannot fail");
    text.push('\n');
    text
}

pub fn cmd_cavity(config: &ExperimentConfig, out_dir: &Path) -> Result<(), CliError> {
    let c = &config.cavity;
    let d = &config.decomposition;
    if c.nx.is_empty() || c.nu.is_empty() || c.dt_coarse.is_empty() {
        return Err(CliError::Config(
            "cavity parameter grids (nx, nu, dt_coarse) must be non-empty".into(),
        ));
    }
    if c.max_iter > d.n_slices {
        return Err(CliError::Config(format!(
            "max_iter ({}) exceeds the slice count ({})",
            c.max_iter, d.n_slices
        )));
    }
    let slice_len = d.slice_length();
    let fine_steps = steps_per_slice(c.dt_fine, slice_len, "fine")?;

    // Resolve and validate every case before running any: parameter
    // problems are configuration errors and abort the whole sweep.
    let mut cases = Vec::new();
    for &nx in &c.nx {
        for &nu in &c.nu {
            for &dt_coarse in &c.dt_coarse {
                let coarse_steps = steps_per_slice(dt_coarse, slice_len, "coarse")?;
                let core = CavityConfig::new(nx, nu)
                    .and_then(|cc| cc.with_lid_velocity(c.lid_velocity))
                    .and_then(|cc| cc.with_poisson_tol(c.poisson_tol))
                    .map_err(|e| CliError::Config(e.to_string()))?;
                let decomp = SliceDecomposition::new(d.t_end, d.n_slices, coarse_steps, fine_steps)
                    .map_err(|e| CliError::Config(e.to_string()))?;
                cases.push(CavityCase {
                    nx,
                    nu,
                    dt_coarse,
                    core,
                    decomp,
                });
            }
        }
    }

    let format = config.format();
    let options = PararealOptions::new(c.max_iter);
    let mut case_records = Vec::new();
    let mut recorded = 0usize;
    for case in &cases {
        let name = format!(
            "cavity_nx{}_nu{}_dtc{}.{}",
            case.nx,
            case.nu,
            case.dt_coarse,
            format.extension()
        );
        let result = run_cavity_parareal_detailed(&case.core, &case.decomp, &options);
        let (rows, outcome, detail) = match result {
            Ok(run) => {
                let mut rows = vec![HistoryRow {
                    k: 0,
                    error: Some(run.coarse_prediction_error),
                    flagged_unstable: false,
                }];
                rows.extend(run.run.errors.iter().enumerate().map(|(i, &e)| HistoryRow {
                    k: i + 1,
                    error: Some(e),
                    flagged_unstable: false,
                }));
                (rows, "completed", Value::Null)
            }
            Err(e) if is_instability(&e) => {
                let rows = vec![HistoryRow {
                    k: 0,
                    error: None,
                    flagged_unstable: true,
                }];
                (rows, "flagged_unstable", json!(e.to_string()))
            }
            Err(e) => {
                eprintln!(
                    "ptlab: cavity case nx={} nu={} dt_coarse={} failed: {e}",
                    case.nx, case.nu, case.dt_coarse
                );
                case_records.push(json!({
                    "nx": case.nx,
                    "nu": case.nu,
                    "dt_coarse": case.dt_coarse,
                    "file": Value::Null,
                    "outcome": "failed",
                    "detail": e.to_string(),
                }));
                continue;
            }
        };
        let content = match format {
            OutputFormat::Csv => cavity_case_csv(case, c.dt_fine, &rows),
            OutputFormat::Json => cavity_case_json(case, c.dt_fine, &rows),
        };
        write_file(out_dir, &name, &content)?;
        recorded += 1;
        case_records.push(json!({
            "nx": case.nx,
            "nu": case.nu,
            "dt_coarse": case.dt_coarse,
            "file": name,
            "outcome": outcome,
            "detail": detail,
        }));
    }

    write_manifest(
        out_dir,
        &json!({
            "experiment": "cavity",
            "format": format.name(),
            "decomposition": {"t_end": d.t_end, "n_slices": d.n_slices},
            "cavity": {
                "nx": c.nx,
                "nu": c.nu,
                "dt_coarse": c.dt_coarse,
                "dt_fine": c.dt_fine,
                "max_iter": c.max_iter,
                "lid_velocity": c.lid_velocity,
                "poisson_tol": c.poisson_tol,
            },
            "cases": case_records,
        }),
    )?;

    if recorded == 0 {
        return Err(CliError::Computation(
            "every cavity case failed; see diagnostics above".into(),
        ));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Speedup table
// ---------------------------------------------------------------------------

/// Times one fine and one coarse propagation of a single slice of the
/// first configured cavity case. Wall-clock seconds; not reproducible.
fn measure_slice_costs(config: &ExperimentConfig) -> Result<(f64, f64), CliError> {
    let c = &config.cavity;
    let d = &config.decomposition;
    let missing = |what: &str| CliError::Config(format!("cost measurement needs cavity.{what}"));
    let nx = *c.nx.first().ok_or_else(|| missing("nx"))?;
    let nu = *c.nu.first().ok_or_else(|| missing("nu"))?;
    let dt_coarse = *c.dt_coarse.first().ok_or_else(|| missing("dt_coarse"))?;
    let slice_len = d.slice_length();
    let fine_steps = steps_per_slice(c.dt_fine, slice_len, "fine")?;
    let coarse_steps = steps_per_slice(dt_coarse, slice_len, "coarse")?;
    let core = CavityConfig::new(nx, nu)
        .and_then(|cc| cc.with_lid_velocity(c.lid_velocity))
        .and_then(|cc| cc.with_poisson_tol(c.poisson_tol))
        .map_err(|e| CliError::Config(e.to_string()))?;
    let rhs = cavity_rhs(&core).map_err(|e| CliError::Config(e.to_string()))?;
    let u0 = rhs.initial_state();

    let time_one = |method: Method, dt: f64, steps: usize| -> Result<f64, CliError> {
        let spec = PropagatorSpec::new(method, dt, &rhs);
        let start = Instant::now();
        propagate(&spec, &u0, 0.0, slice_len, steps)
            .map_err(|e| CliError::Computation(format!("timed propagation failed: {e}")))?;
        Ok(start.elapsed().as_secs_f64())
    };
    let fine_seconds = time_one(Method::Rk3Explicit, c.dt_fine, fine_steps)?;
    let coarse_seconds = time_one(Method::ImexEuler, dt_coarse, coarse_steps)?;
    if coarse_seconds <= 0.0 {
        return Err(CliError::Computation(
            "coarse propagation finished below timer resolution; cannot form a cost ratio".into(),
        ));
    }
    Ok((fine_seconds, coarse_seconds))
}

pub fn cmd_speedup(config: &ExperimentConfig, out_dir: &Path) -> Result<(), CliError> {
    let s = &config.speedup;
    if s.n_slices.is_empty() || s.n_iter.is_empty() {
        return Err(CliError::Config(
            "speedup.n_slices and speedup.n_iter must be non-empty".into(),
        ));
    }
    for &ratio in &s.cost_ratios {
        if !(ratio > 0.0) || !ratio.is_finite() {
            return Err(CliError::Config(format!(
                "cost ratios must be positive and finite (got {ratio})"
            )));
        }
    }

    let mut ratios = s.cost_ratios.clone();
    let mut measured = Value::Null;
    if s.measure {
        let (fine_seconds, coarse_seconds) = measure_slice_costs(config)?;
        let ratio = fine_seconds / coarse_seconds;
        ratios.push(ratio);
        measured = json!({
            "cost_fine_seconds": fine_seconds,
            "cost_coarse_seconds": coarse_seconds,
            "cost_ratio": ratio,
            "note": "wall-clock measurement; varies between runs",
        });
    }
    if ratios.is_empty() {
        return Err(CliError::Config(
            "no cost inputs: supply speedup.cost_ratios or set speedup.measure = true".into(),
        ));
    }

    let format = config.format();
    let mut csv = String::from("n_slices,n_iter,cost_ratio,bound\n");
    let mut json_rows = Vec::new();
    for &n in &s.n_slices {
        for &k in &s.n_iter {
            for &ratio in &ratios {
                let bound = speedup_bound(n, k, ratio, 1.0).map_err(from_parareal)?;
                writeln!(csv, "{n},{k},{ratio},{bound:.16e}")
                    .expect("writing to a string cannot fail");
                json_rows.push(json!({
                    "n_slices": n,
                    "n_iter": k,
                    "cost_ratio": ratio,
                    "bound": bound,
                }));
            }
        }
    }

    let name = format!("speedup.{}", format.extension());
    let content = match format {
        OutputFormat::Csv => csv,
        OutputFormat::Json => {
            let mut text = serde_json::to_string_pretty(&json!({ "rows": json_rows }))
                .expect("table serialization cannot fail");
            text.push('\n');
            text
        }
    };
    write_file(out_dir, &name, &content)?;

    write_manifest(
        out_dir,
        &json!({
            "experiment": "speedup",
            "format": format.name(),
            "speedup": {
                "n_slices": s.n_slices,
                "n_iter": s.n_iter,
                "cost_ratios": s.cost_ratios,
                "measure": s.measure,
            },
            "measured": measured,
            "files": [name],
        }),
    )
}
