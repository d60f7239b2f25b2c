//! Reproduction drivers for the device phenomenology: bias traces, gate
//! maps, frequency sweeps, plateau metrology, asymmetry studies and
//! parameter fitting. Every result embeds the configuration snapshot and
//! code version it was produced with; identical snapshots reproduce
//! bit-identical currents on one platform.

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::config::SimConfig;
use crate::constants::ELEMENTARY_CHARGE;
use crate::dynamics::{periodic_steady_state, static_current, StaticGates};
use crate::fit::{
    apply_vector, extract_vector, nelder_mead, FitError, FitParameter, NelderMeadOptions,
};
use crate::params::validate_params;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("column `{0}` missing from measured-data header")]
    MissingColumn(&'static str),
    #[error("no trace points inside the window [{lo:.4e}, {hi:.4e}] V")]
    EmptyWindow { lo: f64, hi: f64 },
    #[error("trace and window produced no usable (finite) currents")]
    NoUsablePoints,
}

/// Per-point solver diagnostics of a sweep.
#[derive(Debug, Clone, Default, Serialize)]
pub struct PointDiagnostics {
    pub converged: bool,
    pub error: Option<String>,
    pub junction_mismatch_a: f64,
    pub power_iterations: u32,
    pub boundary_occupancy: f64,
    pub propagator_fallback: bool,
}

/// A one-dimensional current sweep. `values` are in SI units of the swept
/// variable; failed points carry NaN current and the error text in their
/// diagnostics.
#[derive(Debug, Clone, Serialize)]
pub struct TraceResult {
    pub variable: String,
    pub values: Vec<f64>,
    pub currents: Vec<f64>,
    pub diagnostics: Vec<PointDiagnostics>,
    pub config: Option<SimConfig>,
    pub code_version: String,
}

impl TraceResult {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// A two-dimensional current map, row-major over (y, x).
#[derive(Debug, Clone, Serialize)]
pub struct MapResult {
    pub x_name: String,
    pub y_name: String,
    pub x_values: Vec<f64>,
    pub y_values: Vec<f64>,
    /// currents[y][x], amperes.
    pub currents: Vec<Vec<f64>>,
    pub diagnostics: Vec<Vec<PointDiagnostics>>,
    pub config: SimConfig,
    pub code_version: String,
}

fn solve_point(cfg: &SimConfig) -> (f64, PointDiagnostics) {
    let p = cfg.device_params();
    let d = cfg.drive_config();
    match periodic_steady_state(&p, &d) {
        Ok(sol) => (
            sol.current(),
            PointDiagnostics {
                converged: true,
                error: None,
                junction_mismatch_a: sol.junction_mismatch(),
                power_iterations: sol.diagnostics.power_iterations,
                boundary_occupancy: sol.diagnostics.boundary_occupancy,
                propagator_fallback: sol.diagnostics.propagator_fallback,
            },
        ),
        Err(e) => (
            f64::NAN,
            PointDiagnostics {
                converged: false,
                error: Some(e.to_string()),
                ..Default::default()
            },
        ),
    }
}

/// Pumped dc current versus source-drain bias (one point per grid value,
/// solved independently and in parallel).
pub fn bias_trace(cfg: &SimConfig, v_sd_grid: &[f64]) -> TraceResult {
    let results: Vec<(f64, PointDiagnostics)> = v_sd_grid
        .par_iter()
        .map(|&v_sd| {
            let mut point_cfg = cfg.clone();
            point_cfg.drive.v_sd_mv = v_sd * 1e3;
            solve_point(&point_cfg)
        })
        .collect();
    let (currents, diagnostics) = results.into_iter().unzip();
    TraceResult {
        variable: "v_sd".into(),
        values: v_sd_grid.to_vec(),
        currents,
        diagnostics,
        config: Some(cfg.clone()),
        code_version: crate::VERSION.into(),
    }
}

/// Pumped current over the source-drain bias x plunger voltage plane.
pub fn map_bias_plunger(cfg: &SimConfig, v_sd_grid: &[f64], v_pl_grid: &[f64]) -> MapResult {
    let rows: Vec<Vec<(f64, PointDiagnostics)>> = v_pl_grid
        .par_iter()
        .map(|&v_pl| {
            v_sd_grid
                .iter()
                .map(|&v_sd| {
                    let mut point_cfg = cfg.clone();
                    point_cfg.drive.v_pl_mv = v_pl * 1e3;
                    point_cfg.drive.v_sd_mv = v_sd * 1e3;
                    solve_point(&point_cfg)
                })
                .collect()
        })
        .collect();
    let mut currents = Vec::with_capacity(rows.len());
    let mut diagnostics = Vec::with_capacity(rows.len());
    for row in rows {
        let (c, d): (Vec<f64>, Vec<PointDiagnostics>) = row.into_iter().unzip();
        currents.push(c);
        diagnostics.push(d);
    }
    MapResult {
        x_name: "v_sd".into(),
        y_name: "v_pl".into(),
        x_values: v_sd_grid.to_vec(),
        y_values: v_pl_grid.to_vec(),
        currents,
        diagnostics,
        config: cfg.clone(),
        code_version: crate::VERSION.into(),
    }
}

/// Static (no-rf) current over the barrier-gate plane, the Coulomb
/// oscillation map.
pub fn map_barriers_static(cfg: &SimConfig, v_bl_grid: &[f64], v_br_grid: &[f64]) -> MapResult {
    let p = cfg.device_params();
    let drive = cfg.drive_config();
    let rows: Vec<Vec<(f64, PointDiagnostics)>> = v_br_grid
        .par_iter()
        .map(|&v_br| {
            v_bl_grid
                .iter()
                .map(|&v_bl| {
                    let gates = StaticGates {
                        v_top: drive.v_top,
                        v_pl: drive.v_pl,
                        v_bl,
                        v_br,
                    };
                    match static_current(&p, &gates, drive.v_sd) {
                        Ok(i) => (
                            i,
                            PointDiagnostics {
                                converged: true,
                                ..Default::default()
                            },
                        ),
                        Err(e) => (
                            f64::NAN,
                            PointDiagnostics {
                                converged: false,
                                error: Some(e.to_string()),
                                ..Default::default()
                            },
                        ),
                    }
                })
                .collect()
        })
        .collect();
    let mut currents = Vec::with_capacity(rows.len());
    let mut diagnostics = Vec::with_capacity(rows.len());
    for row in rows {
        let (c, d): (Vec<f64>, Vec<PointDiagnostics>) = row.into_iter().unzip();
        currents.push(c);
        diagnostics.push(d);
    }
    MapResult {
        x_name: "v_bl".into(),
        y_name: "v_br".into(),
        x_values: v_bl_grid.to_vec(),
        y_values: v_br_grid.to_vec(),
        currents,
        diagnostics,
        config: cfg.clone(),
        code_version: crate::VERSION.into(),
    }
}

/// Plateau metrics of a current trace inside a bias window.
#[derive(Debug, Clone, Serialize)]
pub struct PlateauStats {
    pub target_n: i32,
    /// Bias window (inclusive), volts.
    pub window: (f64, f64),
    /// Arithmetic mean of the window currents, amperes.
    pub mean_current: f64,
    /// Max |I - target_n e f_p| over the window, amperes.
    pub max_abs_deviation: f64,
    /// Bias of minimum smoothed |dI/dV| inside the window, volts.
    pub low_gradient_point: f64,
}

/// Compute plateau statistics from parallel value/current arrays.
///
/// The gradient is a central finite difference on the sampled grid with
/// 3-point smoothing; failed (NaN) points are excluded from the mean and
/// deviation and never win the low-gradient search.
pub fn plateau_stats(
    values: &[f64],
    currents: &[f64],
    target_n: i32,
    f_p: f64,
    window: (f64, f64),
) -> Result<PlateauStats, ExperimentError> {
    assert_eq!(values.len(), currents.len());
    let (lo, hi) = window;
    let in_window: Vec<usize> = (0..values.len())
        .filter(|&i| values[i] >= lo && values[i] <= hi)
        .collect();
    if in_window.is_empty() {
        return Err(ExperimentError::EmptyWindow { lo, hi });
    }

    let target = target_n as f64 * ELEMENTARY_CHARGE * f_p;
    let usable: Vec<usize> = in_window
        .iter()
        .copied()
        .filter(|&i| currents[i].is_finite())
        .collect();
    if usable.is_empty() {
        return Err(ExperimentError::NoUsablePoints);
    }
    let mean_current = usable.iter().map(|&i| currents[i]).sum::<f64>() / usable.len() as f64;
    let max_abs_deviation = usable
        .iter()
        .map(|&i| (currents[i] - target).abs())
        .fold(0.0, f64::max);

    // |dI/dV| on the full trace, then a 3-point moving average.
    let n = values.len();
    let gradient: Vec<f64> = (0..n)
        .map(|i| {
            let (a, b) = if i == 0 {
                (i, i + 1)
            } else if i == n - 1 {
                (i - 1, i)
            } else {
                (i - 1, i + 1)
            };
            if b >= n || values[b] == values[a] {
                return f64::INFINITY;
            }
            ((currents[b] - currents[a]) / (values[b] - values[a])).abs()
        })
        .collect();
    let smoothed: Vec<f64> = (0..n)
        .map(|i| {
            let lo_i = i.saturating_sub(1);
            let hi_i = (i + 1).min(n - 1);
            let mut acc = 0.0;
            let mut count = 0.0;
            for g in &gradient[lo_i..=hi_i] {
                if g.is_finite() {
                    acc += g;
                    count += 1.0;
                } else {
                    return f64::INFINITY;
                }
            }
            acc / count
        })
        .collect();

    let low_gradient_point = usable
        .iter()
        .copied()
        .min_by(|&a, &b| smoothed[a].total_cmp(&smoothed[b]))
        .map(|i| values[i])
        .unwrap();

    Ok(PlateauStats {
        target_n,
        window,
        mean_current,
        max_abs_deviation,
        low_gradient_point,
    })
}

/// Plateau metrics of a [`TraceResult`] (drive frequency taken from its
/// config snapshot unless given explicitly via [`plateau_stats`]).
pub fn plateau_stats_of_trace(
    trace: &TraceResult,
    target_n: i32,
    f_p: f64,
    window: (f64, f64),
) -> Result<PlateauStats, ExperimentError> {
    plateau_stats(&trace.values, &trace.currents, target_n, f_p, window)
}

/// Plateau current versus drive frequency.
#[derive(Debug, Clone, Serialize)]
pub struct FrequencySweep {
    /// Drive frequencies, hertz.
    pub frequencies: Vec<f64>,
    /// Plateau statistics (target n = 1) per frequency.
    pub stats: Vec<PlateauStats>,
    /// (mean - e f)/ (e f) per frequency.
    pub relative_deviations: Vec<f64>,
    /// True when |relative deviation| never improves as frequency grows.
    pub droop_monotone_non_improving: bool,
    pub config: SimConfig,
    pub code_version: String,
}

/// Sweep the drive frequency and measure the n = 1 plateau inside the given
/// bias window (`points` bias samples per frequency).
pub fn frequency_sweep(
    cfg: &SimConfig,
    frequencies: &[f64],
    window: (f64, f64),
    points: usize,
) -> Result<FrequencySweep, ExperimentError> {
    let grid: Vec<f64> = (0..points)
        .map(|k| window.0 + (window.1 - window.0) * k as f64 / (points - 1).max(1) as f64)
        .collect();
    let mut stats = Vec::with_capacity(frequencies.len());
    let mut relative_deviations = Vec::with_capacity(frequencies.len());
    for &f in frequencies {
        let mut f_cfg = cfg.clone();
        f_cfg.drive.f_p_mhz = f / 1e6;
        let trace = bias_trace(&f_cfg, &grid);
        let st = plateau_stats(&trace.values, &trace.currents, 1, f, window)?;
        let ideal = ELEMENTARY_CHARGE * f;
        relative_deviations.push((st.mean_current - ideal) / ideal);
        stats.push(st);
    }
    let droop_monotone_non_improving = relative_deviations
        .windows(2)
        .all(|w| w[1].abs() + 1e-12 >= w[0].abs());
    Ok(FrequencySweep {
        frequencies: frequencies.to_vec(),
        stats,
        relative_deviations,
        droop_monotone_non_improving,
        config: cfg.clone(),
        code_version: crate::VERSION.into(),
    })
}

/// Which knob an asymmetry study turns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum AsymmetryKnob {
    /// Scale amp_bl by the knob value (amp_bl / amp_br ratio).
    AmplitudeRatio,
    /// Scale c_l by the knob value (c_l / c_r ratio).
    LeadCapacitanceRatio,
}

/// Trace family produced by scanning an asymmetry knob.
#[derive(Debug, Clone, Serialize)]
pub struct AsymmetryStudy {
    pub knob: AsymmetryKnob,
    pub knob_values: Vec<f64>,
    /// Pumped current at v_sd = 0 per knob value, amperes.
    pub zero_bias_currents: Vec<f64>,
    /// Bias where |I| first crosses e f_p / 2 on the trace grid (linear
    /// interpolation), NaN when the grid does not cross it.
    pub edge_biases: Vec<f64>,
    pub traces: Vec<TraceResult>,
    pub code_version: String,
}

fn apply_knob(cfg: &SimConfig, knob: AsymmetryKnob, value: f64) -> SimConfig {
    let mut out = cfg.clone();
    match knob {
        AsymmetryKnob::AmplitudeRatio => out.drive.amp_bl_mv = value * cfg.drive.amp_br_mv,
        AsymmetryKnob::LeadCapacitanceRatio => out.device.c_l_af = value * cfg.device.c_r_af,
    }
    out
}

/// Scan an asymmetry knob: for each value, solve the zero-bias point and a
/// bias trace over `v_sd_grid` (which may be empty when only the zero-bias
/// currents are of interest).
pub fn asymmetry_study(
    cfg: &SimConfig,
    knob: AsymmetryKnob,
    knob_values: &[f64],
    v_sd_grid: &[f64],
) -> AsymmetryStudy {
    let ef = ELEMENTARY_CHARGE * cfg.drive.f_p_mhz * 1e6;
    let per_value: Vec<(f64, f64, TraceResult)> = knob_values
        .par_iter()
        .map(|&value| {
            let knob_cfg = apply_knob(cfg, knob, value);
            let mut zero_cfg = knob_cfg.clone();
            zero_cfg.drive.v_sd_mv = 0.0;
            let (i_zero, _) = solve_point(&zero_cfg);
            let trace = if v_sd_grid.is_empty() {
                TraceResult {
                    variable: "v_sd".into(),
                    values: Vec::new(),
                    currents: Vec::new(),
                    diagnostics: Vec::new(),
                    config: Some(knob_cfg.clone()),
                    code_version: crate::VERSION.into(),
                }
            } else {
                // Points solved sequentially here; parallelism lives at the
                // knob level.
                let results: Vec<(f64, PointDiagnostics)> = v_sd_grid
                    .iter()
                    .map(|&v_sd| {
                        let mut point_cfg = knob_cfg.clone();
                        point_cfg.drive.v_sd_mv = v_sd * 1e3;
                        solve_point(&point_cfg)
                    })
                    .collect();
                let (currents, diagnostics) = results.into_iter().unzip();
                TraceResult {
                    variable: "v_sd".into(),
                    values: v_sd_grid.to_vec(),
                    currents,
                    diagnostics,
                    config: Some(knob_cfg.clone()),
                    code_version: crate::VERSION.into(),
                }
            };
            let edge = first_half_quantum_crossing(&trace, ef);
            (i_zero, edge, trace)
        })
        .collect();

    let mut zero_bias_currents = Vec::with_capacity(per_value.len());
    let mut edge_biases = Vec::with_capacity(per_value.len());
    let mut traces = Vec::with_capacity(per_value.len());
    for (i_zero, edge, trace) in per_value {
        zero_bias_currents.push(i_zero);
        edge_biases.push(edge);
        traces.push(trace);
    }
    AsymmetryStudy {
        knob,
        knob_values: knob_values.to_vec(),
        zero_bias_currents,
        edge_biases,
        traces,
        code_version: crate::VERSION.into(),
    }
}

fn first_half_quantum_crossing(trace: &TraceResult, ef: f64) -> f64 {
    let half = 0.5 * ef;
    for w in 0..trace.values.len().saturating_sub(1) {
        let (i0, i1) = (trace.currents[w].abs(), trace.currents[w + 1].abs());
        if i0.is_finite() && i1.is_finite() && i0 < half && i1 >= half {
            let frac = (half - i0) / (i1 - i0);
            return trace.values[w] + frac * (trace.values[w + 1] - trace.values[w]);
        }
    }
    f64::NAN
}

/// Outcome of a parameter fit.
#[derive(Debug, Clone, Serialize)]
pub struct FitResult {
    pub best: SimConfig,
    /// Mean squared current residual at the optimum, A^2.
    pub residual: f64,
    /// Best residual after each simplex iteration.
    pub history: Vec<f64>,
    pub converged: bool,
    pub evaluations: usize,
    pub free: Vec<FitParameter>,
}

/// Fit the free parameter subset to a measured trace by simplex descent on
/// the unweighted mean squared current residual (amperes squared).
///
/// Failed solver points poison the vertex with an infinite objective, which
/// steers the simplex back into the solvable region. On hitting the
/// evaluation budget the best-so-far configuration is returned with
/// `converged = false`.
pub fn fit_parameters(
    measured: &TraceResult,
    free: &[FitParameter],
    initial: &SimConfig,
    opts: &NelderMeadOptions,
) -> Result<FitResult, FitError> {
    if measured.len() < 10 {
        return Err(FitError::TooFewPoints {
            min: 10,
            got: measured.len(),
        });
    }
    if free.is_empty() {
        return Err(FitError::NoFreeParameters);
    }
    let report = validate_params(&initial.device_params(), &initial.drive_config());
    if !report.is_valid() {
        return Err(FitError::InvalidInitial(report.to_string()));
    }

    let objective = |x: &[f64]| -> f64 {
        let cfg = apply_vector(initial, free, x);
        let sim = bias_trace(&cfg, &measured.values);
        let mut sum = 0.0;
        for (i_sim, i_meas) in sim.currents.iter().zip(&measured.currents) {
            if !i_sim.is_finite() {
                return f64::INFINITY;
            }
            let r = i_sim - i_meas;
            sum += r * r;
        }
        sum / measured.len() as f64
    };

    let x0 = extract_vector(initial, free);
    let nm = nelder_mead(objective, &x0, opts);
    Ok(FitResult {
        best: apply_vector(initial, free, &nm.x_min),
        residual: nm.f_min,
        history: nm.history,
        converged: nm.converged,
        evaluations: nm.evaluations,
        free: free.to_vec(),
    })
}

/// Read a measured trace from CSV with header columns `v_sd_mV` and
/// `current_pA`; any additional columns are ignored.
pub fn load_measured_csv(path: impl AsRef<std::path::Path>) -> Result<TraceResult, ExperimentError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| ExperimentError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_measured_csv(&text)
}

/// Parse measured-trace CSV text (see [`load_measured_csv`]).
pub fn parse_measured_csv(text: &str) -> Result<TraceResult, ExperimentError> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = reader.headers()?.clone();
    let col = |name: &'static str| -> Result<usize, ExperimentError> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or(ExperimentError::MissingColumn(name))
    };
    let v_col = col("v_sd_mV")?;
    let i_col = col("current_pA")?;
    let mut values = Vec::new();
    let mut currents = Vec::new();
    for record in reader.records() {
        let record = record?;
        let v: f64 = record
            .get(v_col)
            .and_then(|s| s.parse().ok())
            .unwrap_or(f64::NAN);
        let i: f64 = record
            .get(i_col)
            .and_then(|s| s.parse().ok())
            .unwrap_or(f64::NAN);
        values.push(v * 1e-3);
        currents.push(i * 1e-12);
    }
    let n = values.len();
    Ok(TraceResult {
        variable: "v_sd".into(),
        values,
        currents,
        diagnostics: vec![PointDiagnostics::default(); n],
        config: None,
        code_version: crate::VERSION.into(),
    })
}
