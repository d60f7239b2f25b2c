//! Master-equation evolution of the island occupation probabilities under
//! the periodic drive, periodic-steady-state solving with dc current
//! extraction, and the static (no-rf) stationary solver.

use thiserror::Error;

use crate::constants::ELEMENTARY_CHARGE;
use crate::electrostatics::InstantaneousBias;
use crate::linalg::{solve_dense, SingularSystem};
use crate::ode::{integrate, OdeFailure, OdeOptions, OdeStats};
use crate::params::{validate_params, DeviceParams, DriveConfig};
use crate::tunneling::{rates_from_bias, TransitionRates};

/// Truncated range of island excess-electron numbers, inclusive on both ends.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ChargeWindow {
    pub n_min: i32,
    pub n_max: i32,
}

impl ChargeWindow {
    pub fn new(n_min: i32, n_max: i32) -> Self {
        assert!(n_max > n_min, "charge window must hold at least two states");
        Self { n_min, n_max }
    }

    pub fn centered(center: i32, half_width: i32) -> Self {
        Self::new(center - half_width, center + half_width)
    }

    pub fn len(&self) -> usize {
        (self.n_max - self.n_min + 1) as usize
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, n: i32) -> bool {
        n >= self.n_min && n <= self.n_max
    }

    pub fn index_of(&self, n: i32) -> usize {
        debug_assert!(self.contains(n));
        (n - self.n_min) as usize
    }

    pub fn states(&self) -> impl Iterator<Item = i32> {
        self.n_min..=self.n_max
    }

    /// Grow the window by `step` states on each side.
    pub fn expanded(&self, step: i32) -> Self {
        Self::new(self.n_min - step, self.n_max + step)
    }
}

/// Occupation-probability vector over a charge window.
#[derive(Debug, Clone, PartialEq)]
pub struct ChargeStateSpace {
    pub window: ChargeWindow,
    pub probabilities: Vec<f64>,
}

impl ChargeStateSpace {
    pub fn new(window: ChargeWindow, probabilities: Vec<f64>) -> Self {
        assert_eq!(probabilities.len(), window.len());
        Self {
            window,
            probabilities,
        }
    }

    /// Uniform distribution over the window.
    pub fn uniform(window: ChargeWindow) -> Self {
        let p = 1.0 / window.len() as f64;
        Self::new(window, vec![p; window.len()])
    }

    pub fn probability(&self, n: i32) -> f64 {
        self.probabilities[self.window.index_of(n)]
    }

    /// Mean excess-electron number.
    pub fn mean_occupancy(&self) -> f64 {
        self.window
            .states()
            .zip(&self.probabilities)
            .map(|(n, p)| n as f64 * p)
            .sum()
    }

    /// Combined probability of the two edge states; the window is large
    /// enough when this stays below the boundary tolerance.
    pub fn boundary_occupancy(&self) -> f64 {
        self.probabilities[0] + self.probabilities[self.window.len() - 1]
    }
}

/// Static (no-rf) gate operating point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StaticGates {
    pub v_top: f64,
    pub v_pl: f64,
    pub v_bl: f64,
    pub v_br: f64,
}

impl StaticGates {
    /// The drive's time-averaged gate values (barrier means).
    pub fn from_drive(d: &DriveConfig) -> Self {
        Self {
            v_top: d.v_top,
            v_pl: d.v_pl,
            v_bl: d.mean_bl,
            v_br: d.mean_br,
        }
    }
}

#[derive(Debug, Error)]
pub enum DynamicsError {
    #[error("invalid parameters:\n{0}")]
    InvalidParams(String),
    #[error(transparent)]
    Integrator(#[from] OdeFailure),
    #[error("stationary solve failed: {0}")]
    Singular(#[from] SingularSystem),
    #[error(
        "periodic steady state not converged after {iterations} iterations \
         (last residual {residual:.3e})"
    )]
    NonConvergence { iterations: u32, residual: f64 },
    #[error(
        "charge window exhausted at [{n_min}, {n_max}] \
         (boundary occupancy {occupancy:.3e})"
    )]
    WindowExhausted {
        n_min: i32,
        n_max: i32,
        occupancy: f64,
    },
    #[error("probability normalization drifted by {drift:.3e} over one period")]
    NormalizationDrift { drift: f64 },
}

/// Solver knobs. The defaults implement the contract used throughout the
/// crate; tests override individual fields to probe grid/window robustness.
#[derive(Debug, Clone)]
pub struct SolveOptions {
    /// Fixed window override; `None` selects the window automatically.
    pub window: Option<ChargeWindow>,
    /// Number of output intervals for the sampled final period.
    pub grid_points: usize,
    pub rtol: f64,
    pub atol: f64,
    pub max_power_iterations: u32,
    /// L1 convergence threshold for the period map fixed point.
    pub residual_tol: f64,
    /// Maximum tolerated edge-state occupancy before the window expands.
    pub boundary_tol: f64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            window: None,
            grid_points: 1024,
            rtol: 1e-10,
            atol: 1e-14,
            max_power_iterations: 200,
            residual_tol: 1e-12,
            boundary_tol: 1e-8,
        }
    }
}

/// Convergence and integration diagnostics of one periodic solve.
#[derive(Debug, Clone, Copy, Default)]
pub struct SolveDiagnostics {
    pub power_iterations: u32,
    pub residual: f64,
    /// Max over the sampled period of the edge-state occupancy.
    pub boundary_occupancy: f64,
    pub window_expansions: u32,
    pub steps_accepted: u64,
    pub rhs_evaluations: u64,
    /// True when the fixed point came from the propagator-matrix solve
    /// rather than plain power iteration (slowly contracting period maps).
    pub propagator_fallback: bool,
}

/// Periodic steady state over one drive period: sampled occupations and the
/// period-averaged dc current measured at each junction.
#[derive(Debug, Clone)]
pub struct PeriodicSolution {
    pub window: ChargeWindow,
    /// Sampling times, 0 ..= 1/f_p inclusive.
    pub time_grid: Vec<f64>,
    /// Occupation vector at each sampling time.
    pub occupations: Vec<Vec<f64>>,
    /// Period-averaged conventional current (source -> drain positive)
    /// evaluated at the left junction, amperes.
    pub current_left: f64,
    /// Same current evaluated at the right junction, amperes.
    pub current_right: f64,
    pub diagnostics: SolveDiagnostics,
}

impl PeriodicSolution {
    /// Best estimate of the dc current: the junction average.
    pub fn current(&self) -> f64 {
        0.5 * (self.current_left + self.current_right)
    }

    /// Charge-conservation diagnostic |I_L - I_R|, amperes.
    pub fn junction_mismatch(&self) -> f64 {
        (self.current_left - self.current_right).abs()
    }
}

fn check_params(p: &DeviceParams, d: &DriveConfig) -> Result<(), DynamicsError> {
    let report = validate_params(p, d);
    if report.is_valid() {
        Ok(())
    } else {
        Err(DynamicsError::InvalidParams(report.to_string()))
    }
}

/// Apply the master-equation generator to a probability vector:
/// `dy = M y` over the window states only.
fn apply_generator(rates: &TransitionRates, y: &[f64], dy: &mut [f64]) {
    let n = rates.states.len();
    for i in 0..n {
        let s = &rates.states[i];
        let mut d = -s.total() * y[i];
        if i > 0 {
            let lower = &rates.states[i - 1];
            d += (lower.in_left + lower.in_right) * y[i - 1];
        }
        if i + 1 < n {
            let upper = &rates.states[i + 1];
            d += (upper.out_left + upper.out_right) * y[i + 1];
        }
        dy[i] = d;
    }
}

/// Right-hand side of the master equation plus the two junction-charge
/// accumulators, written into `dy`. `y` and `dy` have window length + 2
/// entries; the last two track transferred charge (in units of electrons)
/// through the right and left junctions with source->drain positive sign.
fn master_equation_rhs(rates: &TransitionRates, y: &[f64], dy: &mut [f64]) {
    let n = rates.states.len();
    apply_generator(rates, &y[..n], &mut dy[..n]);
    let mut flux_right = 0.0;
    let mut flux_left = 0.0;
    for (s, &p_i) in rates.states.iter().zip(y) {
        flux_right += p_i * (s.in_right - s.out_right);
        flux_left += p_i * (s.out_left - s.in_left);
    }
    dy[n] = flux_right;
    dy[n + 1] = flux_left;
}

struct PeriodOutcome {
    probabilities: Vec<f64>,
    /// Net electrons through the right junction over the period (in - out).
    transferred_right: f64,
    /// Net electrons through the left junction (out - in).
    transferred_left: f64,
    stats: OdeStats,
}

/// Integrate the augmented system over one period, optionally sampling at
/// interior stop times.
fn integrate_period(
    p: &DeviceParams,
    d: &DriveConfig,
    window: ChargeWindow,
    p_start: &[f64],
    opts: &SolveOptions,
    stops: &[f64],
    mut on_sample: impl FnMut(usize, f64, &[f64]),
) -> Result<PeriodOutcome, DynamicsError> {
    let dim = window.len();
    let mut y = Vec::with_capacity(dim + 2);
    y.extend_from_slice(p_start);
    y.push(0.0);
    y.push(0.0);

    let mut scratch = TransitionRates::zeroed(window);
    let ode_opts = OdeOptions {
        rtol: opts.rtol,
        atol: opts.atol,
        ..Default::default()
    };
    let stats = integrate(
        |t, y, dy| {
            let bias = InstantaneousBias::at_time(p, d, t);
            rates_from_bias(p, &bias, &mut scratch);
            master_equation_rhs(&scratch, y, dy);
        },
        0.0,
        d.period(),
        &mut y,
        &ode_opts,
        stops,
        |i, t, y| on_sample(i, t, &y[..dim]),
    )?;

    let sum: f64 = y[..dim].iter().sum();
    let drift = (sum - 1.0).abs();
    if drift >= 1e-9 {
        return Err(DynamicsError::NormalizationDrift { drift });
    }
    let mut probabilities: Vec<f64> = y[..dim].iter().map(|&v| v.max(0.0)).collect();
    let clean_sum: f64 = probabilities.iter().sum();
    for v in &mut probabilities {
        *v /= clean_sum;
    }

    Ok(PeriodOutcome {
        probabilities,
        transferred_right: y[dim],
        transferred_left: y[dim + 1],
        stats,
    })
}

/// Evolve an occupation vector through one full drive period.
///
/// Output is renormalized; the pre-normalization drift must stay below
/// 1e-9 or the call fails with a diagnostic.
pub fn evolve_period(
    p: &DeviceParams,
    d: &DriveConfig,
    state: &ChargeStateSpace,
) -> Result<ChargeStateSpace, DynamicsError> {
    check_params(p, d)?;
    let opts = SolveOptions::default();
    let out = integrate_period(
        p,
        d,
        state.window,
        &state.probabilities,
        &opts,
        &[],
        |_, _, _| {},
    )?;
    Ok(ChargeStateSpace::new(state.window, out.probabilities))
}

/// Stationary distribution of the constant-rate master equation at a static
/// operating point, by direct null-space solve of the generator.
pub fn static_stationary_in(
    p: &DeviceParams,
    gates: &StaticGates,
    v_sd: f64,
    window: ChargeWindow,
) -> Result<ChargeStateSpace, DynamicsError> {
    let (v_l, v_r) = p.lead_potentials(v_sd);
    let bias = InstantaneousBias::new(p, v_l, v_r, gates.v_top, gates.v_pl, gates.v_bl, gates.v_br);
    let mut rates = TransitionRates::zeroed(window);
    rates_from_bias(p, &bias, &mut rates);
    stationary_from_rates(&rates)
}

fn stationary_from_rates(rates: &TransitionRates) -> Result<ChargeStateSpace, DynamicsError> {
    let n = rates.states.len();
    // Generator matrix M (column j = flows out of state j), with the last
    // row replaced by the normalization constraint sum(P) = 1. Any single
    // generator row is redundant because the columns of M sum to zero.
    let mut a = vec![0.0; n * n];
    for (j, s) in rates.states.iter().enumerate() {
        a[j * n + j] -= s.total();
        if j + 1 < n {
            a[(j + 1) * n + j] += s.in_left + s.in_right;
        }
        if j > 0 {
            a[(j - 1) * n + j] += s.out_left + s.out_right;
        }
    }
    let mut b = vec![0.0; n];
    b[n - 1] = 1.0;
    for v in a[(n - 1) * n..].iter_mut() {
        *v = 1.0;
    }
    solve_dense(&mut a, &mut b, n)?;
    let sum: f64 = b.iter().sum();
    for v in &mut b {
        *v = (*v / sum).max(0.0);
    }
    Ok(ChargeStateSpace::new(rates.window, b))
}

/// Instantaneous junction currents (right, left) of a distribution under
/// given rates, in amperes with the source->drain positive convention.
fn junction_currents(rates: &TransitionRates, probabilities: &[f64]) -> (f64, f64) {
    let mut flux_right = 0.0;
    let mut flux_left = 0.0;
    for (s, &p_i) in rates.states.iter().zip(probabilities) {
        flux_right += p_i * (s.in_right - s.out_right);
        flux_left += p_i * (s.out_left - s.in_left);
    }
    (
        ELEMENTARY_CHARGE * flux_right,
        ELEMENTARY_CHARGE * flux_left,
    )
}

/// Window guess centered on the electrostatic equilibrium occupancy,
/// pre-widened by the drive-induced polarization-charge swing. The
/// periodic solver starts from this and expands on demand.
pub fn suggested_window(p: &DeviceParams, d: &DriveConfig) -> ChargeWindow {
    let bias = InstantaneousBias::at_time(p, d, 0.0);
    let center = (bias.polarization_charge / ELEMENTARY_CHARGE).round() as i32;
    // Amplitude of the oscillating part of q_p from the two barrier drives.
    let ax = 0.5 * (p.c_bl * d.amp_bl * d.phase_bl.cos() + p.c_br * d.amp_br * d.phase_br.cos());
    let ay = 0.5 * (p.c_bl * d.amp_bl * d.phase_bl.sin() + p.c_br * d.amp_br * d.phase_br.sin());
    let swing = (ax * ax + ay * ay).sqrt() / ELEMENTARY_CHARGE;
    ChargeWindow::centered(center, 4 + swing.ceil() as i32)
}

const MAX_WINDOW_HALF_WIDTH: i32 = 64;
const WINDOW_GROWTH_STEP: i32 = 2;
const PROPAGATOR_FALLBACK_AFTER: u32 = 25;

/// Integrate the matrix equation dΦ/dt = M(t) Φ over one period from the
/// identity and solve (Φ - I) p = 0 with normalization. Returns the fixed
/// point, its residual ||Φ p - p||_1 under the assembled propagator, and
/// the integrator statistics.
fn propagator_fixed_point(
    p: &DeviceParams,
    d: &DriveConfig,
    window: ChargeWindow,
    opts: &SolveOptions,
) -> Result<(Vec<f64>, f64, OdeStats), DynamicsError> {
    let n = window.len();
    // Column-major: y[col * n ..][..n] is the image of basis vector `col`.
    let mut y = vec![0.0; n * n];
    for col in 0..n {
        y[col * n + col] = 1.0;
    }
    let mut scratch = TransitionRates::zeroed(window);
    let ode_opts = OdeOptions {
        rtol: opts.rtol,
        atol: opts.atol,
        ..Default::default()
    };
    let stats = integrate(
        |t, y, dy| {
            let bias = InstantaneousBias::at_time(p, d, t);
            rates_from_bias(p, &bias, &mut scratch);
            for col in 0..n {
                apply_generator(&scratch, &y[col * n..(col + 1) * n], &mut dy[col * n..(col + 1) * n]);
            }
        },
        0.0,
        d.period(),
        &mut y,
        &ode_opts,
        &[],
        |_, _, _| {},
    )?;

    // (Φ - I) p = 0 with the last equation replaced by sum(p) = 1. Row i,
    // column j of Φ is y[j * n + i].
    let mut a = vec![0.0; n * n];
    for i in 0..n - 1 {
        for j in 0..n {
            a[i * n + j] = y[j * n + i] - if i == j { 1.0 } else { 0.0 };
        }
    }
    for j in 0..n {
        a[(n - 1) * n + j] = 1.0;
    }
    let mut fixed = vec![0.0; n];
    fixed[n - 1] = 1.0;
    solve_dense(&mut a, &mut fixed, n)?;
    let fixed = clean_probabilities(&fixed);

    let mut image = vec![0.0; n];
    for (j, &pj) in fixed.iter().enumerate() {
        for i in 0..n {
            image[i] += y[j * n + i] * pj;
        }
    }
    let residual: f64 = image.iter().zip(&fixed).map(|(a, b)| (a - b).abs()).sum();
    Ok((fixed, residual, stats))
}

/// Periodic steady state with explicit options.
pub fn periodic_steady_state_with(
    p: &DeviceParams,
    d: &DriveConfig,
    opts: &SolveOptions,
) -> Result<PeriodicSolution, DynamicsError> {
    check_params(p, d)?;

    let mut window = opts.window.unwrap_or_else(|| suggested_window(p, d));
    let mut expansions = 0u32;

    loop {
        match solve_in_window(p, d, window, opts, expansions) {
            Ok(solution) => {
                let occ = solution.diagnostics.boundary_occupancy;
                if occ < opts.boundary_tol || opts.window.is_some() {
                    return Ok(solution);
                }
                if (window.n_max - window.n_min) / 2 >= MAX_WINDOW_HALF_WIDTH {
                    return Err(DynamicsError::WindowExhausted {
                        n_min: window.n_min,
                        n_max: window.n_max,
                        occupancy: occ,
                    });
                }
                window = window.expanded(WINDOW_GROWTH_STEP);
                expansions += 1;
            }
            Err(e) => return Err(e),
        }
    }
}

fn solve_in_window(
    p: &DeviceParams,
    d: &DriveConfig,
    window: ChargeWindow,
    opts: &SolveOptions,
    expansions: u32,
) -> Result<PeriodicSolution, DynamicsError> {
    // Warm start: stationary distribution of the t = 0 rate matrix. For
    // weak drives this is already near the fixed point, which is what keeps
    // the power iteration useful when the period map is weakly contracting.
    let (v_bl0, v_br0) = crate::params::gate_waveform(d, 0.0);
    let gates0 = StaticGates {
        v_top: d.v_top,
        v_pl: d.v_pl,
        v_bl: v_bl0,
        v_br: v_br0,
    };
    let mut state = static_stationary_in(p, &gates0, d.v_sd, window)?;

    let mut diagnostics = SolveDiagnostics::default();
    let mut converged = false;
    let mut residual = f64::NAN;
    let mut checkpoint = f64::INFINITY;

    for iteration in 1..=opts.max_power_iterations {
        let out = integrate_period(p, d, window, &state.probabilities, opts, &[], |_, _, _| {})?;
        diagnostics.steps_accepted += out.stats.steps_accepted;
        diagnostics.rhs_evaluations += out.stats.rhs_evaluations;
        residual = state
            .probabilities
            .iter()
            .zip(&out.probabilities)
            .map(|(a, b)| (a - b).abs())
            .sum();
        state.probabilities = out.probabilities;
        diagnostics.power_iterations = iteration;
        if residual < opts.residual_tol {
            converged = true;
            break;
        }
        // Near plateau risers the period map has an eigenvalue close to 1
        // and plain iteration cannot reach the tolerance within the budget.
        // Once the residual decay stalls, assemble the one-period
        // propagator and solve its fixed point directly instead of burning
        // the remaining iterations.
        let stalled = iteration % 6 == 0 && {
            let slow = residual > 0.2 * checkpoint;
            checkpoint = residual;
            slow
        };
        if stalled || iteration >= PROPAGATOR_FALLBACK_AFTER {
            let (fixed, res, stats) = propagator_fixed_point(p, d, window, opts)?;
            diagnostics.steps_accepted += stats.steps_accepted;
            diagnostics.rhs_evaluations += stats.rhs_evaluations;
            diagnostics.propagator_fallback = true;
            state.probabilities = fixed;
            residual = res;
            converged = residual < opts.residual_tol;
            break;
        }
    }
    if !converged {
        return Err(DynamicsError::NonConvergence {
            iterations: diagnostics.power_iterations,
            residual,
        });
    }
    diagnostics.residual = residual;
    diagnostics.window_expansions = expansions;

    // Final sampled period: record the occupation grid and accumulate the
    // junction charges with the integrator's own quadrature.
    let period = d.period();
    let grid = opts.grid_points.max(2);
    let stops: Vec<f64> = (1..=grid).map(|k| k as f64 * period / grid as f64).collect();
    let mut time_grid = Vec::with_capacity(grid + 1);
    let mut occupations: Vec<Vec<f64>> = Vec::with_capacity(grid + 1);
    time_grid.push(0.0);
    occupations.push(clean_probabilities(&state.probabilities));

    let out = integrate_period(
        p,
        d,
        window,
        &state.probabilities,
        opts,
        &stops,
        |_, t, probs| {
            time_grid.push(t);
            occupations.push(clean_probabilities(probs));
        },
    )?;
    diagnostics.steps_accepted += out.stats.steps_accepted;
    diagnostics.rhs_evaluations += out.stats.rhs_evaluations;
    diagnostics.boundary_occupancy = occupations
        .iter()
        .map(|p| p.first().unwrap() + p.last().unwrap())
        .fold(0.0, f64::max);

    let scale = ELEMENTARY_CHARGE * d.f_p;
    Ok(PeriodicSolution {
        window,
        time_grid,
        occupations,
        current_left: scale * out.transferred_left,
        current_right: scale * out.transferred_right,
        diagnostics,
    })
}

fn clean_probabilities(raw: &[f64]) -> Vec<f64> {
    let mut v: Vec<f64> = raw.iter().map(|&p| p.max(0.0)).collect();
    let sum: f64 = v.iter().sum();
    if sum > 0.0 {
        for p in &mut v {
            *p /= sum;
        }
    }
    v
}

/// Periodic steady state of the driven device with automatic window
/// selection, power-iterated to the fixed point of the period map.
pub fn periodic_steady_state(
    p: &DeviceParams,
    d: &DriveConfig,
) -> Result<PeriodicSolution, DynamicsError> {
    periodic_steady_state_with(p, d, &SolveOptions::default())
}

/// Stationary occupation at a static operating point with automatic window
/// selection.
pub fn static_stationary(
    p: &DeviceParams,
    gates: &StaticGates,
    v_sd: f64,
) -> Result<ChargeStateSpace, DynamicsError> {
    let (v_l, v_r) = p.lead_potentials(v_sd);
    let bias = InstantaneousBias::new(p, v_l, v_r, gates.v_top, gates.v_pl, gates.v_bl, gates.v_br);
    let center = (bias.polarization_charge / ELEMENTARY_CHARGE).round() as i32;
    let mut window = ChargeWindow::centered(center, 4);
    loop {
        let state = static_stationary_in(p, gates, v_sd, window)?;
        if state.boundary_occupancy() < 1e-8 {
            return Ok(state);
        }
        if (window.n_max - window.n_min) / 2 >= MAX_WINDOW_HALF_WIDTH {
            return Err(DynamicsError::WindowExhausted {
                n_min: window.n_min,
                n_max: window.n_max,
                occupancy: state.boundary_occupancy(),
            });
        }
        window = window.expanded(WINDOW_GROWTH_STEP);
    }
}

/// Stationary dc current at a static operating point, amperes
/// (source -> drain positive).
pub fn static_current(
    p: &DeviceParams,
    gates: &StaticGates,
    v_sd: f64,
) -> Result<f64, DynamicsError> {
    let state = static_stationary(p, gates, v_sd)?;
    let (v_l, v_r) = p.lead_potentials(v_sd);
    let bias = InstantaneousBias::new(p, v_l, v_r, gates.v_top, gates.v_pl, gates.v_bl, gates.v_br);
    let mut rates = TransitionRates::zeroed(state.window);
    rates_from_bias(p, &bias, &mut rates);
    let (i_right, i_left) = junction_currents(&rates, &state.probabilities);
    Ok(0.5 * (i_right + i_left))
}
