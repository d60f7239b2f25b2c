//! Kinetic Monte Carlo sampling of the driven tunneling model: a
//! continuous-time, time-inhomogeneous jump process simulated by thinning
//! against per-slice rate majorants. Serves as the independent statistical
//! oracle for the master-equation solver and produces electron-counting
//! statistics.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::Serialize;
use thiserror::Error;

use crate::constants::ELEMENTARY_CHARGE;
use crate::dynamics::ChargeWindow;
use crate::electrostatics::{InstantaneousBias, TunnelEvent};
use crate::params::{validate_params, DeviceParams, DriveConfig};
use crate::tunneling::{rates_from_bias, StateRates, TransitionRates};

/// Name of the generator recorded in every summary; ChaCha12 is counter
/// based, splittable by stream and passes the standard statistical
/// batteries.
pub const RNG_ALGORITHM: &str = "chacha12";

/// Number of majorant time slices per drive period.
const SLICES_PER_PERIOD: usize = 1024;
/// Oversampling factor when scanning a slice for its rate maximum.
const MAJORANT_OVERSAMPLING: usize = 4;
/// Safety factor applied on top of the sampled maximum.
const MAJORANT_SAFETY: f64 = 1.1;

#[derive(Debug, Error)]
pub enum KmcError {
    #[error("invalid parameters:\n{0}")]
    InvalidParams(String),
    #[error("n_periods must be >= 1")]
    NoPeriods,
    #[error(
        "rate majorant violated at t = {t:.6e} (state n = {n}, event {event}): \
         rate {rate:.6e} > bound {bound:.6e}; the majorant sampling is buggy"
    )]
    MajorantViolation {
        t: f64,
        n: i32,
        event: &'static str,
        rate: f64,
        bound: f64,
    },
}

/// One accepted tunneling event.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KmcEvent {
    pub time: f64,
    pub event: TunnelEvent,
    pub n_before: i32,
}

/// Full event record of one KMC run.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub window: ChargeWindow,
    pub seed: u64,
    pub events: Vec<KmcEvent>,
    /// Net electrons through the right junction (in - out) per period.
    pub net_right_per_period: Vec<i64>,
}

/// Counting statistics of one run or a pool of shards.
#[derive(Debug, Clone, Serialize)]
pub struct KmcSummary {
    pub periods: u64,
    pub shards: u32,
    pub seed: u64,
    pub rng_algorithm: String,
    /// Mean net electrons shuttled per period (right junction).
    pub mean_transfers_per_period: f64,
    /// Sample variance of the per-period net transfers.
    pub transfers_variance: f64,
    /// e f_p x mean transfers, amperes (source -> drain positive).
    pub mean_current: f64,
    /// Standard error of `mean_current`, amperes.
    pub current_std_error: f64,
    /// Accepted / proposed thinning candidates.
    pub acceptance_fraction: f64,
    /// Set when the acceptance fraction drops to 0.05 or below.
    pub majorant_quality_warning: bool,
    /// Set when the walker touched a truncation-window edge state.
    pub edge_visited: bool,
}

/// Per-state, per-slice majorants of the four event rates over one period.
struct MajorantTable {
    window: ChargeWindow,
    slice_dt: f64,
    /// `[state][slice]` -> per-event bounds.
    bounds: Vec<Vec<StateRates>>,
    /// `[state][slice]` -> total candidate rate (sum of the four bounds).
    totals: Vec<Vec<f64>>,
}

impl MajorantTable {
    fn build(p: &DeviceParams, d: &DriveConfig, window: ChargeWindow) -> Self {
        let period = d.period();
        let slice_dt = period / SLICES_PER_PERIOD as f64;
        let n_states = window.len();
        let mut bounds = vec![vec![StateRates::default(); SLICES_PER_PERIOD]; n_states];

        let mut scratch = TransitionRates::zeroed(window);
        for slice in 0..SLICES_PER_PERIOD {
            for sample in 0..=MAJORANT_OVERSAMPLING {
                let t = (slice as f64 + sample as f64 / MAJORANT_OVERSAMPLING as f64) * slice_dt;
                let bias = InstantaneousBias::at_time(p, d, t);
                rates_from_bias(p, &bias, &mut scratch);
                for (state_idx, rates) in scratch.states.iter().enumerate() {
                    let b = &mut bounds[state_idx][slice];
                    b.in_left = b.in_left.max(rates.in_left);
                    b.out_left = b.out_left.max(rates.out_left);
                    b.in_right = b.in_right.max(rates.in_right);
                    b.out_right = b.out_right.max(rates.out_right);
                }
            }
        }
        for per_state in &mut bounds {
            for b in per_state.iter_mut() {
                b.in_left *= MAJORANT_SAFETY;
                b.out_left *= MAJORANT_SAFETY;
                b.in_right *= MAJORANT_SAFETY;
                b.out_right *= MAJORANT_SAFETY;
            }
        }
        let totals = bounds
            .iter()
            .map(|per_state| per_state.iter().map(StateRates::total).collect())
            .collect();
        Self {
            window,
            slice_dt,
            bounds,
            totals,
        }
    }
}

fn check_bound(
    rate: f64,
    bound: f64,
    t: f64,
    n: i32,
    event: TunnelEvent,
) -> Result<(), KmcError> {
    if rate > bound {
        Err(KmcError::MajorantViolation {
            t,
            n,
            event: event.label(),
            rate,
            bound,
        })
    } else {
        Ok(())
    }
}

struct ShardOutcome {
    events: Vec<KmcEvent>,
    net_right_per_period: Vec<i64>,
    candidates: u64,
    accepted: u64,
    edge_visited: bool,
}

/// Core thinning loop for one shard.
fn run_shard(
    p: &DeviceParams,
    d: &DriveConfig,
    table: &MajorantTable,
    n_periods: u64,
    rng: &mut ChaCha12Rng,
    record_events: bool,
) -> Result<ShardOutcome, KmcError> {
    let window = table.window;
    let period = d.period();
    let mut scratch = TransitionRates::zeroed(window);

    // Start from the electrostatic equilibrium at t = 0.
    let bias0 = InstantaneousBias::at_time(p, d, 0.0);
    let mut n = (bias0.polarization_charge / ELEMENTARY_CHARGE).round() as i32;
    n = n.clamp(window.n_min, window.n_max);

    let mut outcome = ShardOutcome {
        events: Vec::new(),
        net_right_per_period: vec![0; n_periods as usize],
        candidates: 0,
        accepted: 0,
        edge_visited: false,
    };

    for period_idx in 0..n_periods {
        let period_start = period_idx as f64 * period;
        for slice in 0..SLICES_PER_PERIOD {
            let slice_start = period_start + slice as f64 * table.slice_dt;
            let slice_end = slice_start + table.slice_dt;
            let mut t = slice_start;
            loop {
                let state_idx = window.index_of(n);
                let total_bound = table.totals[state_idx][slice];
                if total_bound <= 0.0 {
                    break;
                }
                let u: f64 = rng.random();
                let wait = -(1.0 - u).ln() / total_bound;
                t += wait.max(f64::MIN_POSITIVE);
                if t >= slice_end {
                    break;
                }
                outcome.candidates += 1;

                // Evaluate the true rates at the candidate time and either
                // accept one event (position in the cumulative sum) or
                // reject the candidate.
                let t_mod = t - period_start;
                let bias = InstantaneousBias::at_time(p, d, t_mod);
                rates_from_bias(p, &bias, &mut scratch);
                let rates = scratch.states[state_idx];
                let bounds = &table.bounds[state_idx][slice];
                for ev in TunnelEvent::ALL {
                    check_bound(rates.get(ev), bounds.get(ev), t, n, ev)?;
                }

                let position: f64 = rng.random::<f64>() * total_bound;
                let mut cumulative = 0.0;
                let mut chosen = None;
                for ev in TunnelEvent::ALL {
                    cumulative += rates.get(ev);
                    if position < cumulative {
                        chosen = Some(ev);
                        break;
                    }
                }
                if let Some(ev) = chosen {
                    outcome.accepted += 1;
                    if record_events {
                        outcome.events.push(KmcEvent {
                            time: t,
                            event: ev,
                            n_before: n,
                        });
                    }
                    match ev {
                        TunnelEvent::InRight => {
                            outcome.net_right_per_period[period_idx as usize] += 1
                        }
                        TunnelEvent::OutRight => {
                            outcome.net_right_per_period[period_idx as usize] -= 1
                        }
                        _ => {}
                    }
                    n += ev.delta_n();
                    debug_assert!(window.contains(n));
                    if n == window.n_min || n == window.n_max {
                        outcome.edge_visited = true;
                    }
                }
            }
        }
    }
    Ok(outcome)
}

fn summarize(d: &DriveConfig, seed: u64, shards: u32, outcomes: &[ShardOutcome]) -> KmcSummary {
    let periods: u64 = outcomes
        .iter()
        .map(|o| o.net_right_per_period.len() as u64)
        .sum();
    let count = periods as f64;
    let sum: f64 = outcomes
        .iter()
        .flat_map(|o| &o.net_right_per_period)
        .map(|&v| v as f64)
        .sum();
    let mean = sum / count;
    let ss: f64 = outcomes
        .iter()
        .flat_map(|o| &o.net_right_per_period)
        .map(|&v| (v as f64 - mean) * (v as f64 - mean))
        .sum();
    let variance = if periods > 1 { ss / (count - 1.0) } else { 0.0 };
    let candidates: u64 = outcomes.iter().map(|o| o.candidates).sum();
    let accepted: u64 = outcomes.iter().map(|o| o.accepted).sum();
    let acceptance_fraction = if candidates > 0 {
        accepted as f64 / candidates as f64
    } else {
        1.0
    };
    let ef = ELEMENTARY_CHARGE * d.f_p;
    KmcSummary {
        periods,
        shards,
        seed,
        rng_algorithm: RNG_ALGORITHM.to_string(),
        mean_transfers_per_period: mean,
        transfers_variance: variance,
        mean_current: ef * mean,
        current_std_error: ef * (variance / count).sqrt(),
        acceptance_fraction,
        majorant_quality_warning: acceptance_fraction <= 0.05,
        edge_visited: outcomes.iter().any(|o| o.edge_visited),
    }
}

fn check_inputs(p: &DeviceParams, d: &DriveConfig, n_periods: u64) -> Result<(), KmcError> {
    if n_periods == 0 {
        return Err(KmcError::NoPeriods);
    }
    let report = validate_params(p, d);
    if !report.is_valid() {
        return Err(KmcError::InvalidParams(report.to_string()));
    }
    Ok(())
}

/// Simulate one trajectory of `n_periods` drive periods.
///
/// Fully reproducible: the same seed yields a bit-identical trajectory.
pub fn simulate(
    p: &DeviceParams,
    d: &DriveConfig,
    window: ChargeWindow,
    n_periods: u64,
    seed: u64,
) -> Result<(Trajectory, KmcSummary), KmcError> {
    check_inputs(p, d, n_periods)?;
    let table = MajorantTable::build(p, d, window);
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let outcome = run_shard(p, d, &table, n_periods, &mut rng, true)?;
    let summary = summarize(d, seed, 1, std::slice::from_ref(&outcome));
    Ok((
        Trajectory {
            window,
            seed,
            events: outcome.events,
            net_right_per_period: outcome.net_right_per_period,
        },
        summary,
    ))
}

/// Run `shards` independent trajectories in parallel (ChaCha streams split
/// by shard index) and pool the per-period counts.
pub fn simulate_sharded(
    p: &DeviceParams,
    d: &DriveConfig,
    window: ChargeWindow,
    periods_per_shard: u64,
    shards: u32,
    seed: u64,
) -> Result<KmcSummary, KmcError> {
    check_inputs(p, d, periods_per_shard)?;
    let table = MajorantTable::build(p, d, window);
    let outcomes: Result<Vec<ShardOutcome>, KmcError> = {
        use rayon::prelude::*;
        (0..shards)
            .into_par_iter()
            .map(|shard| {
                let mut rng = ChaCha12Rng::seed_from_u64(seed);
                rng.set_stream(shard as u64 + 1);
                run_shard(p, d, &table, periods_per_shard, &mut rng, false)
            })
            .collect()
    };
    Ok(summarize(d, seed, shards, &outcomes?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::SimConfig;
    use crate::dynamics::suggested_window;

    fn plateau_setup() -> (DeviceParams, DriveConfig, ChargeWindow) {
        let cfg = SimConfig::reference();
        let p = cfg.device_params();
        let d = cfg.drive_config(); // v_sd = 3.1 mV, on the n = 1 plateau
        let window = suggested_window(&p, &d);
        (p, d, window)
    }

    #[test]
    fn huge_resistances_produce_no_events() {
        let (mut p, d, window) = plateau_setup();
        p.barrier_left.r0 = 1e30;
        p.barrier_right.r0 = 1e30;
        p.barrier_left.r_floor = 1e30;
        p.barrier_right.r_floor = 1e30;
        let (traj, summary) = simulate(&p, &d, window, 50, 7).unwrap();
        assert!(traj.events.is_empty());
        assert_eq!(summary.mean_current, 0.0);
    }

    #[test]
    fn fixed_seed_reproduces_bit_identical_trajectories() {
        let (p, d, window) = plateau_setup();
        let (a, sa) = simulate(&p, &d, window, 40, 12345).unwrap();
        let (b, sb) = simulate(&p, &d, window, 40, 12345).unwrap();
        assert_eq!(a.events.len(), b.events.len());
        for (ea, eb) in a.events.iter().zip(&b.events) {
            assert_eq!(ea.time.to_bits(), eb.time.to_bits());
            assert_eq!(ea.event, eb.event);
            assert_eq!(ea.n_before, eb.n_before);
        }
        assert_eq!(sa.mean_current.to_bits(), sb.mean_current.to_bits());
    }

    #[test]
    fn different_seeds_differ() {
        let (p, d, window) = plateau_setup();
        let (a, _) = simulate(&p, &d, window, 40, 1).unwrap();
        let (b, _) = simulate(&p, &d, window, 40, 2).unwrap();
        let ta: Vec<u64> = a.events.iter().map(|e| e.time.to_bits()).collect();
        let tb: Vec<u64> = b.events.iter().map(|e| e.time.to_bits()).collect();
        assert_ne!(ta, tb);
    }

    #[test]
    fn event_times_increase_and_steps_are_unit() {
        let (p, d, window) = plateau_setup();
        let (traj, _) = simulate(&p, &d, window, 60, 99).unwrap();
        assert!(!traj.events.is_empty());
        let mut prev = -1.0;
        let mut n = traj.events[0].n_before;
        for ev in &traj.events {
            assert!(ev.time > prev, "event times must strictly increase");
            prev = ev.time;
            assert_eq!(ev.n_before, n);
            n += ev.event.delta_n();
        }
    }

    #[test]
    fn plateau_periods_shuttle_exactly_one_electron() {
        // Deep on the n = 1 plateau at 300 mK error events are rare: at
        // least 99% of periods carry exactly one net electron.
        let (p, d, window) = plateau_setup();
        let (traj, summary) = simulate(&p, &d, window, 500, 4242).unwrap();
        let ones = traj
            .net_right_per_period
            .iter()
            .filter(|&&v| v == 1)
            .count();
        assert!(
            ones as f64 >= 0.99 * traj.net_right_per_period.len() as f64,
            "only {ones}/500 clean periods"
        );
        assert!((summary.mean_transfers_per_period - 1.0).abs() < 0.02);
        assert!(!summary.edge_visited);
    }

    #[test]
    fn acceptance_fraction_is_sane() {
        let (p, d, window) = plateau_setup();
        let (_, summary) = simulate(&p, &d, window, 100, 5).unwrap();
        assert!(summary.acceptance_fraction > 0.05);
        assert!(summary.acceptance_fraction <= 1.0);
        assert!(!summary.majorant_quality_warning);
    }

    #[test]
    fn sharded_pool_matches_repeat_run() {
        let (p, d, window) = plateau_setup();
        let pooled = simulate_sharded(&p, &d, window, 50, 4, 77).unwrap();
        assert_eq!(pooled.periods, 200);
        assert_eq!(pooled.shards, 4);
        let again = simulate_sharded(&p, &d, window, 50, 4, 77).unwrap();
        assert_eq!(pooled.mean_current.to_bits(), again.mean_current.to_bits());
        assert!((pooled.mean_transfers_per_period - 1.0).abs() < 0.05);
    }
}
