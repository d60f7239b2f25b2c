//! Adaptive embedded Runge-Kutta integrator (Dormand-Prince 5(4)).
//!
//! Tuned for the master-equation right-hand sides in this crate: smooth
//! periodic coefficients whose stiffness is bounded by the clamped barrier
//! resistances, so an explicit method with tight step control is adequate.
//! Runge-Kutta steps preserve the linear invariant `sum(P) = const`
//! exactly up to roundoff, which the probability evolution relies on.

use thiserror::Error;

#[derive(Debug, Clone, Copy)]
pub struct OdeOptions {
    pub rtol: f64,
    pub atol: f64,
    pub max_steps: u64,
}

impl Default for OdeOptions {
    fn default() -> Self {
        Self {
            rtol: 1e-10,
            atol: 1e-14,
            max_steps: 20_000_000,
        }
    }
}

/// Step statistics, reported on success and embedded in failure diagnostics.
#[derive(Debug, Clone, Copy, Default)]
pub struct OdeStats {
    pub steps_accepted: u64,
    pub steps_rejected: u64,
    pub rhs_evaluations: u64,
    pub min_step: f64,
    pub last_step: f64,
}

#[derive(Debug, Error)]
#[error(
    "integrator failed at t = {t_reached:.6e} (step {last_step:.3e}, \
     {steps_accepted} accepted / {steps_rejected} rejected steps): {reason}"
)]
pub struct OdeFailure {
    pub t_reached: f64,
    pub last_step: f64,
    pub steps_accepted: u64,
    pub steps_rejected: u64,
    pub reason: String,
}

// Dormand-Prince 5(4) tableau.
const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 6] = [
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
// Difference between the 5th- and 4th-order weights (error estimator).
const E_ERR: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

/// Integrate `dy/dt = f(t, y)` from `t0` to `t1` in place.
///
/// `stops` is an optional increasing list of interior times the stepper must
/// land on exactly; `on_stop(i, t, y)` fires at each (useful for sampling a
/// period on a fixed grid without touching the step-size control).
pub fn integrate<F, G>(
    mut f: F,
    t0: f64,
    t1: f64,
    y: &mut [f64],
    opts: &OdeOptions,
    stops: &[f64],
    mut on_stop: G,
) -> Result<OdeStats, OdeFailure>
where
    F: FnMut(f64, &[f64], &mut [f64]),
    G: FnMut(usize, f64, &[f64]),
{
    let dim = y.len();
    let span = t1 - t0;
    debug_assert!(span > 0.0);
    debug_assert!(stops.windows(2).all(|w| w[0] < w[1]));

    let mut stats = OdeStats {
        min_step: f64::INFINITY,
        ..Default::default()
    };

    let mut k: Vec<Vec<f64>> = (0..7).map(|_| vec![0.0; dim]).collect();
    let mut y_trial = vec![0.0; dim];
    let mut y_stage = vec![0.0; dim];

    let mut t = t0;
    let mut h = span * 1e-4;
    let mut next_stop = 0usize;

    f(t, y, &mut k[0]);
    stats.rhs_evaluations += 1;

    loop {
        if t >= t1 {
            break;
        }
        // Clamp to the next forced stop or the end point.
        let target = if next_stop < stops.len() {
            stops[next_stop].min(t1)
        } else {
            t1
        };
        let mut h_step = h.min(target - t);
        if h_step <= 0.0 {
            // Already at the stop (within fp): emit and continue.
            if next_stop < stops.len() && t >= stops[next_stop] {
                on_stop(next_stop, t, y);
                next_stop += 1;
                continue;
            }
            break;
        }
        if target - t - h_step < 1e-12 * h_step {
            h_step = target - t;
        }

        // Stage evaluations (k[0] holds f(t, y) from FSAL).
        for stage in 1..7 {
            for i in 0..dim {
                let mut acc = 0.0;
                for (j, kj) in k.iter().enumerate().take(stage) {
                    let a = A[stage - 1][j];
                    if a != 0.0 {
                        acc += a * kj[i];
                    }
                }
                y_stage[i] = y[i] + h_step * acc;
            }
            let (head, tail) = k.split_at_mut(stage);
            let _ = head;
            f(t + C[stage] * h_step, &y_stage, &mut tail[0]);
            stats.rhs_evaluations += 1;
        }
        // 5th-order solution is the last stage state (FSAL property).
        y_trial.copy_from_slice(&y_stage);

        // Error estimate against the embedded 4th-order solution.
        let mut err_sq = 0.0;
        for i in 0..dim {
            let mut e = 0.0;
            for (j, kj) in k.iter().enumerate() {
                if E_ERR[j] != 0.0 {
                    e += E_ERR[j] * kj[i];
                }
            }
            e *= h_step;
            let scale = opts.atol + opts.rtol * y[i].abs().max(y_trial[i].abs());
            err_sq += (e / scale) * (e / scale);
        }
        let err = (err_sq / dim as f64).sqrt();

        if !err.is_finite() {
            return Err(OdeFailure {
                t_reached: t,
                last_step: h_step,
                steps_accepted: stats.steps_accepted,
                steps_rejected: stats.steps_rejected,
                reason: "non-finite error estimate (NaN/Inf in the right-hand side)".into(),
            });
        }

        if err <= 1.0 {
            t += h_step;
            y.copy_from_slice(&y_trial);
            k.swap(0, 6); // FSAL: k7 = f(t+h, y_new) becomes next k1
            stats.steps_accepted += 1;
            stats.min_step = stats.min_step.min(h_step);
            stats.last_step = h_step;

            if next_stop < stops.len() && t >= stops[next_stop].min(t1) - 0.0 {
                on_stop(next_stop, t, y);
                next_stop += 1;
            }
        } else {
            stats.steps_rejected += 1;
        }

        // PI-free classical controller with safety factor and bounds.
        let factor = if err == 0.0 {
            5.0
        } else {
            (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
        };
        h = (h_step * factor).min(span);

        if stats.steps_accepted + stats.steps_rejected >= opts.max_steps {
            return Err(OdeFailure {
                t_reached: t,
                last_step: h_step,
                steps_accepted: stats.steps_accepted,
                steps_rejected: stats.steps_rejected,
                reason: format!("exceeded max_steps = {}", opts.max_steps),
            });
        }
        if h < 1e-15 * span {
            return Err(OdeFailure {
                t_reached: t,
                last_step: h,
                steps_accepted: stats.steps_accepted,
                steps_rejected: stats.steps_rejected,
                reason: "step size underflow".into(),
            });
        }
    }

    // Emit any stops that coincide with the end point.
    while next_stop < stops.len() && stops[next_stop] <= t1 {
        on_stop(next_stop, t1, y);
        next_stop += 1;
    }

    Ok(stats)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_decay_matches_closed_form() {
        let mut y = vec![1.0];
        let opts = OdeOptions::default();
        integrate(
            |_, y, dy| dy[0] = -3.0 * y[0],
            0.0,
            2.0,
            &mut y,
            &opts,
            &[],
            |_, _, _| {},
        )
        .unwrap();
        let exact = (-6.0f64).exp();
        assert!((y[0] - exact).abs() < 1e-11 * exact.max(1.0));
    }

    #[test]
    fn harmonic_oscillator_energy_is_conserved_to_tolerance() {
        let mut y = vec![1.0, 0.0];
        let opts = OdeOptions::default();
        integrate(
            |_, y, dy| {
                dy[0] = y[1];
                dy[1] = -y[0];
            },
            0.0,
            20.0 * std::f64::consts::PI,
            &mut y,
            &opts,
            &[],
            |_, _, _| {},
        )
        .unwrap();
        assert!((y[0] - 1.0).abs() < 1e-8);
        assert!(y[1].abs() < 1e-8);
    }

    #[test]
    fn forced_stops_are_hit_in_order() {
        let stops: Vec<f64> = (1..=10).map(|k| k as f64 * 0.1).collect();
        let mut seen = Vec::new();
        let mut y = vec![1.0];
        integrate(
            |_, y, dy| dy[0] = -y[0],
            0.0,
            1.0,
            &mut y,
            &OdeOptions::default(),
            &stops,
            |i, t, y| seen.push((i, t, y[0])),
        )
        .unwrap();
        assert_eq!(seen.len(), 10);
        for (i, t, v) in &seen {
            let expected_t = (*i as f64 + 1.0) * 0.1;
            assert!((t - expected_t).abs() < 1e-12);
            assert!((v - (-t).exp()).abs() < 1e-10);
        }
    }

    #[test]
    fn stiff_linear_relaxation_is_stable() {
        // lambda h ~ 1e3 over the span forces the stability-limited regime.
        let mut y = vec![1.0, 0.5];
        let opts = OdeOptions::default();
        let stats = integrate(
            |_, y, dy| {
                dy[0] = -1e6 * (y[0] - y[1]);
                dy[1] = 1.0 - y[1];
            },
            0.0,
            1.0,
            &mut y,
            &opts,
            &[],
            |_, _, _| {},
        )
        .unwrap();
        let exact1 = 1.0 - 0.5 * (-1.0f64).exp();
        assert!((y[1] - exact1).abs() < 1e-9);
        assert!((y[0] - y[1]).abs() < 1e-6);
        assert!(stats.steps_accepted > 100);
    }

    #[test]
    fn max_steps_failure_carries_statistics() {
        let opts = OdeOptions {
            max_steps: 10,
            ..Default::default()
        };
        let mut y = vec![1.0];
        let err = integrate(
            |t, _, dy| dy[0] = (50.0 * t).sin() * 1e4,
            0.0,
            100.0,
            &mut y,
            &opts,
            &[],
            |_, _, _| {},
        )
        .unwrap_err();
        assert_eq!(err.steps_accepted + err.steps_rejected, 10);
        assert!(err.to_string().contains("max_steps"));
    }
}
