//! Time-dependent tunnel resistances and orthodox sequential tunneling
//! rates for the four event types (in/out x left/right junction).

use thiserror::Error;

use crate::constants::{BOLTZMANN, ELEMENTARY_CHARGE};
use crate::dynamics::ChargeWindow;
use crate::electrostatics::{free_energy_change, InstantaneousBias, TunnelEvent};
use crate::params::{BarrierLaw, DeviceParams, DriveConfig};

#[derive(Debug, Error, PartialEq)]
pub enum RateError {
    #[error("tunnel resistance must be > 0, got {0}")]
    NonPositiveResistance(f64),
    #[error("temperature must be > 0, got {0}")]
    NonPositiveTemperature(f64),
}

/// Instantaneous tunnel resistance of a barrier at gate voltage `v_gate`.
pub fn barrier_resistance(law: &BarrierLaw, v_gate: f64) -> f64 {
    law.resistance(v_gate)
}

/// Dimensionless thermal kernel `x / (exp(x) - 1)` of the orthodox rate.
///
/// The removable singularity at x = 0 is evaluated by series; far uphill the
/// kernel underflows to 0, far downhill it goes over to the linear
/// asymptote -x. Stable over the whole f64 range of x.
fn thermal_kernel(x: f64) -> f64 {
    if x.abs() < 1e-4 {
        // x/(e^x - 1) = 1 - x/2 + x^2/12 + O(x^4)
        1.0 - 0.5 * x + x * x / 12.0
    } else if x > 708.0 {
        0.0
    } else if x < -708.0 {
        -x
    } else {
        x / x.exp_m1()
    }
}

/// Orthodox sequential tunneling rate in 1/seconds:
///
/// ```text
/// Γ(ΔF) = 1/(e^2 R_T) * ΔF / (exp(ΔF / k_B T) - 1)
/// ```
///
/// with Γ(0) = k_B T / (e^2 R_T).
pub fn tunnel_rate(delta_f: f64, r_t: f64, temperature: f64) -> Result<f64, RateError> {
    if !(r_t > 0.0) {
        return Err(RateError::NonPositiveResistance(r_t));
    }
    if !(temperature > 0.0) {
        return Err(RateError::NonPositiveTemperature(temperature));
    }
    Ok(tunnel_rate_raw(delta_f, r_t, BOLTZMANN * temperature))
}

/// Unchecked rate kernel used on the hot paths; `kt` is k_B T in joules.
#[inline]
pub(crate) fn tunnel_rate_raw(delta_f: f64, r_t: f64, kt: f64) -> f64 {
    let prefactor = kt / (ELEMENTARY_CHARGE * ELEMENTARY_CHARGE * r_t);
    prefactor * thermal_kernel(delta_f / kt)
}

/// Rates of the four event types out of one charge state, 1/seconds.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StateRates {
    pub in_left: f64,
    pub out_left: f64,
    pub in_right: f64,
    pub out_right: f64,
}

impl StateRates {
    pub fn get(&self, event: TunnelEvent) -> f64 {
        match event {
            TunnelEvent::InLeft => self.in_left,
            TunnelEvent::OutLeft => self.out_left,
            TunnelEvent::InRight => self.in_right,
            TunnelEvent::OutRight => self.out_right,
        }
    }

    /// Total exit rate out of the state.
    pub fn total(&self) -> f64 {
        self.in_left + self.out_left + self.in_right + self.out_right
    }
}

/// The four time-dependent rates for every charge state of a truncation
/// window, evaluated at one instant.
///
/// Events that would leave the window are assigned rate zero, which keeps
/// the master-equation generator conservative.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionRates {
    pub window: ChargeWindow,
    pub states: Vec<StateRates>,
}

impl TransitionRates {
    pub fn zeroed(window: ChargeWindow) -> Self {
        Self {
            window,
            states: vec![StateRates::default(); window.len()],
        }
    }

    pub fn state(&self, n: i32) -> &StateRates {
        &self.states[self.window.index_of(n)]
    }
}

/// Fill `out` with the rates for every state of the window under the bias
/// snapshot `bias`. Junction resistances are taken from the barrier laws at
/// the snapshot's barrier voltages.
pub(crate) fn rates_from_bias(
    p: &DeviceParams,
    bias: &InstantaneousBias,
    out: &mut TransitionRates,
) {
    let kt = BOLTZMANN * p.temperature;
    let r_l = p.barrier_left.resistance(bias.v_barrier_left);
    let r_r = p.barrier_right.resistance(bias.v_barrier_right);
    let window = out.window;

    for (idx, rates) in out.states.iter_mut().enumerate() {
        let n = window.n_min + idx as i32;
        let at_top = n == window.n_max;
        let at_bottom = n == window.n_min;

        rates.in_left = if at_top {
            0.0
        } else {
            tunnel_rate_raw(free_energy_change(p, n, bias, TunnelEvent::InLeft), r_l, kt)
        };
        rates.in_right = if at_top {
            0.0
        } else {
            tunnel_rate_raw(free_energy_change(p, n, bias, TunnelEvent::InRight), r_r, kt)
        };
        rates.out_left = if at_bottom {
            0.0
        } else {
            tunnel_rate_raw(free_energy_change(p, n, bias, TunnelEvent::OutLeft), r_l, kt)
        };
        rates.out_right = if at_bottom {
            0.0
        } else {
            tunnel_rate_raw(free_energy_change(p, n, bias, TunnelEvent::OutRight), r_r, kt)
        };
    }
}

/// Transition rates for every state of `window` at time `t` under the
/// periodic drive: free-energy changes from the instantaneous gate
/// waveform, resistances from the barrier laws at the instantaneous
/// barrier voltages.
pub fn rates_at(
    p: &DeviceParams,
    d: &DriveConfig,
    window: ChargeWindow,
    t: f64,
) -> TransitionRates {
    let mut out = TransitionRates::zeroed(window);
    let bias = InstantaneousBias::at_time(p, d, t);
    rates_from_bias(p, &bias, &mut out);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::SimConfig;
    use crate::constants::ELEMENTARY_CHARGE as E;
    use crate::params::charging_energy;
    use proptest::prelude::*;

    #[test]
    fn barrier_law_reference_point() {
        let law = BarrierLaw {
            r0: 1e9,
            v_ref: 0.61,
            v_slope: 5e-3,
            r_floor: 2.6e5,
        };
        assert!((barrier_resistance(&law, 0.61) - 1e9).abs() / 1e9 < 1e-12);
    }

    #[test]
    fn barrier_law_slope_definition() {
        let law = BarrierLaw {
            r0: 1e9,
            v_ref: 0.61,
            v_slope: 5e-3,
            r_floor: 2.6e5,
        };
        let r = barrier_resistance(&law, 0.61 + 5e-3);
        assert!((r - 1e9 / std::f64::consts::E).abs() / r < 1e-12);
    }

    #[test]
    fn barrier_law_clamps_at_floor() {
        let law = BarrierLaw {
            r0: 1e9,
            v_ref: 0.61,
            v_slope: 5e-3,
            r_floor: 2.6e5,
        };
        assert_eq!(barrier_resistance(&law, 100.0), 2.6e5);
    }

    #[test]
    fn tunnel_rate_at_zero_energy() {
        // ΔF = 0, T = 1.5 K, R = 1 MΩ -> k_B T/(e^2 R) = 8.0678e8 1/s
        let rate = tunnel_rate(0.0, 1e6, 1.5).unwrap();
        assert!((rate - 8.0678e8).abs() / 8.0678e8 < 1e-4, "rate = {rate}");
    }

    #[test]
    fn tunnel_rate_downhill_asymptote() {
        let t = 1.5;
        let kt = BOLTZMANN * t;
        let df = -10.0 * kt;
        let rate = tunnel_rate(df, 1e6, t).unwrap();
        let asymptote = -df / (E * E * 1e6);
        assert!((rate - asymptote).abs() / asymptote < 5e-5);
    }

    #[test]
    fn tunnel_rate_rejects_bad_parameters() {
        assert!(matches!(
            tunnel_rate(0.0, 0.0, 1.5),
            Err(RateError::NonPositiveResistance(_))
        ));
        assert!(matches!(
            tunnel_rate(0.0, 1e6, -1.0),
            Err(RateError::NonPositiveTemperature(_))
        ));
    }

    #[test]
    fn tunnel_rate_extreme_arguments_stay_finite() {
        let t = 0.3;
        let kt = BOLTZMANN * t;
        let uphill = tunnel_rate(500.0 * kt, 1e6, t).unwrap();
        assert!(uphill >= 0.0 && uphill < 1e-200);
        let downhill = tunnel_rate(-500.0 * kt, 1e6, t).unwrap();
        let asymptote = 500.0 * kt / (E * E * 1e6);
        assert!((downhill - asymptote).abs() / asymptote < 1e-12);
    }

    proptest! {
        /// Detailed balance: Γ(-ΔF) = exp(ΔF/kT) Γ(ΔF).
        #[test]
        fn detailed_balance_identity(x in -80.0..80.0f64) {
            let t = 0.3;
            let kt = BOLTZMANN * t;
            let df = x * kt;
            let fwd = tunnel_rate(df, 1e6, t).unwrap();
            let bwd = tunnel_rate(-df, 1e6, t).unwrap();
            let expected = x.exp() * fwd;
            prop_assert!((bwd - expected).abs() <= 1e-9 * expected.abs().max(1e-300));
        }

        /// Resistance never increases with gate voltage.
        #[test]
        fn barrier_law_non_increasing(v1 in 0.0..1.0f64, dv in 0.0..0.5f64) {
            let law = BarrierLaw { r0: 1e9, v_ref: 0.61, v_slope: 5e-3, r_floor: 2.6e5 };
            prop_assert!(barrier_resistance(&law, v1 + dv) <= barrier_resistance(&law, v1));
        }
    }

    /// Build reference params with the polarization charge nulled so n = 0
    /// is the exact blockade symmetry point.
    fn blockade_setup() -> (DeviceParams, InstantaneousBias) {
        let mut p = SimConfig::reference().device_params();
        p.temperature = 0.3;
        let neutral = InstantaneousBias::new(&p, 0.0, 0.0, 0.0, 0.0, 0.598, 0.654);
        p.offset_charge = -neutral.polarization_charge / E;
        let bias = InstantaneousBias::new(&p, 0.0, 0.0, 0.0, 0.0, 0.598, 0.654);
        (p, bias)
    }

    #[test]
    fn deep_blockade_suppresses_all_rates() {
        // E_C/k_B T ~ 54 at 300 mK: every event out of n = 0 is suppressed
        // far below the zero-energy rate scale of its junction.
        let (p, bias) = blockade_setup();
        assert!(bias.polarization_charge.abs() < 1e-25);
        let window = ChargeWindow::new(-4, 4);
        let mut tr = TransitionRates::zeroed(window);
        rates_from_bias(&p, &bias, &mut tr);

        let kt = BOLTZMANN * p.temperature;
        let scale_l = kt / (E * E * p.barrier_left.resistance(bias.v_barrier_left));
        let scale_r = kt / (E * E * p.barrier_right.resistance(bias.v_barrier_right));
        let s = tr.state(0);
        assert!(s.in_left < 1e-6 * scale_l);
        assert!(s.out_left < 1e-6 * scale_l);
        assert!(s.in_right < 1e-6 * scale_r);
        assert!(s.out_right < 1e-6 * scale_r);
    }

    #[test]
    fn open_right_barrier_dominates_at_drive_peak() {
        // At V_BR max / V_BL min the in-rate ratio equals the resistance
        // ratio, because both junctions see the same ΔF at equal lead
        // potentials.
        let cfg = SimConfig::reference();
        let p = cfg.device_params();
        let mut d = cfg.drive_config();
        d.v_sd = 0.0;
        let mut p0 = p.clone();
        p0.bias_shift = 0.0;
        let t_quarter = 0.25 * d.period();
        let bias = InstantaneousBias::at_time(&p0, &d, t_quarter);
        let window = ChargeWindow::new(110, 124);
        let mut tr = TransitionRates::zeroed(window);
        rates_from_bias(&p0, &bias, &mut tr);

        let r_l = p0.barrier_left.resistance(bias.v_barrier_left);
        let r_r = p0.barrier_right.resistance(bias.v_barrier_right);
        let s = tr.state(117);
        assert!(s.in_right > 1e6 * s.in_left, "right barrier should be open");
        let ratio = s.in_right / s.in_left;
        assert!((ratio - r_l / r_r).abs() / (r_l / r_r) < 1e-9);
    }

    #[test]
    fn rates_scale_linearly_with_conductance() {
        let cfg = SimConfig::reference();
        let mut p = cfg.device_params();
        let d = cfg.drive_config();
        let window = ChargeWindow::new(110, 124);
        let t = 0.3 * d.period();
        let base = rates_at(&p, &d, window, t);
        p.barrier_left.r0 *= 2.0;
        p.barrier_right.r0 *= 2.0;
        p.barrier_left.r_floor *= 2.0;
        p.barrier_right.r_floor *= 2.0;
        let halved = rates_at(&p, &d, window, t);
        for (a, b) in base.states.iter().zip(&halved.states) {
            for ev in TunnelEvent::ALL {
                let (ra, rb) = (a.get(ev), b.get(ev));
                if ra > 0.0 {
                    assert!((rb - 0.5 * ra).abs() / ra < 1e-12);
                }
            }
        }
    }

    #[test]
    fn rates_are_periodic_in_time() {
        let cfg = SimConfig::reference();
        let p = cfg.device_params();
        let d = cfg.drive_config();
        let window = ChargeWindow::new(110, 124);
        for k in 0..20 {
            let t = 0.05 * k as f64 * d.period();
            let a = rates_at(&p, &d, window, t);
            let b = rates_at(&p, &d, window, t + d.period());
            for (sa, sb) in a.states.iter().zip(&b.states) {
                for ev in TunnelEvent::ALL {
                    let (ra, rb) = (sa.get(ev), sb.get(ev));
                    assert!((ra - rb).abs() <= 1e-9 * ra.abs().max(1e-300));
                }
            }
        }
    }

    #[test]
    fn detailed_balance_holds_for_window_rates() {
        // rate(n -> n+1)/rate(n+1 -> n) through the same junction equals
        // exp(-ΔF_in/kT).
        let cfg = SimConfig::reference();
        let p = cfg.device_params();
        let d = cfg.drive_config();
        let window = ChargeWindow::new(110, 124);
        let kt = BOLTZMANN * p.temperature;
        for k in 0..7 {
            let t = 0.13 * k as f64 * d.period();
            let tr = rates_at(&p, &d, window, t);
            let bias = InstantaneousBias::at_time(&p, &d, t);
            for n in window.n_min..window.n_max {
                for (ev_in, ev_out) in [
                    (TunnelEvent::InLeft, TunnelEvent::OutLeft),
                    (TunnelEvent::InRight, TunnelEvent::OutRight),
                ] {
                    let up = tr.state(n).get(ev_in);
                    let down = tr.state(n + 1).get(ev_out);
                    if up.min(down) < 1e-250 {
                        continue; // underflowed deep-blockade pair
                    }
                    let df = free_energy_change(&p, n, &bias, ev_in);
                    let lhs = up / down;
                    let rhs = (-df / kt).exp();
                    assert!(
                        (lhs - rhs).abs() <= 1e-9 * rhs,
                        "detailed balance violated at n={n} t={t}"
                    );
                }
            }
        }
        let _ = charging_energy(&p);
    }
}
