//! Device and drive parameter types, charging energy, gate waveforms and
//! parameter validation.
//!
//! All quantities here are SI (farads, volts, kelvin, hertz, ohms, seconds).
//! The external config layer ([`crate::config`]) owns the human-friendly
//! mV/aF/MHz/MΩ units and converts on the way in.

use crate::constants::{ELEMENTARY_CHARGE, RESISTANCE_QUANTUM};

/// Exponential tunnel-barrier resistance law.
///
/// The barrier resistance decreases by a factor e for every `v_slope` volts
/// of gate-voltage increase and is clamped from below at `r_floor`:
///
/// ```text
/// R(v) = max(r_floor, r0 * exp(-(v - v_ref) / v_slope))
/// ```
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BarrierLaw {
    /// Resistance at the reference gate voltage, ohms.
    pub r0: f64,
    /// Reference gate voltage, volts.
    pub v_ref: f64,
    /// Exponential slope voltage, volts.
    pub v_slope: f64,
    /// Minimum clamped resistance, ohms. Must stay at or above the
    /// resistance quantum for the sequential-tunneling picture to hold.
    pub r_floor: f64,
}

impl BarrierLaw {
    /// Instantaneous tunnel resistance at gate voltage `v_gate`.
    pub fn resistance(&self, v_gate: f64) -> f64 {
        let r = self.r0 * (-(v_gate - self.v_ref) / self.v_slope).exp();
        r.max(self.r_floor)
    }
}

/// Electrostatic and tunneling parameters of the five-terminal device:
/// one island, two leads (left = source, right = drain) and four gates.
#[derive(Debug, Clone, PartialEq)]
pub struct DeviceParams {
    /// Junction capacitance island <-> source lead, farads.
    pub c_l: f64,
    /// Junction capacitance island <-> drain lead, farads.
    pub c_r: f64,
    /// Gate capacitance island <-> top gate, farads.
    pub c_top: f64,
    /// Gate capacitance island <-> plunger gate, farads.
    pub c_pl: f64,
    /// Gate capacitance island <-> left barrier gate, farads.
    pub c_bl: f64,
    /// Gate capacitance island <-> right barrier gate, farads.
    pub c_br: f64,
    /// Electron temperature shared by both leads and the island, kelvin.
    pub temperature: f64,
    /// Resistance law of the left (source-side) barrier.
    pub barrier_left: BarrierLaw,
    /// Resistance law of the right (drain-side) barrier.
    pub barrier_right: BarrierLaw,
    /// Offset added to the source-drain bias, volts. Models the
    /// non-vanishing input voltage of the current amplifier on the drain.
    pub bias_shift: f64,
    /// Static background charge on the island in units of e, dimensionless.
    /// Absorbable into the plunger voltage; kept as an explicit knob.
    pub offset_charge: f64,
}

impl DeviceParams {
    /// Total island capacitance C_Σ = sum of all six capacitances.
    pub fn c_sigma(&self) -> f64 {
        self.c_l + self.c_r + self.c_top + self.c_pl + self.c_bl + self.c_br
    }

    /// Lead potentials `(v_left, v_right)` for a given source-drain bias.
    ///
    /// The source lead sits at `v_sd + bias_shift`; the drain lead is the
    /// virtual ground of the current amplifier and stays at 0 V.
    pub fn lead_potentials(&self, v_sd: f64) -> (f64, f64) {
        (v_sd + self.bias_shift, 0.0)
    }
}

/// Charging energy E_C = e^2 / (2 C_Σ) in joules.
pub fn charging_energy(p: &DeviceParams) -> f64 {
    ELEMENTARY_CHARGE * ELEMENTARY_CHARGE / (2.0 * p.c_sigma())
}

/// Periodic barrier-gate drive plus the static gate and bias operating point.
#[derive(Debug, Clone, PartialEq)]
pub struct DriveConfig {
    /// Drive frequency f_p, hertz.
    pub f_p: f64,
    /// Mean left/right barrier gate voltages, volts.
    pub mean_bl: f64,
    pub mean_br: f64,
    /// Peak-to-peak drive amplitudes, volts. The sinusoid amplitude is
    /// half of these.
    pub amp_bl: f64,
    pub amp_br: f64,
    /// Drive phases, radians. Default is antiphase: phase_bl = phase_br + π.
    pub phase_bl: f64,
    pub phase_br: f64,
    /// Static top-gate voltage, volts.
    pub v_top: f64,
    /// Static plunger-gate voltage, volts.
    pub v_pl: f64,
    /// Source-drain bias, volts (before the device bias shift).
    pub v_sd: f64,
}

impl DriveConfig {
    /// Drive period 1/f_p in seconds.
    pub fn period(&self) -> f64 {
        1.0 / self.f_p
    }
}

/// Instantaneous barrier gate voltages `(v_bl, v_br)` at time `t`.
///
/// Each barrier follows `mean + (amp/2) * sin(2π f_p t + phase)`; with the
/// default phases (π, 0) the right barrier peaks at a quarter period and the
/// left at three quarters, which is the shuttle's capture/release ordering.
pub fn gate_waveform(d: &DriveConfig, t: f64) -> (f64, f64) {
    let omega_t = 2.0 * std::f64::consts::PI * d.f_p * t;
    let v_bl = d.mean_bl + 0.5 * d.amp_bl * (omega_t + d.phase_bl).sin();
    let v_br = d.mean_br + 0.5 * d.amp_br * (omega_t + d.phase_br).sin();
    (v_bl, v_br)
}

/// Outcome of [`validate_params`]: a list of human-readable violations,
/// empty when the configuration is usable.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub violations: Vec<String>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    fn check(&mut self, ok: bool, msg: impl Into<String>) {
        if !ok {
            self.violations.push(msg.into());
        }
    }
}

impl std::fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.is_valid() {
            write!(f, "ok")
        } else {
            for v in &self.violations {
                writeln!(f, "- {v}")?;
            }
            Ok(())
        }
    }
}

fn check_barrier(report: &mut ValidationReport, law: &BarrierLaw, side: &str) {
    report.check(
        law.r0.is_finite() && law.r0 > 0.0,
        format!("{side} barrier r0 must be finite and > 0"),
    );
    report.check(
        law.v_slope.is_finite() && law.v_slope > 0.0,
        format!("{side} barrier v_slope must be finite and > 0"),
    );
    report.check(
        law.v_ref.is_finite(),
        format!("{side} barrier v_ref must be finite"),
    );
    report.check(
        law.r_floor >= RESISTANCE_QUANTUM,
        format!("{side} barrier r_floor below resistance quantum"),
    );
}

/// Validate device and drive parameters.
///
/// Report-style: never fails, returns the (possibly empty) list of
/// violations. Checks positivity invariants plus numeric sanity (no NaN or
/// infinite fields anywhere).
pub fn validate_params(p: &DeviceParams, d: &DriveConfig) -> ValidationReport {
    let mut r = ValidationReport::default();

    for (name, c) in [
        ("c_l", p.c_l),
        ("c_r", p.c_r),
        ("c_top", p.c_top),
        ("c_pl", p.c_pl),
        ("c_bl", p.c_bl),
        ("c_br", p.c_br),
    ] {
        r.check(c.is_finite() && c > 0.0, format!("capacitance {name} must be > 0"));
    }
    r.check(
        p.temperature.is_finite() && p.temperature > 0.0,
        "temperature must be > 0",
    );
    r.check(p.bias_shift.is_finite(), "bias_shift must be finite");
    r.check(p.offset_charge.is_finite(), "offset_charge must be finite");
    check_barrier(&mut r, &p.barrier_left, "left");
    check_barrier(&mut r, &p.barrier_right, "right");

    let e_c = charging_energy(p);
    r.check(
        e_c.is_finite() && e_c > 0.0,
        "charging energy e^2/(2 c_sigma) must be positive",
    );

    r.check(d.f_p.is_finite() && d.f_p > 0.0, "f_p must be > 0");
    r.check(
        d.amp_bl.is_finite() && d.amp_bl >= 0.0,
        "amp_bl must be >= 0",
    );
    r.check(
        d.amp_br.is_finite() && d.amp_br >= 0.0,
        "amp_br must be >= 0",
    );
    for (name, v) in [
        ("mean_bl", d.mean_bl),
        ("mean_br", d.mean_br),
        ("phase_bl", d.phase_bl),
        ("phase_br", d.phase_br),
        ("v_top", d.v_top),
        ("v_pl", d.v_pl),
        ("v_sd", d.v_sd),
    ] {
        r.check(v.is_finite(), format!("{name} must be finite"));
    }

    r
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::SimConfig;
    use crate::constants::ELEMENTARY_CHARGE as E;

    #[test]
    fn reference_config_validates_clean() {
        let cfg = SimConfig::reference();
        let report = validate_params(&cfg.device_params(), &cfg.drive_config());
        assert!(report.is_valid(), "unexpected violations: {report}");
        // c_sigma derived from E_C = 1.4 meV by inversion
        assert!((cfg.device_params().c_sigma() - 5.722e-17).abs() / 5.722e-17 < 1e-3);
    }

    #[test]
    fn zero_temperature_is_reported() {
        let cfg = SimConfig::reference();
        let mut p = cfg.device_params();
        p.temperature = 0.0;
        let report = validate_params(&p, &cfg.drive_config());
        assert!(report
            .violations
            .iter()
            .any(|v| v.contains("temperature must be > 0")));
    }

    #[test]
    fn r_floor_below_resistance_quantum_is_reported() {
        let cfg = SimConfig::reference();
        let mut p = cfg.device_params();
        p.barrier_left.r_floor = 1e3; // 1 kΩ < h/e^2
        let report = validate_params(&p, &cfg.drive_config());
        assert!(report
            .violations
            .iter()
            .any(|v| v.contains("r_floor below resistance quantum")));
    }

    #[test]
    fn nan_fields_are_reported() {
        let cfg = SimConfig::reference();
        let mut d = cfg.drive_config();
        d.v_sd = f64::NAN;
        let report = validate_params(&cfg.device_params(), &d);
        assert!(!report.is_valid());
    }

    #[test]
    fn charging_energy_matches_paper_anchor() {
        // c_sigma = 57.22 aF -> E_C = 1.4 meV = 2.243e-22 J
        let cfg = SimConfig::reference();
        let e_c = charging_energy(&cfg.device_params());
        assert!((e_c - 2.243e-22).abs() / 2.243e-22 < 1e-3);
        let e_c_mev = e_c / E * 1e3;
        assert!((e_c_mev - 1.4).abs() < 1e-3, "E_C = {e_c_mev} meV");
    }

    #[test]
    fn charging_energy_scales_inversely_with_capacitance() {
        let cfg = SimConfig::reference();
        let p = cfg.device_params();
        let mut doubled = p.clone();
        doubled.c_l *= 2.0;
        doubled.c_r *= 2.0;
        doubled.c_top *= 2.0;
        doubled.c_pl *= 2.0;
        doubled.c_bl *= 2.0;
        doubled.c_br *= 2.0;
        let ratio = charging_energy(&doubled) / charging_energy(&p);
        assert!((ratio - 0.5).abs() < 1e-12);
    }

    #[test]
    fn charging_energy_unit_self_consistency() {
        // c_sigma = e^2/2 farads gives E_C = 1 joule exactly.
        let cfg = SimConfig::reference();
        let mut p = cfg.device_params();
        let c_each = E * E / 2.0 / 6.0;
        p.c_l = c_each;
        p.c_r = c_each;
        p.c_top = c_each;
        p.c_pl = c_each;
        p.c_bl = c_each;
        p.c_br = c_each;
        assert!((charging_energy(&p) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn waveform_at_t0_returns_means() {
        let cfg = SimConfig::reference();
        let d = cfg.drive_config(); // default phases (π, 0)
        let (v_bl, v_br) = gate_waveform(&d, 0.0);
        assert!((v_bl - d.mean_bl).abs() < 1e-15);
        assert!((v_br - d.mean_br).abs() < 1e-15);
    }

    #[test]
    fn waveform_right_barrier_peak() {
        // mean_br = 654 mV, peak-to-peak 150 mV, phase 0:
        // at t = 1/(4 f_p) the right barrier reaches 729 mV.
        let cfg = SimConfig::reference();
        let mut d = cfg.drive_config();
        d.mean_br = 0.654;
        d.amp_br = 0.150;
        d.phase_br = 0.0;
        let (_, v_br) = gate_waveform(&d, 0.25 / d.f_p);
        assert!((v_br - 0.729).abs() < 1e-12);
    }

    #[test]
    fn antiphase_waveforms_sum_to_means() {
        let cfg = SimConfig::reference();
        let mut d = cfg.drive_config();
        d.amp_bl = d.amp_br; // equal amplitudes, antiphase
        for k in 0..100 {
            let t = k as f64 * 0.013 / d.f_p;
            let (v_bl, v_br) = gate_waveform(&d, t);
            assert!((v_bl + v_br - (d.mean_bl + d.mean_br)).abs() < 1e-12);
        }
    }
}
