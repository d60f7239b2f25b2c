//! External configuration: the on-disk TOML schema with human-scale units
//! (mV, aF, K, MHz, MΩ) and its conversion to the SI-unit parameter types.
//!
//! Misspelled keys are hard errors: every section rejects unknown fields,
//! and the deserializer's message lists the valid keys.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::constants::RESISTANCE_QUANTUM;
use crate::params::{BarrierLaw, DeviceParams, DriveConfig};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("config parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("config serialize error: {0}")]
    Serialize(#[from] toml::ser::Error),
    #[error("override `{key}`: {message}")]
    BadOverride { key: String, message: String },
}

fn default_r_floor_mohm() -> f64 {
    // 10 h/e^2: keeps the sequential-tunneling picture self-consistent.
    10.0 * RESISTANCE_QUANTUM / 1e6
}

fn default_phase_bl_rad() -> f64 {
    std::f64::consts::PI
}

fn default_bias_shift_mv() -> f64 {
    0.1
}

/// One barrier's exponential resistance law, external units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BarrierSection {
    /// Resistance at the reference voltage, MΩ.
    pub r0_mohm: f64,
    /// Reference gate voltage, mV.
    pub v_ref_mv: f64,
    /// Exponential slope voltage, mV.
    pub v_slope_mv: f64,
    /// Clamped minimum resistance, MΩ. Defaults to 10 h/e^2.
    #[serde(default = "default_r_floor_mohm")]
    pub r_floor_mohm: f64,
}

impl BarrierSection {
    fn to_law(&self) -> BarrierLaw {
        BarrierLaw {
            r0: self.r0_mohm * 1e6,
            v_ref: self.v_ref_mv * 1e-3,
            v_slope: self.v_slope_mv * 1e-3,
            r_floor: self.r_floor_mohm * 1e6,
        }
    }
}

/// Device electrostatics and temperature, external units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeviceSection {
    pub c_l_af: f64,
    pub c_r_af: f64,
    pub c_top_af: f64,
    pub c_pl_af: f64,
    pub c_bl_af: f64,
    pub c_br_af: f64,
    pub temperature_k: f64,
    /// Source-drain bias offset, mV. Defaults to the amplifier input
    /// offset of 0.1 mV.
    #[serde(default = "default_bias_shift_mv")]
    pub bias_shift_mv: f64,
    /// Background island charge in units of e.
    #[serde(default)]
    pub offset_charge_e: f64,
    pub barrier_left: BarrierSection,
    pub barrier_right: BarrierSection,
}

/// Barrier-gate drive and static operating point, external units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriveSection {
    pub f_p_mhz: f64,
    pub mean_bl_mv: f64,
    pub mean_br_mv: f64,
    /// Peak-to-peak drive amplitudes, mV.
    pub amp_bl_mv: f64,
    pub amp_br_mv: f64,
    /// Drive phases, radians. The defaults (π, 0) give the antiphase
    /// capture/release cycle.
    #[serde(default = "default_phase_bl_rad")]
    pub phase_bl_rad: f64,
    #[serde(default)]
    pub phase_br_rad: f64,
    pub v_top_mv: f64,
    pub v_pl_mv: f64,
    pub v_sd_mv: f64,
}

/// Full simulator configuration: device + drive, external units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub device: DeviceSection,
    pub drive: DriveSection,
}

impl SimConfig {
    /// Reference operating point.
    ///
    /// Paper-anchored values: total capacitance (via E_C = 1.4 meV), barrier
    /// means 598/654 mV, 120 mV peak-to-peak drive, f_p = 60 MHz, bias shift
    /// 0.1 mV, top gate 1.271 V, temperatures 0.3/1.5 K and the barrier
    /// turn-on reference voltages 610/650 mV. Chosen values: the capacitance
    /// split, the barrier r0/slope magnitudes (tuned for clean quantization)
    /// and the plunger voltage (tuned to center the n = 1 plateau).
    pub fn reference() -> Self {
        Self {
            device: DeviceSection {
                c_l_af: 15.0,
                c_r_af: 15.0,
                c_top_af: 6.0,
                c_pl_af: 1.22,
                c_bl_af: 10.0,
                c_br_af: 10.0,
                temperature_k: 0.3,
                bias_shift_mv: 0.1,
                offset_charge_e: 0.0,
                barrier_left: BarrierSection {
                    r0_mohm: 12_000.0,
                    v_ref_mv: 610.0,
                    v_slope_mv: 5.0,
                    r_floor_mohm: default_r_floor_mohm(),
                },
                barrier_right: BarrierSection {
                    r0_mohm: 250_000.0,
                    v_ref_mv: 650.0,
                    v_slope_mv: 5.0,
                    r_floor_mohm: default_r_floor_mohm(),
                },
            },
            drive: DriveSection {
                f_p_mhz: 60.0,
                mean_bl_mv: 598.0,
                mean_br_mv: 654.0,
                amp_bl_mv: 120.0,
                amp_br_mv: 120.0,
                phase_bl_rad: default_phase_bl_rad(),
                phase_br_rad: 0.0,
                v_top_mv: 1271.0,
                v_pl_mv: -1175.0,
                v_sd_mv: 3.1,
            },
        }
    }

    /// Reference variant with the electron temperature raised to 1.5 K.
    pub fn reference_hot() -> Self {
        let mut cfg = Self::reference();
        cfg.device.temperature_k = 1.5;
        cfg
    }

    /// Reference variant with ten-fold faster barriers, for operation at
    /// drive frequencies above ~120 MHz.
    pub fn reference_fast_barriers() -> Self {
        let mut cfg = Self::reference();
        cfg.device.barrier_left.r0_mohm /= 10.0;
        cfg.device.barrier_right.r0_mohm /= 10.0;
        cfg
    }

    pub fn device_params(&self) -> DeviceParams {
        let d = &self.device;
        DeviceParams {
            c_l: d.c_l_af * 1e-18,
            c_r: d.c_r_af * 1e-18,
            c_top: d.c_top_af * 1e-18,
            c_pl: d.c_pl_af * 1e-18,
            c_bl: d.c_bl_af * 1e-18,
            c_br: d.c_br_af * 1e-18,
            temperature: d.temperature_k,
            barrier_left: d.barrier_left.to_law(),
            barrier_right: d.barrier_right.to_law(),
            bias_shift: d.bias_shift_mv * 1e-3,
            offset_charge: d.offset_charge_e,
        }
    }

    pub fn drive_config(&self) -> DriveConfig {
        let d = &self.drive;
        DriveConfig {
            f_p: d.f_p_mhz * 1e6,
            mean_bl: d.mean_bl_mv * 1e-3,
            mean_br: d.mean_br_mv * 1e-3,
            amp_bl: d.amp_bl_mv * 1e-3,
            amp_br: d.amp_br_mv * 1e-3,
            phase_bl: d.phase_bl_rad,
            phase_br: d.phase_br_rad,
            v_top: d.v_top_mv * 1e-3,
            v_pl: d.v_pl_mv * 1e-3,
            v_sd: d.v_sd_mv * 1e-3,
        }
    }

    pub fn from_toml_str(s: &str) -> Result<Self, ConfigError> {
        Ok(toml::from_str(s)?)
    }

    pub fn to_toml_string(&self) -> Result<String, ConfigError> {
        Ok(toml::to_string_pretty(self)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml_str(&text)
    }
}

/// Apply one `--set path.to.key=value` override to a parsed TOML document.
/// Values are parsed as float, then bool, then kept as string.
pub fn apply_override(doc: &mut toml::Value, key: &str, raw: &str) -> Result<(), ConfigError> {
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(ConfigError::BadOverride {
            key: key.into(),
            message: "empty path segment".into(),
        });
    }
    let mut node = doc;
    for part in &parts[..parts.len() - 1] {
        let table = node
            .as_table_mut()
            .ok_or_else(|| ConfigError::BadOverride {
                key: key.into(),
                message: format!("`{part}` is not a table"),
            })?;
        node = table
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(Default::default()));
    }
    let table = node
        .as_table_mut()
        .ok_or_else(|| ConfigError::BadOverride {
            key: key.into(),
            message: "parent is not a table".into(),
        })?;
    let value = if let Ok(f) = raw.parse::<f64>() {
        toml::Value::Float(f)
    } else if let Ok(b) = raw.parse::<bool>() {
        toml::Value::Boolean(b)
    } else {
        toml::Value::String(raw.to_string())
    };
    table.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

/// Parse a config from TOML text with a list of dotted-path overrides
/// applied before deserialization, so misspelled override keys fail the
/// same unknown-field check as misspelled file keys.
pub fn load_with_overrides(
    text: &str,
    overrides: &[(String, String)],
) -> Result<SimConfig, ConfigError> {
    let mut doc: toml::Value = toml::from_str(text)?;
    for (key, value) in overrides {
        apply_override(&mut doc, key, value)?;
    }
    Ok(doc.try_into()?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_round_trips_through_toml() {
        let cfg = SimConfig::reference();
        let text = cfg.to_toml_string().unwrap();
        let back = SimConfig::from_toml_str(&text).unwrap();
        assert_eq!(cfg, back);
    }

    #[test]
    fn unknown_key_is_a_hard_error_listing_valid_keys() {
        let mut text = SimConfig::reference().to_toml_string().unwrap();
        text.push_str("\n[typo_section]\nx = 1\n");
        let err = SimConfig::from_toml_str(&text).unwrap_err().to_string();
        assert!(err.contains("typo_section"), "error was: {err}");

        let text2 = SimConfig::reference()
            .to_toml_string()
            .unwrap()
            .replace("f_p_mhz", "f_p_mzh");
        let err2 = SimConfig::from_toml_str(&text2).unwrap_err().to_string();
        assert!(err2.contains("f_p_mzh"), "error was: {err2}");
        assert!(err2.contains("f_p_mhz"), "valid keys missing from: {err2}");
    }

    #[test]
    fn overrides_apply_to_dotted_paths() {
        let text = SimConfig::reference().to_toml_string().unwrap();
        let cfg = load_with_overrides(
            &text,
            &[
                ("drive.f_p_mhz".into(), "120".into()),
                ("device.temperature_k".into(), "1.5".into()),
            ],
        )
        .unwrap();
        assert_eq!(cfg.drive.f_p_mhz, 120.0);
        assert_eq!(cfg.device.temperature_k, 1.5);
    }

    #[test]
    fn misspelled_override_key_is_rejected() {
        let text = SimConfig::reference().to_toml_string().unwrap();
        let err = load_with_overrides(&text, &[("drive.f_p_mzh".into(), "60".into())]);
        assert!(err.is_err());
    }

    #[test]
    fn defaults_fill_optional_fields() {
        let text = r#"
            [device]
            c_l_af = 15.0
            c_r_af = 15.0
            c_top_af = 6.0
            c_pl_af = 1.22
            c_bl_af = 10.0
            c_br_af = 10.0
            temperature_k = 0.3
            [device.barrier_left]
            r0_mohm = 12000.0
            v_ref_mv = 610.0
            v_slope_mv = 5.0
            [device.barrier_right]
            r0_mohm = 250000.0
            v_ref_mv = 650.0
            v_slope_mv = 5.0
            [drive]
            f_p_mhz = 60.0
            mean_bl_mv = 598.0
            mean_br_mv = 654.0
            amp_bl_mv = 120.0
            amp_br_mv = 120.0
            v_top_mv = 1271.0
            v_pl_mv = -1175.0
            v_sd_mv = 3.1
        "#;
        let cfg = SimConfig::from_toml_str(text).unwrap();
        assert_eq!(cfg.device.bias_shift_mv, 0.1);
        assert_eq!(cfg.drive.phase_bl_rad, std::f64::consts::PI);
        assert_eq!(cfg.drive.phase_br_rad, 0.0);
        let floor = cfg.device.barrier_left.r_floor_mohm * 1e6;
        assert!((floor - 10.0 * RESISTANCE_QUANTUM).abs() < 1e-6);
    }

    #[test]
    fn si_conversion_magnitudes() {
        let cfg = SimConfig::reference();
        let p = cfg.device_params();
        assert!((p.c_sigma() - 57.22e-18).abs() < 1e-22);
        assert_eq!(p.temperature, 0.3);
        assert_eq!(p.bias_shift, 1e-4);
        let d = cfg.drive_config();
        assert_eq!(d.f_p, 60e6);
        assert_eq!(d.amp_bl, 0.12);
    }
}
