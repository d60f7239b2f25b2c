//! Simulator and analysis toolkit for a gate-driven single-electron
//! shuttle: a single quantum-dot island between two leads, driven by
//! antiphase sinusoidal barrier-gate voltages and modeled by sequential
//! (orthodox) tunneling with gate-voltage-dependent tunnel resistances.
//!
//! The crate is organized bottom-up:
//!
//! - [`constants`], [`params`]: physical constants, device/drive parameter
//!   types, waveforms and validation.
//! - [`electrostatics`]: island energy and tunneling free-energy changes.
//! - [`tunneling`]: barrier resistance laws and orthodox rates.
//! - [`dynamics`]: master-equation propagation, periodic steady state and
//!   dc current extraction, static (no-rf) stationary solver.
//! - [`kmc`]: kinetic Monte Carlo trajectory sampling of the same rate
//!   model, the independent statistical oracle.
//! - [`experiments`]: sweep drivers (bias traces, gate maps, frequency
//!   scans), plateau metrology and parameter fitting.
//! - [`config`]: external TOML configuration in mV/aF/K/MHz/MΩ units.

pub mod config;
pub mod constants;
pub mod dynamics;
pub mod electrostatics;
pub mod experiments;
pub mod fit;
pub mod kmc;
mod linalg;
pub mod ode;
pub mod params;
pub mod tunneling;

pub use config::SimConfig;
pub use dynamics::{
    periodic_steady_state, static_current, ChargeStateSpace, ChargeWindow, PeriodicSolution,
    StaticGates,
};
pub use params::{charging_energy, gate_waveform, validate_params, DeviceParams, DriveConfig};

/// Crate version, embedded in run manifests and experiment snapshots.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
