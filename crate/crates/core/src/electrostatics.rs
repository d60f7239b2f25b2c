//! Island electrostatics: charging energy of a charge state and the free
//! energy change of each tunneling event.
//!
//! Sign conventions, fixed by the algebraic identities in the tests below:
//! the island carries charge `-n e + q_p` where `n` counts excess electrons
//! and `q_p` is the polarization charge induced by the leads and gates. An
//! "in" event moves one electron from a lead onto the island (`n -> n + 1`).
//! With the source at `v_sd + bias_shift` and the drain grounded, a positive
//! bias drives electrons in through the right (drain) junction and out
//! through the left, i.e. positive conventional current from source to
//! drain.

use crate::constants::ELEMENTARY_CHARGE;
use crate::params::{gate_waveform, DeviceParams, DriveConfig};

/// Excess-electron number on the island.
///
/// The same integer plays two roles in this crate: the instantaneous island
/// occupancy here, and the number of electrons shuttled per drive cycle in
/// the quantized current `I = n e f_p` reported by the experiments module.
pub type ChargeState = i32;

/// One sequential-tunneling event type: an electron crossing one junction
/// in one direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TunnelEvent {
    /// Electron enters the island from the left (source) lead.
    InLeft,
    /// Electron leaves the island to the left (source) lead.
    OutLeft,
    /// Electron enters the island from the right (drain) lead.
    InRight,
    /// Electron leaves the island to the right (drain) lead.
    OutRight,
}

impl TunnelEvent {
    pub const ALL: [TunnelEvent; 4] = [
        TunnelEvent::InLeft,
        TunnelEvent::OutLeft,
        TunnelEvent::InRight,
        TunnelEvent::OutRight,
    ];

    /// Change of the island electron number caused by this event.
    pub fn delta_n(self) -> i32 {
        match self {
            TunnelEvent::InLeft | TunnelEvent::InRight => 1,
            TunnelEvent::OutLeft | TunnelEvent::OutRight => -1,
        }
    }

    /// True for events that cross the left junction.
    pub fn is_left(self) -> bool {
        matches!(self, TunnelEvent::InLeft | TunnelEvent::OutLeft)
    }

    pub fn label(self) -> &'static str {
        match self {
            TunnelEvent::InLeft => "in_left",
            TunnelEvent::OutLeft => "out_left",
            TunnelEvent::InRight => "in_right",
            TunnelEvent::OutRight => "out_right",
        }
    }
}

/// Snapshot of all terminal potentials at one instant, with the induced
/// polarization charge precomputed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InstantaneousBias {
    /// Left (source) lead potential, volts.
    pub v_left: f64,
    /// Right (drain) lead potential, volts.
    pub v_right: f64,
    /// Gate voltages at this instant, volts.
    pub v_top: f64,
    pub v_plunger: f64,
    pub v_barrier_left: f64,
    pub v_barrier_right: f64,
    /// q_p = c_l v_l + c_r v_r + Σ_g c_g v_g + q_offset, coulombs.
    pub polarization_charge: f64,
}

impl InstantaneousBias {
    /// Build a bias snapshot from explicit terminal voltages, computing the
    /// polarization charge (including the device offset charge).
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        p: &DeviceParams,
        v_left: f64,
        v_right: f64,
        v_top: f64,
        v_plunger: f64,
        v_barrier_left: f64,
        v_barrier_right: f64,
    ) -> Self {
        let polarization_charge = p.c_l * v_left
            + p.c_r * v_right
            + p.c_top * v_top
            + p.c_pl * v_plunger
            + p.c_bl * v_barrier_left
            + p.c_br * v_barrier_right
            + p.offset_charge * ELEMENTARY_CHARGE;
        Self {
            v_left,
            v_right,
            v_top,
            v_plunger,
            v_barrier_left,
            v_barrier_right,
            polarization_charge,
        }
    }

    /// Bias snapshot under the periodic drive at time `t`, using the lead
    /// potential convention of [`DeviceParams::lead_potentials`].
    pub fn at_time(p: &DeviceParams, d: &DriveConfig, t: f64) -> Self {
        let (v_bl, v_br) = gate_waveform(d, t);
        let (v_l, v_r) = p.lead_potentials(d.v_sd);
        Self::new(p, v_l, v_r, d.v_top, d.v_pl, v_bl, v_br)
    }

    /// Potential of the lead involved in `event`, volts.
    pub fn lead_potential(&self, event: TunnelEvent) -> f64 {
        if event.is_left() {
            self.v_left
        } else {
            self.v_right
        }
    }
}

/// Electrostatic energy of the island holding `n` excess electrons:
/// `U(n) = (-n e + q_p)^2 / (2 C_Σ)` in joules.
pub fn island_energy(p: &DeviceParams, n: ChargeState, bias: &InstantaneousBias) -> f64 {
    let q = -(n as f64) * ELEMENTARY_CHARGE + bias.polarization_charge;
    q * q / (2.0 * p.c_sigma())
}

/// Free-energy change of one tunneling event from charge state `n`:
///
/// ```text
/// ΔF_in_j(n)  = U(n+1) - U(n) + e v_j
/// ΔF_out_j(n) = U(n-1) - U(n) - e v_j
/// ```
///
/// where `v_j` is the potential of the lead involved. Negative ΔF means the
/// event is energetically downhill.
pub fn free_energy_change(
    p: &DeviceParams,
    n: ChargeState,
    bias: &InstantaneousBias,
    event: TunnelEvent,
) -> f64 {
    let n_after = n + event.delta_n();
    let du = island_energy(p, n_after, bias) - island_energy(p, n, bias);
    let work = ELEMENTARY_CHARGE * bias.lead_potential(event);
    if event.delta_n() > 0 {
        du + work
    } else {
        du - work
    }
}
