//! Least-squares fitting of model parameters to measured current traces by
//! derivative-free simplex (Nelder-Mead) minimization. Positive physical
//! parameters are searched in log space, which both enforces positivity and
//! equalizes scales across decades.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::SimConfig;

#[derive(Debug, Error)]
pub enum FitError {
    #[error("need at least {min} data points, got {got}")]
    TooFewPoints { min: usize, got: usize },
    #[error("the free-parameter subset is empty")]
    NoFreeParameters,
    #[error("initial configuration is invalid:\n{0}")]
    InvalidInitial(String),
}

/// Parameters the fitter may vary. Each maps to one field of [`SimConfig`];
/// all but `BiasShiftMv` are positive and fitted in log space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitParameter {
    TemperatureK,
    BarrierR0LeftMohm,
    BarrierR0RightMohm,
    BarrierSlopeLeftMv,
    BarrierSlopeRightMv,
    CapLeftAf,
    CapRightAf,
    AmpBlMv,
    AmpBrMv,
    BiasShiftMv,
}

impl FitParameter {
    pub const ALL: [FitParameter; 10] = [
        FitParameter::TemperatureK,
        FitParameter::BarrierR0LeftMohm,
        FitParameter::BarrierR0RightMohm,
        FitParameter::BarrierSlopeLeftMv,
        FitParameter::BarrierSlopeRightMv,
        FitParameter::CapLeftAf,
        FitParameter::CapRightAf,
        FitParameter::AmpBlMv,
        FitParameter::AmpBrMv,
        FitParameter::BiasShiftMv,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            FitParameter::TemperatureK => "temperature_k",
            FitParameter::BarrierR0LeftMohm => "barrier_r0_left_mohm",
            FitParameter::BarrierR0RightMohm => "barrier_r0_right_mohm",
            FitParameter::BarrierSlopeLeftMv => "barrier_slope_left_mv",
            FitParameter::BarrierSlopeRightMv => "barrier_slope_right_mv",
            FitParameter::CapLeftAf => "cap_left_af",
            FitParameter::CapRightAf => "cap_right_af",
            FitParameter::AmpBlMv => "amp_bl_mv",
            FitParameter::AmpBrMv => "amp_br_mv",
            FitParameter::BiasShiftMv => "bias_shift_mv",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|p| p.name() == s)
    }

    fn log_scaled(&self) -> bool {
        !matches!(self, FitParameter::BiasShiftMv)
    }

    fn get(&self, cfg: &SimConfig) -> f64 {
        match self {
            FitParameter::TemperatureK => cfg.device.temperature_k,
            FitParameter::BarrierR0LeftMohm => cfg.device.barrier_left.r0_mohm,
            FitParameter::BarrierR0RightMohm => cfg.device.barrier_right.r0_mohm,
            FitParameter::BarrierSlopeLeftMv => cfg.device.barrier_left.v_slope_mv,
            FitParameter::BarrierSlopeRightMv => cfg.device.barrier_right.v_slope_mv,
            FitParameter::CapLeftAf => cfg.device.c_l_af,
            FitParameter::CapRightAf => cfg.device.c_r_af,
            FitParameter::AmpBlMv => cfg.drive.amp_bl_mv,
            FitParameter::AmpBrMv => cfg.drive.amp_br_mv,
            FitParameter::BiasShiftMv => cfg.device.bias_shift_mv,
        }
    }

    fn set(&self, cfg: &mut SimConfig, value: f64) {
        match self {
            FitParameter::TemperatureK => cfg.device.temperature_k = value,
            FitParameter::BarrierR0LeftMohm => cfg.device.barrier_left.r0_mohm = value,
            FitParameter::BarrierR0RightMohm => cfg.device.barrier_right.r0_mohm = value,
            FitParameter::BarrierSlopeLeftMv => cfg.device.barrier_left.v_slope_mv = value,
            FitParameter::BarrierSlopeRightMv => cfg.device.barrier_right.v_slope_mv = value,
            FitParameter::CapLeftAf => cfg.device.c_l_af = value,
            FitParameter::CapRightAf => cfg.device.c_r_af = value,
            FitParameter::AmpBlMv => cfg.drive.amp_bl_mv = value,
            FitParameter::AmpBrMv => cfg.drive.amp_br_mv = value,
            FitParameter::BiasShiftMv => cfg.device.bias_shift_mv = value,
        }
    }

    fn to_internal(&self, external: f64) -> f64 {
        if self.log_scaled() {
            external.ln()
        } else {
            external
        }
    }

    fn from_internal(&self, internal: f64) -> f64 {
        if self.log_scaled() {
            internal.exp()
        } else {
            internal
        }
    }
}

/// Map a simplex vertex back onto a configuration.
pub(crate) fn apply_vector(base: &SimConfig, free: &[FitParameter], x: &[f64]) -> SimConfig {
    let mut cfg = base.clone();
    for (param, &xi) in free.iter().zip(x) {
        param.set(&mut cfg, param.from_internal(xi));
    }
    cfg
}

pub(crate) fn extract_vector(cfg: &SimConfig, free: &[FitParameter]) -> Vec<f64> {
    free.iter().map(|p| p.to_internal(p.get(cfg))).collect()
}

#[derive(Debug, Clone)]
pub struct NelderMeadOptions {
    pub max_evaluations: usize,
    /// Relative initial simplex displacement per coordinate.
    pub initial_step: f64,
    /// Convergence: spread of vertex objective values.
    pub f_tol: f64,
    /// Convergence: simplex diameter in coordinate space.
    pub x_tol: f64,
}

impl Default for NelderMeadOptions {
    fn default() -> Self {
        Self {
            max_evaluations: 400,
            initial_step: 0.25,
            f_tol: 1e-24,
            x_tol: 1e-7,
        }
    }
}

#[derive(Debug, Clone)]
pub struct NelderMeadResult {
    pub x_min: Vec<f64>,
    pub f_min: f64,
    pub evaluations: usize,
    pub converged: bool,
    /// Best objective value after each iteration.
    pub history: Vec<f64>,
}

/// Standard Nelder-Mead with reflection 1, expansion 2, contraction 1/2,
/// shrink 1/2. Returns the best-so-far vertex whether or not the
/// convergence test was met within the evaluation budget.
pub fn nelder_mead(
    mut f: impl FnMut(&[f64]) -> f64,
    x0: &[f64],
    opts: &NelderMeadOptions,
) -> NelderMeadResult {
    let dim = x0.len();
    assert!(dim >= 1);
    let (alpha, gamma, rho, sigma) = (1.0, 2.0, 0.5, 0.5);

    let mut evaluations = 0usize;
    let mut eval = |x: &[f64], evals: &mut usize| -> f64 {
        *evals += 1;
        let v = f(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };

    // Initial simplex: x0 plus a displaced vertex per coordinate.
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(dim + 1);
    let fx0 = eval(x0, &mut evaluations);
    simplex.push((x0.to_vec(), fx0));
    for i in 0..dim {
        let mut x = x0.to_vec();
        let step = if x[i].abs() > 1e-12 {
            opts.initial_step * x[i].abs()
        } else {
            opts.initial_step
        };
        x[i] += step;
        let fx = eval(&x, &mut evaluations);
        simplex.push((x, fx));
    }

    let mut history = Vec::new();
    let mut converged = false;

    while evaluations < opts.max_evaluations {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        history.push(simplex[0].1);

        let f_spread = simplex[dim].1 - simplex[0].1;
        let x_spread = (0..dim)
            .map(|i| {
                simplex
                    .iter()
                    .map(|(x, _)| (x[i] - simplex[0].0[i]).abs())
                    .fold(0.0, f64::max)
            })
            .fold(0.0, f64::max);
        if f_spread <= opts.f_tol * (1.0 + simplex[0].1.abs()) && x_spread <= opts.x_tol {
            converged = true;
            break;
        }

        // Centroid of all but the worst vertex.
        let mut centroid = vec![0.0; dim];
        for (x, _) in simplex.iter().take(dim) {
            for (c, xi) in centroid.iter_mut().zip(x) {
                *c += xi / dim as f64;
            }
        }
        let worst = simplex[dim].clone();

        let reflected: Vec<f64> = centroid
            .iter()
            .zip(&worst.0)
            .map(|(c, w)| c + alpha * (c - w))
            .collect();
        let f_reflected = eval(&reflected, &mut evaluations);

        if f_reflected < simplex[0].1 {
            let expanded: Vec<f64> = centroid
                .iter()
                .zip(&reflected)
                .map(|(c, r)| c + gamma * (r - c))
                .collect();
            let f_expanded = eval(&expanded, &mut evaluations);
            simplex[dim] = if f_expanded < f_reflected {
                (expanded, f_expanded)
            } else {
                (reflected, f_reflected)
            };
        } else if f_reflected < simplex[dim - 1].1 {
            simplex[dim] = (reflected, f_reflected);
        } else {
            let contracted: Vec<f64> = centroid
                .iter()
                .zip(&worst.0)
                .map(|(c, w)| c + rho * (w - c))
                .collect();
            let f_contracted = eval(&contracted, &mut evaluations);
            if f_contracted < worst.1 {
                simplex[dim] = (contracted, f_contracted);
            } else {
                // Shrink toward the best vertex.
                let best = simplex[0].0.clone();
                for vertex in simplex.iter_mut().skip(1) {
                    for (xi, bi) in vertex.0.iter_mut().zip(&best) {
                        *xi = bi + sigma * (*xi - bi);
                    }
                    vertex.1 = eval(&vertex.0, &mut evaluations);
                }
            }
        }
    }

    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    history.push(simplex[0].1);
    NelderMeadResult {
        x_min: simplex[0].0.clone(),
        f_min: simplex[0].1,
        evaluations,
        converged,
        history,
    }
}
