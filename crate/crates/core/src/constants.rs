//! Physical constants (2019 SI exact values) shared by every module.

/// Elementary charge e in coulombs. Exact since the 2019 SI redefinition.
pub const ELEMENTARY_CHARGE: f64 = 1.602_176_634e-19;

/// Boltzmann constant k_B in joules per kelvin. Exact since 2019.
pub const BOLTZMANN: f64 = 1.380_649e-23;

/// Planck constant h in joule seconds. Exact since 2019.
pub const PLANCK: f64 = 6.626_070_15e-34;

/// Resistance quantum h/e^2 in ohms (~25.813 kΩ).
///
/// Used only as a validity floor for tunnel resistances: the sequential
/// (lowest-order) tunneling picture requires barriers opaque on this scale.
pub const RESISTANCE_QUANTUM: f64 = PLANCK / (ELEMENTARY_CHARGE * ELEMENTARY_CHARGE);
