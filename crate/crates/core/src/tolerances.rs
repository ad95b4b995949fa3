//! Default numerical tolerances.

/// Max-norm residual below which a point counts as feasible.
pub const FEASIBILITY_TOL: f64 = 1e-9;
/// Value gap below which the two branches of a max node are tied.
pub const KINK_TOL: f64 = 1e-12;
/// Max violation of the linearized layer equations for a tangent direction.
pub const TANGENT_TOL: f64 = 1e-9;
/// Directional derivatives above `-STATIONARITY_TOL` count as nonnegative.
pub const STATIONARITY_TOL: f64 = 1e-8;
/// `|f′| ≤ CRITICAL_SLACK` places a direction in the critical cone.
pub const CRITICAL_SLACK: f64 = 1e-8;
/// Inflation of the level set when bounding moduli.
pub const MODULI_EPS: f64 = 1e-3;
