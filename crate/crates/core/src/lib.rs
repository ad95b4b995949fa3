//! Directional derivatives, tangent and radial cones, exact ℓ1 penalties and
//! d-stationarity checks for layered nonsmooth composite problems.
//!
//! The library is generic over the scalar type; [`Problem`] and [`Problem32`]
//! fix it to `f64` and `f32`.

pub mod algebra;
pub mod cones;
pub mod dcalc;
pub mod error;
pub mod expr;
pub mod instances;
pub mod model;
pub mod oracle;
pub mod penalty;
pub mod rnn;
pub mod scalar;
pub mod scenarios;
pub(crate) mod search;
pub mod solver;
pub mod stationarity;
pub mod tolerances;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Version stamped on every serialized report.
pub const SCHEMA_VERSION: u32 = 1;

pub type Problem = model::CompositeProblem<f64>;
pub type Problem32 = model::CompositeProblem<f32>;
pub type Point = model::Point<f64>;
pub type Point32 = model::Point<f32>;
pub type Expr = expr::Expr<f64>;
pub type Expr32 = expr::Expr<f32>;
