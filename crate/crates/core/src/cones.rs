//! Tangent and radial cones of the feasible set `{z : u_ℓ = ψ_{ℓ-1}(θ, u_1, …, u_{ℓ-1})}`.

use serde::Serialize;

use crate::algebra::{evaluate, Jet, JetAlg};
use crate::dcalc::{layer_jets, ray_leaf};
use crate::error::{check_len, Error, Result};
use crate::model::{CompositeProblem, Direction, Point};
use crate::scalar::{norm_inf, Scalar};
use crate::tolerances::{FEASIBILITY_TOL, TANGENT_TOL};

/// Completes `d_θ` to the unique tangent direction: `d_{u_ℓ} = ψ′_{ℓ-1}(θ, u; d_θ, d_u)`
/// computed layer by layer at the stored `u` of `z`.
pub fn lift_direction<T: Scalar>(
    problem: &CompositeProblem<T>,
    z: &Point<T>,
    d_theta: &[T],
) -> Result<Direction<T>> {
    problem.check_point(z)?;
    check_len("direction", problem.n_params(), d_theta.len())?;
    let mut d = Point::zeros(problem.n_params(), problem.dims());
    d.theta = d_theta.to_vec();
    complete_from(problem, z, &mut d, 1);
    Ok(d)
}

/// Overwrites `d_{u_ℓ}` for `ℓ ≥ from` by the linearized layer equations.
pub(crate) fn complete_from<T: Scalar>(
    problem: &CompositeProblem<T>,
    z: &Point<T>,
    d: &mut Direction<T>,
    from: usize,
) {
    for l in from..=problem.depth() {
        let mut alg = JetAlg::new(d.norm_inf());
        let vals: Vec<T> = problem
            .layer(l)
            .iter()
            .map(|e| {
                let j: Jet<T> = evaluate(e, &mut alg, &mut |leaf| ray_leaf(z, d, leaf));
                j.d1
            })
            .collect();
        d.u[l - 1] = vals;
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConeMembership<T> {
    pub tangent: bool,
    /// `‖d_{u_ℓ} − ψ′_{ℓ-1}‖∞` per layer.
    pub layer_violation: Vec<T>,
    pub max_violation: T,
    /// First layer (1-based) whose violation exceeds the tolerance.
    pub first_violating_layer: Option<usize>,
}

fn require_feasible<T: Scalar>(problem: &CompositeProblem<T>, z: &Point<T>) -> Result<()> {
    let r = problem.max_residual(z)?;
    if r > T::lit(FEASIBILITY_TOL) {
        return Err(Error::Infeasible {
            max_residual: r.f64(),
        });
    }
    Ok(())
}

/// Tests `d ∈ 𝒯(z)` by the linearized layer equations. Requires `z` feasible.
pub fn tangent_membership<T: Scalar>(
    problem: &CompositeProblem<T>,
    z: &Point<T>,
    d: &Direction<T>,
) -> Result<ConeMembership<T>> {
    require_feasible(problem, z)?;
    problem.check_point(d)?;
    let layer_violation: Vec<T> = (1..=problem.depth())
        .map(|l| {
            let jets = layer_jets(problem, z, d, l);
            jets.iter()
                .zip(&d.u[l - 1])
                .fold(T::zero(), |m, (j, &du)| m.max((du - j.d1).abs()))
        })
        .collect();
    let tol = T::lit(TANGENT_TOL) * (T::one() + d.norm_inf());
    let first_violating_layer = layer_violation.iter().position(|&v| v > tol).map(|i| i + 1);
    Ok(ConeMembership {
        tangent: first_violating_layer.is_none(),
        max_violation: layer_violation.iter().fold(T::zero(), |m, &v| m.max(v)),
        layer_violation,
        first_violating_layer,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RadialMembership<T> {
    /// `None` when membership cannot be decided for this layer structure.
    pub member: Option<bool>,
    pub tangent: bool,
    /// `‖ψ⁽²⁾_{ℓ-1}‖∞` per layer along the lifted ray.
    pub second_order: Vec<T>,
    /// `(τ, max residual of z + τd)` on the step grid.
    pub grid: Vec<(T, T)>,
    pub reason: String,
}

/// Step grid used for explicit feasibility of `z + τ d`.
pub const RADIAL_GRID: [f64; 8] = [1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6, 1e-7, 1e-8];

/// Tests `d` against the radial cone `{d : z + τ_k d ∈ F for some τ_k ↓ 0}`.
///
/// A tangent `d` with nonzero second-order layer terms is never radial. For
/// affine, piecewise-affine and bilinear layers the remaining cases are
/// decided by feasibility on [`RADIAL_GRID`]; otherwise the answer is `None`.
pub fn radial_membership<T: Scalar>(
    problem: &CompositeProblem<T>,
    z: &Point<T>,
    d: &Direction<T>,
) -> Result<RadialMembership<T>> {
    let tan = tangent_membership(problem, z, d)?;
    if !tan.tangent {
        return Ok(RadialMembership {
            member: Some(false),
            tangent: false,
            second_order: Vec::new(),
            grid: Vec::new(),
            reason: format!(
                "not tangent (layer {})",
                tan.first_violating_layer.unwrap_or_default()
            ),
        });
    }
    let second_order: Vec<T> = (1..=problem.depth())
        .map(|l| {
            layer_jets(problem, z, d, l)
                .iter()
                .fold(T::zero(), |m, j| m.max(j.d2.abs()))
        })
        .collect();
    let n2 = d.norm_inf();
    let tol2 = T::lit(TANGENT_TOL) * (T::one() + n2 * n2);
    if let Some(l) = second_order.iter().position(|&s| s > tol2) {
        return Ok(RadialMembership {
            member: Some(false),
            tangent: true,
            second_order,
            grid: Vec::new(),
            reason: format!("second-order term of layer {} is nonzero", l + 1),
        });
    }
    let grid: Vec<(T, T)> = RADIAL_GRID
        .iter()
        .map(|&t| {
            let t = T::lit(t);
            let r = problem
                .residuals(&z.axpy(t, d))
                .map(|r| r.iter().fold(T::zero(), |m, b| m.max(norm_inf(b))))
                .unwrap_or_else(|_| T::infinity());
            (t, r)
        })
        .collect();
    if !problem.has_polyhedral_layers() {
        return Ok(RadialMembership {
            member: None,
            tangent: true,
            second_order,
            grid,
            reason: "layer maps outside the affine/piecewise-affine/bilinear class".into(),
        });
    }
    let scale = T::one() + z.norm_inf() + d.norm_inf();
    let ftol = T::lit(1e-10) * scale;
    let tail_ok = grid
        .iter()
        .filter(|(t, _)| *t <= T::lit(1e-6))
        .all(|&(_, r)| r <= ftol);
    Ok(RadialMembership {
        member: Some(tail_ok),
        tangent: true,
        second_order,
        grid,
        reason: if tail_ok {
            "z + τd feasible on the tail of the step grid".into()
        } else {
            "z + τd infeasible for small τ".into()
        },
    })
}
