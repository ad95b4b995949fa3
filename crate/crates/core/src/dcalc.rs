//! First- and second-order directional derivatives.
//!
//! Derivatives are propagated as jets along the ray `x + τd`; at a max node
//! whose branches tie in value the branch with the larger first derivative
//! wins, and at a tie in both the larger second derivative wins. This is exact
//! for compositions of smooth maps with pointwise maxima.

use serde::Serialize;

use crate::algebra::{evaluate, Jet, JetAlg};
use crate::error::{check_len, Error, Result};
use crate::expr::{Expr, Leaf};
use crate::model::{CompositeProblem, Direction, Point};
use crate::scalar::{dot, Scalar};
use crate::tolerances::{FEASIBILITY_TOL, KINK_TOL};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Order {
    First,
    Second,
}

impl Order {
    pub fn from_int(k: u8) -> Result<Self> {
        match k {
            1 => Ok(Order::First),
            2 => Ok(Order::Second),
            _ => Err(Error::InvalidParameter(format!("order must be 1 or 2, got {k}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DdValue<T> {
    pub value: T,
    pub first: T,
    /// Present when the second order was requested.
    pub second: Option<T>,
    /// Whether some max node was tied at the base point.
    pub at_kink: bool,
}

impl<T: Scalar> DdValue<T> {
    fn from_jet(j: Jet<T>, order: Order, at_kink: bool) -> Self {
        DdValue {
            value: j.v,
            first: j.d1,
            second: (order == Order::Second).then_some(j.d2),
            at_kink,
        }
    }
}

/// Directional derivatives of a standalone expression whose parameters are
/// the coordinates of `x`.
pub fn dd_expr<T: Scalar>(e: &Expr<T>, x: &[T], d: &[T], order: Order) -> Result<DdValue<T>> {
    check_len("direction", x.len(), d.len())?;
    let mut bad = None;
    e.for_each_leaf(&mut |l| match l {
        Leaf::Param(j) if j >= x.len() => bad = Some(format!("parameter {j} out of range")),
        Leaf::Input { .. } => bad = Some("standalone expressions cannot read layer inputs".into()),
        _ => {}
    });
    if let Some(m) = bad {
        return Err(Error::InvalidModel(m));
    }
    let mut alg = JetAlg::new(crate::scalar::norm_inf(d));
    let j = evaluate(e, &mut alg, &mut |l| match l {
        Leaf::Param(k) => Jet::new(x[k], d[k], T::zero()),
        Leaf::Input { .. } => unreachable!(),
    });
    Ok(DdValue::from_jet(j, order, alg.at_kink))
}

/// Directional derivatives of an expression over `(θ, u)` along a ray in z-space.
pub fn dd_expr_at<T: Scalar>(
    e: &Expr<T>,
    z: &Point<T>,
    d: &Direction<T>,
    order: Order,
) -> DdValue<T> {
    let mut alg = JetAlg::new(d.norm_inf());
    let j = evaluate(e, &mut alg, &mut |l| ray_leaf(z, d, l));
    DdValue::from_jet(j, order, alg.at_kink)
}

pub(crate) fn ray_leaf<T: Scalar>(z: &Point<T>, d: &Direction<T>, l: Leaf) -> Jet<T> {
    match l {
        Leaf::Param(j) => Jet::new(z.theta[j], d.theta[j], T::zero()),
        Leaf::Input { layer, index } => Jet::new(
            z.u[layer - 1][index],
            d.u[layer - 1][index],
            T::zero(),
        ),
    }
}

/// Jets of `ψ_{ℓ-1}` at `z` along the z-space ray `d`, for one layer.
pub fn layer_jets<T: Scalar>(
    problem: &CompositeProblem<T>,
    z: &Point<T>,
    d: &Direction<T>,
    layer: usize,
) -> Vec<Jet<T>> {
    let mut alg = JetAlg::new(d.norm_inf());
    problem
        .layer(layer)
        .iter()
        .map(|e| evaluate(e, &mut alg, &mut |l| ray_leaf(z, d, l)))
        .collect()
}

fn check_pair<T: Scalar>(problem: &CompositeProblem<T>, z: &Point<T>, d: &Direction<T>) -> Result<()> {
    problem.check_point(z)?;
    problem.check_point(d).map_err(|e| match e {
        Error::Dimension {
            what,
            expected,
            found,
        } => Error::Dimension {
            what: format!("direction {what}"),
            expected,
            found,
        },
        other => other,
    })
}

/// Directional derivatives of `F(z) = g(u) + λ‖θ‖²`.
pub fn dd_objective<T: Scalar>(
    problem: &CompositeProblem<T>,
    z: &Point<T>,
    d: &Direction<T>,
    order: Order,
) -> Result<DdValue<T>> {
    check_pair(problem, z, d)?;
    let g = dd_expr_at(problem.outer(), z, d, order);
    let lam = problem.lambda();
    let two = T::lit(2.0);
    Ok(DdValue {
        value: g.value + lam * dot(&z.theta, &z.theta),
        first: g.first + two * lam * dot(&z.theta, &d.theta),
        second: g.second.map(|s| s + two * lam * dot(&d.theta, &d.theta)),
        at_kink: g.at_kink,
    })
}

/// Classification of residual components at `z` (and, given a direction, of
/// the zero-residual components by the sign of `d_u − ψ′`). Indices are 0-based.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct LayerIndexSets {
    pub plus: Vec<usize>,
    pub minus: Vec<usize>,
    pub zero: Vec<usize>,
    pub zero_plus: Vec<usize>,
    pub zero_minus: Vec<usize>,
    pub zero_zero: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IndexSets {
    /// One entry per layer, in order `ℓ = 1..L`.
    pub layers: Vec<LayerIndexSets>,
}

/// Per-layer residual data along a ray.
struct ResidualJets<T> {
    rho: Vec<T>,
    slope: Vec<T>,
    curv: Vec<T>,
}

fn residual_jets<T: Scalar>(
    problem: &CompositeProblem<T>,
    z: &Point<T>,
    d: &Direction<T>,
    layer: usize,
) -> ResidualJets<T> {
    let jets = layer_jets(problem, z, d, layer);
    let u = &z.u[layer - 1];
    let du = &d.u[layer - 1];
    ResidualJets {
        rho: jets.iter().zip(u).map(|(j, &x)| x - j.v).collect(),
        slope: jets.iter().zip(du).map(|(j, &x)| x - j.d1).collect(),
        curv: jets.iter().map(|j| j.d2).collect(),
    }
}

fn classify<T: Scalar>(r: &ResidualJets<T>, with_dir: bool, dtol: T) -> LayerIndexSets {
    let tol = T::lit(FEASIBILITY_TOL);
    let mut s = LayerIndexSets::default();
    for (i, &rho) in r.rho.iter().enumerate() {
        if rho > tol {
            s.plus.push(i);
        } else if rho < -tol {
            s.minus.push(i);
        } else {
            s.zero.push(i);
            if with_dir {
                let h = r.slope[i];
                if h > dtol {
                    s.zero_plus.push(i);
                } else if h < -dtol {
                    s.zero_minus.push(i);
                } else {
                    s.zero_zero.push(i);
                }
            }
        }
    }
    s
}

fn deriv_tol<T: Scalar>(d: &Direction<T>) -> T {
    T::lit(KINK_TOL) * d.norm_inf().max(T::one())
}

/// Index sets of the residuals at `z`; the zero set is refined when `d` is given.
pub fn index_sets<T: Scalar>(
    problem: &CompositeProblem<T>,
    z: &Point<T>,
    d: Option<&Direction<T>>,
) -> Result<IndexSets> {
    problem.check_point(z)?;
    let zero_dir;
    let (dir, with_dir) = match d {
        Some(d) => {
            check_pair(problem, z, d)?;
            (d, true)
        }
        None => {
            zero_dir = Point::zeros(problem.n_params(), problem.dims());
            (&zero_dir, false)
        }
    };
    let dtol = deriv_tol(dir);
    Ok(IndexSets {
        layers: (1..=problem.depth())
            .map(|l| classify(&residual_jets(problem, z, dir, l), with_dir, dtol))
            .collect(),
    })
}

/// Directional derivatives of the penalized objective `Θ`, assembled from the
/// residual index sets.
pub fn dd_penalized<T: Scalar>(
    problem: &CompositeProblem<T>,
    z: &Point<T>,
    d: &Direction<T>,
    beta: &[T],
    order: Order,
) -> Result<DdValue<T>> {
    problem.check_beta(beta)?;
    let f = dd_objective(problem, z, d, order)?;
    let dtol = deriv_tol(d);
    let (mut value, mut first, mut second) = (f.value, f.first, f.second.unwrap_or_default());
    let mut at_kink = f.at_kink;
    for l in 1..=problem.depth() {
        let r = residual_jets(problem, z, d, l);
        let s = classify(&r, true, dtol);
        let b = beta[l - 1];
        let abs_rho: T = r.rho.iter().map(|x| x.abs()).sum();
        value += b * abs_rho;
        let lin = s.plus.iter().map(|&i| r.slope[i]).sum::<T>()
            - s.minus.iter().map(|&i| r.slope[i]).sum::<T>()
            + s.zero.iter().map(|&i| r.slope[i].abs()).sum::<T>();
        first += b * lin;
        let curv = -s
            .plus
            .iter()
            .chain(&s.zero_plus)
            .map(|&i| r.curv[i])
            .sum::<T>()
            + s.minus
                .iter()
                .chain(&s.zero_minus)
                .map(|&i| r.curv[i])
                .sum::<T>()
            + s.zero_zero.iter().map(|&i| r.curv[i].abs()).sum::<T>();
        second += b * curv;
        at_kink |= !s.zero.is_empty();
    }
    Ok(DdValue {
        value,
        first,
        second: (order == Order::Second).then_some(second),
        at_kink,
    })
}

/// Jets of every layer output along the θ-space ray `θ + τ d_θ`, with the
/// layers composed (the curve `τ ↦ lift(θ + τ d_θ)`).
pub fn nested_jets<T: Scalar>(
    problem: &CompositeProblem<T>,
    theta: &[T],
    d_theta: &[T],
) -> Result<(Vec<Vec<Jet<T>>>, bool)> {
    problem.check_theta(theta)?;
    check_len("direction", problem.n_params(), d_theta.len())?;
    let mut alg = JetAlg::new(crate::scalar::norm_inf(d_theta));
    let mut out: Vec<Vec<Jet<T>>> = Vec::with_capacity(problem.depth());
    for l in 1..=problem.depth() {
        let comps: Vec<Jet<T>> = problem
            .layer(l)
            .iter()
            .map(|e| {
                evaluate(e, &mut alg, &mut |leaf| match leaf {
                    Leaf::Param(j) => Jet::new(theta[j], d_theta[j], T::zero()),
                    Leaf::Input { layer, index } => out[layer - 1][index],
                })
            })
            .collect();
        if comps.iter().any(|j| !j.v.is_finite()) {
            return Err(Error::NonFinite { layer: l });
        }
        out.push(comps);
    }
    Ok((out, alg.at_kink))
}

/// Directional derivatives of the reduced objective `Ψ(θ) + λ‖θ‖²`.
pub fn dd_reduced<T: Scalar>(
    problem: &CompositeProblem<T>,
    theta: &[T],
    d_theta: &[T],
    order: Order,
) -> Result<DdValue<T>> {
    let (layers, kink) = nested_jets(problem, theta, d_theta)?;
    let mut alg = JetAlg::new(crate::scalar::norm_inf(d_theta));
    let g = evaluate(problem.outer(), &mut alg, &mut |leaf| match leaf {
        Leaf::Input { layer, index } => layers[layer - 1][index],
        Leaf::Param(_) => unreachable!("outer loss reads no parameters"),
    });
    let lam = problem.lambda();
    let two = T::lit(2.0);
    Ok(DdValue {
        value: g.v + lam * dot(theta, theta),
        first: g.d1 + two * lam * dot(theta, d_theta),
        second: (order == Order::Second).then_some(g.d2 + two * lam * dot(d_theta, d_theta)),
        at_kink: kink || alg.at_kink,
    })
}
