//! Finite-difference reference for directional derivatives, and path
//! quotients for detecting failure of second-order semidifferentiability.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::dcalc::{dd_expr, Order};
use crate::error::Result;
use crate::expr::Expr;
use crate::model::{CompositeProblem, Direction, Point};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct OracleConfig {
    pub tau0: f64,
    pub halvings: usize,
    pub tol: f64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig {
            tau0: 1e-2,
            halvings: 20,
            tol: 1e-6,
        }
    }
}

impl OracleConfig {
    fn taus<T: Scalar>(&self) -> Vec<T> {
        (0..=self.halvings)
            .map(|k| T::lit(self.tau0 * 0.5f64.powi(k as i32)))
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Estimate<T> {
    pub value: T,
    pub error: T,
    pub converged: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct OracleEstimate<T> {
    pub first: Estimate<T>,
    pub second: Option<Estimate<T>>,
}

/// Richardson-extrapolates a sequence of quotients whose error is `O(τ)` on a
/// halving grid, then picks the most stable extrapolant.
pub fn extrapolate<T: Scalar>(q: &[T], tol: f64) -> Estimate<T> {
    let two = T::lit(2.0);
    let r: Vec<T> = q.windows(2).map(|w| two * w[1] - w[0]).collect();
    if r.len() < 2 {
        let v = q.last().copied().unwrap_or_else(T::nan);
        return Estimate {
            value: v,
            error: T::infinity(),
            converged: false,
        };
    }
    let mut best = (T::infinity(), r[1]);
    for w in r.windows(2) {
        let e = (w[1] - w[0]).abs();
        if e.is_finite() && e < best.0 {
            best = (e, w[1]);
        }
    }
    let (error, value) = best;
    Estimate {
        value,
        error,
        converged: error <= T::lit(tol) * (T::one() + value.abs()),
    }
}

/// Estimates `φ′(0⁺)` and, for second order, `lim (φ(τ) − φ(0) − τ φ′)/(τ²/2)`
/// where `first` (if given) is used as `φ′`.
pub fn fd_ray<T: Scalar>(
    phi: impl Fn(T) -> T,
    order: Order,
    first: Option<T>,
    cfg: &OracleConfig,
) -> OracleEstimate<T> {
    let taus: Vec<T> = cfg.taus();
    let f0 = phi(T::zero());
    let vals: Vec<T> = taus.iter().map(|&t| phi(t)).collect();
    let q1: Vec<T> = taus.iter().zip(&vals).map(|(&t, &v)| (v - f0) / t).collect();
    let est1 = extrapolate(&q1, cfg.tol);
    let second = (order == Order::Second).then(|| {
        let d1 = first.unwrap_or(est1.value);
        let half = T::lit(0.5);
        let q2: Vec<T> = taus
            .iter()
            .zip(&vals)
            .map(|(&t, &v)| (v - f0 - t * d1) / (half * t * t))
            .collect();
        extrapolate(&q2, cfg.tol)
    });
    OracleEstimate {
        first: est1,
        second,
    }
}

pub fn fd_expr<T: Scalar>(
    e: &Expr<T>,
    x: &[T],
    d: &[T],
    order: Order,
    first: Option<T>,
    cfg: &OracleConfig,
) -> OracleEstimate<T> {
    let phi = |t: T| {
        let xt: Vec<T> = x.iter().zip(d).map(|(&a, &b)| a + t * b).collect();
        crate::algebra::evaluate(e, &mut crate::algebra::Plain::default(), &mut |l| match l {
            crate::expr::Leaf::Param(j) => xt[j],
            crate::expr::Leaf::Input { .. } => T::nan(),
        })
    };
    fd_ray(phi, order, first, cfg)
}

pub fn fd_objective<T: Scalar>(
    problem: &CompositeProblem<T>,
    z: &Point<T>,
    d: &Direction<T>,
    order: Order,
    first: Option<T>,
    cfg: &OracleConfig,
) -> Result<OracleEstimate<T>> {
    problem.check_point(z)?;
    problem.check_point(d)?;
    Ok(fd_ray(
        |t| problem.objective(&z.axpy(t, d)).unwrap_or_else(|_| T::nan()),
        order,
        first,
        cfg,
    ))
}

pub fn fd_penalized<T: Scalar>(
    problem: &CompositeProblem<T>,
    z: &Point<T>,
    d: &Direction<T>,
    beta: &[T],
    order: Order,
    first: Option<T>,
    cfg: &OracleConfig,
) -> Result<OracleEstimate<T>> {
    problem.check_point(z)?;
    problem.check_point(d)?;
    problem.check_beta(beta)?;
    Ok(fd_ray(
        |t| {
            problem
                .penalized(&z.axpy(t, d), beta)
                .unwrap_or_else(|_| T::nan())
        },
        order,
        first,
        cfg,
    ))
}

pub fn fd_reduced<T: Scalar>(
    problem: &CompositeProblem<T>,
    theta: &[T],
    d_theta: &[T],
    order: Order,
    first: Option<T>,
    cfg: &OracleConfig,
) -> Result<OracleEstimate<T>> {
    problem.check_theta(theta)?;
    problem.check_theta(d_theta)?;
    Ok(fd_ray(
        |t| {
            let th: Vec<T> = theta.iter().zip(d_theta).map(|(&a, &b)| a + t * b).collect();
            problem.reduced(&th).unwrap_or_else(|_| T::nan())
        },
        order,
        first,
        cfg,
    ))
}

/// Quotients `(h(x̄ + τ v(τ)) − h(x̄) − τ h′(x̄; v(τ))) / (τ²/2)` along a curved
/// path, on the oracle's τ grid, with their extrapolated limit.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PathQuotients<T> {
    pub taus: Vec<T>,
    pub quotients: Vec<T>,
    pub limit: Estimate<T>,
}

pub fn path_quotients<T: Scalar>(
    e: &Expr<T>,
    x: &[T],
    v: impl Fn(T) -> Vec<T>,
    cfg: &OracleConfig,
) -> Result<PathQuotients<T>> {
    let taus: Vec<T> = cfg.taus();
    let h0 = dd_expr(e, x, &vec![T::zero(); x.len()], Order::First)?.value;
    let mut quotients = Vec::with_capacity(taus.len());
    let half = T::lit(0.5);
    for &t in &taus {
        let vt = v(t);
        let dd = dd_expr(e, x, &vt, Order::First)?;
        let xt: Vec<T> = x.iter().zip(&vt).map(|(&a, &b)| a + t * b).collect();
        let ht = dd_expr(e, &xt, &vt, Order::First)?.value;
        quotients.push((ht - h0 - t * dd.first) / (half * t * t));
    }
    let limit = extrapolate(&quotients, cfg.tol);
    Ok(PathQuotients {
        taus,
        quotients,
        limit,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SemidiffProbe<T> {
    /// Second-order directional derivative along the fixed ray.
    pub fixed_second: T,
    /// Limits of path quotients along `v(τ) = d + τ w` for each probe `w`.
    pub path_limits: Vec<T>,
    pub largest_gap: T,
    /// False when some curved path disagrees with the fixed-direction value.
    pub consistent: bool,
}

/// Compares the fixed-direction second derivative with quotients along
/// curved paths `v(τ) = d + τ w` (coordinate and random `w`).
pub fn semidiff_probe<T: Scalar>(
    e: &Expr<T>,
    x: &[T],
    d: &[T],
    samples: usize,
    seed: u64,
    cfg: &OracleConfig,
) -> Result<SemidiffProbe<T>> {
    let fixed = dd_expr(e, x, d, Order::Second)?
        .second
        .expect("second order requested");
    let n = x.len();
    let scale = crate::scalar::norm2(d).max(T::one());
    let mut ws: Vec<Vec<T>> = Vec::new();
    for i in 0..n {
        for s in [T::one(), -T::one()] {
            let mut w = vec![T::zero(); n];
            w[i] = s * scale;
            ws.push(w);
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..samples {
        ws.push(
            (0..n)
                .map(|_| T::lit(rng.random_range(-1.0..1.0)) * scale)
                .collect(),
        );
    }
    let mut path_limits = Vec::with_capacity(ws.len());
    let mut gap = T::zero();
    for w in &ws {
        let pq = path_quotients(
            e,
            x,
            |t| d.iter().zip(w).map(|(&a, &b)| a + t * b).collect(),
            cfg,
        )?;
        gap = gap.max((pq.limit.value - fixed).abs());
        path_limits.push(pq.limit.value);
    }
    Ok(SemidiffProbe {
        fixed_second: fixed,
        path_limits,
        largest_gap: gap,
        consistent: gap <= T::lit(1e-3) * (T::one() + fixed.abs()),
    })
}
