//! Direction searches behind the stationarity checks.
//!
//! A [`Model`] maps a direction to `f′`, `f⁽²⁾` and their gradients with
//! respect to the direction (constant on each activation pattern). Sampled
//! search runs projected descent on the unit sphere from many starts;
//! enumeration solves one linear program per activation pattern.

use microlp::{ComparisonOp, OptimizationDirection, Problem as Lp};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::algebra::{evaluate, kink_tol, Algebra, GradJet, GradJetAlg, TieRecord};
use crate::error::{Error, Result};
use crate::expr::{Expr, Leaf};
use crate::model::{CompositeProblem, Point};
use crate::scalar::{dot, norm2, Scalar};
use crate::tolerances::FEASIBILITY_TOL;

#[derive(Clone, Debug)]
pub(crate) struct Probe<T> {
    pub first: T,
    pub second: T,
    pub g1: Vec<T>,
    pub g2: Vec<T>,
    /// `‖ψ⁽²⁾_{ℓ-1}‖₁` per layer (lifted models only) and its gradient.
    pub curv: Vec<T>,
    pub curv_grad: Vec<Vec<T>>,
    pub ties: Vec<TieRecord<T>>,
}

/// What is differentiated, and in which direction space.
#[derive(Clone, Copy)]
pub(crate) enum Model<'a, T: Scalar> {
    /// Standalone expression in its parameters.
    Expr { e: &'a Expr<T>, x: &'a [T] },
    /// `F` (or `Θ` with `beta`) at feasible `z` along lifted directions
    /// `(d_θ, d_u(d_θ))`. With `nested`, second order follows the curve
    /// `lift(θ + τ d_θ)` instead of the ray.
    Lifted {
        problem: &'a CompositeProblem<T>,
        z: &'a Point<T>,
        beta: Option<&'a [T]>,
        nested: bool,
    },
    /// `F` (or `Θ` with `beta`) along arbitrary z-space directions.
    Full {
        problem: &'a CompositeProblem<T>,
        z: &'a Point<T>,
        beta: Option<&'a [T]>,
    },
}

fn add_into<T: Scalar>(acc: &mut [T], c: T, x: &[T]) {
    for (a, &b) in acc.iter_mut().zip(x) {
        *a += c * b;
    }
}

impl<'a, T: Scalar> Model<'a, T> {
    pub fn dim(&self) -> usize {
        match self {
            Model::Expr { x, .. } => x.len(),
            Model::Lifted { problem, .. } => problem.n_params(),
            Model::Full { problem, .. } => problem.z_dim(),
        }
    }

    pub fn probe(&self, d: &[T], second: bool, pattern: Option<Vec<bool>>) -> Probe<T> {
        let dim = self.dim();
        let mut alg = GradJetAlg::new(dim, second, crate::scalar::norm_inf(d));
        if let Some(p) = pattern {
            alg = alg.with_pattern(p);
        }
        match *self {
            Model::Expr { e, x } => {
                let out = evaluate(e, &mut alg, &mut |leaf| match leaf {
                    Leaf::Param(j) => GradJet::coord(x[j], j, d, second),
                    Leaf::Input { .. } => GradJet::leaf(T::nan(), vec![T::zero(); dim], d, second),
                });
                finish(out, alg.ties, dim, second, Vec::new(), Vec::new())
            }
            Model::Lifted {
                problem,
                z,
                beta,
                nested,
            } => {
                let mut layers: Vec<Vec<GradJet<T>>> = Vec::with_capacity(problem.depth());
                let input = |layers: &Vec<Vec<GradJet<T>>>, layer: usize, index: usize| {
                    let o = &layers[layer - 1][index];
                    if nested {
                        o.clone()
                    } else {
                        GradJet {
                            v: z.u[layer - 1][index],
                            d1: o.d1,
                            d2: T::zero(),
                            g1: o.g1.clone(),
                            g2: if second { vec![T::zero(); dim] } else { Vec::new() },
                        }
                    }
                };
                let mut curv = Vec::new();
                let mut curv_grad = Vec::new();
                for l in 1..=problem.depth() {
                    let comps: Vec<GradJet<T>> = problem
                        .layer(l)
                        .iter()
                        .map(|e| {
                            evaluate(e, &mut alg, &mut |leaf| match leaf {
                                Leaf::Param(j) => GradJet::coord(z.theta[j], j, d, second),
                                Leaf::Input { layer, index } => input(&layers, layer, index),
                            })
                        })
                        .collect();
                    if second && !nested {
                        let mut c = T::zero();
                        let mut cg = vec![T::zero(); dim];
                        for j in &comps {
                            c += j.d2.abs();
                            let s = if j.d2 >= T::zero() { T::one() } else { -T::one() };
                            add_into(&mut cg, s, &j.g2);
                        }
                        curv.push(c);
                        curv_grad.push(cg);
                    }
                    layers.push(comps);
                }
                let g = evaluate(problem.outer(), &mut alg, &mut |leaf| match leaf {
                    Leaf::Input { layer, index } => input(&layers, layer, index),
                    Leaf::Param(_) => GradJet::leaf(T::nan(), vec![T::zero(); dim], d, second),
                });
                let mut p = finish(g, alg.ties, dim, second, curv, curv_grad);
                add_ridge(&mut p, problem.lambda(), &z.theta, d, 0, second);
                if let (Some(beta), true, false) = (beta, second, nested) {
                    for (l, &b) in beta.iter().enumerate() {
                        p.second += b * p.curv[l];
                        let cg = p.curv_grad[l].clone();
                        add_into(&mut p.g2, b, &cg);
                    }
                }
                p
            }
            Model::Full { problem, z, beta } => {
                let mut offsets = vec![problem.n_params()];
                for &w in problem.dims() {
                    offsets.push(offsets.last().copied().unwrap_or(0) + w);
                }
                let mut leaf = |leaf: Leaf| match leaf {
                    Leaf::Param(j) => GradJet::coord(z.theta[j], j, d, second),
                    Leaf::Input { layer, index } => GradJet::coord(
                        z.u[layer - 1][index],
                        offsets[layer - 1] + index,
                        d,
                        second,
                    ),
                };
                let mut total = evaluate(problem.outer(), &mut alg, &mut leaf);
                if let Some(beta) = beta {
                    let ftol = T::lit(2.0 * FEASIBILITY_TOL);
                    for (l, &b) in beta.iter().enumerate() {
                        for (i, e) in problem.layer(l + 1).iter().enumerate() {
                            let psi = evaluate(e, &mut alg, &mut leaf);
                            let u = leaf(Leaf::Input {
                                layer: l + 1,
                                index: i,
                            });
                            let r = alg.sub(&u, &psi);
                            let neg = alg.scale(-T::one(), &r);
                            let tol = ftol.max(kink_tol(r.v, neg.v));
                            let a = alg.select(r, neg, tol);
                            let a = alg.scale(b, &a);
                            total = alg.add(&total, &a);
                        }
                    }
                }
                let mut p = finish(total, alg.ties, dim, second, Vec::new(), Vec::new());
                add_ridge(&mut p, problem.lambda(), &z.theta, d, 0, second);
                p
            }
        }
    }
}

fn finish<T: Scalar>(
    j: GradJet<T>,
    ties: Vec<TieRecord<T>>,
    dim: usize,
    second: bool,
    curv: Vec<T>,
    curv_grad: Vec<Vec<T>>,
) -> Probe<T> {
    Probe {
        first: j.d1,
        second: if second { j.d2 } else { T::zero() },
        g1: if j.g1.is_empty() { vec![T::zero(); dim] } else { j.g1 },
        g2: if j.g2.is_empty() { vec![T::zero(); dim] } else { j.g2 },
        curv,
        curv_grad,
        ties,
    }
}

/// Adds the contribution of `λ‖θ‖²` (θ occupies `d[off..off+n]`).
fn add_ridge<T: Scalar>(p: &mut Probe<T>, lambda: T, theta: &[T], d: &[T], off: usize, second: bool) {
    let two = T::lit(2.0);
    let dt = &d[off..off + theta.len()];
    p.first += two * lambda * dot(theta, dt);
    for (k, &t) in theta.iter().enumerate() {
        p.g1[off + k] += two * lambda * t;
    }
    if second {
        p.second += two * lambda * dot(dt, dt);
        for (k, &x) in dt.iter().enumerate() {
            p.g2[off + k] += two * two * lambda * x;
        }
    }
}

/// Sign constraints on direction coordinates (tangent cone of a box).
#[derive(Clone, Debug, Default)]
pub(crate) struct Cone {
    /// `+1`: `d_i ≥ 0`, `-1`: `d_i ≤ 0`, `0`: free.
    pub signs: Vec<i8>,
}

impl Cone {
    pub fn project<T: Scalar>(&self, d: &mut [T]) {
        for (x, &s) in d.iter_mut().zip(&self.signs) {
            if (s > 0 && *x < T::zero()) || (s < 0 && *x > T::zero()) {
                *x = T::zero();
            }
        }
    }

    fn project_unit<T: Scalar>(&self, d: &[T]) -> Option<Vec<T>> {
        let mut v = d.to_vec();
        self.project(&mut v);
        crate::scalar::normalized(&v)
    }
}

/// Objective minimized by the sampled search.
#[derive(Clone, Debug)]
pub(crate) struct Goal<T> {
    pub second: bool,
    /// Weight on `f′` (pushes second-order searches into the critical cone).
    pub crit_weight: T,
    /// Weight on `‖ψ⁽²⁾_{ℓ-1}‖₁` per layer.
    pub curv_weights: Vec<T>,
}

impl<T: Scalar> Goal<T> {
    pub fn first_order() -> Self {
        Goal {
            second: false,
            crit_weight: T::zero(),
            curv_weights: Vec::new(),
        }
    }

    pub fn value(&self, p: &Probe<T>) -> T {
        if !self.second {
            return p.first;
        }
        let mut v = p.second + self.crit_weight * p.first;
        for (w, c) in self.curv_weights.iter().zip(&p.curv) {
            v += *w * *c;
        }
        v
    }

    pub fn grad(&self, p: &Probe<T>) -> Vec<T> {
        if !self.second {
            return p.g1.clone();
        }
        let mut g = p.g2.clone();
        add_into(&mut g, self.crit_weight, &p.g1);
        for (w, cg) in self.curv_weights.iter().zip(&p.curv_grad) {
            add_into(&mut g, *w, cg);
        }
        g
    }
}

#[derive(Clone, Debug)]
pub(crate) struct SearchConfigInner {
    pub starts: usize,
    pub seed: u64,
}

#[derive(Clone, Debug)]
pub(crate) struct LocalResult<T> {
    pub value: T,
    pub dir: Vec<T>,
    pub evaluations: usize,
}

/// Starting directions: the supplied ones, `±e_i`, then `cfg.starts` seeded Gaussians.
pub(crate) fn make_starts<T: Scalar>(dim: usize, extra: Vec<Vec<T>>, cfg: &SearchConfigInner) -> Vec<Vec<T>> {
    let mut out = extra;
    for i in 0..dim {
        for s in [T::one(), -T::one()] {
            let mut e = vec![T::zero(); dim];
            e[i] = s;
            out.push(e);
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    for _ in 0..cfg.starts {
        out.push((0..dim).map(|_| T::lit(StandardNormal.sample(&mut rng))).collect());
    }
    out
}

fn local_descent<T: Scalar>(
    model: &Model<'_, T>,
    goal: &Goal<T>,
    cone: &Cone,
    start: &[T],
    max_iters: usize,
) -> Option<LocalResult<T>> {
    let mut d = cone.project_unit(start)?;
    let mut p = model.probe(&d, goal.second, None);
    let mut val = goal.value(&p);
    let mut evals = 1;
    let mut eta = T::lit(0.5);
    let sigma = T::lit(1e-4);
    let min_eta = T::lit(1e-12);
    for _ in 0..max_iters {
        let g = goal.grad(&p);
        let radial = dot(&g, &d);
        let mut gt: Vec<T> = g.iter().zip(&d).map(|(&gi, &di)| gi - radial * di).collect();
        // Drop components that the cone would clip immediately.
        for (k, &s) in cone.signs.iter().enumerate() {
            if s != 0 && d[k] == T::zero() && ((s > 0 && gt[k] > T::zero()) || (s < 0 && gt[k] < T::zero())) {
                gt[k] = T::zero();
            }
        }
        let gn2 = dot(&gt, &gt);
        if gn2.sqrt() <= T::lit(1e-14) {
            break;
        }
        let mut accepted = false;
        while eta >= min_eta {
            let cand: Vec<T> = d.iter().zip(&gt).map(|(&x, &y)| x - eta * y).collect();
            if let Some(c) = cone.project_unit(&cand) {
                let pc = model.probe(&c, goal.second, None);
                evals += 1;
                let vc = goal.value(&pc);
                if vc < val - sigma * eta * gn2 {
                    d = c;
                    p = pc;
                    val = vc;
                    eta = (eta * T::lit(2.0)).min(T::lit(4.0));
                    accepted = true;
                    break;
                }
            }
            eta *= T::lit(0.5);
        }
        if !accepted {
            break;
        }
    }
    // Jump to the best direction of the current linear piece.
    if !goal.second {
        for _ in 0..4 {
            let neg: Vec<T> = p.g1.iter().map(|&x| -x).collect();
            let Some(c) = cone.project_unit(&neg) else { break };
            let pc = model.probe(&c, false, None);
            evals += 1;
            if pc.first < val {
                d = c;
                val = pc.first;
                p = pc;
            } else {
                break;
            }
        }
    }
    Some(LocalResult {
        value: val,
        dir: d,
        evaluations: evals,
    })
}

/// Multistart projected descent on the unit sphere. Results are returned in
/// start order; the run is deterministic for a given seed.
pub(crate) fn sphere_search<T: Scalar>(
    model: &Model<'_, T>,
    goal: &Goal<T>,
    cone: &Cone,
    starts: &[Vec<T>],
    max_iters: usize,
) -> Vec<LocalResult<T>> {
    starts
        .par_iter()
        .filter_map(|s| local_descent(model, goal, cone, s, max_iters))
        .collect()
}

/// Screens starts without descent; useful to catch obvious descent directions cheaply.
pub(crate) fn screen<T: Scalar>(model: &Model<'_, T>, goal: &Goal<T>, cone: &Cone, starts: &[Vec<T>]) -> Vec<LocalResult<T>> {
    starts
        .par_iter()
        .filter_map(|s| {
            let d = cone.project_unit(s)?;
            let p = model.probe(&d, goal.second, None);
            Some(LocalResult {
                value: goal.value(&p),
                dir: d,
                evaluations: 1,
            })
        })
        .collect()
}

pub(crate) fn best<T: Scalar>(results: &[LocalResult<T>]) -> Option<&LocalResult<T>> {
    results
        .iter()
        .fold(None, |acc: Option<&LocalResult<T>>, r| match acc {
            Some(a) if a.value <= r.value => Some(a),
            _ => Some(r),
        })
}

/// Moves `d` toward the critical set `{f′ = 0}` along the current piece.
pub(crate) fn criticalize<T: Scalar>(model: &Model<'_, T>, cone: &Cone, d: &[T], slack: T) -> (Vec<T>, Probe<T>) {
    let mut d = d.to_vec();
    let mut p = model.probe(&d, true, None);
    for _ in 0..8 {
        if p.first.abs() <= slack {
            break;
        }
        let c2 = dot(&p.g1, &p.g1);
        if c2 <= T::zero() {
            break;
        }
        let k = p.first / c2;
        let cand: Vec<T> = d.iter().zip(&p.g1).map(|(&x, &g)| x - k * g).collect();
        let Some(c) = cone.project_unit(&cand) else { break };
        d = c;
        p = model.probe(&d, true, None);
    }
    (d, p)
}

#[derive(Clone, Debug)]
pub(crate) struct EnumOutcome<T> {
    pub min_value: T,
    pub dir: Option<Vec<T>>,
    pub patterns: usize,
}

/// Exact first-order minimum of `f′` over the ℓ1 unit ball (within the cone):
/// one linear program per activation pattern of the tied max nodes.
pub(crate) fn enumerate_first<T: Scalar>(model: &Model<'_, T>, cone: &Cone, limit: u128) -> Result<EnumOutcome<T>> {
    let dim = model.dim();
    let generic: Vec<T> = (0..dim).map(|i| T::lit(1.0 + 0.1 * i as f64)).collect();
    let k = model.probe(&generic, false, None).ties.len();
    let count: u128 = if k >= 127 { u128::MAX } else { 1u128 << k };
    if count > limit {
        return Err(Error::TooManyPatterns { count });
    }
    let results: Vec<(f64, Vec<f64>)> = (0..count as u64)
        .into_par_iter()
        .map(|mask| {
            let pattern: Vec<bool> = (0..k).map(|b| mask >> b & 1 == 0).collect();
            let p = model.probe(&generic, false, Some(pattern));
            solve_piece(&p, cone, dim)
        })
        .collect();
    let mut min_value = 0.0f64;
    let mut dir = None;
    for (v, d) in &results {
        if *v < min_value {
            min_value = *v;
            dir = Some(d.iter().map(|&x| T::lit(x)).collect());
        }
    }
    Ok(EnumOutcome {
        min_value: T::lit(min_value),
        dir,
        patterns: results.len(),
    })
}

fn solve_piece<T: Scalar>(p: &Probe<T>, cone: &Cone, dim: usize) -> (f64, Vec<f64>) {
    let mut lp = Lp::new(OptimizationDirection::Minimize);
    let inf = f64::INFINITY;
    let vars: Vec<_> = (0..dim)
        .map(|i| {
            let s = cone.signs.get(i).copied().unwrap_or(0);
            let c = p.g1[i].f64();
            let pos = lp.add_var(c, (0.0, if s < 0 { 0.0 } else { inf }));
            let neg = lp.add_var(-c, (0.0, if s > 0 { 0.0 } else { inf }));
            (pos, neg)
        })
        .collect();
    for t in &p.ties {
        let mut row = Vec::with_capacity(2 * dim);
        for (i, &(a, b)) in vars.iter().enumerate() {
            let r = t.row[i].f64();
            if r != 0.0 {
                row.push((a, r));
                row.push((b, -r));
            }
        }
        if !row.is_empty() {
            lp.add_constraint(row.as_slice(), ComparisonOp::Ge, 0.0);
        }
    }
    let ball: Vec<_> = vars.iter().flat_map(|&(a, b)| [(a, 1.0), (b, 1.0)]).collect();
    lp.add_constraint(ball.as_slice(), ComparisonOp::Le, 1.0);
    match lp.solve().ok().and_then(|o| o.into_solution().ok()) {
        Some(sol) => {
            let d = vars
                .iter()
                .map(|&(a, b)| sol.var_value(a) - sol.var_value(b))
                .collect();
            (sol.objective(), d)
        }
        None => (0.0, vec![0.0; dim]),
    }
}

pub(crate) fn normalize_or_zero<T: Scalar>(d: &[T]) -> Vec<T> {
    let n = norm2(d);
    if n > T::zero() {
        d.iter().map(|&x| x / n).collect()
    } else {
        d.to_vec()
    }
}
