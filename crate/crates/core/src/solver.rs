//! Descent solver for the penalized problem.
//!
//! Iterates stay on the feasible manifold `z = lift(θ)`, where `Θ` equals the
//! reduced objective `φ(θ) = Ψ(θ) + λ‖θ‖²`. Each step takes a regularized
//! Newton direction on the active piece (or the negative piece gradient) with
//! an Armijo search that also tries the kinks crossed along the ray. When no
//! such step decreases `φ`, a sampled descent search on the reduced problem
//! supplies the direction. Termination is decided by probing `Θ′` along
//! z-space directions, including infeasible ones.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::algebra::{evaluate, Jet, JetAlg};
use crate::cones::lift_direction;
use crate::dcalc::{dd_penalized, dd_reduced, Order};
use crate::error::{Error, Result};
use crate::expr::Leaf;
use crate::model::{CompositeProblem, Direction, Point};
use crate::penalty::correction_direction;
use crate::scalar::{norm2, Scalar};
use crate::search::{best, make_starts, screen, sphere_search, Cone, Goal, Model, SearchConfigInner};
use crate::tolerances::FEASIBILITY_TOL;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SolverConfig {
    pub max_iters: usize,
    /// Stop once `Θ′(z; d) ≥ −stop_tol` on every unit probe direction.
    pub stop_tol: f64,
    /// Random z-space probe directions (on top of the structured ones).
    pub probes: usize,
    pub newton: bool,
    pub seed: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            max_iters: 200,
            stop_tol: 1e-6,
            probes: 32,
            newton: true,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TraceRow<T> {
    pub iter: usize,
    pub objective: T,
    pub theta: Vec<T>,
    pub max_residual: T,
    pub step: T,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StepKind {
    /// Newton step restricted to the directions that keep tied kinks tied.
    Manifold,
    Newton,
    Gradient,
    Search,
    Probe,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SolveResult<T> {
    pub z: Point<T>,
    pub objective: T,
    pub iterations: usize,
    /// Smallest `Θ′` over the unit probe directions at `z`.
    pub probe_min: T,
    pub converged: bool,
    pub max_residual: T,
    pub trace: Vec<TraceRow<T>>,
    pub steps: Vec<StepKind>,
}

fn phi<T: Scalar>(problem: &CompositeProblem<T>, theta: &[T]) -> T {
    problem.reduced(theta).unwrap_or_else(|_| T::infinity())
}

/// Kink records of every max-type node along the curve `θ + t p`.
fn kinks<T: Scalar>(problem: &CompositeProblem<T>, theta: &[T], p: &[T]) -> Vec<(T, T)> {
    let mut alg = JetAlg::new(crate::scalar::norm_inf(p));
    let mut layers: Vec<Vec<Jet<T>>> = Vec::with_capacity(problem.depth());
    for l in 1..=problem.depth() {
        let comps = problem
            .layer(l)
            .iter()
            .map(|e| {
                evaluate(e, &mut alg, &mut |leaf| match leaf {
                    Leaf::Param(j) => Jet::new(theta[j], p[j], T::zero()),
                    Leaf::Input { layer, index } => layers[layer - 1][index],
                })
            })
            .collect();
        layers.push(comps);
    }
    evaluate(problem.outer(), &mut alg, &mut |leaf| match leaf {
        Leaf::Input { layer, index } => layers[layer - 1][index],
        Leaf::Param(_) => Jet::new(T::nan(), T::zero(), T::zero()),
    });
    alg.kinks.into_iter().map(|k| (k.gap, k.slope)).collect()
}

/// Step lengths in `(0, t_max]` at which some node along the ray switches
/// branch, refined by Newton iterations on the node's gap.
fn kink_steps<T: Scalar>(problem: &CompositeProblem<T>, theta: &[T], p: &[T], t_max: T) -> Vec<T> {
    let base = kinks(problem, theta, p);
    let mut out = Vec::new();
    for (k, &(gap, slope)) in base.iter().enumerate() {
        if slope == T::zero() || gap == T::zero() {
            continue;
        }
        let mut t = -gap / slope;
        if !(t > T::zero() && t <= t_max * T::lit(4.0)) {
            continue;
        }
        for _ in 0..20 {
            let at: Vec<T> = theta.iter().zip(p).map(|(&a, &b)| a + t * b).collect();
            let ks = kinks(problem, &at, p);
            let Some(&(g, s)) = ks.get(k) else { break };
            if s == T::zero() {
                break;
            }
            let dt = -g / s;
            t += dt;
            if dt.abs() <= T::epsilon() * T::lit(4.0) * t.abs() {
                break;
            }
        }
        if t > T::zero() && t <= t_max && t.is_finite() {
            out.push(t);
            out.push(t * (T::one() + T::lit(1e-10)));
        }
    }
    out
}

/// Armijo backtracking from `t = 1`, also trying kink steps. Returns the best
/// accepted step and its value.
fn line_search<T: Scalar>(problem: &CompositeProblem<T>, theta: &[T], f0: T, p: &[T], slope: T) -> Option<(T, T)> {
    let sigma = T::lit(1e-4);
    let at = |t: T| -> T {
        let th: Vec<T> = theta.iter().zip(p).map(|(&a, &b)| a + t * b).collect();
        phi(problem, &th)
    };
    let mut best: Option<(T, T)> = None;
    let mut consider = |t: T, v: T| {
        if v <= f0 + sigma * t * slope && v < f0 && best.is_none_or(|(_, bv)| v < bv) {
            best = Some((t, v));
        }
    };
    let mut t = T::one();
    for _ in 0..60 {
        let v = at(t);
        if v <= f0 + sigma * t * slope && v < f0 {
            consider(t, v);
            break;
        }
        t *= T::lit(0.5);
    }
    for tk in kink_steps(problem, theta, p, T::one()) {
        consider(tk, at(tk));
    }
    best
}

/// Hessian of the active piece selected by `dir`, from second-order gradient jets.
fn piece_hessian<T: Scalar>(model: &Model<'_, T>, dir: &[T]) -> DMatrix<f64> {
    let n = model.dim();
    let pattern: Vec<bool> = model.probe(dir, true, None).ties.iter().map(|t| t.chose_hi).collect();
    let mut h = DMatrix::zeros(n, n);
    for i in 0..n {
        let mut e = vec![T::zero(); n];
        e[i] = T::one();
        let p = model.probe(&e, true, Some(pattern.clone()));
        for j in 0..n {
            h[(j, i)] = 0.5 * p.g2[j].f64();
        }
    }
    (&h + h.transpose()) * 0.5
}

fn newton_direction(h: &DMatrix<f64>, g: &[f64]) -> Option<Vec<f64>> {
    let n = g.len();
    let scale = h.amax().max(1.0);
    let mut mu = 0.0;
    loop {
        let shifted = h + DMatrix::identity(n, n) * mu;
        if let Some(ch) = shifted.cholesky() {
            let p = ch.solve(&(-DVector::from_column_slice(g)));
            return Some(p.iter().copied().collect());
        }
        mu = if mu == 0.0 { 1e-8 * scale } else { mu * 10.0 };
        if mu > 1e8 * scale {
            return None;
        }
    }
}

/// Newton direction in the null space of the tie rows `r`.
fn manifold_direction(h: &DMatrix<f64>, g: &[f64], rows: &[Vec<f64>]) -> Option<Vec<f64>> {
    let n = g.len();
    let r = DMatrix::from_fn(rows.len(), n, |i, j| rows[i][j]);
    let rrt = (&r * r.transpose()).pseudo_inverse(1e-12).ok()?;
    let proj = DMatrix::identity(n, n) - r.transpose() * rrt * &r;
    let scale = h.amax().max(1.0);
    let reduced = &proj * h * &proj + (DMatrix::identity(n, n) - &proj) * scale;
    let pg: Vec<f64> = (&proj * DVector::from_column_slice(g)).iter().copied().collect();
    if pg.iter().map(|x| x * x).sum::<f64>().sqrt() <= 1e-14 {
        return None;
    }
    let q = newton_direction(&reduced, &pg)?;
    Some((&proj * DVector::from_vec(q)).iter().copied().collect())
}

fn unit<T: Scalar>(d: &Direction<T>) -> Option<Direction<T>> {
    let n = d.norm();
    (n > T::zero() && n.is_finite()).then(|| d.scaled(T::one() / n))
}

/// Smallest `Θ′(z; d)` over unit z-space probes: lifted coordinate
/// directions, the supplied lifted directions, correction directions and
/// seeded random directions.
pub fn probe_min<T: Scalar>(
    problem: &CompositeProblem<T>,
    z: &Point<T>,
    beta: &[T],
    lifted: &[Vec<T>],
    random: usize,
    seed: u64,
) -> Result<(T, Option<Direction<T>>)> {
    let n = problem.n_params();
    let mut dirs: Vec<Direction<T>> = Vec::new();
    for s in lifted {
        dirs.push(lift_direction(problem, z, s)?);
    }
    for j in 0..n {
        for s in [T::one(), -T::one()] {
            let mut e = vec![T::zero(); n];
            e[j] = s;
            dirs.push(lift_direction(problem, z, &e)?);
        }
    }
    let res = problem.residuals(z)?;
    for l in 1..=problem.depth() {
        if res[l - 1].iter().any(|r| r.abs() > T::lit(FEASIBILITY_TOL)) {
            dirs.push(correction_direction(problem, z, &res, l));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dim = problem.z_dim();
    for _ in 0..random {
        let flat: Vec<T> = (0..dim).map(|_| T::lit(StandardNormal.sample(&mut rng))).collect();
        dirs.push(Point::unflatten(&flat, n, problem.dims()));
    }
    let mut min = T::infinity();
    let mut arg = None;
    for d in dirs.iter().filter_map(unit) {
        let v = dd_penalized(problem, z, &d, beta, Order::First)?.first;
        if v < min {
            min = v;
            arg = Some(d);
        }
    }
    Ok((min, arg))
}

/// Minimizes `Θ` with penalty `beta` from the feasible point `lift(θ₀)`.
pub fn solve<T: Scalar>(
    problem: &CompositeProblem<T>,
    beta: &[T],
    theta0: &[T],
    cfg: &SolverConfig,
) -> Result<SolveResult<T>> {
    problem.check_beta(beta)?;
    problem.check_theta(theta0)?;
    if !(cfg.stop_tol > 0.0) {
        return Err(Error::InvalidParameter("stop_tol must be positive".into()));
    }
    let n = problem.n_params();
    let stop = T::lit(cfg.stop_tol);
    let mut theta = theta0.to_vec();
    let mut f = phi(problem, &theta);
    if !f.is_finite() {
        return Err(Error::NonFinite { layer: 0 });
    }
    let mut trace = Vec::new();
    let mut steps = Vec::new();
    let mut converged = false;
    let mut probe = T::neg_infinity();
    let mut iterations = 0;
    let generic: Vec<T> = (0..n).map(|i| T::lit(1.0 + 0.01 * i as f64)).collect();
    trace.push(TraceRow {
        iter: 0,
        objective: f,
        theta: theta.clone(),
        max_residual: T::zero(),
        step: T::zero(),
    });
    while iterations < cfg.max_iters {
        iterations += 1;
        let z = problem.lift(&theta)?;
        let model = Model::Lifted {
            problem,
            z: &z,
            beta: None,
            nested: true,
        };
        let g0 = model.probe(&generic, false, None).g1;
        let neg: Vec<T> = g0.iter().map(|&x| -x).collect();
        let g = if norm2(&neg) > T::zero() {
            model.probe(&neg, false, None).g1
        } else {
            g0
        };
        let mut candidates: Vec<(StepKind, Vec<T>)> = Vec::new();
        if cfg.newton && norm2(&g) > T::zero() {
            let h = piece_hessian(&model, &neg);
            let gf: Vec<f64> = g.iter().map(|x| x.f64()).collect();
            let rows: Vec<Vec<f64>> = model
                .probe(&neg, false, None)
                .ties
                .iter()
                .map(|t| t.row.iter().map(|x| x.f64()).collect())
                .collect();
            if !rows.is_empty() {
                if let Some(p) = manifold_direction(&h, &gf, &rows) {
                    candidates.push((StepKind::Manifold, p.into_iter().map(T::lit).collect()));
                }
            }
            if let Some(p) = newton_direction(&h, &gf) {
                candidates.push((StepKind::Newton, p.into_iter().map(T::lit).collect()));
            }
        }
        candidates.push((StepKind::Gradient, g.iter().map(|&x| -x).collect()));
        let mut moved = false;
        for (kind, p) in &candidates {
            if norm2(p) == T::zero() || !p.iter().all(|x| x.is_finite()) {
                continue;
            }
            let slope = dd_reduced(problem, &theta, p, Order::First)?.first;
            if slope >= T::zero() {
                continue;
            }
            if let Some((t, v)) = line_search(problem, &theta, f, p, slope) {
                if f - v > T::epsilon() * (T::one() + f.abs()) {
                    for (a, &b) in theta.iter_mut().zip(p) {
                        *a += t * b;
                    }
                    trace.push(TraceRow {
                        iter: iterations,
                        objective: v,
                        theta: theta.clone(),
                        max_residual: T::zero(),
                        step: t * norm2(p),
                    });
                    steps.push(*kind);
                    f = v;
                    moved = true;
                    break;
                }
            }
        }
        if moved {
            continue;
        }
        // Nonsmooth point: look for a descent direction on the sphere, then probe.
        let inner = SearchConfigInner {
            starts: 32,
            seed: cfg.seed.wrapping_add(iterations as u64),
        };
        let starts = make_starts(n, vec![neg.clone()], &inner);
        let goal = Goal::first_order();
        let cone = Cone::default();
        let screened = screen(&model, &goal, &cone, &starts);
        let ranked: Vec<Vec<T>> = {
            let mut r = screened;
            r.sort_by(|a, b| a.value.partial_cmp(&b.value).unwrap_or(std::cmp::Ordering::Equal));
            r.into_iter().take(8).map(|r| r.dir).collect()
        };
        let found = sphere_search(&model, &goal, &cone, &ranked, 200);
        let mut dir = best(&found).filter(|r| r.value < T::zero()).map(|r| r.dir.clone());
        let mut kind = StepKind::Search;
        if dir.is_none() {
            let (pm, arg) = probe_min(problem, &z, beta, &ranked, cfg.probes, cfg.seed)?;
            probe = pm;
            if pm >= -stop {
                converged = true;
                break;
            }
            dir = arg.map(|d| d.theta).filter(|d| norm2(d) > T::zero());
            kind = StepKind::Probe;
        }
        let Some(p) = dir else { break };
        let slope = dd_reduced(problem, &theta, &p, Order::First)?.first;
        let step = if slope < T::zero() {
            line_search(problem, &theta, f, &p, slope)
        } else {
            None
        };
        match step {
            Some((t, v)) if v < f => {
                for (a, &b) in theta.iter_mut().zip(&p) {
                    *a += t * b;
                }
                trace.push(TraceRow {
                    iter: iterations,
                    objective: v,
                    theta: theta.clone(),
                    max_residual: T::zero(),
                    step: t * norm2(&p),
                });
                steps.push(kind);
                f = v;
            }
            _ => {
                let (pm, _) = probe_min(problem, &z, beta, &[], cfg.probes, cfg.seed)?;
                probe = pm;
                converged = pm >= -stop;
                break;
            }
        }
    }
    let z = problem.lift(&theta)?;
    if !converged {
        let (pm, _) = probe_min(problem, &z, beta, &[], cfg.probes, cfg.seed)?;
        probe = pm;
        converged = pm >= -stop;
    }
    let max_residual = problem.max_residual(&z)?;
    let objective = problem.penalized(&z, beta)?;
    Ok(SolveResult {
        z,
        objective,
        iterations,
        probe_min: probe,
        converged,
        max_residual,
        trace,
        steps,
    })
}

/// Replaces `u` by `lift(θ)` when that does not increase `Θ`. The flag is
/// true when the lifted point was kept.
pub fn polish_to_feasible<T: Scalar>(problem: &CompositeProblem<T>, z: &Point<T>, beta: &[T]) -> Result<(Point<T>, bool)> {
    let lifted = problem.lift(&z.theta)?;
    if problem.penalized(&lifted, beta)? <= problem.penalized(z, beta)? {
        Ok((lifted, true))
    } else {
        Ok((z.clone(), false))
    }
}

/// Seeded `θ` with `Θ(lift(θ)) ≤ γ̄`, drawn uniformly from the ball of radius
/// `√(γ̄/λ)` by rejection; falls back to `θ = 0` after `tries` rejections.
pub fn random_start<T: Scalar>(problem: &CompositeProblem<T>, seed: u64, tries: usize) -> Result<Vec<T>> {
    let gamma = problem.gamma_bar()?;
    let radius = (gamma / problem.lambda()).sqrt();
    let n = problem.n_params();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..tries {
        let dir: Vec<T> = (0..n).map(|_| T::lit(StandardNormal.sample(&mut rng))).collect();
        let Some(dir) = crate::scalar::normalized(&dir) else { continue };
        let r: f64 = rand::Rng::random_range(&mut rng, 0.0..1.0);
        let scale = radius * T::lit(r.powf(1.0 / n as f64));
        let theta: Vec<T> = dir.iter().map(|&x| x * scale).collect();
        if phi(problem, &theta) <= gamma {
            return Ok(theta);
        }
    }
    Ok(vec![T::zero(); n])
}
