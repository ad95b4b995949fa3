//! Lipschitz moduli on the level set, penalty thresholds and certification.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::algebra::{evaluate, Interval, IntervalAlg, IntervalGrad};
use crate::cones::complete_from;
use crate::error::{check_len, Error, Result};
use crate::expr::Leaf;
use crate::model::{CompositeProblem, Direction, Point};
use crate::scalar::{norm2, Scalar};
use crate::tolerances::FEASIBILITY_TOL;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ModuliSource {
    /// Exact formula for a recognized structure.
    ClosedForm,
    /// Interval enclosure of derivatives over a box containing the inflated level set.
    IntervalBound,
    /// Largest sampled difference quotient; a lower bound only.
    Sampled,
}

/// Moduli with respect to whole blocks: `outer[j]` bounds `g` in `u_{j+1}` and
/// `layers[j][i]` bounds the map producing `u_{j+1}` in `u_{i+1}` (`i < j`).
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BlockModuli<T> {
    pub outer: Vec<T>,
    pub layers: Vec<Vec<T>>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Moduli<T> {
    /// Modulus of `g` on the inflated level set.
    pub k_g: T,
    /// `k[i]` bounds the map producing `u_{i+2}` in `(u_1, …, u_{i+1})`.
    pub k: Vec<T>,
    pub blocks: Option<BlockModuli<T>>,
    pub source: ModuliSource,
    /// Level `γ` and inflation `ε` the moduli were computed for.
    pub gamma: T,
    pub eps: T,
}

impl<T: Scalar> Moduli<T> {
    pub fn heuristic(&self) -> bool {
        self.source == ModuliSource::Sampled
    }
}

/// `t_ℓ = K_g ∏_{j=ℓ+1}^{L} (1 + K_{j-1})` for `ℓ = 1..L`.
pub fn thresholds<T: Scalar>(k_g: T, k: &[T]) -> Vec<T> {
    let depth = k.len() + 1;
    let mut t = vec![k_g; depth];
    for l in (0..depth - 1).rev() {
        t[l] = t[l + 1] * (T::one() + k[l]);
    }
    t
}

/// Thresholds from block moduli: with `s_ℓ = 1` and
/// `s_j = Σ_{ℓ≤i<j} K_{j,i} s_i`, `t_ℓ = Σ_{j≥ℓ} K_{g,j} s_j`.
/// Reduces to [`thresholds`] when every block carries the full modulus.
pub fn structured_thresholds<T: Scalar>(b: &BlockModuli<T>) -> Vec<T> {
    let depth = b.outer.len();
    (0..depth)
        .map(|l| {
            let mut s = vec![T::zero(); depth];
            s[l] = T::one();
            for j in l + 1..depth {
                s[j] = (l..j).map(|i| b.layers[j][i] * s[i]).sum();
            }
            (l..depth).map(|j| b.outer[j] * s[j]).sum()
        })
        .collect()
}

/// Box enclosing `lev(γ) + εB`: `‖θ‖ ≤ √(γ/λ)` and `‖u_ℓ − ψ_{ℓ-1}‖₁ ≤ γ/β_ℓ`.
fn level_box<T: Scalar>(
    problem: &CompositeProblem<T>,
    beta: &[T],
    gamma: T,
    eps: T,
) -> (Vec<Interval<T>>, Vec<Vec<Interval<T>>>) {
    let r = (gamma / problem.lambda()).sqrt() + eps;
    let theta = vec![Interval::new(-r, r); problem.n_params()];
    let mut u: Vec<Vec<Interval<T>>> = Vec::with_capacity(problem.depth());
    for l in 1..=problem.depth() {
        let slack = gamma / beta[l - 1] + eps;
        let mut alg = IntervalAlg { dim: 0 };
        let block: Vec<Interval<T>> = problem
            .layer(l)
            .iter()
            .map(|e| {
                let v: IntervalGrad<T> = evaluate(e, &mut alg, &mut |leaf| IntervalGrad {
                    val: match leaf {
                        Leaf::Param(j) => theta[j],
                        Leaf::Input { layer, index } => u[layer - 1][index],
                    },
                    grad: Vec::new(),
                });
                v.val.add(Interval::new(-slack, slack))
            })
            .collect();
        u.push(block);
    }
    (theta, u)
}

/// Per-variable derivative magnitudes of `e` with respect to the components
/// of `u_1, …, u_{upto}`, over the box.
fn derivative_bounds<T: Scalar>(
    e: &crate::expr::Expr<T>,
    theta: &[Interval<T>],
    u: &[Vec<Interval<T>>],
    offsets: &[usize],
    upto: usize,
) -> Vec<T> {
    let dim = offsets[upto];
    let mut alg = IntervalAlg { dim };
    let v: IntervalGrad<T> = evaluate(e, &mut alg, &mut |leaf| match leaf {
        Leaf::Param(j) => IntervalGrad {
            val: theta[j],
            grad: vec![Interval::point(T::zero()); dim],
        },
        Leaf::Input { layer, index } => {
            let mut grad = vec![Interval::point(T::zero()); dim];
            grad[offsets[layer - 1] + index] = Interval::point(T::one());
            IntervalGrad {
                val: u[layer - 1][index],
                grad,
            }
        }
    });
    v.grad.iter().map(|g| g.mag()).collect()
}

fn block_norms<T: Scalar>(sq: &[T], offsets: &[usize], blocks: usize) -> Vec<T> {
    (0..blocks)
        .map(|b| sq[offsets[b]..offsets[b + 1]].iter().copied().sum::<T>().sqrt())
        .collect()
}

/// Certified moduli from interval enclosures of the partial derivatives over
/// a box containing `lev(γ) + εB`. Returns `None` if some bound is not finite.
pub fn interval_moduli<T: Scalar>(
    problem: &CompositeProblem<T>,
    beta: &[T],
    gamma: T,
    eps: T,
) -> Result<Option<Moduli<T>>> {
    problem.check_beta(beta)?;
    let depth = problem.depth();
    let (theta, u) = level_box(problem, beta, gamma, eps);
    let mut offsets = vec![0usize];
    for &d in problem.dims() {
        offsets.push(offsets.last().copied().unwrap_or(0) + d);
    }
    let g = derivative_bounds(problem.outer(), &theta, &u, &offsets, depth);
    let gsq: Vec<T> = g.iter().map(|&x| x * x).collect();
    let k_g = gsq.iter().copied().sum::<T>().sqrt();
    let outer = block_norms(&gsq, &offsets, depth);
    let mut k = Vec::with_capacity(depth.saturating_sub(1));
    let mut layers = vec![Vec::new()];
    for l in 2..=depth {
        let mut sq = vec![T::zero(); offsets[l - 1]];
        for e in problem.layer(l) {
            for (acc, m) in sq.iter_mut().zip(derivative_bounds(e, &theta, &u, &offsets, l - 1)) {
                *acc += m * m;
            }
        }
        k.push(sq.iter().copied().sum::<T>().sqrt());
        layers.push(block_norms(&sq, &offsets, l - 1));
    }
    let all_finite = k_g.is_finite() && k.iter().all(|x| x.is_finite());
    Ok(all_finite.then_some(Moduli {
        k_g,
        k,
        blocks: Some(BlockModuli { outer, layers }),
        source: ModuliSource::IntervalBound,
        gamma,
        eps,
    }))
}

/// Sampled lower bounds on the moduli: largest difference quotient over
/// `pairs` random pairs drawn near the level set.
pub fn sampled_moduli<T: Scalar>(
    problem: &CompositeProblem<T>,
    beta: &[T],
    gamma: T,
    eps: T,
    pairs: usize,
    seed: u64,
) -> Result<Moduli<T>> {
    problem.check_beta(beta)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let depth = problem.depth();
    let n = problem.n_params();
    let r = (gamma / problem.lambda()).sqrt().f64();
    let sample_point = |rng: &mut ChaCha8Rng| -> Result<Point<T>> {
        let raw: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let len = raw.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
        let rad = r * rng.random_range(0.0f64..1.0).powf(1.0 / n as f64);
        let theta: Vec<T> = raw.iter().map(|x| T::lit(x / len * rad)).collect();
        let mut z = Point {
            theta,
            u: Vec::with_capacity(depth),
        };
        for l in 1..=depth {
            let width = problem.dims()[l - 1];
            let budget = (gamma / beta[l - 1]).f64() / width as f64;
            let scale = rng.random_range(0.0..1.0);
            let vals = problem.layer_values(&z, l);
            let block = vals
                .iter()
                .map(|&v| v + T::lit(budget * scale * rng.random_range(-1.0..1.0)))
                .collect();
            z.u.push(block);
        }
        Ok(z)
    };
    let mut k_g = T::zero();
    let mut k = vec![T::zero(); depth.saturating_sub(1)];
    let step = eps.f64().max(1e-6);
    for _ in 0..pairs {
        let z = sample_point(&mut rng)?;
        if problem.penalized(&z, beta)? > gamma + eps {
            continue;
        }
        let mut w = z.clone();
        for b in w.u.iter_mut() {
            for x in b.iter_mut() {
                *x += T::lit(step * rng.random_range(-1.0..1.0));
            }
        }
        let du: Vec<T> = w
            .u
            .iter()
            .flatten()
            .zip(z.u.iter().flatten())
            .map(|(&a, &b)| a - b)
            .collect();
        let dn = norm2(&du);
        if dn > T::zero() {
            let q = (problem.outer_value(&w) - problem.outer_value(&z)).abs() / dn;
            k_g = k_g.max(q);
        }
        for l in 2..=depth {
            let prev: Vec<T> = w.u[..l - 1]
                .iter()
                .flatten()
                .zip(z.u[..l - 1].iter().flatten())
                .map(|(&a, &b)| a - b)
                .collect();
            let pn = norm2(&prev);
            if pn > T::zero() {
                let a = problem.layer_values(&w, l);
                let b = problem.layer_values(&z, l);
                let diff: Vec<T> = a.iter().zip(&b).map(|(&x, &y)| x - y).collect();
                k[l - 2] = k[l - 2].max(norm2(&diff) / pn);
            }
        }
    }
    Ok(Moduli {
        k_g,
        k,
        blocks: None,
        source: ModuliSource::Sampled,
        gamma,
        eps,
    })
}

/// Interval bounds when they are finite, otherwise sampled (heuristic) bounds.
pub fn estimate_moduli<T: Scalar>(
    problem: &CompositeProblem<T>,
    beta: &[T],
    gamma: T,
    eps: T,
    pairs: usize,
    seed: u64,
) -> Result<Moduli<T>> {
    match interval_moduli(problem, beta, gamma, eps)? {
        Some(m) => Ok(m),
        None => sampled_moduli(problem, beta, gamma, eps, pairs, seed),
    }
}

/// Penalty parameters together with the evidence for (or against) exactness.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PenaltyConfig<T> {
    pub beta: Vec<T>,
    pub moduli: Moduli<T>,
    pub thresholds: Vec<T>,
    pub gamma_bar: T,
    /// `β_ℓ > t_ℓ` for every layer with non-heuristic moduli.
    pub certified: bool,
}

/// Compares `β` with the thresholds implied by `moduli`. Block moduli, when
/// present, give the sharper structured thresholds.
pub fn certify<T: Scalar>(
    problem: &CompositeProblem<T>,
    beta: &[T],
    moduli: Moduli<T>,
) -> Result<PenaltyConfig<T>> {
    problem.check_beta(beta)?;
    check_len("moduli k", problem.depth() - 1, moduli.k.len())?;
    let plain = thresholds(moduli.k_g, &moduli.k);
    let t = match &moduli.blocks {
        Some(b) => structured_thresholds(b)
            .into_iter()
            .zip(&plain)
            .map(|(a, &b)| a.min(b))
            .collect(),
        None => plain,
    };
    let exceeds = beta.iter().zip(&t).all(|(&b, &t)| b > t);
    Ok(PenaltyConfig {
        beta: beta.to_vec(),
        certified: exceeds && !moduli.heuristic(),
        gamma_bar: moduli.gamma,
        thresholds: t,
        moduli,
    })
}

/// `β = max(β₀, 1.05·t(β₀))`. Raising `β` shrinks the level set, so moduli
/// computed at `β₀` remain valid and the result is certified when they are.
pub fn suggest_beta<T: Scalar>(
    problem: &CompositeProblem<T>,
    beta0: &[T],
    eps: T,
    pairs: usize,
    seed: u64,
) -> Result<PenaltyConfig<T>> {
    let gamma = problem.gamma_bar()?;
    let moduli = estimate_moduli(problem, beta0, gamma, eps, pairs, seed)?;
    let pre = certify(problem, beta0, moduli.clone())?;
    let beta: Vec<T> = beta0
        .iter()
        .zip(&pre.thresholds)
        .map(|(&b, &t)| b.max(T::lit(1.05) * t))
        .collect();
    certify(problem, &beta, moduli)
}

/// Descent direction for `Θ` at a point violating some layer equation:
/// correct the last violated layer `ℓ` toward `ψ_{ℓ-1}` and propagate the
/// change linearly through later layers, keeping `θ` and earlier layers fixed.
/// Along it `Θ′ = g′(u; d_u) − β_ℓ ‖u_ℓ − ψ_{ℓ-1}‖₁`.
pub fn infeasibility_direction<T: Scalar>(
    problem: &CompositeProblem<T>,
    z: &Point<T>,
) -> Result<Option<(usize, Direction<T>)>> {
    let res = problem.residuals(z)?;
    let tol = T::lit(FEASIBILITY_TOL);
    let Some(l) = (1..=problem.depth())
        .rev()
        .find(|&l| res[l - 1].iter().any(|r| r.abs() > tol))
    else {
        return Ok(None);
    };
    Ok(Some((l, correction_direction(problem, z, &res, l))))
}

/// The correction direction for a chosen layer `l` (see [`infeasibility_direction`]).
pub fn correction_direction<T: Scalar>(
    problem: &CompositeProblem<T>,
    z: &Point<T>,
    res: &[Vec<T>],
    l: usize,
) -> Direction<T> {
    let mut d = Point::zeros(problem.n_params(), problem.dims());
    d.u[l - 1] = res[l - 1].iter().map(|&r| -r).collect();
    complete_from(problem, z, &mut d, l + 1);
    d
}

pub(crate) fn require_certified<T: Scalar>(cfg: &PenaltyConfig<T>) -> Result<()> {
    if cfg.certified {
        Ok(())
    } else {
        Err(Error::Uncertified(format!(
            "beta {:?} vs thresholds {:?} ({:?} moduli)",
            cfg.beta.iter().map(|x| x.f64()).collect::<Vec<_>>(),
            cfg.thresholds.iter().map(|x| x.f64()).collect::<Vec<_>>(),
            cfg.moduli.source
        )))
    }
}
