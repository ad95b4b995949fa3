//! Elman recurrent network training as a layered composite problem.
//!
//! For each step `t = 1..T` and sequence `n`:
//! `w_t = W s_{t-1} + A x_t + b`, `s_t = σ(w_t)`, `v_t = V s_t + c`,
//! `r_t = σ(v_t)` with `s₀ = 0` and `σ(x) = max{x, αx}`. The layers are
//! `w_1, s_1, …, w_T, s_T, v, r` (so `L = 2T + 2`), each stacking all
//! sequences; `v` and `r` stack all steps in `(t, n, o)` order. The loss is
//! `g = ‖r − y‖² / (2NT)`.
//!
//! `θ = (vec A, vec V, vec W, b, c)` with column-major `vec`.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::cones::{ConeMembership, RadialMembership};
use crate::error::{check_len, Error, Result};
use crate::expr::Expr;
use crate::model::{CompositeProblem, Direction, Point};
use crate::penalty::{BlockModuli, Moduli, ModuliSource, PenaltyConfig};
use crate::scalar::Scalar;
use crate::solver::{solve, SolveResult, SolverConfig};
use crate::stationarity::{
    check_first_order, check_second_order, relation_record, RelationRecord, SearchConfig, StationarityReport, Target,
};
use crate::tolerances::{FEASIBILITY_TOL, TANGENT_TOL};

/// One training sequence: `x[t]` has `N₀` entries and `y[t]` has `N₂`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Sequence<T> {
    pub x: Vec<Vec<T>>,
    pub y: Vec<Vec<T>>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RnnSpec<T> {
    pub n0: usize,
    pub n1: usize,
    pub n2: usize,
    pub steps: usize,
    pub alpha: T,
    pub lambda: T,
    pub data: Vec<Sequence<T>>,
}

/// Offsets of the parameter blocks inside `θ`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct Layout {
    a: usize,
    v: usize,
    w: usize,
    b: usize,
    c: usize,
    n: usize,
}

impl<T: Scalar> RnnSpec<T> {
    pub fn new(n0: usize, n1: usize, n2: usize, steps: usize, alpha: T, lambda: T, data: Vec<Sequence<T>>) -> Result<Self> {
        let s = RnnSpec {
            n0,
            n1,
            n2,
            steps,
            alpha,
            lambda,
            data,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n0 == 0 || self.n1 == 0 || self.n2 == 0 || self.steps == 0 {
            return Err(Error::InvalidModel("network sizes and T must be positive".into()));
        }
        if !(self.alpha >= T::zero() && self.alpha < T::one()) {
            return Err(Error::InvalidParameter(format!("alpha {} not in [0, 1)", self.alpha)));
        }
        if !(self.lambda > T::zero() && self.lambda.is_finite()) {
            return Err(Error::InvalidParameter(format!("lambda {} must be positive", self.lambda)));
        }
        if self.data.is_empty() {
            return Err(Error::InvalidModel("no sequences".into()));
        }
        for s in &self.data {
            check_len("sequence inputs", self.steps, s.x.len())?;
            check_len("sequence labels", self.steps, s.y.len())?;
            for (x, y) in s.x.iter().zip(&s.y) {
                check_len("input x_t", self.n0, x.len())?;
                check_len("label y_t", self.n2, y.len())?;
                if !x.iter().chain(y).all(|v| v.is_finite()) {
                    return Err(Error::InvalidModel("non-finite data".into()));
                }
            }
        }
        Ok(())
    }

    pub fn sequences(&self) -> usize {
        self.data.len()
    }

    pub fn n_params(&self) -> usize {
        self.layout().n
    }

    pub fn depth(&self) -> usize {
        2 * self.steps + 2
    }

    fn layout(&self) -> Layout {
        let a = 0;
        let v = a + self.n0 * self.n1;
        let w = v + self.n1 * self.n2;
        let b = w + self.n1 * self.n1;
        let c = b + self.n1;
        Layout {
            a,
            v,
            w,
            b,
            c,
            n: c + self.n2,
        }
    }

    /// Squared label norm `‖y‖²` over all sequences and steps.
    pub fn label_sq_norm(&self) -> T {
        self.data
            .iter()
            .flat_map(|s| s.y.iter().flatten())
            .map(|&v| v * v)
            .sum()
    }

    fn leaky(&self, x: T) -> T {
        x.max(self.alpha * x)
    }
}

/// Builds the layered problem (no penalty attached).
pub fn build_problem<T: Scalar>(spec: &RnnSpec<T>) -> Result<CompositeProblem<T>> {
    spec.validate()?;
    let lay = spec.layout();
    let (n0, n1, n2, nseq, steps) = (spec.n0, spec.n1, spec.n2, spec.sequences(), spec.steps);
    let mut layers: Vec<Vec<Expr<T>>> = Vec::with_capacity(spec.depth());
    for t in 0..steps {
        let mut w_layer = Vec::with_capacity(nseq * n1);
        for (n, seq) in spec.data.iter().enumerate() {
            for i in 0..n1 {
                let mut terms = vec![
                    Expr::affine(
                        seq.x[t].clone(),
                        (0..n0).map(|j| Expr::param(lay.a + j * n1 + i)).collect(),
                        T::zero(),
                    ),
                    Expr::param(lay.b + i),
                ];
                if t > 0 {
                    terms.push(Expr::inner(
                        (0..n1).map(|j| Expr::param(lay.w + j * n1 + i)).collect(),
                        (0..n1).map(|j| Expr::input(2 * t, n * n1 + j)).collect(),
                    ));
                }
                w_layer.push(Expr::sum(terms));
            }
        }
        layers.push(w_layer);
        layers.push(
            (0..nseq * n1)
                .map(|k| Expr::leaky_relu(spec.alpha, Expr::input(2 * t + 1, k)))
                .collect(),
        );
    }
    let mut v_layer = Vec::with_capacity(steps * nseq * n2);
    for t in 0..steps {
        for n in 0..nseq {
            for o in 0..n2 {
                v_layer.push(Expr::sum(vec![
                    Expr::inner(
                        (0..n1).map(|j| Expr::param(lay.v + j * n2 + o)).collect(),
                        (0..n1).map(|j| Expr::input(2 * t + 2, n * n1 + j)).collect(),
                    ),
                    Expr::param(lay.c + o),
                ]));
            }
        }
    }
    let nv = v_layer.len();
    layers.push(v_layer);
    let rl = 2 * steps + 1;
    layers.push((0..nv).map(|k| Expr::leaky_relu(spec.alpha, Expr::input(rl, k))).collect());
    let mut residuals = Vec::with_capacity(nv);
    for t in 0..steps {
        for seq in &spec.data {
            for o in 0..n2 {
                let k = residuals.len();
                residuals.push(Expr::affine(vec![T::one()], vec![Expr::input(rl + 1, k)], -seq.y[t][o]));
            }
        }
    }
    let outer = Expr::scale(
        T::one() / (T::lit(2.0) * T::from_len(nseq * steps)),
        Expr::sq_norm(residuals),
    );
    CompositeProblem::new(lay.n, spec.lambda, layers, outer)
}

/// Direct forward pass producing the feasible point `lift(θ)`.
pub fn forward<T: Scalar>(spec: &RnnSpec<T>, theta: &[T]) -> Result<Point<T>> {
    let lay = spec.layout();
    check_len("theta", lay.n, theta.len())?;
    let (n0, n1, n2, nseq, steps) = (spec.n0, spec.n1, spec.n2, spec.sequences(), spec.steps);
    let mut u: Vec<Vec<T>> = Vec::with_capacity(spec.depth());
    let mut v = vec![T::zero(); steps * nseq * n2];
    for t in 0..steps {
        let mut w = vec![T::zero(); nseq * n1];
        for (n, seq) in spec.data.iter().enumerate() {
            for i in 0..n1 {
                let mut acc = theta[lay.b + i];
                for j in 0..n0 {
                    acc += theta[lay.a + j * n1 + i] * seq.x[t][j];
                }
                if t > 0 {
                    let prev = &u[2 * t - 1];
                    for j in 0..n1 {
                        acc += theta[lay.w + j * n1 + i] * prev[n * n1 + j];
                    }
                }
                w[n * n1 + i] = acc;
            }
        }
        let s: Vec<T> = w.iter().map(|&x| spec.leaky(x)).collect();
        for n in 0..nseq {
            for o in 0..n2 {
                let mut acc = theta[lay.c + o];
                for j in 0..n1 {
                    acc += theta[lay.v + j * n2 + o] * s[n * n1 + j];
                }
                v[(t * nseq + n) * n2 + o] = acc;
            }
        }
        u.push(w);
        u.push(s);
    }
    let r = v.iter().map(|&x| spec.leaky(x)).collect();
    u.push(v);
    u.push(r);
    Ok(Point {
        theta: theta.to_vec(),
        u,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RnnThresholds<T> {
    pub gamma_y: T,
    pub gamma_1: T,
    /// Threshold for the `w`/`s` layers.
    pub t1: T,
    /// Threshold for the `v`/`r` layers.
    pub t2: T,
    pub k_g: T,
    /// Modulus of the `W`- and `V`-multiplications, `√(γ_y/λ)`.
    pub k_layer: T,
    pub k_activation: T,
}

/// Closed-form moduli and thresholds on `lev(γ_y)` with `γ_y = Θ(0)`.
pub fn rnn_thresholds<T: Scalar>(spec: &RnnSpec<T>) -> RnnThresholds<T> {
    let nt = T::from_len(spec.sequences() * spec.steps);
    let two = T::lit(2.0);
    let gamma_y = spec.label_sq_norm() / (two * nt);
    let k = (gamma_y / spec.lambda).sqrt();
    let mut gamma_1 = T::zero();
    let mut p = T::one();
    for _ in 0..spec.steps {
        gamma_1 += p;
        p *= k;
    }
    RnnThresholds {
        gamma_y,
        gamma_1,
        t1: gamma_1 * gamma_y * (two / (spec.lambda * nt)).sqrt(),
        t2: (two * gamma_y / nt).sqrt(),
        k_g: (two * gamma_y / nt).sqrt(),
        k_layer: k,
        k_activation: T::one(),
    }
}

/// Closed-form block moduli: `W` couples `s_t` to `w_{t+1}`, `V` couples
/// every `s_t` to `v`, activations have modulus one and `g` depends on `r` only.
pub fn rnn_moduli<T: Scalar>(spec: &RnnSpec<T>) -> Moduli<T> {
    let th = rnn_thresholds(spec);
    let depth = spec.depth();
    let mut layers = vec![vec![T::zero(); depth]; depth];
    for t in 0..spec.steps {
        let (w, s) = (2 * t, 2 * t + 1);
        layers[s][w] = th.k_activation;
        if t + 1 < spec.steps {
            layers[w + 2][s] = th.k_layer;
        }
        layers[depth - 2][s] = th.k_layer;
    }
    layers[depth - 1][depth - 2] = th.k_activation;
    let mut outer = vec![T::zero(); depth];
    outer[depth - 1] = th.k_g;
    Moduli {
        k_g: th.k_g,
        k: (1..depth).map(|j| layers[j].iter().fold(T::zero(), |m, &x| m.max(x))).collect(),
        blocks: Some(BlockModuli { outer, layers }),
        source: ModuliSource::ClosedForm,
        gamma: th.gamma_y,
        eps: T::zero(),
    }
}

/// Per-layer `β` from the grouped pair (`β₁` on `w`/`s`, `β₂` on `v`/`r`).
pub fn expand_beta<T: Scalar>(spec: &RnnSpec<T>, beta1: T, beta2: T) -> Vec<T> {
    let mut b = vec![beta1; 2 * spec.steps];
    b.extend([beta2, beta2]);
    b
}

/// Penalty configuration with the grouped closed-form thresholds; `beta`
/// defaults to `1.05·(t₁, t₂)` (or 1 where a threshold is zero).
pub fn rnn_penalty<T: Scalar>(spec: &RnnSpec<T>, beta: Option<(T, T)>) -> Result<PenaltyConfig<T>> {
    let th = rnn_thresholds(spec);
    let pick = |t: T| if t > T::zero() { T::lit(1.05) * t } else { T::one() };
    let (b1, b2) = beta.unwrap_or((pick(th.t1), pick(th.t2)));
    if !(b1 > T::zero() && b2 > T::zero()) {
        return Err(Error::InvalidParameter("beta must be positive".into()));
    }
    let beta = expand_beta(spec, b1, b2);
    let thresholds = expand_beta(spec, th.t1, th.t2);
    Ok(PenaltyConfig {
        certified: beta.iter().zip(&thresholds).all(|(&b, &t)| b > t),
        beta,
        thresholds,
        gamma_bar: th.gamma_y,
        moduli: rnn_moduli(spec),
    })
}

fn leaky_dd<T: Scalar>(alpha: T, x: T, d: T) -> T {
    if x > T::zero() {
        d
    } else if x < T::zero() {
        alpha * d
    } else {
        d.max(alpha * d)
    }
}

/// Linearized layer maps at `z` along `d`: the value each `d_{u_ℓ}` must take
/// for `d` to be tangent, and the bilinear second-order terms `2 D_W d_s`,
/// `2 D_V d_s` (max-norm per layer).
fn linearize<T: Scalar>(spec: &RnnSpec<T>, z: &Point<T>, d: &Direction<T>) -> (Vec<Vec<T>>, Vec<T>) {
    let lay = spec.layout();
    let (n0, n1, n2, nseq, steps) = (spec.n0, spec.n1, spec.n2, spec.sequences(), spec.steps);
    let (th, dt) = (&z.theta, &d.theta);
    let mut want: Vec<Vec<T>> = Vec::with_capacity(spec.depth());
    let mut second = vec![T::zero(); spec.depth()];
    let mut dv = vec![T::zero(); steps * nseq * n2];
    for t in 0..steps {
        let mut dw = vec![T::zero(); nseq * n1];
        for (n, seq) in spec.data.iter().enumerate() {
            for i in 0..n1 {
                let mut acc = dt[lay.b + i];
                for j in 0..n0 {
                    acc += dt[lay.a + j * n1 + i] * seq.x[t][j];
                }
                if t > 0 {
                    let mut sec = T::zero();
                    for j in 0..n1 {
                        let k = n * n1 + j;
                        acc += dt[lay.w + j * n1 + i] * z.u[2 * t - 1][k] + th[lay.w + j * n1 + i] * d.u[2 * t - 1][k];
                        sec += dt[lay.w + j * n1 + i] * d.u[2 * t - 1][k];
                    }
                    second[2 * t] = second[2 * t].max((T::lit(2.0) * sec).abs());
                }
                dw[n * n1 + i] = acc;
            }
        }
        let ds: Vec<T> = z.u[2 * t]
            .iter()
            .zip(&d.u[2 * t])
            .map(|(&w, &dw)| leaky_dd(spec.alpha, w, dw))
            .collect();
        for n in 0..nseq {
            for o in 0..n2 {
                let mut acc = dt[lay.c + o];
                let mut sec = T::zero();
                for j in 0..n1 {
                    let k = n * n1 + j;
                    acc += dt[lay.v + j * n2 + o] * z.u[2 * t + 1][k] + th[lay.v + j * n2 + o] * d.u[2 * t + 1][k];
                    sec += dt[lay.v + j * n2 + o] * d.u[2 * t + 1][k];
                }
                second[2 * steps] = second[2 * steps].max((T::lit(2.0) * sec).abs());
                dv[(t * nseq + n) * n2 + o] = acc;
            }
        }
        want.push(dw);
        want.push(ds);
    }
    let dr = z.u[2 * steps]
        .iter()
        .zip(&d.u[2 * steps])
        .map(|(&v, &dv)| leaky_dd(spec.alpha, v, dv))
        .collect();
    want.push(dv);
    want.push(dr);
    (want, second)
}

fn check_shapes<T: Scalar>(spec: &RnnSpec<T>, z: &Point<T>) -> Result<()> {
    let lay = spec.layout();
    check_len("theta", lay.n, z.theta.len())?;
    check_len("layers", spec.depth(), z.u.len())?;
    let (n1, n2, nseq, steps) = (spec.n1, spec.n2, spec.sequences(), spec.steps);
    for (l, block) in z.u.iter().enumerate() {
        let want = if l < 2 * steps { nseq * n1 } else { steps * nseq * n2 };
        check_len(&format!("layer {}", l + 1), want, block.len())?;
    }
    Ok(())
}

/// Tangent-cone membership from the closed-form linearization of the layers.
pub fn rnn_tangent_cone_check<T: Scalar>(spec: &RnnSpec<T>, z: &Point<T>, d: &Direction<T>) -> Result<ConeMembership<T>> {
    check_shapes(spec, z)?;
    check_shapes(spec, d)?;
    let lifted = forward(spec, &z.theta)?;
    let residual = lifted
        .u
        .iter()
        .flatten()
        .zip(z.u.iter().flatten())
        .fold(T::zero(), |m, (&a, &b)| m.max((a - b).abs()));
    if residual > T::lit(FEASIBILITY_TOL) {
        return Err(Error::Infeasible {
            max_residual: residual.f64(),
        });
    }
    let (want, _) = linearize(spec, z, d);
    let layer_violation: Vec<T> = want
        .iter()
        .zip(&d.u)
        .map(|(w, du)| w.iter().zip(du).fold(T::zero(), |m, (&a, &b)| m.max((a - b).abs())))
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

/// Radial-cone membership: tangent with `D_W d_{s_{t-1}} = 0` and
/// `D_V d_{s_t} = 0` for every step.
pub fn rnn_radial_check<T: Scalar>(spec: &RnnSpec<T>, z: &Point<T>, d: &Direction<T>) -> Result<RadialMembership<T>> {
    let tan = rnn_tangent_cone_check(spec, z, d)?;
    let (_, second) = linearize(spec, z, d);
    let tol = T::lit(TANGENT_TOL) * (T::one() + d.norm_inf() * d.norm_inf());
    let curved = second.iter().position(|&s| s > tol);
    let member = tan.tangent && curved.is_none();
    let reason = if !tan.tangent {
        format!("not tangent (layer {})", tan.first_violating_layer.unwrap_or_default())
    } else if let Some(l) = curved {
        format!("nonzero bilinear second-order term in layer {}", l + 1)
    } else {
        "tangent with vanishing bilinear terms".into()
    };
    Ok(RadialMembership {
        member: Some(member),
        tangent: tan.tangent,
        second_order: second,
        grid: Vec::new(),
        reason,
    })
}

/// Reads one sequence per CSV file in `dir` (sorted by file name). Each file
/// has a header and columns `t, x_0..x_{N₀-1}, y_0..y_{N₂-1}`; rows are
/// ordered by `t`.
pub fn load_csv_dir<T: Scalar>(dir: &Path, n0: usize, n2: usize) -> Result<Vec<Sequence<T>>> {
    let mut files: Vec<_> = std::fs::read_dir(dir)
        .map_err(|e| Error::Parse(format!("{}: {e}", dir.display())))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("csv")))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Error::Parse(format!("no .csv files in {}", dir.display())));
    }
    files.iter().map(|f| load_csv(f, n0, n2)).collect()
}

pub fn load_csv<T: Scalar>(path: &Path, n0: usize, n2: usize) -> Result<Sequence<T>> {
    let err = |m: String| Error::Parse(format!("{}: {m}", path.display()));
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| err(e.to_string()))?;
    let mut rows: Vec<(f64, Vec<T>, Vec<T>)> = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| err(e.to_string()))?;
        if rec.len() != 1 + n0 + n2 {
            return Err(err(format!("expected {} columns, found {}", 1 + n0 + n2, rec.len())));
        }
        let nums: Vec<f64> = rec
            .iter()
            .map(|s| s.parse::<f64>().map_err(|e| err(format!("{s:?}: {e}"))))
            .collect::<Result<_>>()?;
        let vals: Vec<T> = nums[1..].iter().map(|&v| T::lit(v)).collect();
        rows.push((nums[0], vals[..n0].to_vec(), vals[n0..].to_vec()));
    }
    rows.sort_by(|a, b| a.0.total_cmp(&b.0));
    let (x, y) = rows.into_iter().map(|(_, x, y)| (x, y)).unzip();
    Ok(Sequence { x, y })
}

/// Small seeded instance: `N` sequences of length `T`, inputs and labels
/// uniform in `[−1, 1]`.
pub fn desk_instance(n: usize, steps: usize, n0: usize, n1: usize, n2: usize, lambda: f64, seed: u64) -> Result<RnnSpec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = |k: usize| -> Vec<f64> { (0..k).map(|_| rng.random_range(-1.0..1.0)).collect() };
    let data = (0..n)
        .map(|_| Sequence {
            x: (0..steps).map(|_| draw(n0)).collect(),
            y: (0..steps).map(|_| draw(n2)).collect(),
        })
        .collect();
    RnnSpec::new(n0, n1, n2, steps, 0.1, lambda, data)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrainReport<T> {
    pub schema_version: u32,
    pub thresholds: RnnThresholds<T>,
    pub penalty: PenaltyConfig<T>,
    pub solve: SolveResult<T>,
    pub first_p0: StationarityReport<T>,
    pub first_p1: StationarityReport<T>,
    pub second_p0: Option<StationarityReport<T>>,
    pub second_p1: Option<StationarityReport<T>>,
    pub relations: RelationRecord<T>,
    /// Second-order verdicts equal first-order verdicts on the level set.
    pub second_equals_first: bool,
}

/// Solves the penalized problem from `θ₀` (zero by default), then checks
/// first- and second-order stationarity for both reformulations.
pub fn train_and_certify<T: Scalar>(
    spec: &RnnSpec<T>,
    beta: Option<(T, T)>,
    theta0: Option<&[T]>,
    solver: &SolverConfig,
    search: &SearchConfig,
) -> Result<TrainReport<T>> {
    let problem = build_problem(spec)?;
    let penalty = rnn_penalty(spec, beta)?;
    let zero = vec![T::zero(); problem.n_params()];
    let solved = solve(&problem, &penalty.beta, theta0.unwrap_or(&zero), solver)?;
    let z = &solved.z;
    let beta = Some(penalty.beta.as_slice());
    let first_p0 = check_first_order(&problem, z, Target::P0, None, search)?;
    let first_p1 = check_first_order(&problem, z, Target::P1, beta, search)?;
    let second_p0 = match first_p0.verdict {
        crate::stationarity::Verdict::Stationary => {
            Some(check_second_order(&problem, z, Target::P0, None, false, &first_p0, search)?)
        }
        _ => None,
    };
    let second_p1 = match first_p1.verdict {
        crate::stationarity::Verdict::Stationary => Some(check_second_order(
            &problem,
            z,
            Target::P1,
            beta,
            penalty.certified,
            &first_p1,
            search,
        )?),
        _ => None,
    };
    let relations = relation_record(
        &problem,
        z,
        &penalty,
        Some(first_p0.verdict),
        second_p0.as_ref().map(|r| r.verdict),
        first_p1.verdict,
        second_p1.as_ref().map(|r| r.verdict),
    )?;
    let same = |f: &StationarityReport<T>, s: &Option<StationarityReport<T>>| match s {
        Some(s) => s.verdict == f.verdict,
        None => true,
    };
    let second_equals_first = same(&first_p0, &second_p0) && same(&first_p1, &second_p1);
    Ok(TrainReport {
        schema_version: crate::SCHEMA_VERSION,
        thresholds: rnn_thresholds(spec),
        penalty,
        solve: solved,
        first_p0,
        first_p1,
        second_p0,
        second_p1,
        relations,
        second_equals_first,
    })
}
