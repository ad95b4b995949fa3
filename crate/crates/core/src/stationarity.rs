//! First- and second-order d-stationarity checks for the reduced problem (P),
//! the constrained reformulation (P0) and the penalized problem (P1), the
//! strong-local-minimum sufficient condition, and the set relations between them.

use serde::Serialize;

use crate::cones::{lift_direction, radial_membership};
use crate::dcalc::{dd_expr, dd_objective, dd_penalized, dd_reduced, Order};
use crate::error::{check_len, Error, Result};
use crate::expr::Expr;
use crate::model::{CompositeProblem, Point};
use crate::penalty::{correction_direction, PenaltyConfig};
use crate::SCHEMA_VERSION;
use crate::scalar::Scalar;
use crate::search::{
    best, criticalize, enumerate_first, make_starts, normalize_or_zero, sphere_search, Cone,
    Goal, LocalResult, Model, SearchConfigInner,
};
use crate::tolerances::{CRITICAL_SLACK, FEASIBILITY_TOL, STATIONARITY_TOL};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Target {
    /// Reduced problem in `θ`.
    P,
    /// Constrained problem over `z`.
    P0,
    /// `ℓ1`-penalized problem over `z`.
    P1,
}

impl std::str::FromStr for Target {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "p" => Ok(Target::P),
            "p0" => Ok(Target::P0),
            "p1" => Ok(Target::P1),
            _ => Err(Error::InvalidParameter(format!("unknown target {s:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Stationary,
    NotStationary,
    Inconclusive,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SearchMode {
    /// Exact first-order minimum via one LP per activation pattern.
    Enumerate,
    /// Multistart descent on the unit sphere.
    Sample,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SearchConfig {
    pub mode: SearchMode,
    pub starts: usize,
    pub max_iters: usize,
    pub tol: f64,
    pub critical_slack: f64,
    pub seed: u64,
    /// Largest number of activation patterns enumerated before falling back to sampling.
    pub enumerate_limit: u128,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            mode: SearchMode::Sample,
            starts: 64,
            max_iters: 500,
            tol: STATIONARITY_TOL,
            critical_slack: CRITICAL_SLACK,
            seed: 0,
            enumerate_limit: 1 << 20,
        }
    }
}

impl SearchConfig {
    fn inner(&self) -> SearchConfigInner {
        SearchConfigInner {
            starts: self.starts,
            seed: self.seed,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Witness<T> {
    /// Direction scaled to unit max-norm; `u` is empty for parameter-space targets.
    pub direction: Point<T>,
    pub first: T,
    pub second: Option<T>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Coverage {
    Exhaustive,
    Sampled,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SearchSummary {
    pub coverage: Coverage,
    pub starts: usize,
    pub evaluations: usize,
    pub patterns: Option<usize>,
    pub tolerance: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StationarityReport<T> {
    pub schema_version: u32,
    pub target: Target,
    pub order: u8,
    pub verdict: Verdict,
    /// Smallest verified `f′` on a unit search direction (order 1), or `f⁽²⁾`
    /// over the critical directions found (order 2). Witnesses are rescaled to
    /// unit max-norm, so their values can differ.
    pub min_value: T,
    pub witness: Option<Witness<T>>,
    pub search: SearchSummary,
    pub note: String,
}

/// How a search direction maps to a checked quantity.
struct Problemish<'a, T: Scalar> {
    model: Model<'a, T>,
    cone: Cone,
    extra_starts: Vec<Vec<T>>,
    to_point: Box<dyn Fn(&[T]) -> Point<T> + Sync + 'a>,
    /// `(f′, f⁽²⁾)` recomputed through the public derivative routines.
    verify: Box<dyn Fn(&Point<T>, Order) -> Result<(T, Option<T>)> + Sync + 'a>,
    target: Target,
}

impl<T: Scalar> Problemish<'_, T> {
    /// Maps a search direction to a point scaled to unit max-norm.
    fn point(&self, d: &[T]) -> Point<T> {
        let p = (self.to_point)(d);
        let s = p.norm_inf();
        if s > T::zero() {
            p.scaled(T::one() / s)
        } else {
            p
        }
    }
}

fn report<T: Scalar>(
    target: Target,
    order: u8,
    verdict: Verdict,
    min_value: T,
    witness: Option<Witness<T>>,
    search: SearchSummary,
    note: impl Into<String>,
) -> StationarityReport<T> {
    StationarityReport {
        schema_version: SCHEMA_VERSION,
        target,
        order,
        verdict,
        min_value,
        witness,
        search,
        note: note.into(),
    }
}

fn run_first<T: Scalar>(p: &Problemish<'_, T>, cfg: &SearchConfig) -> Result<StationarityReport<T>> {
    let tol = T::lit(cfg.tol);
    let mut note = String::new();
    if cfg.mode == SearchMode::Enumerate {
        match enumerate_first(&p.model, &p.cone, cfg.enumerate_limit) {
            Ok(out) => {
                let summary = SearchSummary {
                    coverage: Coverage::Exhaustive,
                    starts: 0,
                    evaluations: out.patterns,
                    patterns: Some(out.patterns),
                    tolerance: cfg.tol,
                };
                if let (true, Some(d)) = (out.min_value < -tol, out.dir.as_ref()) {
                    let d = normalize_or_zero(d);
                    let (unit, _) = (p.verify)(&(p.to_point)(&d), Order::First)?;
                    if unit < -tol {
                        let point = p.point(&d);
                        let (first, _) = (p.verify)(&point, Order::First)?;
                        return Ok(report(
                            p.target,
                            1,
                            Verdict::NotStationary,
                            unit,
                            Some(Witness {
                                direction: point.clone(),
                                first,
                                second: None,
                            }),
                            summary,
                            "",
                        ));
                    }
                    note = "enumerated descent direction failed verification; sampled".into();
                } else {
                    return Ok(report(
                        p.target,
                        1,
                        Verdict::Stationary,
                        out.min_value.min(T::zero()),
                        None,
                        summary,
                        "",
                    ));
                }
            }
            Err(Error::TooManyPatterns { count }) => {
                note = format!("{count} activation patterns exceed the limit; sampled instead");
            }
            Err(e) => return Err(e),
        }
    }
    let inner = cfg.inner();
    let starts = make_starts(p.model.dim(), p.extra_starts.clone(), &inner);
    let goal = Goal::first_order();
    let results = sphere_search(&p.model, &goal, &p.cone, &starts, cfg.max_iters);
    let evaluations = results.iter().map(|r| r.evaluations).sum::<usize>();
    let summary = SearchSummary {
        coverage: Coverage::Sampled,
        starts: starts.len(),
        evaluations,
        patterns: None,
        tolerance: cfg.tol,
    };
    let Some(b) = best(&results) else {
        return Ok(report(p.target, 1, Verdict::Inconclusive, T::zero(), None, summary, "no admissible start"));
    };
    let (unit, _) = (p.verify)(&(p.to_point)(&normalize_or_zero(&b.dir)), Order::First)?;
    if unit < -tol {
        let point = p.point(&b.dir);
        let (first, _) = (p.verify)(&point, Order::First)?;
        Ok(report(
            p.target,
            1,
            Verdict::NotStationary,
            unit,
            Some(Witness {
                direction: point.clone(),
                first,
                second: None,
            }),
            summary,
            note,
        ))
    } else {
        Ok(report(p.target, 1, Verdict::Stationary, unit.min(T::zero()), None, summary, note))
    }
}

/// Extra acceptance test for a second-order witness (radial membership for P0).
type WitnessFilter<'a, T> = dyn Fn(&Point<T>) -> Result<Option<bool>> + Sync + 'a;

struct SecondSpec<'a, T> {
    /// Curvature-penalty weights per layer, as a function of the criticality weight.
    curv_weights: Box<dyn Fn(T) -> Vec<T> + 'a>,
    filter: Option<Box<WitnessFilter<'a, T>>>,
    /// Quantity whose sign is reported (defaults to `f⁽²⁾`).
    offset: Option<Box<dyn Fn(&Point<T>) -> Result<T> + Sync + 'a>>,
}

struct SecondOutcome<T> {
    verdict: Verdict,
    min_value: T,
    witness: Option<Witness<T>>,
    summary: SearchSummary,
    note: String,
    /// Best search objective at the last criticality weight tried.
    search_min: T,
}

fn run_second<T: Scalar>(p: &Problemish<'_, T>, spec: &SecondSpec<'_, T>, cfg: &SearchConfig) -> Result<SecondOutcome<T>> {
    let tol = T::lit(cfg.tol);
    let slack = T::lit(cfg.critical_slack);
    let inner = cfg.inner();
    let starts = make_starts(p.model.dim(), p.extra_starts.clone(), &inner);
    let mut evaluations = 0;
    let mut min_value = T::infinity();
    let mut undecided = false;
    let mut unresolved = false;
    let mut last_note = String::new();
    let mut search_min = T::infinity();
    for &m in &[1e2, 1e4, 1e6] {
        let m = T::lit(m);
        let goal = Goal {
            second: true,
            crit_weight: m,
            curv_weights: (spec.curv_weights)(m),
        };
        let mut results = sphere_search(&p.model, &goal, &p.cone, &starts, cfg.max_iters);
        evaluations += results.iter().map(|r| r.evaluations).sum::<usize>();
        results.sort_by(|a, b| a.value.partial_cmp(&b.value).unwrap_or(std::cmp::Ordering::Equal));
        search_min = results.first().map_or(T::infinity(), |r| r.value);
        let negatives: Vec<&LocalResult<T>> = results.iter().filter(|r| r.value < -tol).take(16).collect();
        if negatives.is_empty() {
            unresolved = false;
            break;
        }
        unresolved = true;
        for r in negatives {
            let (d, _) = criticalize(&p.model, &p.cone, &r.dir, slack);
            let point = p.point(&d);
            let (first, second) = (p.verify)(&point, Order::Second)?;
            let mut second = second.unwrap_or_default();
            if let Some(off) = &spec.offset {
                second += off(&point)?;
            }
            if first.abs() > slack {
                continue;
            }
            min_value = min_value.min(second);
            if second >= -tol {
                continue;
            }
            let ok = match &spec.filter {
                Some(f) => f(&point)?,
                None => Some(true),
            };
            match ok {
                Some(true) => {
                    return Ok(SecondOutcome {
                        verdict: Verdict::NotStationary,
                        min_value: second,
                        witness: Some(Witness {
                            direction: point.clone(),
                            first,
                            second: Some(second),
                        }),
                        summary: SearchSummary {
                            coverage: Coverage::Sampled,
                            starts: starts.len(),
                            evaluations,
                            patterns: None,
                            tolerance: cfg.tol,
                        },
                        note: String::new(),
                        search_min,
                    });
                }
                Some(false) => {}
                None => {
                    undecided = true;
                    last_note = "candidate direction with undecidable radial membership".into();
                }
            }
        }
    }
    let verdict = if undecided || unresolved {
        if last_note.is_empty() {
            last_note = "negative penalized curvature without a verified critical witness".into();
        }
        Verdict::Inconclusive
    } else {
        Verdict::Stationary
    };
    Ok(SecondOutcome {
        verdict,
        min_value: if min_value.is_finite() { min_value } else { T::zero() },
        witness: None,
        summary: SearchSummary {
            coverage: Coverage::Sampled,
            starts: starts.len(),
            evaluations,
            patterns: None,
            tolerance: cfg.tol,
        },
        note: last_note,
        search_min,
    })
}

fn require_feasible<T: Scalar>(problem: &CompositeProblem<T>, z: &Point<T>) -> Result<()> {
    let r = problem.max_residual(z)?;
    if r > T::lit(FEASIBILITY_TOL) {
        Err(Error::Infeasible {
            max_residual: r.f64(),
        })
    } else {
        Ok(())
    }
}

fn lifted_starts<T: Scalar>(model: &Model<'_, T>) -> Vec<Vec<T>> {
    let dim = model.dim();
    let g = model.probe(&vec![T::zero(); dim], false, None).g1;
    let neg: Vec<T> = g.iter().map(|&x| -x).collect();
    if neg.iter().any(|x| *x != T::zero()) {
        vec![neg]
    } else {
        Vec::new()
    }
}

fn reduced_target<'a, T: Scalar>(problem: &'a CompositeProblem<T>, z: &'a Point<T>) -> Problemish<'a, T> {
    let model = Model::Lifted {
        problem,
        z,
        beta: None,
        nested: true,
    };
    let theta = z.theta.clone();
    Problemish {
        extra_starts: lifted_starts(&model),
        model,
        cone: Cone::default(),
        to_point: Box::new(|d: &[T]| Point {
            theta: d.to_vec(),
            u: Vec::new(),
        }),
        verify: Box::new(move |p: &Point<T>, order| {
            let v = dd_reduced(problem, &theta, &p.theta, order)?;
            Ok((v.first, v.second))
        }),
        target: Target::P,
    }
}

fn constrained_target<'a, T: Scalar>(
    problem: &'a CompositeProblem<T>,
    z: &'a Point<T>,
    beta: Option<&'a [T]>,
    target: Target,
) -> Problemish<'a, T> {
    let model = Model::Lifted {
        problem,
        z,
        beta,
        nested: false,
    };
    Problemish {
        extra_starts: lifted_starts(&model),
        model,
        cone: Cone::default(),
        to_point: Box::new(move |d: &[T]| {
            lift_direction(problem, z, d).unwrap_or_else(|_| Point::zeros(problem.n_params(), problem.dims()))
        }),
        verify: Box::new(move |p: &Point<T>, order| {
            let v = match beta {
                Some(b) => dd_penalized(problem, z, p, b, order)?,
                None => dd_objective(problem, z, p, order)?,
            };
            Ok((v.first, v.second))
        }),
        target,
    }
}

fn penalized_target<'a, T: Scalar>(problem: &'a CompositeProblem<T>, z: &'a Point<T>, beta: &'a [T]) -> Result<Problemish<'a, T>> {
    let model = Model::Full {
        problem,
        z,
        beta: Some(beta),
    };
    let n = problem.n_params();
    let dims = problem.dims().to_vec();
    let mut extra = Vec::new();
    let res = problem.residuals(z)?;
    for l in 1..=problem.depth() {
        if res[l - 1].iter().any(|r| r.abs() > T::lit(FEASIBILITY_TOL)) {
            extra.push(correction_direction(problem, z, &res, l).flatten());
        }
    }
    let lifted = Model::Lifted {
        problem,
        z,
        beta: None,
        nested: false,
    };
    for s in lifted_starts(&lifted) {
        extra.push(lift_direction(problem, z, &s)?.flatten());
    }
    for j in 0..n {
        for s in [T::one(), -T::one()] {
            let mut e = vec![T::zero(); n];
            e[j] = s;
            extra.push(lift_direction(problem, z, &e)?.flatten());
        }
    }
    Ok(Problemish {
        extra_starts: extra,
        model,
        cone: Cone::default(),
        to_point: Box::new(move |d: &[T]| Point::unflatten(d, n, &dims)),
        verify: Box::new(move |p: &Point<T>, order| {
            let v = dd_penalized(problem, z, p, beta, order)?;
            Ok((v.first, v.second))
        }),
        target: Target::P1,
    })
}

/// First-order d-stationarity of `z` for the chosen target. For `P` only
/// `z.theta` is used; `P0` requires `z` feasible; `P1` requires `beta`.
pub fn check_first_order<T: Scalar>(
    problem: &CompositeProblem<T>,
    z: &Point<T>,
    target: Target,
    beta: Option<&[T]>,
    cfg: &SearchConfig,
) -> Result<StationarityReport<T>> {
    match target {
        Target::P => {
            let lifted = problem.lift(&z.theta)?;
            let target = reduced_target(problem, &lifted);
            run_first(&target, cfg)
        }
        Target::P0 => {
            problem.check_point(z)?;
            require_feasible(problem, z)?;
            run_first(&constrained_target(problem, z, None, Target::P0), cfg)
        }
        Target::P1 => {
            let beta = beta.ok_or_else(|| Error::InvalidParameter("target p1 needs beta".into()))?;
            problem.check_point(z)?;
            problem.check_beta(beta)?;
            run_first(&penalized_target(problem, z, beta)?, cfg)
        }
    }
}

/// Second-order d-stationarity. `first` must be a passing first-order report
/// for the same target. For `P1`, a `certified` configuration at a feasible
/// point in the level set also searches the lifted critical directions.
pub fn check_second_order<T: Scalar>(
    problem: &CompositeProblem<T>,
    z: &Point<T>,
    target: Target,
    beta: Option<&[T]>,
    certified: bool,
    first: &StationarityReport<T>,
    cfg: &SearchConfig,
) -> Result<StationarityReport<T>> {
    if first.target != target || first.order != 1 {
        return Err(Error::InvalidParameter(
            "second-order check needs the first-order report for the same target".into(),
        ));
    }
    if first.verdict != Verdict::Stationary {
        return Err(Error::FirstOrderFails);
    }
    let zero = |_| Vec::new();
    let out = match target {
        Target::P => {
            let lifted = problem.lift(&z.theta)?;
            let spec = SecondSpec {
                curv_weights: Box::new(zero),
                filter: None,
                offset: None,
            };
            let target = reduced_target(problem, &lifted);
            let out = run_second(&target, &spec, cfg)?;
            out
        }
        Target::P0 => {
            require_feasible(problem, z)?;
            let depth = problem.depth();
            let spec = SecondSpec {
                curv_weights: Box::new(move |m| vec![m; depth]),
                filter: Some(Box::new(move |p: &Point<T>| Ok(radial_membership(problem, z, p)?.member))),
                offset: None,
            };
            run_second(&constrained_target(problem, z, None, Target::P0), &spec, cfg)?
        }
        Target::P1 => {
            let beta = beta.ok_or_else(|| Error::InvalidParameter("target p1 needs beta".into()))?;
            let spec = SecondSpec {
                curv_weights: Box::new(zero),
                filter: None,
                offset: None,
            };
            let feasible = problem.max_residual(z)? <= T::lit(FEASIBILITY_TOL);
            let mut outcome = None;
            if certified && feasible {
                let lifted = run_second(&constrained_target(problem, z, Some(beta), Target::P1), &spec, cfg)?;
                if lifted.verdict == Verdict::NotStationary {
                    outcome = Some(lifted);
                }
            }
            match outcome {
                Some(o) => o,
                None => run_second(&penalized_target(problem, z, beta)?, &spec, cfg)?,
            }
        }
    };
    Ok(report(target, 2, out.verdict, out.min_value, out.witness, out.summary, out.note))
}

/// Stationarity of `min f(x)` over the box `[lower, upper]` at `x`. The box
/// tangent cone is polyhedral, so it also serves as the radial cone.
pub fn check_box<T: Scalar>(
    f: &Expr<T>,
    x: &[T],
    lower: &[T],
    upper: &[T],
    order: Order,
    cfg: &SearchConfig,
) -> Result<StationarityReport<T>> {
    check_len("lower bounds", x.len(), lower.len())?;
    check_len("upper bounds", x.len(), upper.len())?;
    let tol = T::lit(FEASIBILITY_TOL);
    let mut signs = Vec::with_capacity(x.len());
    for ((&xi, &lo), &hi) in x.iter().zip(lower).zip(upper) {
        if xi < lo - tol || xi > hi + tol {
            return Err(Error::Infeasible {
                max_residual: (lo - xi).max(xi - hi).f64(),
            });
        }
        signs.push(if hi - lo <= tol {
            // degenerate coordinate: only d_i = 0 is tangent
            2
        } else if xi - lo <= tol {
            1
        } else if hi - xi <= tol {
            -1
        } else {
            0
        });
    }
    let fixed: Vec<usize> = signs.iter().enumerate().filter(|(_, &s)| s == 2).map(|(i, _)| i).collect();
    if !fixed.is_empty() {
        return Err(Error::InvalidParameter(format!(
            "degenerate box in coordinates {fixed:?}"
        )));
    }
    let p = Problemish {
        model: Model::Expr { e: f, x },
        cone: Cone { signs },
        extra_starts: Vec::new(),
        to_point: Box::new(|d: &[T]| Point {
            theta: d.to_vec(),
            u: Vec::new(),
        }),
        verify: Box::new(move |p: &Point<T>, order| {
            let v = dd_expr(f, x, &p.theta, order)?;
            Ok((v.first, v.second))
        }),
        target: Target::P,
    };
    let first = run_first(&p, cfg)?;
    if order == Order::First || first.verdict != Verdict::Stationary {
        return Ok(first);
    }
    let spec = SecondSpec {
        curv_weights: Box::new(|_| Vec::new()),
        filter: None,
        offset: None,
    };
    let out = run_second(&p, &spec, cfg)?;
    Ok(report(Target::P, 2, out.verdict, out.min_value, out.witness, out.summary, out.note))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Sufficiency {
    /// Certified strict local minimizer.
    Holds,
    Fails,
    Inconclusive,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SufficientReport<T> {
    pub schema_version: u32,
    pub verdict: Sufficiency,
    pub first_order: StationarityReport<T>,
    /// Smallest `F⁽²⁾ − Σ β_ℓ ‖ψ⁽²⁾_{ℓ-1}‖₁` over critical tangent directions found.
    pub min_value: T,
    pub witness: Option<Witness<T>>,
    pub note: String,
}

/// Sufficient condition for a strict local minimizer of `Θ` at a feasible
/// point of the level set: `Θ′ ≥ 0`, and `F⁽²⁾ − Σ β_ℓ‖ψ⁽²⁾_{ℓ-1}‖₁ > 0` for
/// nonzero tangent directions with `F′ = 0`.
pub fn check_sufficient<T: Scalar>(
    problem: &CompositeProblem<T>,
    z: &Point<T>,
    config: &PenaltyConfig<T>,
    cfg: &SearchConfig,
) -> Result<SufficientReport<T>> {
    crate::penalty::require_certified(config)?;
    require_feasible(problem, z)?;
    let theta = problem.penalized(z, &config.beta)?;
    if theta > config.gamma_bar * (T::one() + T::lit(1e-9)) + T::lit(1e-12) {
        return Err(Error::Uncertified(format!(
            "point outside the certified level set (Θ = {theta}, γ̄ = {})",
            config.gamma_bar
        )));
    }
    let first = check_first_order(problem, z, Target::P1, Some(&config.beta), cfg)?;
    if first.verdict != Verdict::Stationary {
        return Ok(SufficientReport {
            schema_version: SCHEMA_VERSION,
            verdict: if first.verdict == Verdict::NotStationary {
                Sufficiency::Fails
            } else {
                Sufficiency::Inconclusive
            },
            min_value: first.min_value,
            witness: first.witness.clone(),
            first_order: first,
            note: "first-order condition".into(),
        });
    }
    let beta = config.beta.clone();
    let neg_beta: Vec<T> = beta.iter().map(|&b| -b).collect();
    let b2 = beta.clone();
    let spec = SecondSpec {
        curv_weights: Box::new(move |_| neg_beta.clone()),
        filter: None,
        offset: Some(Box::new(move |p: &Point<T>| {
            let mut s = T::zero();
            for (l, &b) in b2.iter().enumerate() {
                let jets = crate::dcalc::layer_jets(problem, z, p, l + 1);
                s += b * jets.iter().map(|j| j.d2.abs()).sum::<T>();
            }
            Ok(-s)
        })),
    };
    let out = run_second(&constrained_target(problem, z, None, Target::P0), &spec, cfg)?;
    let tol = T::lit(cfg.tol);
    let verdict = match out.verdict {
        Verdict::NotStationary => Sufficiency::Fails,
        Verdict::Inconclusive => Sufficiency::Inconclusive,
        Verdict::Stationary if out.search_min > tol => Sufficiency::Holds,
        Verdict::Stationary => Sufficiency::Inconclusive,
    };
    Ok(SufficientReport {
        schema_version: SCHEMA_VERSION,
        verdict,
        first_order: first,
        min_value: out.min_value,
        witness: out.witness,
        note: out.note,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RelationRecord<T> {
    pub schema_version: u32,
    pub feasible: bool,
    pub max_residual: T,
    pub penalized_value: T,
    pub gamma_bar: T,
    pub in_level_set: bool,
    pub certified: bool,
    pub d0: Option<Verdict>,
    pub sd0: Option<Verdict>,
    pub d1: Verdict,
    pub sd1: Option<Verdict>,
    /// Every set relation implied by the exact-penalty theory holds here.
    pub implications_hold: bool,
    pub violations: Vec<String>,
}

/// Runs the P0 and P1 checks at `z` and tests the implied relations:
/// stationary points of `Θ` in the level set are feasible, first-order sets
/// coincide on the level set, and second-order P1 stationarity implies P0's.
pub fn compare_sets<T: Scalar>(
    problem: &CompositeProblem<T>,
    z: &Point<T>,
    config: &PenaltyConfig<T>,
    cfg: &SearchConfig,
) -> Result<RelationRecord<T>> {
    let feasible = problem.max_residual(z)? <= T::lit(FEASIBILITY_TOL);
    let beta = Some(config.beta.as_slice());
    let r1 = check_first_order(problem, z, Target::P1, beta, cfg)?;
    let sd1 = if r1.verdict == Verdict::Stationary {
        Some(check_second_order(problem, z, Target::P1, beta, config.certified, &r1, cfg)?.verdict)
    } else {
        None
    };
    let (d0, sd0) = if feasible {
        let r0 = check_first_order(problem, z, Target::P0, None, cfg)?;
        let s0 = if r0.verdict == Verdict::Stationary {
            Some(check_second_order(problem, z, Target::P0, None, false, &r0, cfg)?.verdict)
        } else {
            None
        };
        (Some(r0.verdict), s0)
    } else {
        (None, None)
    };
    relation_record(problem, z, config, d0, sd0, r1.verdict, sd1)
}

/// Builds the relation record from verdicts already computed at `z`.
pub fn relation_record<T: Scalar>(
    problem: &CompositeProblem<T>,
    z: &Point<T>,
    config: &PenaltyConfig<T>,
    d0: Option<Verdict>,
    sd0: Option<Verdict>,
    d1: Verdict,
    sd1: Option<Verdict>,
) -> Result<RelationRecord<T>> {
    let max_residual = problem.max_residual(z)?;
    let feasible = max_residual <= T::lit(FEASIBILITY_TOL);
    let penalized_value = problem.penalized(z, &config.beta)?;
    let in_level_set = penalized_value <= config.gamma_bar * (T::one() + T::lit(1e-9)) + T::lit(1e-12);
    let mut violations = Vec::new();
    if config.certified && in_level_set {
        if d1 == Verdict::Stationary && !feasible {
            violations.push("P1-stationary point in the level set is infeasible".to_string());
        }
        if let Some(v0) = d0 {
            let decided = v0 != Verdict::Inconclusive && d1 != Verdict::Inconclusive;
            if decided && (v0 == Verdict::Stationary) != (d1 == Verdict::Stationary) {
                violations.push("first-order P0 and P1 verdicts differ".to_string());
            }
        }
        if sd1 == Some(Verdict::Stationary) && sd0 == Some(Verdict::NotStationary) {
            violations.push("second-order P1 stationary but P0 not".to_string());
        }
    }
    Ok(RelationRecord {
        schema_version: SCHEMA_VERSION,
        feasible,
        max_residual,
        penalized_value,
        gamma_bar: config.gamma_bar,
        in_level_set,
        certified: config.certified,
        d0,
        sd0,
        d1,
        sd1,
        implications_hold: violations.is_empty(),
        violations,
    })
}
