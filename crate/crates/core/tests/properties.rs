mod common;

use mcdstat::cones::{lift_direction, radial_membership, tangent_membership};
use mcdstat::dcalc::{dd_expr, dd_objective, dd_penalized, layer_jets, Order};
use mcdstat::expr::Expr;
use mcdstat::instances::square_chain;
use mcdstat::model::{CompositeProblem, Point};
use mcdstat::oracle::{fd_penalized, OracleConfig};
use mcdstat::penalty::{interval_moduli, sampled_moduli, thresholds};
use mcdstat::rnn::{build_problem, desk_instance, expand_beta, forward, rnn_moduli};
use mcdstat::solver::{solve, SolverConfig};
use mcdstat::stationarity::{check_box, check_first_order, SearchConfig, SearchMode, Target, Verdict};
use proptest::prelude::*;
use rand::Rng;

use common::{random_point, random_problem, rng, uniform};

fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
}

fn nonnegative(p: &CompositeProblem<f64>) -> CompositeProblem<f64> {
    CompositeProblem::new(p.n_params(), p.lambda(), p.layers().to_vec(), Expr::square(p.outer().clone())).unwrap()
}

/// Piecewise-affine expression in `n` variables with every kink through the origin.
fn pa_expr(r: &mut rand_chacha::ChaCha8Rng, depth: usize, n: usize) -> Expr<f64> {
    if depth == 0 || r.random_bool(0.25) {
        let c = (0..n).map(|_| r.random_range(-1.0..1.0)).collect();
        return Expr::affine(c, (0..n).map(Expr::param).collect(), 0.0);
    }
    match r.random_range(0..5) {
        0 => Expr::max(pa_expr(r, depth - 1, n), pa_expr(r, depth - 1, n)),
        1 => Expr::abs(pa_expr(r, depth - 1, n)),
        2 => Expr::plus(pa_expr(r, depth - 1, n)),
        3 => Expr::leaky_relu(r.random_range(0.0..0.9), pa_expr(r, depth - 1, n)),
        _ => Expr::sum(vec![pa_expr(r, depth - 1, n), pa_expr(r, depth - 1, n)]),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn reduced_objective_equals_objective_of_lift(seed in any::<u64>()) {
        let mut r = rng(seed);
        let p = random_problem(&mut r);
        let th = uniform(&mut r, p.n_params(), 1.0);
        let z = p.lift(&th).unwrap();
        prop_assert!(rel_close(p.reduced(&th).unwrap(), p.objective(&z).unwrap(), 1e-14));
        let again = p.lift(&z.theta).unwrap();
        prop_assert_eq!(again, z);
    }

    #[test]
    fn penalized_dominates_objective(seed in any::<u64>()) {
        let mut r = rng(seed);
        let p = random_problem(&mut r);
        let beta: Vec<f64> = (0..p.depth()).map(|_| r.random_range(0.1..2.0)).collect();
        let z = p.lift(&uniform(&mut r, p.n_params(), 1.0)).unwrap();
        prop_assert_eq!(p.penalized(&z, &beta).unwrap(), p.objective(&z).unwrap());
        let off = random_point(&mut r, &p, 1.0);
        let (pen, obj) = (p.penalized(&off, &beta).unwrap(), p.objective(&off).unwrap());
        prop_assert!(pen >= obj);
        prop_assert_eq!(pen == obj, p.max_residual(&off).unwrap() == 0.0);
    }

    #[test]
    fn level_set_bounds_theta(seed in any::<u64>()) {
        let mut r = rng(seed);
        let p = nonnegative(&random_problem(&mut r));
        let beta: Vec<f64> = (0..p.depth()).map(|_| r.random_range(0.1..2.0)).collect();
        let z = random_point(&mut r, &p, 2.0);
        let gamma = p.penalized(&z, &beta).unwrap();
        let norm = z.theta.iter().map(|x| x * x).sum::<f64>().sqrt();
        prop_assert!(norm <= (gamma / p.lambda()).sqrt() * (1.0 + 1e-12));
    }

    #[test]
    fn directional_derivatives_are_homogeneous(seed in any::<u64>(), tau in 0.01f64..100.0) {
        let mut r = rng(seed);
        let p = random_problem(&mut r);
        let beta: Vec<f64> = (0..p.depth()).map(|_| r.random_range(0.1..2.0)).collect();
        let z = random_point(&mut r, &p, 1.0);
        let d = random_point(&mut r, &p, 1.0);
        let a = dd_penalized(&p, &z, &d, &beta, Order::Second).unwrap();
        let b = dd_penalized(&p, &z, &d.scaled(tau), &beta, Order::Second).unwrap();
        prop_assert!(rel_close(b.first, tau * a.first, 1e-12));
        prop_assert!(rel_close(b.second.unwrap(), tau * tau * a.second.unwrap(), 1e-12));
        prop_assert_eq!(b.first < 0.0, a.first < 0.0);
    }

    #[test]
    fn penalized_derivative_splits_into_objective_and_residual_terms(seed in any::<u64>()) {
        let mut r = rng(seed);
        let p = random_problem(&mut r);
        let beta: Vec<f64> = (0..p.depth()).map(|_| r.random_range(0.1..2.0)).collect();
        let z = random_point(&mut r, &p, 1.0);
        if r.random_bool(0.3) {
            // put some residual exactly at zero so the |.| kink is exercised
            let l = r.random_range(1..=p.depth());
            let mut y = z.clone();
            y.u[l - 1] = p.layer_values(&y, l);
            let d = random_point(&mut r, &p, 1.0);
            check_split(&p, &y, &d, &beta)?;
        }
        let d = random_point(&mut r, &p, 1.0);
        check_split(&p, &z, &d, &beta)?;
    }

    #[test]
    fn penalized_equals_objective_along_tangent_directions(seed in any::<u64>()) {
        let mut r = rng(seed);
        let p = random_problem(&mut r);
        let beta: Vec<f64> = (0..p.depth()).map(|_| r.random_range(0.1..2.0)).collect();
        let z = p.lift(&uniform(&mut r, p.n_params(), 1.0)).unwrap();
        let d = lift_direction(&p, &z, &uniform(&mut r, p.n_params(), 1.0)).unwrap();
        let a = dd_penalized(&p, &z, &d, &beta, Order::First).unwrap().first;
        let b = dd_objective(&p, &z, &d, Order::First).unwrap().first;
        prop_assert_eq!(a, b);
    }

    #[test]
    fn lifted_directions_are_tangent_and_cone_is_homogeneous(seed in any::<u64>(), tau in 0.0f64..50.0) {
        let mut r = rng(seed);
        let p = random_problem(&mut r);
        let z = p.lift(&uniform(&mut r, p.n_params(), 1.0)).unwrap();
        let d = lift_direction(&p, &z, &uniform(&mut r, p.n_params(), 1.0)).unwrap();
        prop_assert!(tangent_membership(&p, &z, &d).unwrap().tangent);
        prop_assert!(tangent_membership(&p, &z, &d.scaled(tau)).unwrap().tangent);
    }

    #[test]
    fn radial_directions_are_tangent(seed in any::<u64>()) {
        let mut r = rng(seed);
        let p = random_problem(&mut r);
        let z = p.lift(&uniform(&mut r, p.n_params(), 1.0)).unwrap();
        let d = if r.random_bool(0.5) {
            lift_direction(&p, &z, &uniform(&mut r, p.n_params(), 1.0)).unwrap()
        } else {
            random_point(&mut r, &p, 1.0)
        };
        let rad = radial_membership(&p, &z, &d).unwrap();
        if rad.member == Some(true) {
            prop_assert!(tangent_membership(&p, &z, &d).unwrap().tangent);
        }
    }

    #[test]
    fn thresholds_are_monotone(
        k_g in 0.0f64..10.0,
        k in proptest::collection::vec(0.0f64..10.0, 0..5),
        which in 0usize..6,
        bump in 0.0f64..5.0,
    ) {
        let base = thresholds(k_g, &k);
        prop_assert_eq!(base.len(), k.len() + 1);
        prop_assert_eq!(*base.last().unwrap(), k_g);
        let (mut k_g2, mut k2) = (k_g, k.clone());
        if which == 0 || k.is_empty() {
            k_g2 += bump;
        } else {
            let i = (which - 1) % k.len();
            k2[i] += bump;
        }
        let up = thresholds(k_g2, &k2);
        for (a, b) in base.iter().zip(&up) {
            prop_assert!(b >= a);
        }
    }

    #[test]
    fn witnesses_reverify_below_tolerance(seed in any::<u64>()) {
        let mut r = rng(seed);
        let p = random_problem(&mut r);
        let z = p.lift(&uniform(&mut r, p.n_params(), 1.0)).unwrap();
        let cfg = SearchConfig { starts: 8, seed, ..SearchConfig::default() };
        let rep = check_first_order(&p, &z, Target::P, None, &cfg).unwrap();
        if rep.verdict == Verdict::NotStationary {
            let w = rep.witness.unwrap();
            let v = mcdstat::dcalc::dd_reduced(&p, &z.theta, &w.direction.theta, Order::First).unwrap().first;
            prop_assert!(v < -cfg.tol / 2.0);
        }
    }
}

fn check_split(p: &CompositeProblem<f64>, z: &Point<f64>, d: &Point<f64>, beta: &[f64]) -> Result<(), TestCaseError> {
    let theta1 = dd_penalized(p, z, d, beta, Order::First).unwrap().first;
    let f1 = dd_objective(p, z, d, Order::First).unwrap().first;
    let res = p.residuals(z).unwrap();
    let mut extra = 0.0;
    for l in 1..=p.depth() {
        let jets = layer_jets(p, z, d, l);
        for ((&rv, j), &du) in res[l - 1].iter().zip(&jets).zip(&d.u[l - 1]) {
            let s = du - j.d1;
            extra += beta[l - 1] * if rv > 0.0 { s } else if rv < 0.0 { -s } else { s.abs() };
        }
    }
    prop_assert!(rel_close(theta1, f1 + extra, 1e-12), "{theta1} vs {f1} + {extra}");
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn sampled_evidence_is_monotone_in_starts(seed in any::<u64>()) {
        let mut r = rng(seed);
        let p = random_problem(&mut r);
        let z = p.lift(&uniform(&mut r, p.n_params(), 1.0)).unwrap();
        let mut last = f64::INFINITY;
        for starts in [2, 8, 32] {
            let cfg = SearchConfig { starts, seed, ..SearchConfig::default() };
            let rep = check_first_order(&p, &z, Target::P, None, &cfg).unwrap();
            prop_assert!(rep.min_value <= last, "{} after {}", rep.min_value, last);
            last = rep.min_value;
        }
    }

    #[test]
    fn enumerate_matches_direction_grid(seed in any::<u64>()) {
        let mut r = rng(seed);
        let n = r.random_range(1..=3);
        let f = pa_expr(&mut r, 3, n);
        let x = vec![0.0; n];
        let inf = vec![f64::INFINITY; n];
        let ninf = vec![f64::NEG_INFINITY; n];
        let cfg = SearchConfig { mode: SearchMode::Enumerate, ..SearchConfig::default() };
        let rep = check_box(&f, &x, &ninf, &inf, Order::First, &cfg).unwrap();
        let mut grid_min = f64::INFINITY;
        for _ in 0..10_000 {
            let d = uniform(&mut r, n, 1.0);
            let norm = d.iter().map(|v| v * v).sum::<f64>().sqrt();
            let d: Vec<f64> = d.iter().map(|v| v / norm).collect();
            grid_min = grid_min.min(dd_expr(&f, &x, &d, Order::First).unwrap().first);
        }
        match rep.verdict {
            Verdict::Stationary => prop_assert!(grid_min >= -cfg.tol, "grid found {grid_min}"),
            Verdict::NotStationary => prop_assert!(rep.min_value < -cfg.tol && grid_min < 0.0, "grid min {grid_min}"),
            Verdict::Inconclusive => prop_assert!(false, "enumerate was inconclusive"),
        }
    }

    #[test]
    fn rnn_forward_pass_matches_expression_graph(seed in any::<u64>()) {
        let spec = desk_instance(2, 3, 2, 3, 1, 0.01, seed).unwrap();
        let p = build_problem(&spec).unwrap();
        let mut r = rng(seed);
        let th = uniform(&mut r, p.n_params(), 2.0);
        let a = p.lift(&th).unwrap();
        let b = forward(&spec, &th).unwrap();
        for (x, y) in a.flatten().iter().zip(b.flatten()) {
            prop_assert!((x - y).abs() <= 1e-12 * (1.0 + x.abs()));
        }
    }

    #[test]
    fn rnn_derivatives_match_finite_differences(seed in any::<u64>(), at_kink in any::<bool>()) {
        let spec = desk_instance(1, 3, 2, 3, 1, 0.01, 7).unwrap();
        let p = build_problem(&spec).unwrap();
        let mut r = rng(seed);
        let beta = expand_beta(&spec, 50.0, 0.5);
        let z = if at_kink { p.lift(&vec![0.0; p.n_params()]).unwrap() } else { random_point(&mut r, &p, 1.0) };
        let d = random_point(&mut r, &p, 1.0);
        let dd = dd_penalized(&p, &z, &d, &beta, Order::First).unwrap().first;
        let fd = fd_penalized(&p, &z, &d, &beta, Order::First, None, &OracleConfig::default()).unwrap();
        prop_assert!((dd - fd.first.value).abs() <= 1e-5 * (1.0 + dd.abs()), "{dd} vs {}", fd.first.value);
    }
}

#[test]
fn sampled_moduli_never_exceed_enclosures() {
    let p = square_chain::<f64>();
    let beta = [1.0, 0.6];
    let gamma = p.gamma_bar().unwrap();
    let upper = interval_moduli(&p, &beta, gamma, 1e-3).unwrap().unwrap();
    let lower = sampled_moduli(&p, &beta, gamma, 1e-3, 10_000, 3).unwrap();
    assert!(lower.k_g <= upper.k_g);
    assert!(lower.k[0] <= upper.k[0]);
}

#[test]
fn sampled_rnn_moduli_never_exceed_closed_form() {
    let spec = desk_instance(1, 3, 2, 3, 1, 0.01, 7).unwrap();
    let p = build_problem(&spec).unwrap();
    let closed = rnn_moduli(&spec);
    let beta = expand_beta(&spec, 50.0, 0.5);
    let sampled = sampled_moduli(&p, &beta, p.gamma_bar().unwrap(), 1e-3, 4_000, 11).unwrap();
    assert!(sampled.k_g <= closed.k_g, "{} > {}", sampled.k_g, closed.k_g);
    for (s, c) in sampled.k.iter().zip(&closed.k) {
        assert!(s <= c, "{s} > {c}");
    }
}

#[test]
fn solver_is_deterministic_and_feasible() {
    let p = square_chain::<f64>();
    let beta = [1.0, 0.6];
    let cfg = SolverConfig { seed: 5, ..SolverConfig::default() };
    let a = solve(&p, &beta, &[0.05], &cfg).unwrap();
    let b = solve(&p, &beta, &[0.05], &cfg).unwrap();
    assert_eq!(a.trace, b.trace);
    assert!(a.converged && a.probe_min >= -1e-6);
    assert!(a.max_residual <= 1e-5);
    for w in a.trace.windows(2) {
        assert!(w[1].objective <= w[0].objective);
    }
}
