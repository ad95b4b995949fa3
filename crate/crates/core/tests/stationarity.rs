use mcdstat::dcalc::{dd_expr, dd_penalized, Order};
use mcdstat::instances::{max_product, scaled_relu, square_chain};
use mcdstat::model::Point;
use mcdstat::penalty::{certify, interval_moduli};
use mcdstat::stationarity::{
    check_box, check_first_order, check_second_order, compare_sets, SearchConfig, Target, Verdict,
};

#[test]
fn box_origin_has_negative_curvature() {
    let (f, lo, hi) = max_product::<f64>();
    let cfg = SearchConfig::default();
    let r1 = check_box(&f, &[0.0, 0.0], &lo, &hi, Order::First, &cfg).unwrap();
    assert_eq!(r1.verdict, Verdict::Stationary);
    let r2 = check_box(&f, &[0.0, 0.0], &lo, &hi, Order::Second, &cfg).unwrap();
    assert_eq!(r2.verdict, Verdict::NotStationary);
    let w = r2.witness.unwrap();
    let d = &w.direction.theta;
    assert!((d[0] + d[1]).abs() < 1e-6);
    let v = dd_expr(&f, &[0.0, 0.0], &[1.0, -1.0], Order::Second).unwrap();
    assert!((v.second.unwrap() + 1.6).abs() < 1e-9);
    assert!((w.second.unwrap() + 1.6).abs() < 1e-6);
}

#[test]
fn box_corners_are_second_order_stationary() {
    let (f, lo, hi) = max_product::<f64>();
    let cfg = SearchConfig::default();
    for x in [[-1.0, 1.0], [1.0, -1.0]] {
        let r = check_box(&f, &x, &lo, &hi, Order::Second, &cfg).unwrap();
        assert_eq!(r.verdict, Verdict::Stationary, "{x:?} {r:?}");
        assert_eq!(r.order, 2);
    }
}

#[test]
fn square_chain_verdicts() {
    let p = square_chain::<f64>();
    let z = Point::zeros(1, p.dims());
    let beta = [1.0, 0.6];
    let cfg = SearchConfig::default();
    let m = interval_moduli(&p, &beta, 1e-4, 1e-6).unwrap().unwrap();
    let pc = certify(&p, &beta, m).unwrap();
    assert!(pc.certified);
    let d0 = check_first_order(&p, &z, Target::P0, None, &cfg).unwrap();
    assert_eq!(d0.verdict, Verdict::Stationary);
    let sd0 = check_second_order(&p, &z, Target::P0, None, false, &d0, &cfg).unwrap();
    assert_eq!(sd0.verdict, Verdict::Stationary, "{sd0:?}");
    let d1 = check_first_order(&p, &z, Target::P1, Some(&beta), &cfg).unwrap();
    assert_eq!(d1.verdict, Verdict::Stationary, "{d1:?}");
    let sd1 = check_second_order(&p, &z, Target::P1, Some(&beta), true, &d1, &cfg).unwrap();
    assert_eq!(sd1.verdict, Verdict::NotStationary, "{sd1:?}");
    let w = sd1.witness.unwrap();
    let v = dd_penalized(&p, &z, &w.direction, &beta, Order::Second).unwrap();
    let t = w.direction.theta[0];
    assert!((v.second.unwrap() + 0.78 * t * t).abs() < 1e-9);
    let rec = compare_sets(&p, &z, &pc, &cfg).unwrap();
    assert!(rec.implications_hold);
}

#[test]
fn scaled_relu_origin_not_stationary() {
    let p = scaled_relu::<f64>(0.5).unwrap();
    let z = Point::zeros(2, p.dims());
    let cfg = SearchConfig::default();
    let r = check_first_order(&p, &z, Target::P, None, &cfg).unwrap();
    assert_eq!(r.verdict, Verdict::NotStationary);
    let w = r.witness.unwrap();
    assert!((w.first + 2.0).abs() < 1e-12);
}

#[test]
fn solver_square_chain_reaches_kink() {
    use mcdstat::solver::{solve, SolverConfig};
    let p = square_chain::<f64>();
    let r = solve(&p, &[1.0, 0.6], &[0.05], &SolverConfig::default()).unwrap();
    assert!(r.converged);
    assert!((r.z.theta[0].abs() - 2e-4f64.sqrt()).abs() < 1e-9);
}

#[test]
fn single_precision_matches_double() {
    use mcdstat::{Point32, Problem32};
    let p: Problem32 = scaled_relu::<f32>(0.5).unwrap();
    let v = mcdstat::dcalc::dd_reduced(&p, &[0.0, 0.0], &[1.0, 0.0], Order::First).unwrap();
    assert_eq!(v.first, -2.0f32);
    let z: Point32 = Point::zeros(2, p.dims());
    let r = check_first_order(&p, &z, Target::P, None, &SearchConfig::default()).unwrap();
    assert_eq!(r.verdict, Verdict::NotStationary);
    let chain = square_chain::<f32>();
    let d = Point {
        theta: vec![1.0f32],
        u: vec![vec![1.0], vec![0.0]],
    };
    let s = dd_penalized(&chain, &Point::zeros(1, chain.dims()), &d, &[1.0, 0.6], Order::Second).unwrap();
    assert!((s.second.unwrap() + 0.78).abs() < 1e-5);
}
