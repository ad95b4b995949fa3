//! Acceptance criteria. Runs without the libtest harness so that every
//! criterion prints exactly one pass/fail line.

mod common;

use std::collections::BTreeSet;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use mcdstat::cones::{lift_direction, tangent_membership};
use mcdstat::dcalc::{dd_expr, dd_penalized, dd_reduced, Order};
use mcdstat::instances::{cubic_gap, max_product, scaled_relu, square_chain};
use mcdstat::model::{CompositeProblem, Point};
use mcdstat::oracle::{fd_penalized, fd_reduced, path_quotients, semidiff_probe, OracleConfig};
use mcdstat::penalty::{certify, infeasibility_direction, interval_moduli, thresholds, PenaltyConfig};
use mcdstat::rnn::{build_problem, desk_instance, rnn_penalty, rnn_thresholds, train_and_certify};
use mcdstat::solver::SolverConfig;
use mcdstat::stationarity::{check_box, check_first_order, check_second_order, compare_sets, SearchConfig, Target, Verdict};
use rand::Rng;

use common::{problem_variants, random_point, random_problem, relu_instance, rng, uniform, ALL_VARIANTS};

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

fn within(start: Instant, limit: f64) -> Outcome {
    let t = start.elapsed();
    if t <= Duration::from_secs_f64(limit) {
        Ok(format!("{:.2} s", t.as_secs_f64()))
    } else {
        Err(format!("took {:.2} s, limit {limit} s", t.as_secs_f64()))
    }
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let (f, lo, hi) = max_product::<f64>();
    let cfg = SearchConfig::default();
    let origin = [0.0, 0.0];
    let r1 = check_box(&f, &origin, &lo, &hi, Order::First, &cfg).map_err(|e| e.to_string())?;
    ensure!(r1.verdict == Verdict::Stationary, "origin first order: {:?}", r1.verdict);
    let r2 = check_box(&f, &origin, &lo, &hi, Order::Second, &cfg).map_err(|e| e.to_string())?;
    ensure!(r2.verdict == Verdict::NotStationary, "origin second order: {:?}", r2.verdict);
    let w = r2.witness.ok_or("no witness")?;
    let d = &w.direction.theta;
    ensure!(close(d[0], -d[1], 1e-9) && close(d[0].abs(), 1.0, 1e-9), "witness direction {d:?}");
    let v = w.second.ok_or("witness without second-order value")?;
    ensure!(close(v, -1.6, 1e-9), "witness value {v}");
    let along = dd_expr(&f, &origin, &[1.0, -1.0], Order::Second).map_err(|e| e.to_string())?;
    ensure!(close(along.second.unwrap_or(f64::NAN), -1.6, 1e-9), "f''(0; (1,-1)) = {:?}", along.second);
    for x in [[-1.0, 1.0], [1.0, -1.0]] {
        let r = check_box(&f, &x, &lo, &hi, Order::Second, &cfg).map_err(|e| e.to_string())?;
        ensure!(r.verdict == Verdict::Stationary, "{x:?}: {:?}", r.verdict);
    }
    within(start, 1.0).map(|t| format!("witness -1.6 along (1,-1), corners stationary, {t}"))
}

fn criterion_2() -> Outcome {
    let start = Instant::now();
    let p = square_chain::<f64>();
    let z = Point::zeros(1, p.dims());
    let beta = [1.0, 0.6];
    let cfg = SearchConfig::default();
    let m = interval_moduli(&p, &beta, p.gamma_bar().map_err(|e| e.to_string())?, 1e-6)
        .map_err(|e| e.to_string())?
        .ok_or("no moduli")?;
    ensure!(m.k_g <= 0.5386, "K_g = {}", m.k_g);
    ensure!(m.k[0] <= 0.21, "K_1 = {}", m.k[0]);
    let pc = certify(&p, &beta, m).map_err(|e| e.to_string())?;
    ensure!(pc.thresholds[0] < 1.0 && pc.thresholds[1] < 0.6, "thresholds {:?}", pc.thresholds);
    let rel = compare_sets(&p, &z, &pc, &cfg).map_err(|e| e.to_string())?;
    ensure!(rel.d0 == Some(Verdict::Stationary), "D0: {:?}", rel.d0);
    ensure!(rel.d1 == Verdict::Stationary, "D1: {:?}", rel.d1);
    ensure!(rel.sd0 == Some(Verdict::Stationary), "SD0: {:?}", rel.sd0);
    ensure!(rel.sd1 == Some(Verdict::NotStationary), "SD1: {:?}", rel.sd1);
    let d1 = check_first_order(&p, &z, Target::P1, Some(&beta), &cfg).map_err(|e| e.to_string())?;
    let sd1 = check_second_order(&p, &z, Target::P1, Some(&beta), true, &d1, &cfg).map_err(|e| e.to_string())?;
    let w = sd1.witness.ok_or("no witness")?;
    let t = w.direction.theta[0];
    ensure!(
        close(w.direction.u[0][0], t, 1e-9 * t.abs()) && w.direction.u[1][0] == 0.0,
        "witness direction {:?}",
        w.direction
    );
    let v = w.second.ok_or("witness without second-order value")?;
    ensure!(close(v, -0.78 * t * t, 1e-9), "witness value {v} at t = {t}");
    for t in [0.5, 1.0, 2.0] {
        let d = Point {
            theta: vec![t],
            u: vec![vec![t], vec![0.0]],
        };
        let v = dd_penalized(&p, &z, &d, &beta, Order::Second).map_err(|e| e.to_string())?.second;
        ensure!(close(v.unwrap_or(f64::NAN), -0.78 * t * t, 1e-9), "Theta''(0; ({t},{t},0)) = {v:?}");
    }
    within(start, 5.0).map(|s| format!("z0 in D0, D1, SD0, not SD1; witness -0.78 t^2; {s}"))
}

fn criterion_3() -> Outcome {
    let p = scaled_relu::<f64>(0.5).map_err(|e| e.to_string())?;
    let theta = [0.0, 0.0];
    for d1 in [1e-3, 0.25, 1.0, 3.0, 1e3] {
        let v = dd_reduced(&p, &theta, &[d1, 0.0], Order::First).map_err(|e| e.to_string())?.first;
        ensure!(v == -2.0 * d1, "Psi'(0; ({d1}, 0)) = {v}");
    }
    let z = Point::zeros(2, p.dims());
    let r = check_first_order(&p, &z, Target::P, None, &SearchConfig::default()).map_err(|e| e.to_string())?;
    ensure!(r.verdict == Verdict::NotStationary, "verdict {:?}", r.verdict);
    let w = r.witness.ok_or("no witness")?;
    ensure!(close(w.first, -2.0, 1e-12), "witness derivative {}", w.first);
    Ok("Psi'(0; (d1, 0)) = -2 d1 exactly, witness -2".into())
}

fn criterion_4() -> Outcome {
    let h = cubic_gap::<f64>();
    let x = [1.0, 1.0];
    let cfg = OracleConfig::default();
    let fixed = dd_expr(&h, &x, &[3.0, 1.0], Order::Second).map_err(|e| e.to_string())?;
    let h2 = fixed.second.unwrap_or(f64::NAN);
    ensure!(close(h2, 6.0, 1e-9), "h''((1,1); (3,1)) = {h2}");
    let plus = path_quotients(&h, &x, |t| vec![3.0 + 4.0 * t, 1.0], &cfg).map_err(|e| e.to_string())?;
    let minus = path_quotients(&h, &x, |t| vec![3.0 - 4.0 * t, 1.0], &cfg).map_err(|e| e.to_string())?;
    ensure!(close(plus.limit.value, -6.0, 1e-3), "limit along (3+4t, 1): {}", plus.limit.value);
    ensure!(close(minus.limit.value, 6.0, 1e-3), "limit along (3-4t, 1): {}", minus.limit.value);
    let probe = semidiff_probe(&h, &x, &[3.0, 1.0], 8, 0, &cfg).map_err(|e| e.to_string())?;
    ensure!(!probe.consistent, "semidifferentiability failure not reported (gap {})", probe.largest_gap);
    Ok(format!(
        "path limits {:.4} / {:.4}, fixed 6, reported gap {:.3}",
        plus.limit.value, minus.limit.value, probe.largest_gap
    ))
}

fn agrees(dd: f64, fd: f64) -> bool {
    (dd - fd).abs() <= 1e-5 * (1.0 + dd.abs())
}

fn criterion_5() -> Outcome {
    let mut r = rng(5);
    let cfg = OracleConfig::default();
    let mut seen = BTreeSet::new();
    let mut checks = 0;
    let mut failures = Vec::new();
    for case in 0..120 {
        let p = random_problem(&mut r);
        problem_variants(&p, &mut seen);
        let z = random_point(&mut r, &p, 1.0);
        let d = random_point(&mut r, &p, 1.0);
        let beta: Vec<f64> = (0..p.depth()).map(|_| r.random_range(0.1..2.0)).collect();
        let dd = dd_penalized(&p, &z, &d, &beta, Order::Second).map_err(|e| e.to_string())?;
        let fd = fd_penalized(&p, &z, &d, &beta, Order::Second, Some(dd.first), &cfg).map_err(|e| e.to_string())?;
        checks += 1;
        if !agrees(dd.first, fd.first.value) {
            failures.push(format!("case {case} Theta' {} vs {}", dd.first, fd.first.value));
        }
        if let (Some(a), Some(b)) = (dd.second, fd.second) {
            checks += 1;
            if !agrees(a, b.value) {
                failures.push(format!("case {case} Theta'' {a} vs {}", b.value));
            }
        }
        let th = uniform(&mut r, p.n_params(), 1.0);
        let dt = uniform(&mut r, p.n_params(), 1.0);
        let dd = dd_reduced(&p, &th, &dt, Order::Second).map_err(|e| e.to_string())?;
        let fd = fd_reduced(&p, &th, &dt, Order::Second, Some(dd.first), &cfg).map_err(|e| e.to_string())?;
        checks += 1;
        if !agrees(dd.first, fd.first.value) {
            failures.push(format!("case {case} phi' {} vs {}", dd.first, fd.first.value));
        }
        if let (Some(a), Some(b)) = (dd.second, fd.second) {
            checks += 1;
            if !agrees(a, b.value) {
                failures.push(format!("case {case} phi'' {a} vs {}", b.value));
            }
        }
    }
    ensure!(seen.len() == ALL_VARIANTS, "primitives covered: {seen:?}");
    ensure!(failures.is_empty(), "{} of {checks} disagree: {}", failures.len(), failures.join("; "));
    Ok(format!("{checks} comparisons over 120 instances, zero failures"))
}

fn tangent_vs_grid(p: &CompositeProblem<f64>, z: &Point<f64>, d: &Point<f64>) -> Result<(bool, bool), String> {
    let tangent = tangent_membership(p, z, d).map_err(|e| e.to_string())?.tangent;
    let scale = 1.0 + d.norm_inf();
    let feasible = [1e-6, 1e-7, 1e-8].iter().all(|&t| {
        p.residuals(&z.axpy(t, d))
            .map(|r| r.iter().flatten().all(|x| x.abs() <= 1e-12 * scale))
            .unwrap_or(false)
    });
    Ok((tangent, feasible))
}

/// Directional derivative of the ReLU argument in `relu_instance`.
fn relu_pre_activation(d: &Point<f64>, l: usize, i: usize) -> f64 {
    let t = &d.theta;
    match (l, i) {
        (1, 0) => t[0] - t[1],
        (1, 1) => t[2] - 2.0 * t[0],
        _ => d.u[0][0] - d.u[0][1] + 0.5 * t[1],
    }
}

fn criterion_6() -> Outcome {
    let mut r = rng(6);
    let mut worst = 0.0f64;
    let mut localized = 0;
    for _ in 0..100 {
        let p = random_problem(&mut r);
        let z = p.lift(&uniform(&mut r, p.n_params(), 1.0)).map_err(|e| e.to_string())?;
        let d = lift_direction(&p, &z, &uniform(&mut r, p.n_params(), 1.0)).map_err(|e| e.to_string())?;
        let m = tangent_membership(&p, &z, &d).map_err(|e| e.to_string())?;
        ensure!(m.tangent, "lifted direction rejected: {:?}", m.layer_violation);
        worst = worst.max(m.max_violation);
        let l = r.random_range(1..=p.depth());
        let i = r.random_range(0..p.dims()[l - 1]);
        let mut bad = d.clone();
        bad.u[l - 1][i] += if r.random_bool(0.5) { 0.5 } else { -0.5 };
        let m = tangent_membership(&p, &z, &bad).map_err(|e| e.to_string())?;
        ensure!(!m.tangent, "perturbed block {l} accepted");
        ensure!(m.first_violating_layer == Some(l), "perturbed block {l}, reported {:?}", m.first_violating_layer);
        ensure!(m.layer_violation[..l - 1].iter().all(|&v| v <= 1e-12), "violation leaks before layer {l}");
        localized += 1;
    }
    ensure!(worst <= 1e-12, "lifted direction violation {worst:e}");
    let p = relu_instance();
    let z = p.lift(&[0.0; 3]).map_err(|e| e.to_string())?;
    let mut agree = 0;
    let mut tangent_count = 0;
    for k in 0..10_000 {
        let dt = uniform(&mut r, 3, 1.0);
        let mut d = lift_direction(&p, &z, &dt).map_err(|e| e.to_string())?;
        match k % 4 {
            0 => {}
            1 => {
                let l = r.random_range(1..=2);
                let i = r.random_range(0..p.dims()[l - 1]);
                d.u[l - 1][i] = r.random_range(-1.0..1.0);
            }
            2 => {
                let flat = uniform(&mut r, p.z_dim(), 1.0);
                d = Point::unflatten(&flat, 3, p.dims());
            }
            _ => {
                // the other branch of one ReLU kink
                let l = r.random_range(1..=2);
                let i = r.random_range(0..p.dims()[l - 1]);
                let a = relu_pre_activation(&d, l, i);
                d.u[l - 1][i] = if a > 0.0 { 0.0 } else { a };
                if l == 1 {
                    d.u[1][0] = relu_pre_activation(&d, 2, 0).max(0.0);
                }
            }
        }
        let (tangent, feasible) = tangent_vs_grid(&p, &z, &d)?;
        tangent_count += usize::from(tangent);
        if tangent == feasible {
            agree += 1;
        }
    }
    ensure!(agree == 10_000, "step-grid feasibility disagrees on {} of 10000 directions", 10_000 - agree);
    Ok(format!(
        "lifted violation {worst:.1e}, {localized} localized rejections, ReLU grid agrees on 10000 ({tangent_count} tangent)"
    ))
}

fn criterion_7() -> Outcome {
    let start = Instant::now();
    let spec = desk_instance(1, 3, 2, 3, 1, 0.01, 7).map_err(|e| e.to_string())?;
    let r = train_and_certify(&spec, None, None, &SolverConfig::default(), &SearchConfig::default())
        .map_err(|e| e.to_string())?;
    ensure!(r.penalty.certified, "beta not certified");
    let t = rnn_thresholds(&spec);
    let b = &r.penalty.beta;
    ensure!(
        close(b[0], 1.05 * t.t1, 1e-12 * t.t1) && close(b[b.len() - 1], 1.05 * t.t2, 1e-12 * t.t2),
        "beta {b:?} vs thresholds ({}, {})",
        t.t1,
        t.t2
    );
    ensure!(r.solve.probe_min >= -1e-6, "probe {:e}", r.solve.probe_min);
    ensure!(r.solve.max_residual <= 1e-5, "residual {:e}", r.solve.max_residual);
    ensure!(r.first_p0.verdict == r.first_p1.verdict, "P0 {:?} vs P1 {:?}", r.first_p0.verdict, r.first_p1.verdict);
    ensure!(r.first_p0.verdict == Verdict::Stationary, "not stationary: {:?}", r.first_p0.verdict);
    let sd0 = r.second_p0.as_ref().map(|x| x.verdict);
    let sd1 = r.second_p1.as_ref().map(|x| x.verdict);
    ensure!(sd0 == Some(r.first_p0.verdict), "SD0 {sd0:?}");
    ensure!(sd1 == Some(r.first_p1.verdict), "SD1 {sd1:?}");
    ensure!(r.relations.implications_hold, "violations {:?}", r.relations.violations);
    within(start, 60.0).map(|s| {
        format!(
            "probe {:.1e}, residual {:.1e}, D0 = D1 = SD0 = SD1 = stationary, {s}",
            r.solve.probe_min, r.solve.max_residual
        )
    })
}

fn criterion_8() -> Outcome {
    let spec = desk_instance(1, 3, 2, 3, 1, 0.01, 7).map_err(|e| e.to_string())?;
    let t = rnn_thresholds(&spec);
    let lambda = 0.01f64;
    let mut sq = 0.0;
    for s in &spec.data {
        for y in &s.y {
            for v in y {
                sq += v * v;
            }
        }
    }
    let gamma_y = sq / 6.0;
    let k = (gamma_y / lambda).sqrt();
    let gamma_1 = 1.0 + k + k * k;
    let t1 = gamma_1 * gamma_y * (2.0 / (3.0 * lambda)).sqrt();
    let t2 = (2.0 * gamma_y / 3.0).sqrt();
    ensure!(close(t.gamma_y, gamma_y, 1e-12), "gamma_y {} vs {gamma_y}", t.gamma_y);
    ensure!(close(t.t1, t1, 1e-12), "t1 {} vs {t1}", t.t1);
    ensure!(close(t.t2, t2, 1e-12), "t2 {} vs {t2}", t.t2);
    for kg in [0.0, 0.3, 1.0, 7.25] {
        let single = thresholds(kg, &[]);
        ensure!(single == vec![kg], "L = 1 thresholds {single:?} for K_g = {kg}");
    }
    Ok(format!("t1 = {t1:.6}, t2 = {t2:.6}; single-layer threshold is K_g"))
}

fn descent_trials(
    p: &CompositeProblem<f64>,
    pc: &PenaltyConfig<f64>,
    seed: u64,
    count: usize,
    theta_r: f64,
    u_r: f64,
) -> Result<usize, String> {
    let mut r = rng(seed);
    let mut done = 0;
    let mut attempts = 0;
    while done < count {
        attempts += 1;
        ensure!(attempts < 100_000, "could not sample infeasible points in the level set");
        let mut z = p.lift(&uniform(&mut r, p.n_params(), theta_r)).map_err(|e| e.to_string())?;
        let l = r.random_range(1..=p.depth());
        for v in z.u[l - 1].iter_mut() {
            *v += r.random_range(-u_r..u_r);
        }
        if r.random_bool(0.5) {
            let l2 = r.random_range(1..=p.depth());
            for v in z.u[l2 - 1].iter_mut() {
                *v += r.random_range(-u_r..u_r);
            }
        }
        let val = p.penalized(&z, &pc.beta).map_err(|e| e.to_string())?;
        if val > pc.gamma_bar || p.max_residual(&z).map_err(|e| e.to_string())? <= 1e-9 {
            continue;
        }
        let (_, d) = infeasibility_direction(p, &z)
            .map_err(|e| e.to_string())?
            .ok_or("no correction direction at an infeasible point")?;
        let slope = dd_penalized(p, &z, &d, &pc.beta, Order::First).map_err(|e| e.to_string())?.first;
        ensure!(slope < 0.0, "Theta' = {slope} at {z:?}");
        done += 1;
    }
    Ok(done)
}

fn criterion_9() -> Outcome {
    let p = square_chain::<f64>();
    let beta = [1.0, 0.6];
    let m = interval_moduli(&p, &beta, p.gamma_bar().map_err(|e| e.to_string())?, 1e-6)
        .map_err(|e| e.to_string())?
        .ok_or("no moduli")?;
    let pc = certify(&p, &beta, m).map_err(|e| e.to_string())?;
    ensure!(pc.certified, "square chain not certified");
    let a = descent_trials(&p, &pc, 91, 25, 0.1, 1e-4)?;
    let spec = desk_instance(1, 3, 2, 3, 1, 0.01, 7).map_err(|e| e.to_string())?;
    let rp = build_problem(&spec).map_err(|e| e.to_string())?;
    let pc = rnn_penalty(&spec, None).map_err(|e| e.to_string())?;
    ensure!(pc.certified, "RNN penalty not certified");
    let b = descent_trials(&rp, &pc, 92, 25, 0.5, 1e-3)?;
    Ok(format!("{} infeasible level-set points, Theta' < 0 on all", a + b))
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("box example: first vs second order", criterion_1),
        ("square chain: SD0 strictly contains SD1", criterion_2),
        ("scaled ReLU: exact -2 descent", criterion_3),
        ("cubic gap: path quotients", criterion_4),
        ("oracle agreement", criterion_5),
        ("tangent cone", criterion_6),
        ("exact penalty end to end", criterion_7),
        ("threshold formulas", criterion_8),
        ("constructive descent", criterion_9),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let label = format!("criterion {} ({name})", i + 1);
        if !filter.is_empty() && !filter.iter().any(|f| label.contains(f.as_str())) {
            continue;
        }
        match run() {
            Ok(detail) => println!("PASS {label}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {label}: {detail}");
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
