//! Named regression scenarios with golden values.

use serde::Serialize;

use crate::dcalc::{dd_expr, dd_penalized, dd_reduced, Order};
use crate::error::{Error, Result};
use crate::instances::{cubic_gap, max_product, scaled_relu, square_chain};
use crate::model::Point;
use crate::oracle::{path_quotients, OracleConfig};
use crate::penalty::{certify, interval_moduli};
use crate::rnn::{desk_instance, train_and_certify};
use crate::solver::SolverConfig;
use crate::stationarity::{
    check_box, check_first_order, check_second_order, compare_sets, SearchConfig, SearchMode, Target, Verdict,
};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Check {
    pub label: String,
    pub expected: String,
    pub observed: String,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScenarioReport {
    pub schema_version: u32,
    pub name: String,
    pub description: String,
    pub checks: Vec<Check>,
    pub pass: bool,
}

pub const SCENARIOS: [(&str, &str); 5] = [
    ("max-product", "max{-1, x1 x2} + 0.1|x|^2 on [-1,1]^2: first- vs second-order stationarity"),
    ("square-chain", "two scalar layers u1 = theta, u2 = u1^2: P0 and P1 stationarity sets differ at second order"),
    ("scaled-relu", "(1 - (theta2 + 1)[theta1]_+)^2 at the origin: descent along (1, 0)"),
    ("cubic-gap", "|x1 - x2^3| at (1, 1): directionally but not twice semidifferentiable"),
    ("rnn-desk", "small leaky-ReLU recurrent network: train, then certify P0/P1 stationarity"),
];

struct Checks(Vec<Check>);

impl Checks {
    fn close(&mut self, label: &str, expected: f64, observed: f64, tol: f64) {
        self.0.push(Check {
            label: label.into(),
            expected: format!("{expected} ± {tol:e}"),
            observed: format!("{observed}"),
            pass: (observed - expected).abs() <= tol,
        });
    }

    fn verdict(&mut self, label: &str, expected: Verdict, observed: Verdict) {
        self.0.push(Check {
            label: label.into(),
            expected: format!("{expected:?}"),
            observed: format!("{observed:?}"),
            pass: expected == observed,
        });
    }

    fn holds(&mut self, label: &str, expected: &str, observed: String, pass: bool) {
        self.0.push(Check {
            label: label.into(),
            expected: expected.into(),
            observed,
            pass,
        });
    }
}

pub fn run(name: &str, seed: u64) -> Result<ScenarioReport> {
    let description = SCENARIOS
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, d)| d.to_string())
        .ok_or_else(|| Error::InvalidParameter(format!("unknown scenario {name:?}")))?;
    let search = SearchConfig {
        seed,
        ..SearchConfig::default()
    };
    let mut c = Checks(Vec::new());
    match name {
        "max-product" => max_product_checks(&mut c, &search)?,
        "square-chain" => square_chain_checks(&mut c, &search)?,
        "scaled-relu" => scaled_relu_checks(&mut c, &search)?,
        "cubic-gap" => cubic_gap_checks(&mut c)?,
        "rnn-desk" => rnn_checks(&mut c, &search)?,
        _ => unreachable!(),
    }
    Ok(ScenarioReport {
        schema_version: crate::SCHEMA_VERSION,
        name: name.into(),
        description,
        pass: c.0.iter().all(|x| x.pass),
        checks: c.0,
    })
}

fn max_product_checks(c: &mut Checks, search: &SearchConfig) -> Result<()> {
    let (f, lo, hi) = max_product::<f64>();
    let origin = [0.0, 0.0];
    let r1 = check_box(&f, &origin, &lo, &hi, Order::First, search)?;
    c.verdict("origin first order", Verdict::Stationary, r1.verdict);
    let r2 = check_box(&f, &origin, &lo, &hi, Order::Second, search)?;
    c.verdict("origin second order", Verdict::NotStationary, r2.verdict);
    let along = dd_expr(&f, &origin, &[1.0, -1.0], Order::Second)?.second.unwrap_or(f64::NAN);
    c.close("f''(0; (1,-1))", -1.6, along, 1e-9);
    let witness = r2.witness.as_ref().and_then(|w| w.second).unwrap_or(f64::NAN);
    c.close("witness second derivative", -1.6, witness, 1e-9);
    for x in [[-1.0, 1.0], [1.0, -1.0]] {
        let r = check_box(&f, &x, &lo, &hi, Order::Second, search)?;
        c.verdict(&format!("{x:?} second order"), Verdict::Stationary, r.verdict);
    }
    let exact = SearchConfig {
        mode: SearchMode::Enumerate,
        ..search.clone()
    };
    let mut found = Vec::new();
    for i in 0..=20 {
        for j in 0..=20 {
            let x = [-1.0 + 0.1 * i as f64, -1.0 + 0.1 * j as f64];
            if check_box(&f, &x, &lo, &hi, Order::First, &exact)?.verdict == Verdict::Stationary {
                found.push(x);
            }
        }
    }
    let ok = found.len() == 3;
    c.holds(
        "first-order stationary points on a 21x21 grid",
        "(-1,1), (0,0), (1,-1)",
        format!("{found:?}"),
        ok,
    );
    Ok(())
}

fn square_chain_checks(c: &mut Checks, search: &SearchConfig) -> Result<()> {
    let p = square_chain::<f64>();
    let z = Point::zeros(1, p.dims());
    let beta = [1.0, 0.6];
    c.close("reference value", 1e-4, p.gamma_bar()?, 1e-15);
    let m = interval_moduli(&p, &beta, p.gamma_bar()?, 1e-6)?
        .ok_or_else(|| Error::InvalidModel("no interval moduli".into()))?;
    c.holds("K_g", "<= 0.5386", format!("{}", m.k_g), m.k_g <= 0.5386);
    c.holds("K_1", "<= 0.21", format!("{}", m.k[0]), m.k[0] <= 0.21);
    let pc = certify(&p, &beta, m)?;
    c.holds("t_1", "< 1", format!("{}", pc.thresholds[0]), pc.thresholds[0] < 1.0);
    c.holds("t_2", "< 0.6", format!("{}", pc.thresholds[1]), pc.thresholds[1] < 0.6);
    c.holds("certified", "true", pc.certified.to_string(), pc.certified);
    let rel = compare_sets(&p, &z, &pc, search)?;
    c.holds("in D0", "Stationary", format!("{:?}", rel.d0), rel.d0 == Some(Verdict::Stationary));
    c.verdict("in D1", Verdict::Stationary, rel.d1);
    c.holds("in SD0", "Stationary", format!("{:?}", rel.sd0), rel.sd0 == Some(Verdict::Stationary));
    c.holds(
        "in SD1",
        "NotStationary",
        format!("{:?}", rel.sd1),
        rel.sd1 == Some(Verdict::NotStationary),
    );
    c.holds("set relations", "hold", format!("{:?}", rel.violations), rel.implications_hold);
    let d1 = check_first_order(&p, &z, Target::P1, Some(&beta), search)?;
    let sd1 = check_second_order(&p, &z, Target::P1, Some(&beta), true, &d1, search)?;
    let dir = Point {
        theta: vec![1.0],
        u: vec![vec![1.0], vec![0.0]],
    };
    let along = dd_penalized(&p, &z, &dir, &beta, Order::Second)?.second.unwrap_or(f64::NAN);
    c.close("Theta''(0; (1,1,0))", -0.78, along, 1e-9);
    match &sd1.witness {
        Some(w) => {
            let t = w.direction.theta[0];
            let v = w.second.unwrap_or(f64::NAN);
            c.close("witness Theta'' / t^2", -0.78, v / (t * t), 1e-9);
        }
        None => c.holds("witness", "present", "none".into(), false),
    }
    Ok(())
}

fn scaled_relu_checks(c: &mut Checks, search: &SearchConfig) -> Result<()> {
    let p = scaled_relu::<f64>(0.5)?;
    let theta = [0.0, 0.0];
    for d1 in [1.0, 0.5, 2.0] {
        let v = dd_reduced(&p, &theta, &[d1, 0.0], Order::First)?.first;
        c.close(&format!("Psi'(0; ({d1}, 0))"), -2.0 * d1, v, 0.0);
    }
    let z = Point::zeros(2, p.dims());
    let r = check_first_order(&p, &z, Target::P, None, search)?;
    c.verdict("verdict", Verdict::NotStationary, r.verdict);
    let w = r.witness.as_ref().map_or(f64::NAN, |w| w.first);
    c.close("witness derivative", -2.0, w, 1e-12);
    Ok(())
}

fn cubic_gap_checks(c: &mut Checks) -> Result<()> {
    let h = cubic_gap::<f64>();
    let x = [1.0, 1.0];
    let v = dd_expr(&h, &x, &[3.0, 1.0], Order::Second)?;
    c.close("h'((1,1); (3,1))", 0.0, v.first, 1e-12);
    c.close("h''((1,1); (3,1))", 6.0, v.second.unwrap_or(f64::NAN), 1e-9);
    let cfg = OracleConfig::default();
    let plus = path_quotients(&h, &x, |t| vec![3.0 + 4.0 * t, 1.0], &cfg)?;
    let minus = path_quotients(&h, &x, |t| vec![3.0 - 4.0 * t, 1.0], &cfg)?;
    c.close("quotients along (3+4t, 1)", -6.0, plus.limit.value, 1e-3);
    c.close("quotients along (3-4t, 1)", 6.0, minus.limit.value, 1e-3);
    let gap = (plus.limit.value - v.second.unwrap_or(f64::NAN)).abs();
    c.holds(
        "not twice semidifferentiable",
        "path limit differs from fixed-direction value",
        format!("gap {gap}"),
        gap > 1.0,
    );
    Ok(())
}

/// Desk instance used by the end-to-end scenario.
pub fn rnn_desk() -> Result<crate::rnn::RnnSpec<f64>> {
    desk_instance(1, 3, 2, 3, 1, 0.01, 7)
}

fn rnn_checks(c: &mut Checks, search: &SearchConfig) -> Result<()> {
    let spec = rnn_desk()?;
    let solver = SolverConfig {
        seed: search.seed,
        ..SolverConfig::default()
    };
    let r = train_and_certify(&spec, None, None, &solver, search)?;
    c.holds("certified", "true", r.penalty.certified.to_string(), r.penalty.certified);
    c.holds(
        "probe",
        ">= -1e-6",
        format!("{:e}", r.solve.probe_min),
        r.solve.probe_min >= -1e-6,
    );
    c.holds(
        "max residual",
        "<= 1e-5",
        format!("{:e}", r.solve.max_residual),
        r.solve.max_residual <= 1e-5,
    );
    c.verdict("D0", Verdict::Stationary, r.first_p0.verdict);
    c.verdict("D1", Verdict::Stationary, r.first_p1.verdict);
    c.holds(
        "SD0 = D0",
        "Stationary",
        format!("{:?}", r.second_p0.as_ref().map(|x| x.verdict)),
        r.second_p0.as_ref().map(|x| x.verdict) == Some(Verdict::Stationary),
    );
    c.holds(
        "SD1 = D1",
        "Stationary",
        format!("{:?}", r.second_p1.as_ref().map(|x| x.verdict)),
        r.second_p1.as_ref().map(|x| x.verdict) == Some(Verdict::Stationary),
    );
    c.holds(
        "set relations",
        "hold",
        format!("{:?}", r.relations.violations),
        r.relations.implications_hold,
    );
    Ok(())
}
