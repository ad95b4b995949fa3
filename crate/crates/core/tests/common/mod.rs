#![allow(dead_code)]

use std::collections::BTreeSet;

use mcdstat::expr::Expr;
use mcdstat::model::{CompositeProblem, Point};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform(rng: &mut ChaCha8Rng, n: usize, r: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-r..r)).collect()
}

fn leaf(rng: &mut ChaCha8Rng, n: usize, dims: &[usize]) -> Expr<f64> {
    let inputs: usize = dims.iter().sum();
    let pick = rng.random_range(0..(1 + n + inputs));
    if pick == 0 {
        return Expr::constant(rng.random_range(-1.0..1.0));
    }
    if pick <= n {
        return Expr::param(pick - 1);
    }
    let mut k = pick - 1 - n;
    for (l, &m) in dims.iter().enumerate() {
        if k < m {
            return Expr::input(l + 1, k);
        }
        k -= m;
    }
    unreachable!()
}

/// Random expression tree over `θ` (when `n > 0`) and the given layer outputs.
pub fn random_expr(rng: &mut ChaCha8Rng, depth: usize, n: usize, dims: &[usize]) -> Expr<f64> {
    if depth == 0 || rng.random_bool(0.2) {
        return leaf(rng, n, dims);
    }
    let sub = |rng: &mut ChaCha8Rng| random_expr(rng, depth - 1, n, dims);
    match rng.random_range(0..12) {
        0 => {
            let k = rng.random_range(1..4);
            Expr::sum((0..k).map(|_| sub(rng)).collect())
        }
        1 => Expr::diff(sub(rng), sub(rng)),
        2 => Expr::scale(rng.random_range(-2.0..2.0), sub(rng)),
        3 => Expr::product(sub(rng), sub(rng)),
        4 => {
            let k = rng.random_range(1..3);
            let a = (0..k).map(|_| sub(rng)).collect();
            let b = (0..k).map(|_| sub(rng)).collect();
            Expr::inner(a, b)
        }
        5 => {
            let k = rng.random_range(1..3);
            Expr::sq_norm((0..k).map(|_| sub(rng)).collect())
        }
        6 => {
            let k = rng.random_range(1..3);
            let c = (0..k).map(|_| rng.random_range(-2.0..2.0)).collect();
            let a = (0..k).map(|_| sub(rng)).collect();
            Expr::affine(c, a, rng.random_range(-1.0..1.0))
        }
        7 => Expr::max(sub(rng), sub(rng)),
        8 => Expr::abs(sub(rng)),
        9 => Expr::plus(sub(rng)),
        10 => Expr::leaky_relu(rng.random_range(0.0..0.9), sub(rng)),
        _ => Expr::square(sub(rng)),
    }
}

/// Random layered problem with 1 to 3 layers of width 1 to 2.
pub fn random_problem(rng: &mut ChaCha8Rng) -> CompositeProblem<f64> {
    let n = rng.random_range(1..4);
    let depth = rng.random_range(1..4);
    let mut layers: Vec<Vec<Expr<f64>>> = Vec::new();
    let mut dims: Vec<usize> = Vec::new();
    for _ in 0..depth {
        let w = rng.random_range(1..3);
        let block = (0..w).map(|_| random_expr(rng, 3, n, &dims)).collect();
        layers.push(block);
        dims.push(w);
    }
    let outer = random_expr(rng, 3, 0, &dims);
    let lambda = rng.random_range(0.01..1.0);
    CompositeProblem::new(n, lambda, layers, outer).expect("generated problem is valid")
}

pub fn random_point(rng: &mut ChaCha8Rng, p: &CompositeProblem<f64>, r: f64) -> Point<f64> {
    let flat = uniform(rng, p.z_dim(), r);
    Point::unflatten(&flat, p.n_params(), p.dims())
}

pub fn variant(e: &Expr<f64>) -> &'static str {
    match e {
        Expr::Const(_) => "const",
        Expr::Param(_) => "param",
        Expr::Input { .. } => "input",
        Expr::Sum(_) => "sum",
        Expr::Diff(..) => "diff",
        Expr::Scale(..) => "scale",
        Expr::Product(..) => "product",
        Expr::Inner(..) => "inner",
        Expr::SqNorm(_) => "sq_norm",
        Expr::Affine { .. } => "affine",
        Expr::Max(..) => "max",
        Expr::Abs(_) => "abs",
        Expr::Plus(_) => "plus",
        Expr::LeakyRelu { .. } => "leaky_relu",
        Expr::Square(_) => "square",
    }
}

pub const ALL_VARIANTS: usize = 15;

pub fn collect_variants(e: &Expr<f64>, seen: &mut BTreeSet<&'static str>) {
    seen.insert(variant(e));
    for c in e.children() {
        collect_variants(c, seen);
    }
}

pub fn problem_variants(p: &CompositeProblem<f64>, seen: &mut BTreeSet<&'static str>) {
    for block in p.layers() {
        for e in block {
            collect_variants(e, seen);
        }
    }
    collect_variants(p.outer(), seen);
}

/// Three parameters, two ReLU layers, every kink active at `θ = 0`.
pub fn relu_instance() -> CompositeProblem<f64> {
    let th = Expr::param;
    let u1 = |i| Expr::input(1, i);
    CompositeProblem::new(
        3,
        0.1,
        vec![
            vec![
                Expr::plus(Expr::diff(th(0), th(1))),
                Expr::plus(Expr::affine(vec![1.0, -2.0], vec![th(2), th(0)], 0.0)),
            ],
            vec![Expr::plus(Expr::affine(vec![1.0, -1.0, 0.5], vec![u1(0), u1(1), th(1)], 0.0))],
        ],
        Expr::square(Expr::affine(vec![1.0], vec![Expr::input(2, 0)], -1.0)),
    )
    .expect("valid instance")
}
