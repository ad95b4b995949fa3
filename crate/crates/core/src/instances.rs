//! Small named problem instances.

use crate::error::Result;
use crate::expr::Expr;
use crate::model::CompositeProblem;
use crate::scalar::Scalar;

/// `max{−1, x₁x₂} + 0.1‖x‖²`, minimized over `[−1, 1]²`.
pub fn max_product<T: Scalar>() -> (Expr<T>, Vec<T>, Vec<T>) {
    let f = Expr::sum(vec![
        Expr::max(
            Expr::constant(-T::one()),
            Expr::product(Expr::param(0), Expr::param(1)),
        ),
        Expr::scale(T::lit(0.1), Expr::sq_norm(vec![Expr::param(0), Expr::param(1)])),
    ]);
    (f, vec![-T::one(); 2], vec![T::one(); 2])
}

/// Two scalar layers `u₁ = θ`, `u₂ = u₁²`, outer loss
/// `[−u₁² + 0.5u₂ + 10⁻⁴]₊`, `λ = 0.01`.
pub fn square_chain<T: Scalar>() -> CompositeProblem<T> {
    let u1 = || Expr::input(1, 0);
    let outer = Expr::plus(Expr::sum(vec![
        Expr::scale(-T::one(), Expr::square(u1())),
        Expr::scale(T::lit(0.5), Expr::input(2, 0)),
        Expr::constant(T::lit(1e-4)),
    ]));
    CompositeProblem::new(
        1,
        T::lit(0.01),
        vec![vec![Expr::param(0)], vec![Expr::square(u1())]],
        outer,
    )
    .expect("valid instance")
}

/// `Ψ(θ) = (1 − (θ₂ + 1)[θ₁]₊)²` written as `u₁ = [θ₁]₊`, `u₂ = (θ₂ + 1)u₁`,
/// `g = (1 − u₂)²`.
pub fn scaled_relu<T: Scalar>(lambda: T) -> Result<CompositeProblem<T>> {
    CompositeProblem::new(
        2,
        lambda,
        vec![
            vec![Expr::plus(Expr::param(0))],
            vec![Expr::product(
                Expr::affine(vec![T::one()], vec![Expr::param(1)], T::one()),
                Expr::input(1, 0),
            )],
        ],
        Expr::square(Expr::affine(vec![-T::one()], vec![Expr::input(2, 0)], T::one())),
    )
}

/// `h(x) = |x₁ − x₂³|`.
pub fn cubic_gap<T: Scalar>() -> Expr<T> {
    let x2 = || Expr::param(1);
    Expr::abs(Expr::diff(
        Expr::param(0),
        Expr::product(Expr::product(x2(), x2()), x2()),
    ))
}
