//! Carriers that an [`Expr`] can be evaluated over.
//!
//! * plain values,
//! * second-order jets along a ray (`value, f′, f⁽²⁾`),
//! * jets that also carry gradients of `f′` and `f⁽²⁾` with respect to the
//!   direction, used by the direction searches and pattern enumeration,
//! * interval enclosures with partial-derivative enclosures, used to bound
//!   Lipschitz moduli on a box.

use crate::expr::{Expr, Leaf};
use crate::scalar::Scalar;
use crate::tolerances::KINK_TOL;

pub trait Algebra<T: Scalar> {
    type V: Clone;
    fn constant(&mut self, c: T) -> Self::V;
    fn value(&self, a: &Self::V) -> T;
    fn add(&mut self, a: &Self::V, b: &Self::V) -> Self::V;
    fn sub(&mut self, a: &Self::V, b: &Self::V) -> Self::V;
    fn scale(&mut self, c: T, a: &Self::V) -> Self::V;
    fn mul(&mut self, a: &Self::V, b: &Self::V) -> Self::V;
    fn square(&mut self, a: &Self::V) -> Self::V {
        self.mul(a, a)
    }
    /// `max{hi, lo}` where the two branches count as tied when their values
    /// differ by at most `tol`.
    fn select(&mut self, hi: Self::V, lo: Self::V, tol: T) -> Self::V;
}

/// Absolute tie tolerance for value comparisons, widened for low precision.
pub fn kink_tol<T: Scalar>(a: T, b: T) -> T {
    let rel = T::epsilon() * T::lit(8.0) * (a.abs() + b.abs());
    T::lit(KINK_TOL).max(rel)
}

/// Evaluates `e` over the algebra `alg`, resolving leaves with `leaf`.
pub fn evaluate<T, A, F>(e: &Expr<T>, alg: &mut A, leaf: &mut F) -> A::V
where
    T: Scalar,
    A: Algebra<T>,
    F: FnMut(Leaf) -> A::V,
{
    match e {
        Expr::Const(c) => alg.constant(*c),
        Expr::Param(j) => leaf(Leaf::Param(*j)),
        Expr::Input { layer, index } => leaf(Leaf::Input {
            layer: *layer,
            index: *index,
        }),
        Expr::Sum(args) => {
            let mut acc = alg.constant(T::zero());
            for a in args {
                let v = evaluate(a, alg, leaf);
                acc = alg.add(&acc, &v);
            }
            acc
        }
        Expr::Diff(a, b) => {
            let (x, y) = (evaluate(a, alg, leaf), evaluate(b, alg, leaf));
            alg.sub(&x, &y)
        }
        Expr::Scale(c, a) => {
            let x = evaluate(a, alg, leaf);
            alg.scale(*c, &x)
        }
        Expr::Product(a, b) => {
            let (x, y) = (evaluate(a, alg, leaf), evaluate(b, alg, leaf));
            alg.mul(&x, &y)
        }
        Expr::Inner(a, b) => {
            let mut acc = alg.constant(T::zero());
            for (x, y) in a.iter().zip(b) {
                let (x, y) = (evaluate(x, alg, leaf), evaluate(y, alg, leaf));
                let p = alg.mul(&x, &y);
                acc = alg.add(&acc, &p);
            }
            acc
        }
        Expr::SqNorm(args) => {
            let mut acc = alg.constant(T::zero());
            for a in args {
                let x = evaluate(a, alg, leaf);
                let p = alg.square(&x);
                acc = alg.add(&acc, &p);
            }
            acc
        }
        Expr::Affine {
            coeffs,
            args,
            offset,
        } => {
            let mut acc = alg.constant(*offset);
            for (c, a) in coeffs.iter().zip(args) {
                let x = evaluate(a, alg, leaf);
                let p = alg.scale(*c, &x);
                acc = alg.add(&acc, &p);
            }
            acc
        }
        Expr::Max(a, b) => {
            let (x, y) = (evaluate(a, alg, leaf), evaluate(b, alg, leaf));
            let tol = kink_tol(alg.value(&x), alg.value(&y));
            alg.select(x, y, tol)
        }
        Expr::Abs(a) => {
            let x = evaluate(a, alg, leaf);
            let y = alg.scale(-T::one(), &x);
            let tol = kink_tol(alg.value(&x), alg.value(&y));
            alg.select(x, y, tol)
        }
        Expr::Plus(a) => {
            let x = evaluate(a, alg, leaf);
            let y = alg.constant(T::zero());
            let tol = kink_tol(alg.value(&x), T::zero());
            alg.select(x, y, tol)
        }
        Expr::LeakyRelu { alpha, arg } => {
            let x = evaluate(arg, alg, leaf);
            let y = alg.scale(*alpha, &x);
            let tol = kink_tol(alg.value(&x), alg.value(&y));
            alg.select(x, y, tol)
        }
        Expr::Square(a) => {
            let x = evaluate(a, alg, leaf);
            alg.square(&x)
        }
    }
}

/// Plain evaluation. Optionally records `hi − lo` at every max node.
#[derive(Default)]
pub struct Plain<T> {
    pub switches: Option<Vec<T>>,
}

impl<T: Scalar> Algebra<T> for Plain<T> {
    type V = T;
    fn constant(&mut self, c: T) -> T {
        c
    }
    fn value(&self, a: &T) -> T {
        *a
    }
    fn add(&mut self, a: &T, b: &T) -> T {
        *a + *b
    }
    fn sub(&mut self, a: &T, b: &T) -> T {
        *a - *b
    }
    fn scale(&mut self, c: T, a: &T) -> T {
        c * *a
    }
    fn mul(&mut self, a: &T, b: &T) -> T {
        *a * *b
    }
    fn select(&mut self, hi: T, lo: T, _tol: T) -> T {
        if let Some(s) = self.switches.as_mut() {
            s.push(hi - lo);
        }
        if hi >= lo {
            hi
        } else {
            lo
        }
    }
}

/// Value with first and second directional derivatives along a ray.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Jet<T> {
    pub v: T,
    pub d1: T,
    pub d2: T,
}

impl<T: Scalar> Jet<T> {
    pub fn new(v: T, d1: T, d2: T) -> Self {
        Jet { v, d1, d2 }
    }
}

/// A max node met during jet evaluation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KinkRecord<T> {
    /// `hi − lo` at the base point.
    pub gap: T,
    /// Rate of change of the gap along the ray.
    pub slope: T,
    /// Whether the node was treated as a value tie.
    pub tied: bool,
}

/// Jet arithmetic. Ties in value are broken by the first derivative, then by
/// the second.
pub struct JetAlg<T> {
    pub deriv_tol: T,
    pub kinks: Vec<KinkRecord<T>>,
    pub at_kink: bool,
}

impl<T: Scalar> JetAlg<T> {
    /// `scale` is a magnitude for the direction (typically `‖d‖∞`).
    pub fn new(scale: T) -> Self {
        JetAlg {
            deriv_tol: T::lit(KINK_TOL) * scale.max(T::one()),
            kinks: Vec::new(),
            at_kink: false,
        }
    }
}

impl<T: Scalar> Algebra<T> for JetAlg<T> {
    type V = Jet<T>;
    fn constant(&mut self, c: T) -> Jet<T> {
        Jet::new(c, T::zero(), T::zero())
    }
    fn value(&self, a: &Jet<T>) -> T {
        a.v
    }
    fn add(&mut self, a: &Jet<T>, b: &Jet<T>) -> Jet<T> {
        Jet::new(a.v + b.v, a.d1 + b.d1, a.d2 + b.d2)
    }
    fn sub(&mut self, a: &Jet<T>, b: &Jet<T>) -> Jet<T> {
        Jet::new(a.v - b.v, a.d1 - b.d1, a.d2 - b.d2)
    }
    fn scale(&mut self, c: T, a: &Jet<T>) -> Jet<T> {
        Jet::new(c * a.v, c * a.d1, c * a.d2)
    }
    fn mul(&mut self, a: &Jet<T>, b: &Jet<T>) -> Jet<T> {
        let two = T::lit(2.0);
        Jet::new(
            a.v * b.v,
            a.d1 * b.v + a.v * b.d1,
            a.d2 * b.v + two * a.d1 * b.d1 + a.v * b.d2,
        )
    }
    fn select(&mut self, hi: Jet<T>, lo: Jet<T>, tol: T) -> Jet<T> {
        let gap = hi.v - lo.v;
        let slope = hi.d1 - lo.d1;
        let tied = gap.abs() <= tol;
        self.kinks.push(KinkRecord { gap, slope, tied });
        if !tied {
            return if gap > T::zero() { hi } else { lo };
        }
        self.at_kink = true;
        let v = hi.v.max(lo.v);
        if slope > self.deriv_tol {
            Jet::new(v, hi.d1, hi.d2)
        } else if slope < -self.deriv_tol {
            Jet::new(v, lo.d1, lo.d2)
        } else {
            Jet::new(v, hi.d1.max(lo.d1), hi.d2.max(lo.d2))
        }
    }
}

/// Jet carrying gradients of `d1` and `d2` with respect to the direction.
#[derive(Clone, Debug, PartialEq)]
pub struct GradJet<T> {
    pub v: T,
    pub d1: T,
    pub d2: T,
    pub g1: Vec<T>,
    pub g2: Vec<T>,
}

/// A value-level tie resolved during gradient-jet evaluation.
#[derive(Clone, Debug, PartialEq)]
pub struct TieRecord<T> {
    pub chose_hi: bool,
    /// `∇(chosen′ − other′)`; the chosen piece stays active while `row · d ≥ 0`.
    pub row: Vec<T>,
}

pub struct GradJetAlg<T> {
    pub dim: usize,
    pub second: bool,
    pub deriv_tol: T,
    /// Forced branch choices at value ties, in evaluation order.
    pub pattern: Option<Vec<bool>>,
    pub ties: Vec<TieRecord<T>>,
}

impl<T: Scalar> GradJet<T> {
    /// Leaf whose derivative along `d` is `row · d`, with no curvature.
    pub fn leaf(v: T, row: Vec<T>, d: &[T], second: bool) -> Self {
        let d1 = crate::scalar::dot(&row, d);
        GradJet {
            v,
            d1,
            d2: T::zero(),
            g2: if second {
                vec![T::zero(); row.len()]
            } else {
                Vec::new()
            },
            g1: row,
        }
    }

    /// Leaf along coordinate `k` of a direction of length `d.len()`.
    pub fn coord(v: T, k: usize, d: &[T], second: bool) -> Self {
        let mut row = vec![T::zero(); d.len()];
        row[k] = T::one();
        Self::leaf(v, row, d, second)
    }
}

impl<T: Scalar> GradJetAlg<T> {
    pub fn new(dim: usize, second: bool, scale: T) -> Self {
        GradJetAlg {
            dim,
            second,
            deriv_tol: T::lit(KINK_TOL) * scale.max(T::one()),
            pattern: None,
            ties: Vec::new(),
        }
    }

    pub fn with_pattern(mut self, pattern: Vec<bool>) -> Self {
        self.pattern = Some(pattern);
        self
    }

    fn zero_vec(&self, second: bool) -> Vec<T> {
        if second && !self.second {
            Vec::new()
        } else {
            vec![T::zero(); self.dim]
        }
    }
}

fn lin<T: Scalar>(a: T, x: &[T], b: T, y: &[T]) -> Vec<T> {
    if x.is_empty() {
        return y.iter().map(|&q| b * q).collect();
    }
    if y.is_empty() {
        return x.iter().map(|&p| a * p).collect();
    }
    x.iter().zip(y).map(|(&p, &q)| a * p + b * q).collect()
}

impl<T: Scalar> Algebra<T> for GradJetAlg<T> {
    type V = GradJet<T>;
    fn constant(&mut self, c: T) -> GradJet<T> {
        GradJet {
            v: c,
            d1: T::zero(),
            d2: T::zero(),
            g1: self.zero_vec(false),
            g2: self.zero_vec(true),
        }
    }
    fn value(&self, a: &GradJet<T>) -> T {
        a.v
    }
    fn add(&mut self, a: &GradJet<T>, b: &GradJet<T>) -> GradJet<T> {
        let one = T::one();
        GradJet {
            v: a.v + b.v,
            d1: a.d1 + b.d1,
            d2: a.d2 + b.d2,
            g1: lin(one, &a.g1, one, &b.g1),
            g2: lin(one, &a.g2, one, &b.g2),
        }
    }
    fn sub(&mut self, a: &GradJet<T>, b: &GradJet<T>) -> GradJet<T> {
        let one = T::one();
        GradJet {
            v: a.v - b.v,
            d1: a.d1 - b.d1,
            d2: a.d2 - b.d2,
            g1: lin(one, &a.g1, -one, &b.g1),
            g2: lin(one, &a.g2, -one, &b.g2),
        }
    }
    fn scale(&mut self, c: T, a: &GradJet<T>) -> GradJet<T> {
        GradJet {
            v: c * a.v,
            d1: c * a.d1,
            d2: c * a.d2,
            g1: a.g1.iter().map(|&x| c * x).collect(),
            g2: a.g2.iter().map(|&x| c * x).collect(),
        }
    }
    fn mul(&mut self, a: &GradJet<T>, b: &GradJet<T>) -> GradJet<T> {
        let two = T::lit(2.0);
        let g1 = lin(b.v, &a.g1, a.v, &b.g1);
        let g2 = if self.second {
            // ∂/∂d [a2 b + 2 a1 b1 + a b2]
            let t = lin(b.v, &a.g2, a.v, &b.g2);
            let u = lin(two * b.d1, &a.g1, two * a.d1, &b.g1);
            lin(T::one(), &t, T::one(), &u)
        } else {
            Vec::new()
        };
        GradJet {
            v: a.v * b.v,
            d1: a.d1 * b.v + a.v * b.d1,
            d2: a.d2 * b.v + two * a.d1 * b.d1 + a.v * b.d2,
            g1,
            g2,
        }
    }
    fn select(&mut self, hi: GradJet<T>, lo: GradJet<T>, tol: T) -> GradJet<T> {
        let gap = hi.v - lo.v;
        if gap.abs() > tol {
            return if gap > T::zero() { hi } else { lo };
        }
        let v = hi.v.max(lo.v);
        let chose_hi = match &self.pattern {
            Some(p) => p.get(self.ties.len()).copied().unwrap_or(true),
            None => {
                let slope = hi.d1 - lo.d1;
                if slope > self.deriv_tol {
                    true
                } else if slope < -self.deriv_tol {
                    false
                } else {
                    hi.d2 >= lo.d2 || !self.second
                }
            }
        };
        let (mut c, o) = if chose_hi { (hi, lo) } else { (lo, hi) };
        let row = lin(T::one(), &c.g1, -T::one(), &o.g1);
        self.ties.push(TieRecord { chose_hi, row });
        c.v = v;
        c
    }
}

/// Closed interval.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Interval<T> {
    pub lo: T,
    pub hi: T,
}

impl<T: Scalar> Interval<T> {
    pub fn new(lo: T, hi: T) -> Self {
        Interval { lo, hi }
    }

    pub fn point(x: T) -> Self {
        Interval { lo: x, hi: x }
    }

    pub fn hull(self, o: Self) -> Self {
        Interval::new(self.lo.min(o.lo), self.hi.max(o.hi))
    }

    pub fn add(self, o: Self) -> Self {
        Interval::new(self.lo + o.lo, self.hi + o.hi)
    }

    pub fn neg(self) -> Self {
        Interval::new(-self.hi, -self.lo)
    }

    pub fn scale(self, c: T) -> Self {
        if c >= T::zero() {
            Interval::new(c * self.lo, c * self.hi)
        } else {
            Interval::new(c * self.hi, c * self.lo)
        }
    }

    pub fn mul(self, o: Self) -> Self {
        let p = [
            self.lo * o.lo,
            self.lo * o.hi,
            self.hi * o.lo,
            self.hi * o.hi,
        ];
        let lo = p.iter().copied().fold(T::infinity(), T::min);
        let hi = p.iter().copied().fold(T::neg_infinity(), T::max);
        Interval::new(lo, hi)
    }

    pub fn sqr(self) -> Self {
        let (a, b) = (self.lo.abs(), self.hi.abs());
        let top = a.max(b) * a.max(b);
        if self.lo <= T::zero() && self.hi >= T::zero() {
            Interval::new(T::zero(), top)
        } else {
            Interval::new(a.min(b) * a.min(b), top)
        }
    }

    pub fn mag(self) -> T {
        self.lo.abs().max(self.hi.abs())
    }
}

/// Interval enclosure of a value and of its partial derivatives.
#[derive(Clone, Debug, PartialEq)]
pub struct IntervalGrad<T> {
    pub val: Interval<T>,
    pub grad: Vec<Interval<T>>,
}

pub struct IntervalAlg {
    pub dim: usize,
}

impl<T: Scalar> Algebra<T> for IntervalAlg {
    type V = IntervalGrad<T>;
    fn constant(&mut self, c: T) -> IntervalGrad<T> {
        IntervalGrad {
            val: Interval::point(c),
            grad: vec![Interval::point(T::zero()); self.dim],
        }
    }
    fn value(&self, a: &IntervalGrad<T>) -> T {
        (a.val.lo + a.val.hi) / T::lit(2.0)
    }
    fn add(&mut self, a: &IntervalGrad<T>, b: &IntervalGrad<T>) -> IntervalGrad<T> {
        IntervalGrad {
            val: a.val.add(b.val),
            grad: a.grad.iter().zip(&b.grad).map(|(x, y)| x.add(*y)).collect(),
        }
    }
    fn sub(&mut self, a: &IntervalGrad<T>, b: &IntervalGrad<T>) -> IntervalGrad<T> {
        IntervalGrad {
            val: a.val.add(b.val.neg()),
            grad: a
                .grad
                .iter()
                .zip(&b.grad)
                .map(|(x, y)| x.add(y.neg()))
                .collect(),
        }
    }
    fn scale(&mut self, c: T, a: &IntervalGrad<T>) -> IntervalGrad<T> {
        IntervalGrad {
            val: a.val.scale(c),
            grad: a.grad.iter().map(|x| x.scale(c)).collect(),
        }
    }
    fn mul(&mut self, a: &IntervalGrad<T>, b: &IntervalGrad<T>) -> IntervalGrad<T> {
        IntervalGrad {
            val: a.val.mul(b.val),
            grad: a
                .grad
                .iter()
                .zip(&b.grad)
                .map(|(ga, gb)| ga.mul(b.val).add(a.val.mul(*gb)))
                .collect(),
        }
    }
    fn square(&mut self, a: &IntervalGrad<T>) -> IntervalGrad<T> {
        IntervalGrad {
            val: a.val.sqr(),
            grad: a
                .grad
                .iter()
                .map(|g| g.mul(a.val).scale(T::lit(2.0)))
                .collect(),
        }
    }
    fn select(&mut self, hi: IntervalGrad<T>, lo: IntervalGrad<T>, _tol: T) -> IntervalGrad<T> {
        let gap = hi.val.add(lo.val.neg());
        if gap.lo > T::zero() {
            hi
        } else if gap.hi < T::zero() {
            lo
        } else {
            IntervalGrad {
                val: Interval::new(hi.val.lo.max(lo.val.lo), hi.val.hi.max(lo.val.hi)),
                grad: hi
                    .grad
                    .iter()
                    .zip(&lo.grad)
                    .map(|(x, y)| x.hull(*y))
                    .collect(),
            }
        }
    }
}
