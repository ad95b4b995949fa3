//! The layered composite problem, its points, and the lifted/penalized objectives.

use serde_json::{json, Value};

use crate::algebra::{evaluate, Plain};
use crate::error::{check_len, Error, Result};
use crate::expr::{parse_scalar, Expr, Leaf};
use crate::scalar::{norm1, norm_inf, Scalar};

/// `min_θ g(u_L) + λ‖θ‖²` where `u_ℓ = ψ_{ℓ-1}(θ, u_1, …, u_{ℓ-1})`.
///
/// `layers[ℓ-1][i]` is component `i` of the map producing `u_ℓ`. The outer
/// loss `g` may read any layer output but no parameter.
#[derive(Clone, Debug, PartialEq)]
pub struct CompositeProblem<T: Scalar = f64> {
    n: usize,
    dims: Vec<usize>,
    lambda: T,
    layers: Vec<Vec<Expr<T>>>,
    outer: Expr<T>,
    beta: Option<Vec<T>>,
}

/// A point `z = (θ, u_1, …, u_L)`; also used for directions.
#[derive(Clone, Debug, PartialEq, serde::Serialize)]
pub struct Point<T> {
    pub theta: Vec<T>,
    pub u: Vec<Vec<T>>,
}

pub type Direction<T> = Point<T>;

impl<T: Scalar> Point<T> {
    pub fn zeros(n: usize, dims: &[usize]) -> Self {
        Point {
            theta: vec![T::zero(); n],
            u: dims.iter().map(|&d| vec![T::zero(); d]).collect(),
        }
    }

    /// Concatenation `(θ, u_1, …, u_L)`.
    pub fn flatten(&self) -> Vec<T> {
        let mut out = self.theta.clone();
        for b in &self.u {
            out.extend_from_slice(b);
        }
        out
    }

    pub fn unflatten(flat: &[T], n: usize, dims: &[usize]) -> Self {
        let theta = flat[..n].to_vec();
        let mut at = n;
        let u = dims
            .iter()
            .map(|&d| {
                let b = flat[at..at + d].to_vec();
                at += d;
                b
            })
            .collect();
        Point { theta, u }
    }

    pub fn axpy(&self, t: T, d: &Point<T>) -> Point<T> {
        let comb = |a: &[T], b: &[T]| a.iter().zip(b).map(|(&x, &y)| x + t * y).collect();
        Point {
            theta: comb(&self.theta, &d.theta),
            u: self.u.iter().zip(&d.u).map(|(a, b)| comb(a, b)).collect(),
        }
    }

    pub fn scaled(&self, c: T) -> Point<T> {
        Point {
            theta: self.theta.iter().map(|&x| c * x).collect(),
            u: self
                .u
                .iter()
                .map(|b| b.iter().map(|&x| c * x).collect())
                .collect(),
        }
    }

    pub fn norm(&self) -> T {
        crate::scalar::norm2(&self.flatten())
    }

    pub fn norm_inf(&self) -> T {
        norm_inf(&self.flatten())
    }

    pub fn is_finite(&self) -> bool {
        self.flatten().iter().all(|x| x.is_finite())
    }

    pub fn to_json(&self) -> Value {
        json!({ "theta": self.theta, "u": self.u })
    }

    pub fn from_json(v: &Value) -> Result<Self> {
        let vec = |x: &Value, what: &str| -> Result<Vec<T>> {
            x.as_array()
                .ok_or_else(|| Error::Parse(format!("{what} must be an array")))?
                .iter()
                .map(|e| parse_scalar(e, what))
                .collect()
        };
        let theta = vec(
            v.get("theta")
                .ok_or_else(|| Error::Parse("point needs \"theta\"".into()))?,
            "theta",
        )?;
        let u = match v.get("u") {
            Some(Value::Array(blocks)) => blocks
                .iter()
                .map(|b| vec(b, "u block"))
                .collect::<Result<Vec<_>>>()?,
            None => Vec::new(),
            Some(_) => return Err(Error::Parse("\"u\" must be an array of arrays".into())),
        };
        Ok(Point { theta, u })
    }
}

impl<T: Scalar> CompositeProblem<T> {
    pub fn new(n: usize, lambda: T, layers: Vec<Vec<Expr<T>>>, outer: Expr<T>) -> Result<Self> {
        let p = CompositeProblem {
            n,
            dims: layers.iter().map(Vec::len).collect(),
            lambda,
            layers,
            outer,
            beta: None,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn with_beta(mut self, beta: Vec<T>) -> Result<Self> {
        check_len("beta", self.depth(), beta.len())?;
        if beta.iter().any(|&b| !(b > T::zero() && b.is_finite())) {
            return Err(Error::InvalidParameter("beta must be positive".into()));
        }
        self.beta = Some(beta);
        Ok(self)
    }

    fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::InvalidModel("at least one layer is required".into()));
        }
        if self.n == 0 {
            return Err(Error::InvalidModel("at least one parameter is required".into()));
        }
        if !(self.lambda > T::zero() && self.lambda.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "lambda must be positive, got {}",
                self.lambda
            )));
        }
        for (l, comps) in self.layers.iter().enumerate() {
            if comps.is_empty() {
                return Err(Error::InvalidModel(format!("layer {} is empty", l + 1)));
            }
            for c in comps {
                c.validate(self.n, &self.dims, l + 1)?;
            }
        }
        self.outer.validate(0, &self.dims, self.depth() + 1).map_err(|e| match e {
            Error::InvalidModel(m) => Error::InvalidModel(format!("outer loss: {m}")),
            other => other,
        })
    }

    pub fn n_params(&self) -> usize {
        self.n
    }

    /// Number of layers `L`.
    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    /// Widths `N_1, …, N_L`.
    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    /// Dimension of `z`.
    pub fn z_dim(&self) -> usize {
        self.n + self.dims.iter().sum::<usize>()
    }

    pub fn lambda(&self) -> T {
        self.lambda
    }

    pub fn layers(&self) -> &[Vec<Expr<T>>] {
        &self.layers
    }

    /// Components of the map producing `u_layer` (1-based).
    pub fn layer(&self, layer: usize) -> &[Expr<T>] {
        &self.layers[layer - 1]
    }

    pub fn outer(&self) -> &Expr<T> {
        &self.outer
    }

    pub fn beta(&self) -> Option<&[T]> {
        self.beta.as_deref()
    }

    pub fn check_theta(&self, theta: &[T]) -> Result<()> {
        check_len("theta", self.n, theta.len())
    }

    pub fn check_point(&self, z: &Point<T>) -> Result<()> {
        self.check_theta(&z.theta)?;
        check_len("layer count", self.depth(), z.u.len())?;
        for (l, (b, &d)) in z.u.iter().zip(&self.dims).enumerate() {
            check_len(&format!("u_{}", l + 1), d, b.len())?;
        }
        Ok(())
    }

    pub fn check_beta(&self, beta: &[T]) -> Result<()> {
        check_len("beta", self.depth(), beta.len())?;
        if beta.iter().any(|&b| !(b > T::zero() && b.is_finite())) {
            return Err(Error::InvalidParameter("beta must be positive".into()));
        }
        Ok(())
    }

    /// `ψ_{ℓ-1}(θ, u_1, …, u_{ℓ-1})` using the layer outputs stored in `z`.
    pub fn layer_values(&self, z: &Point<T>, layer: usize) -> Vec<T> {
        let mut alg = Plain::default();
        self.layer(layer)
            .iter()
            .map(|e| evaluate(e, &mut alg, &mut |leaf| value_leaf(z, leaf)))
            .collect()
    }

    /// Forward pass: the feasible point over `θ`.
    pub fn lift(&self, theta: &[T]) -> Result<Point<T>> {
        self.check_theta(theta)?;
        let mut z = Point {
            theta: theta.to_vec(),
            u: Vec::with_capacity(self.depth()),
        };
        for l in 1..=self.depth() {
            let vals = self.layer_values(&z, l);
            if vals.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite { layer: l });
            }
            z.u.push(vals);
        }
        Ok(z)
    }

    /// `u_ℓ − ψ_{ℓ-1}(θ, u_1, …, u_{ℓ-1})` for every layer.
    pub fn residuals(&self, z: &Point<T>) -> Result<Vec<Vec<T>>> {
        self.check_point(z)?;
        Ok((1..=self.depth())
            .map(|l| {
                self.layer_values(z, l)
                    .iter()
                    .zip(&z.u[l - 1])
                    .map(|(&p, &u)| u - p)
                    .collect()
            })
            .collect())
    }

    pub fn max_residual(&self, z: &Point<T>) -> Result<T> {
        Ok(self
            .residuals(z)?
            .iter()
            .fold(T::zero(), |m, r| m.max(norm_inf(r))))
    }

    pub fn is_feasible(&self, z: &Point<T>, tol: T) -> Result<bool> {
        Ok(self.max_residual(z)? <= tol)
    }

    /// `g(u)`.
    pub fn outer_value(&self, z: &Point<T>) -> T {
        let mut alg = Plain::default();
        evaluate(&self.outer, &mut alg, &mut |leaf| value_leaf(z, leaf))
    }

    fn ridge(&self, theta: &[T]) -> T {
        self.lambda * theta.iter().map(|&x| x * x).sum::<T>()
    }

    /// `F(z) = g(u) + λ‖θ‖²`.
    pub fn objective(&self, z: &Point<T>) -> Result<T> {
        self.check_point(z)?;
        Ok(self.outer_value(z) + self.ridge(&z.theta))
    }

    /// `Θ(z) = F(z) + Σ_ℓ β_ℓ ‖u_ℓ − ψ_{ℓ-1}‖₁`.
    pub fn penalized(&self, z: &Point<T>, beta: &[T]) -> Result<T> {
        self.check_beta(beta)?;
        let f = self.objective(z)?;
        let res = self.residuals(z)?;
        Ok(f + beta.iter().zip(&res).map(|(&b, r)| b * norm1(r)).sum::<T>())
    }

    /// `Ψ(θ) + λ‖θ‖²`.
    pub fn reduced(&self, theta: &[T]) -> Result<T> {
        let z = self.lift(theta)?;
        Ok(self.outer_value(&z) + self.ridge(theta))
    }

    /// Reference point: the lift of `θ = 0`.
    pub fn reference_point(&self) -> Result<Point<T>> {
        self.lift(&vec![T::zero(); self.n])
    }

    /// `γ̄ = F(z⁰)`, the level used for moduli and certification.
    pub fn gamma_bar(&self) -> Result<T> {
        self.objective(&self.reference_point()?)
    }

    /// `Θ` assembled as a single expression over `(θ, u)`.
    pub fn penalized_expr(&self, beta: &[T]) -> Result<Expr<T>> {
        self.check_beta(beta)?;
        let mut terms = vec![
            self.outer.clone(),
            Expr::scale(
                self.lambda,
                Expr::sq_norm((0..self.n).map(Expr::param).collect()),
            ),
        ];
        for (l, comps) in self.layers.iter().enumerate() {
            let abs: Vec<Expr<T>> = comps
                .iter()
                .enumerate()
                .map(|(i, psi)| Expr::abs(Expr::diff(Expr::input(l + 1, i), psi.clone())))
                .collect();
            terms.push(Expr::scale(beta[l], Expr::sum(abs)));
        }
        Ok(Expr::sum(terms))
    }

    /// True when every layer map is affine, piecewise affine or bilinear.
    pub fn has_polyhedral_layers(&self) -> bool {
        use crate::expr::Structure;
        self.layers
            .iter()
            .flatten()
            .all(|e| e.structure() != Structure::Other)
    }

    pub fn to_json(&self) -> Value {
        let mut v = json!({
            "dims": { "n": self.n, "N": self.dims },
            "lambda": serde_json::to_value(self.lambda).unwrap_or(Value::Null),
            "layers": self.layers.iter()
                .map(|l| Value::Array(l.iter().map(Expr::to_json).collect()))
                .collect::<Vec<_>>(),
            "outer": self.outer.to_json(),
        });
        if let Some(b) = &self.beta {
            v["beta"] = serde_json::to_value(b).unwrap_or(Value::Null);
        }
        v
    }

    /// Canonical serialization: sorted keys, shortest round-trip numbers.
    pub fn to_canonical_string(&self) -> String {
        serde_json::to_string_pretty(&self.to_json()).expect("json serialization")
    }

    pub fn from_json(v: &Value) -> Result<Self> {
        let dims = v
            .get("dims")
            .ok_or_else(|| Error::Parse("problem needs \"dims\"".into()))?;
        let n = dims
            .get("n")
            .and_then(Value::as_u64)
            .ok_or_else(|| Error::Parse("dims.n must be an integer".into()))?
            as usize;
        let widths: Vec<usize> = dims
            .get("N")
            .and_then(Value::as_array)
            .ok_or_else(|| Error::Parse("dims.N must be an array".into()))?
            .iter()
            .map(|x| x.as_u64().map(|x| x as usize))
            .collect::<Option<_>>()
            .ok_or_else(|| Error::Parse("dims.N entries must be integers".into()))?;
        let lambda = parse_scalar(
            v.get("lambda")
                .ok_or_else(|| Error::Parse("problem needs \"lambda\"".into()))?,
            "lambda",
        )?;
        let layers = v
            .get("layers")
            .and_then(Value::as_array)
            .ok_or_else(|| Error::Parse("\"layers\" must be an array".into()))?
            .iter()
            .map(|l| {
                l.as_array()
                    .ok_or_else(|| Error::Parse("each layer must be an array".into()))?
                    .iter()
                    .map(Expr::from_json)
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        let outer = Expr::from_json(
            v.get("outer")
                .ok_or_else(|| Error::Parse("problem needs \"outer\"".into()))?,
        )?;
        check_len("dims.N", layers.len(), widths.len())?;
        for (l, (comps, &w)) in layers.iter().zip(&widths).enumerate() {
            check_len(&format!("layer {} width", l + 1), w, comps.len())?;
        }
        let p = CompositeProblem::new(n, lambda, layers, outer)?;
        match v.get("beta") {
            None | Some(Value::Null) => Ok(p),
            Some(Value::Array(b)) => {
                let b = b
                    .iter()
                    .map(|x| parse_scalar(x, "beta"))
                    .collect::<Result<Vec<T>>>()?;
                p.with_beta(b)
            }
            Some(_) => Err(Error::Parse("\"beta\" must be an array".into())),
        }
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let v: Value = serde_json::from_str(s).map_err(|e| Error::Parse(e.to_string()))?;
        Self::from_json(&v)
    }
}

pub(crate) fn value_leaf<T: Scalar>(z: &Point<T>, leaf: Leaf) -> T {
    match leaf {
        Leaf::Param(j) => z.theta[j],
        Leaf::Input { layer, index } => z.u[layer - 1][index],
    }
}
