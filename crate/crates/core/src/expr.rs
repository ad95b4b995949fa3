//! Expression trees for layer maps and the outer loss.
//!
//! Leaves are parameters `θ_j` or components of earlier layer outputs. Every
//! nonsmooth node (`max`, `abs`, `[·]₊`, leaky ReLU) is a pointwise max of two
//! smooth branches, which is what the evaluators in [`crate::algebra`] rely on.

use serde_json::{json, Map, Value};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq)]
pub enum Expr<T> {
    Const(T),
    /// Parameter component `θ_j` (0-based).
    Param(usize),
    /// Component `index` of layer output `u_layer` (layer is 1-based, index 0-based).
    Input { layer: usize, index: usize },
    Sum(Vec<Expr<T>>),
    Diff(Box<Expr<T>>, Box<Expr<T>>),
    Scale(T, Box<Expr<T>>),
    Product(Box<Expr<T>>, Box<Expr<T>>),
    /// `Σ_i a_i b_i`.
    Inner(Vec<Expr<T>>, Vec<Expr<T>>),
    /// `Σ_i a_i²`.
    SqNorm(Vec<Expr<T>>),
    /// `offset + Σ_i coeffs_i · args_i`.
    Affine {
        coeffs: Vec<T>,
        args: Vec<Expr<T>>,
        offset: T,
    },
    Max(Box<Expr<T>>, Box<Expr<T>>),
    Abs(Box<Expr<T>>),
    /// `max{x, 0}`.
    Plus(Box<Expr<T>>),
    /// `max{x, αx}` with `0 ≤ α < 1`.
    LeakyRelu { alpha: T, arg: Box<Expr<T>> },
    Square(Box<Expr<T>>),
}

/// A leaf reference handed to evaluators.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Leaf {
    Param(usize),
    Input { layer: usize, index: usize },
}

/// Coarse algebraic class of an expression, used to decide whether radial
/// feasibility along a ray can be settled on a finite step grid.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Structure {
    /// Constant or affine in all leaves.
    Affine,
    /// Piecewise affine (max/abs/ReLU of affine pieces).
    PiecewiseAffine,
    /// Sum of affine terms and products of a parameter-only affine factor
    /// with a state-only affine factor.
    Bilinear,
    Other,
}

impl<T: Scalar> Expr<T> {
    pub fn constant(c: T) -> Self {
        Expr::Const(c)
    }

    pub fn param(j: usize) -> Self {
        Expr::Param(j)
    }

    pub fn input(layer: usize, index: usize) -> Self {
        Expr::Input { layer, index }
    }

    pub fn sum(args: Vec<Expr<T>>) -> Self {
        Expr::Sum(args)
    }

    pub fn diff(a: Expr<T>, b: Expr<T>) -> Self {
        Expr::Diff(Box::new(a), Box::new(b))
    }

    pub fn scale(c: T, a: Expr<T>) -> Self {
        Expr::Scale(c, Box::new(a))
    }

    pub fn product(a: Expr<T>, b: Expr<T>) -> Self {
        Expr::Product(Box::new(a), Box::new(b))
    }

    pub fn inner(a: Vec<Expr<T>>, b: Vec<Expr<T>>) -> Self {
        Expr::Inner(a, b)
    }

    pub fn sq_norm(args: Vec<Expr<T>>) -> Self {
        Expr::SqNorm(args)
    }

    pub fn affine(coeffs: Vec<T>, args: Vec<Expr<T>>, offset: T) -> Self {
        Expr::Affine {
            coeffs,
            args,
            offset,
        }
    }

    pub fn max(a: Expr<T>, b: Expr<T>) -> Self {
        Expr::Max(Box::new(a), Box::new(b))
    }

    pub fn abs(a: Expr<T>) -> Self {
        Expr::Abs(Box::new(a))
    }

    pub fn plus(a: Expr<T>) -> Self {
        Expr::Plus(Box::new(a))
    }

    pub fn leaky_relu(alpha: T, a: Expr<T>) -> Self {
        Expr::LeakyRelu {
            alpha,
            arg: Box::new(a),
        }
    }

    pub fn square(a: Expr<T>) -> Self {
        Expr::Square(Box::new(a))
    }

    /// Direct children in evaluation order.
    pub fn children(&self) -> Vec<&Expr<T>> {
        match self {
            Expr::Const(_) | Expr::Param(_) | Expr::Input { .. } => vec![],
            Expr::Sum(a) | Expr::SqNorm(a) => a.iter().collect(),
            Expr::Affine { args, .. } => args.iter().collect(),
            Expr::Inner(a, b) => a.iter().chain(b.iter()).collect(),
            Expr::Diff(a, b) | Expr::Product(a, b) | Expr::Max(a, b) => vec![a, b],
            Expr::Scale(_, a)
            | Expr::Abs(a)
            | Expr::Plus(a)
            | Expr::Square(a)
            | Expr::LeakyRelu { arg: a, .. } => vec![a],
        }
    }

    /// Visits every leaf.
    pub fn for_each_leaf(&self, f: &mut impl FnMut(Leaf)) {
        match self {
            Expr::Param(j) => f(Leaf::Param(*j)),
            Expr::Input { layer, index } => f(Leaf::Input {
                layer: *layer,
                index: *index,
            }),
            _ => {
                for c in self.children() {
                    c.for_each_leaf(f);
                }
            }
        }
    }

    /// True when no node can introduce a kink.
    pub fn is_smooth(&self) -> bool {
        match self {
            Expr::Max(..) | Expr::Abs(_) | Expr::Plus(_) | Expr::LeakyRelu { .. } => false,
            _ => self.children().iter().all(|c| c.is_smooth()),
        }
    }

    pub fn node_count(&self) -> usize {
        1 + self.children().iter().map(|c| c.node_count()).sum::<usize>()
    }

    /// Checks leaf ranges and node invariants. `layer_dims[l-1]` is the width
    /// of layer `l`; inputs must come from layers `< max_layer`.
    pub fn validate(&self, n_params: usize, layer_dims: &[usize], max_layer: usize) -> Result<()> {
        match self {
            Expr::Const(c) => finite(*c, "constant"),
            Expr::Param(j) => {
                if *j < n_params {
                    Ok(())
                } else {
                    Err(Error::InvalidModel(format!(
                        "parameter index {j} out of range (n = {n_params})"
                    )))
                }
            }
            Expr::Input { layer, index } => {
                if *layer == 0 || *layer >= max_layer {
                    return Err(Error::InvalidModel(format!(
                        "input from layer {layer} not allowed here (must be in 1..{max_layer})"
                    )));
                }
                let width = layer_dims[*layer - 1];
                if *index >= width {
                    return Err(Error::InvalidModel(format!(
                        "input index {index} out of range for layer {layer} (width {width})"
                    )));
                }
                Ok(())
            }
            Expr::Scale(c, a) => {
                finite(*c, "scale")?;
                a.validate(n_params, layer_dims, max_layer)
            }
            Expr::Inner(a, b) if a.len() != b.len() => Err(Error::InvalidModel(format!(
                "inner product of lengths {} and {}",
                a.len(),
                b.len()
            ))),
            Expr::Affine {
                coeffs,
                args,
                offset,
            } => {
                if coeffs.len() != args.len() {
                    return Err(Error::InvalidModel(format!(
                        "affine node with {} coefficients and {} arguments",
                        coeffs.len(),
                        args.len()
                    )));
                }
                finite(*offset, "affine offset")?;
                for &c in coeffs {
                    finite(c, "affine coefficient")?;
                }
                for a in args {
                    a.validate(n_params, layer_dims, max_layer)?;
                }
                Ok(())
            }
            Expr::LeakyRelu { alpha, arg } => {
                if !(*alpha >= T::zero() && *alpha < T::one()) {
                    return Err(Error::InvalidModel(format!(
                        "leaky ReLU slope {alpha} outside [0, 1)"
                    )));
                }
                arg.validate(n_params, layer_dims, max_layer)
            }
            _ => {
                for c in self.children() {
                    c.validate(n_params, layer_dims, max_layer)?;
                }
                Ok(())
            }
        }
    }

    fn leaf_kinds(&self) -> (bool, bool) {
        let (mut p, mut s) = (false, false);
        self.for_each_leaf(&mut |l| match l {
            Leaf::Param(_) => p = true,
            Leaf::Input { .. } => s = true,
        });
        (p, s)
    }

    pub fn structure(&self) -> Structure {
        use Structure::*;
        let join = |xs: Vec<Structure>| {
            let mut out = Affine;
            for x in xs {
                out = match (out, x) {
                    (Other, _) | (_, Other) => Other,
                    (PiecewiseAffine, Bilinear) | (Bilinear, PiecewiseAffine) => Other,
                    (a, b) => a.max(b),
                };
            }
            out
        };
        match self {
            Expr::Const(_) | Expr::Param(_) | Expr::Input { .. } => Affine,
            Expr::Sum(_) | Expr::Diff(..) | Expr::Scale(..) | Expr::Affine { .. } => {
                join(self.children().iter().map(|c| c.structure()).collect())
            }
            Expr::Product(a, b) => bilinear_pair(a, b),
            Expr::Inner(a, b) => join(
                a.iter()
                    .zip(b)
                    .map(|(x, y)| bilinear_pair(x, y))
                    .collect(),
            ),
            Expr::Max(..) | Expr::Abs(_) | Expr::Plus(_) | Expr::LeakyRelu { .. } => {
                match join(self.children().iter().map(|c| c.structure()).collect()) {
                    Affine | PiecewiseAffine => PiecewiseAffine,
                    _ => Other,
                }
            }
            Expr::SqNorm(_) | Expr::Square(_) => Other,
        }
    }

    /// Serializes to the node format `{op, args|ref|value, alpha?}`.
    pub fn to_json(&self) -> Value {
        let num = |x: T| serde_json::to_value(x).unwrap_or(Value::Null);
        let many = |xs: &[Expr<T>]| Value::Array(xs.iter().map(|x| x.to_json()).collect());
        match self {
            Expr::Const(c) => json!({"op": "const", "value": num(*c)}),
            Expr::Param(j) => json!({"op": "param", "ref": j}),
            Expr::Input { layer, index } => json!({"op": "input", "ref": [layer, index]}),
            Expr::Sum(a) => json!({"op": "sum", "args": many(a)}),
            Expr::Diff(a, b) => json!({"op": "diff", "args": [a.to_json(), b.to_json()]}),
            Expr::Scale(c, a) => json!({"op": "scale", "value": num(*c), "args": [a.to_json()]}),
            Expr::Product(a, b) => json!({"op": "product", "args": [a.to_json(), b.to_json()]}),
            Expr::Inner(a, b) => {
                let mut all: Vec<Value> = a.iter().map(|x| x.to_json()).collect();
                all.extend(b.iter().map(|x| x.to_json()));
                json!({"op": "inner", "args": all})
            }
            Expr::SqNorm(a) => json!({"op": "sq_norm", "args": many(a)}),
            Expr::Affine {
                coeffs,
                args,
                offset,
            } => json!({
                "op": "affine",
                "coeffs": coeffs.iter().map(|&c| num(c)).collect::<Vec<_>>(),
                "value": num(*offset),
                "args": many(args),
            }),
            Expr::Max(a, b) => json!({"op": "max", "args": [a.to_json(), b.to_json()]}),
            Expr::Abs(a) => json!({"op": "abs", "args": [a.to_json()]}),
            Expr::Plus(a) => json!({"op": "plus", "args": [a.to_json()]}),
            Expr::LeakyRelu { alpha, arg } => {
                json!({"op": "leaky_relu", "alpha": num(*alpha), "args": [arg.to_json()]})
            }
            Expr::Square(a) => json!({"op": "square", "args": [a.to_json()]}),
        }
    }

    pub fn from_json(v: &Value) -> Result<Self> {
        let obj = v
            .as_object()
            .ok_or_else(|| Error::Parse(format!("expression node must be an object, got {v}")))?;
        let op = obj
            .get("op")
            .and_then(Value::as_str)
            .ok_or_else(|| Error::Parse("expression node without \"op\"".into()))?;
        let args = || -> Result<Vec<Expr<T>>> {
            match obj.get("args") {
                Some(Value::Array(a)) => a.iter().map(Expr::from_json).collect(),
                _ => Err(Error::Parse(format!("\"{op}\" node needs an \"args\" array"))),
            }
        };
        let arity = |n: usize| -> Result<Vec<Expr<T>>> {
            let a = args()?;
            if a.len() == n {
                Ok(a)
            } else {
                Err(Error::Parse(format!(
                    "\"{op}\" takes {n} argument(s), got {}",
                    a.len()
                )))
            }
        };
        let value = |key: &str| -> Result<T> { scalar_field(obj, key, op) };
        let unary = |f: fn(Box<Expr<T>>) -> Expr<T>| -> Result<Expr<T>> {
            let mut a = arity(1)?;
            Ok(f(Box::new(a.remove(0))))
        };
        let binary = |f: fn(Box<Expr<T>>, Box<Expr<T>>) -> Expr<T>| -> Result<Expr<T>> {
            let mut a = arity(2)?;
            let b = a.pop().expect("two args");
            let a = a.pop().expect("two args");
            Ok(f(Box::new(a), Box::new(b)))
        };
        match op {
            "const" => Ok(Expr::Const(value("value")?)),
            "param" => {
                let j = obj
                    .get("ref")
                    .and_then(Value::as_u64)
                    .ok_or_else(|| Error::Parse("\"param\" needs an integer \"ref\"".into()))?;
                Ok(Expr::Param(j as usize))
            }
            "input" => {
                let r = obj.get("ref").and_then(Value::as_array);
                match r.map(|r| r.iter().map(Value::as_u64).collect::<Vec<_>>()) {
                    Some(ix) if ix.len() == 2 && ix.iter().all(Option::is_some) => Ok(Expr::Input {
                        layer: ix[0].unwrap_or_default() as usize,
                        index: ix[1].unwrap_or_default() as usize,
                    }),
                    _ => Err(Error::Parse(
                        "\"input\" needs \"ref\": [layer, index]".into(),
                    )),
                }
            }
            "sum" => Ok(Expr::Sum(args()?)),
            "sq_norm" => Ok(Expr::SqNorm(args()?)),
            "diff" => binary(Expr::Diff),
            "product" => binary(Expr::Product),
            "max" => binary(Expr::Max),
            "abs" => unary(Expr::Abs),
            "plus" => unary(Expr::Plus),
            "square" => unary(Expr::Square),
            "scale" => {
                let c = value("value")?;
                let mut a = arity(1)?;
                Ok(Expr::Scale(c, Box::new(a.remove(0))))
            }
            "leaky_relu" => {
                let alpha = value("alpha")?;
                let mut a = arity(1)?;
                Ok(Expr::LeakyRelu {
                    alpha,
                    arg: Box::new(a.remove(0)),
                })
            }
            "inner" => {
                let mut a = args()?;
                if a.len() % 2 != 0 {
                    return Err(Error::Parse(
                        "\"inner\" needs an even number of arguments".into(),
                    ));
                }
                let b = a.split_off(a.len() / 2);
                Ok(Expr::Inner(a, b))
            }
            "affine" => {
                let coeffs = match obj.get("coeffs") {
                    Some(Value::Array(c)) => c
                        .iter()
                        .map(|x| parse_scalar(x, "affine coefficient"))
                        .collect::<Result<Vec<T>>>()?,
                    _ => return Err(Error::Parse("\"affine\" needs \"coeffs\"".into())),
                };
                let offset = match obj.get("value") {
                    Some(x) => parse_scalar(x, "affine offset")?,
                    None => T::zero(),
                };
                Ok(Expr::Affine {
                    coeffs,
                    args: args()?,
                    offset,
                })
            }
            other => Err(Error::Parse(format!("unknown op \"{other}\""))),
        }
    }
}

fn bilinear_pair<T: Scalar>(a: &Expr<T>, b: &Expr<T>) -> Structure {
    let (sa, sb) = (a.structure(), b.structure());
    if sa != Structure::Affine || sb != Structure::Affine {
        return Structure::Other;
    }
    let ((pa, ua), (pb, ub)) = (a.leaf_kinds(), b.leaf_kinds());
    if !(pa || ua) || !(pb || ub) {
        // one factor is constant
        Structure::Affine
    } else if (pa && !ua && ub && !pb) || (ua && !pa && pb && !ub) {
        Structure::Bilinear
    } else {
        Structure::Other
    }
}

fn finite<T: Scalar>(x: T, what: &str) -> Result<()> {
    if x.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidModel(format!("non-finite {what}")))
    }
}

pub(crate) fn parse_scalar<T: Scalar>(v: &Value, what: &str) -> Result<T> {
    v.as_f64()
        .and_then(T::from_f64)
        .ok_or_else(|| Error::Parse(format!("{what} must be a number, got {v}")))
}

fn scalar_field<T: Scalar>(obj: &Map<String, Value>, key: &str, op: &str) -> Result<T> {
    match obj.get(key) {
        Some(v) => parse_scalar(v, &format!("\"{op}\".{key}")),
        None => Err(Error::Parse(format!("\"{op}\" node needs \"{key}\""))),
    }
}
