//! Right-hand sides `f(x, t)` of the Dirichlet problems together with their
//! primitives `F(x, t) = ∫_0^t f(x, ξ) dξ`.
//!
//! Implementations must be pure: the solvers evaluate them from several
//! places and rely on identical answers for identical inputs.

use std::fmt::Debug;
use std::sync::Arc;

use meval::{ContextProvider, Expr, FuncEvalError};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{precondition, Error, Result};

pub trait Nonlinearity: Debug + Send + Sync {
    /// `f(x, t)` at vertex `x`.
    fn f(&self, x: usize, t: f64) -> f64;

    /// `F(x, t)`, the primitive of `f` in `t` vanishing at `t = 0`.
    fn primitive(&self, x: usize, t: f64) -> f64;

    /// `∂f/∂t (x, t)`. May be infinite where `f` is not differentiable.
    fn derivative(&self, x: usize, t: f64) -> f64;

    /// Family tag and parameters, for reports.
    fn describe(&self) -> Value;
}

/// `sign(t) |t|^(p-1)`, i.e. `|t|^(p-2) t` with the value 0 at `t = 0`.
pub fn signed_power(t: f64, p: f64) -> f64 {
    if t == 0.0 {
        0.0
    } else {
        t.signum() * t.abs().powf(p - 1.0)
    }
}

/// One term `coefficient * |t|^(exponent-2) t` of a [`PowerSum`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerTerm {
    pub coefficient: f64,
    pub exponent: f64,
}

/// `f(t) = Σ c_k |t|^(p_k - 2) t`, independent of the vertex.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PowerSum {
    terms: Vec<PowerTerm>,
}

impl PowerSum {
    pub fn new(terms: Vec<PowerTerm>) -> Result<Self> {
        if let Some(t) = terms.iter().find(|t| !(t.exponent > 1.0) || !t.coefficient.is_finite()) {
            return precondition(format!("power term {t:?} needs exponent > 1"));
        }
        Ok(Self { terms })
    }

    /// The nonlinearity that vanishes identically.
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn terms(&self) -> &[PowerTerm] {
        &self.terms
    }
}

impl Nonlinearity for PowerSum {
    fn f(&self, _x: usize, t: f64) -> f64 {
        self.terms
            .iter()
            .map(|k| k.coefficient * signed_power(t, k.exponent))
            .sum()
    }

    fn primitive(&self, _x: usize, t: f64) -> f64 {
        let a = t.abs();
        self.terms
            .iter()
            .map(|k| k.coefficient * a.powf(k.exponent) / k.exponent)
            .sum()
    }

    fn derivative(&self, _x: usize, t: f64) -> f64 {
        let a = t.abs();
        self.terms
            .iter()
            .map(|k| k.coefficient * (k.exponent - 1.0) * a.powf(k.exponent - 2.0))
            .sum()
    }

    fn describe(&self) -> Value {
        json!({ "family": "power", "terms": self.terms })
    }
}

/// Exponents, parameters and discretization of the concave-convex problem
/// `-Δu = λ|u|^(s-2)u - η|u|^(r-2)u + |u|^(q-2)u`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProblemSpec {
    pub n: usize,
    pub m: u32,
    pub r: f64,
    pub s: f64,
    pub q: f64,
    pub lambda: f64,
    pub eta: f64,
}

impl ProblemSpec {
    pub fn new(n: usize, m: u32, r: f64, s: f64, q: f64, lambda: f64, eta: f64) -> Result<Self> {
        let spec = Self {
            n,
            m,
            r,
            s,
            q,
            lambda,
            eta,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return precondition(format!("N must be at least 2, got {}", self.n));
        }
        if !(1.0 < self.r && self.r < self.s && self.s < 2.0 && 2.0 < self.q) {
            return precondition(format!(
                "exponents must satisfy 1 < r < s < 2 < q, got r={}, s={}, q={}",
                self.r, self.s, self.q
            ));
        }
        if !(self.lambda >= 0.0 && self.eta >= 0.0) {
            return precondition(format!(
                "parameters must be nonnegative, got lambda={}, eta={}",
                self.lambda, self.eta
            ));
        }
        Ok(())
    }

    pub fn with_parameters(&self, lambda: f64, eta: f64) -> Self {
        Self { lambda, eta, ..*self }
    }
}

/// `f(t) = λ|t|^(s-2)t - η|t|^(r-2)t + |t|^(q-2)t`.
pub fn power_problem(spec: &ProblemSpec) -> PowerSum {
    PowerSum {
        terms: vec![
            PowerTerm {
                coefficient: spec.lambda,
                exponent: spec.s,
            },
            PowerTerm {
                coefficient: -spec.eta,
                exponent: spec.r,
            },
            PowerTerm {
                coefficient: 1.0,
                exponent: spec.q,
            },
        ],
    }
}

/// The sublinear part alone, `f(t) = λ|t|^(s-2)t`; its functional is `ψ_λ`.
pub fn sublinear_part(spec: &ProblemSpec) -> PowerSum {
    PowerSum {
        terms: vec![PowerTerm {
            coefficient: spec.lambda,
            exponent: spec.s,
        }],
    }
}

/// `f(x, t) = a(x) f_1(t)` where `f_1` switches from `|t|^(β-2)t` to
/// `|t|^(α-2)t` at `|t| = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExampleF1 {
    alpha: f64,
    beta: f64,
    coefficients: Vec<f64>,
}

pub fn example_f1(alpha: f64, beta: f64, coefficients: Vec<f64>) -> Result<ExampleF1> {
    if !(0.0 < alpha && alpha < 2.0 && 2.0 < beta) {
        return precondition(format!(
            "example family needs 0 < alpha < 2 < beta, got alpha={alpha}, beta={beta}"
        ));
    }
    if let Some(x) = coefficients.iter().position(|&a| !(a > 0.0) || !a.is_finite()) {
        return precondition(format!("coefficient at vertex {x} must be positive"));
    }
    Ok(ExampleF1 {
        alpha,
        beta,
        coefficients,
    })
}

impl ExampleF1 {
    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    pub fn f1(&self, t: f64) -> f64 {
        if t.abs() <= 1.0 {
            signed_power(t, self.beta)
        } else {
            signed_power(t, self.alpha)
        }
    }

    pub fn big_f1(&self, t: f64) -> f64 {
        let a = t.abs();
        if a <= 1.0 {
            a.powf(self.beta) / self.beta
        } else {
            1.0 / self.beta - 1.0 / self.alpha + a.powf(self.alpha) / self.alpha
        }
    }
}

impl Nonlinearity for ExampleF1 {
    fn f(&self, x: usize, t: f64) -> f64 {
        self.coefficients[x] * self.f1(t)
    }

    fn primitive(&self, x: usize, t: f64) -> f64 {
        self.coefficients[x] * self.big_f1(t)
    }

    fn derivative(&self, x: usize, t: f64) -> f64 {
        let a = t.abs();
        let p = if a <= 1.0 { self.beta } else { self.alpha };
        self.coefficients[x] * (p - 1.0) * a.powf(p - 2.0)
    }

    fn describe(&self) -> Value {
        json!({
            "family": "example_f1",
            "alpha": self.alpha,
            "beta": self.beta,
            "coefficients": self.coefficients,
        })
    }
}

/// `factor * inner`.
#[derive(Debug, Clone)]
pub struct Scaled {
    pub factor: f64,
    pub inner: Arc<dyn Nonlinearity>,
}

impl Nonlinearity for Scaled {
    fn f(&self, x: usize, t: f64) -> f64 {
        self.factor * self.inner.f(x, t)
    }

    fn primitive(&self, x: usize, t: f64) -> f64 {
        self.factor * self.inner.primitive(x, t)
    }

    fn derivative(&self, x: usize, t: f64) -> f64 {
        self.factor * self.inner.derivative(x, t)
    }

    fn describe(&self) -> Value {
        json!({ "family": "scaled", "factor": self.factor, "inner": self.inner.describe() })
    }
}

/// `λ f + η g`: a main nonlinearity plus a weighted perturbation.
#[derive(Debug, Clone)]
pub struct Perturbed {
    pub lambda: f64,
    pub main: Arc<dyn Nonlinearity>,
    pub eta: f64,
    pub perturbation: Arc<dyn Nonlinearity>,
}

impl Nonlinearity for Perturbed {
    fn f(&self, x: usize, t: f64) -> f64 {
        self.lambda * self.main.f(x, t) + self.eta * self.perturbation.f(x, t)
    }

    fn primitive(&self, x: usize, t: f64) -> f64 {
        self.lambda * self.main.primitive(x, t) + self.eta * self.perturbation.primitive(x, t)
    }

    fn derivative(&self, x: usize, t: f64) -> f64 {
        self.lambda * self.main.derivative(x, t) + self.eta * self.perturbation.derivative(x, t)
    }

    fn describe(&self) -> Value {
        json!({
            "family": "perturbed",
            "lambda": self.lambda,
            "main": self.main.describe(),
            "eta": self.eta,
            "perturbation": self.perturbation.describe(),
        })
    }
}

/// Variables `t`, `a` and a fixed set of scalar functions for expression
/// nonlinearities.
struct ExprScope {
    t: f64,
    a: f64,
}

impl ContextProvider for ExprScope {
    fn get_var(&self, name: &str) -> Option<f64> {
        match name {
            "t" => Some(self.t),
            "a" => Some(self.a),
            "pi" => Some(std::f64::consts::PI),
            "e" => Some(std::f64::consts::E),
            _ => None,
        }
    }

    fn eval_func(&self, name: &str, args: &[f64]) -> std::result::Result<f64, FuncEvalError> {
        let one = |f: fn(f64) -> f64| match args {
            [x] => Ok(f(*x)),
            _ => Err(FuncEvalError::NumberArgs(1)),
        };
        let two = |f: fn(f64, f64) -> f64| match args {
            [x, y] => Ok(f(*x, *y)),
            _ => Err(FuncEvalError::NumberArgs(2)),
        };
        match name {
            "abs" => one(f64::abs),
            "sqrt" => one(f64::sqrt),
            "exp" => one(f64::exp),
            "ln" => one(f64::ln),
            "sin" => one(f64::sin),
            "cos" => one(f64::cos),
            "tanh" => one(f64::tanh),
            "sign" => one(|x| if x == 0.0 { 0.0 } else { x.signum() }),
            "min" => two(f64::min),
            "max" => two(f64::max),
            "pow" => two(f64::powf),
            // |x|^(p-2) x with the zero convention
            "spow" => two(signed_power),
            _ => Err(FuncEvalError::UnknownFunction),
        }
    }
}

fn parse_expr(src: &str) -> Result<Expr> {
    let expr: Expr = src.parse().map_err(|e: meval::Error| Error::Expression {
        expr: src.to_string(),
        message: e.to_string(),
    })?;
    // probe once so unknown names fail at construction
    expr.eval_with_context(ExprScope { t: 0.5, a: 1.0 })
        .map_err(|e| Error::Expression {
            expr: src.to_string(),
            message: e.to_string(),
        })?;
    Ok(expr)
}

/// Gauss-Legendre nodes and weights on [-1, 1], five points.
const GL5: [(f64, f64); 5] = [
    (0.0, 0.568_888_888_888_888_9),
    (-0.538_469_310_105_683_1, 0.478_628_670_499_366_5),
    (0.538_469_310_105_683_1, 0.478_628_670_499_366_5),
    (-0.906_179_845_938_664, 0.236_926_885_056_189_1),
    (0.906_179_845_938_664, 0.236_926_885_056_189_1),
];

/// Panels of the composite rule used when no closed-form primitive is given.
/// For smooth `f` the error is `O(t^11 / PANELS^10)`; kinks cost accuracy.
pub const QUADRATURE_PANELS: usize = 64;

/// `f` (and optionally `F`) given as expressions in `t` and the per-vertex
/// coefficient `a`.
#[derive(Debug, Clone)]
pub struct ExpressionNonlinearity {
    f_src: String,
    primitive_src: Option<String>,
    f: Expr,
    primitive: Option<Expr>,
    coefficients: Vec<f64>,
}

impl ExpressionNonlinearity {
    pub fn new(f: &str, primitive: Option<&str>, coefficients: Vec<f64>) -> Result<Self> {
        Ok(Self {
            f_src: f.to_string(),
            primitive_src: primitive.map(str::to_string),
            f: parse_expr(f)?,
            primitive: primitive.map(parse_expr).transpose()?,
            coefficients,
        })
    }

    fn eval(&self, expr: &Expr, x: usize, t: f64) -> f64 {
        let a = self.coefficients.get(x).copied().unwrap_or(1.0);
        // names were validated at construction; domain errors surface as NaN
        expr.eval_with_context(ExprScope { t, a }).unwrap_or(f64::NAN)
    }
}

impl Nonlinearity for ExpressionNonlinearity {
    fn f(&self, x: usize, t: f64) -> f64 {
        self.eval(&self.f, x, t)
    }

    fn primitive(&self, x: usize, t: f64) -> f64 {
        if let Some(p) = &self.primitive {
            return self.eval(p, x, t) - self.eval(p, x, 0.0);
        }
        if t == 0.0 {
            return 0.0;
        }
        let h = t / QUADRATURE_PANELS as f64;
        let mut acc = crate::energy::CompensatedSum::default();
        for k in 0..QUADRATURE_PANELS {
            let mid = (k as f64 + 0.5) * h;
            for (node, w) in GL5 {
                acc.add(w * self.f(x, mid + 0.5 * h * node));
            }
        }
        0.5 * h * acc.value()
    }

    fn derivative(&self, x: usize, t: f64) -> f64 {
        let h = 1e-6 * t.abs().max(1e-3);
        (self.f(x, t + h) - self.f(x, t - h)) / (2.0 * h)
    }

    fn describe(&self) -> Value {
        json!({
            "family": "custom-expression",
            "f": self.f_src,
            "F": self.primitive_src,
            "coefficients": self.coefficients,
        })
    }
}

/// Constants for the three growth and sign conditions on `F`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct C2Constants {
    /// Growth exponent at infinity, in `[0, 2)`.
    pub alpha: f64,
    /// Integrable weight `a(x)`, one value per vertex.
    pub weight: Vec<f64>,
    /// Multiplier `m` of the growth bound.
    pub growth: f64,
    pub t0: f64,
    /// Multiplier `M` of the bound near zero.
    pub near_zero: f64,
    pub beta: f64,
    pub t1: f64,
}

impl C2Constants {
    /// Constants under which the example family satisfies all three
    /// conditions: `F ≤ (max a / α)(1 + |t|^α)`, `F ≤ (max a / β)|t|^β` on
    /// `[-1, 1]`, and `t_1 = 1`.
    pub fn for_example_f1(nl: &ExampleF1) -> Self {
        let amax = nl.coefficients.iter().fold(0.0f64, |a, &b| a.max(b));
        Self {
            alpha: nl.alpha,
            weight: vec![1.0; nl.coefficients.len()],
            growth: amax / nl.alpha,
            t0: 1.0,
            near_zero: amax / nl.beta,
            beta: nl.beta,
            t1: 1.0,
        }
    }
}

/// Vertices and `t` samples used by [`check_c2`].
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeGrid {
    pub vertices: Vec<usize>,
    pub t_values: Vec<f64>,
    /// Samples on the segment between 0 and `t_1`.
    pub segment_samples: usize,
}

impl ProbeGrid {
    /// All vertices, `samples` equispaced values of `t` in `[-t_max, t_max]`.
    pub fn uniform(vertex_count: usize, t_max: f64, samples: usize) -> Self {
        let samples = samples.max(2);
        let t_values = (0..samples)
            .map(|k| -t_max + 2.0 * t_max * k as f64 / (samples - 1) as f64)
            .collect();
        Self {
            vertices: (0..vertex_count).collect(),
            t_values,
            segment_samples: samples,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConditionCheck {
    pub passed: bool,
    pub samples: usize,
    pub violations: usize,
    /// First violating `(vertex, t)` in sampling order.
    pub first_violation: Option<(usize, f64)>,
}

impl ConditionCheck {
    fn run(points: impl Iterator<Item = (usize, f64)>, ok: impl Fn(usize, f64) -> bool) -> Self {
        let mut samples = 0;
        let mut violations = 0;
        let mut first = None;
        for (x, t) in points {
            samples += 1;
            if !ok(x, t) {
                violations += 1;
                first.get_or_insert((x, t));
            }
        }
        Self {
            passed: violations == 0,
            samples,
            violations,
            first_violation: first,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct C2Report {
    pub growth: ConditionCheck,
    pub near_zero: ConditionCheck,
    pub sign: ConditionCheck,
}

impl C2Report {
    pub fn all_passed(&self) -> bool {
        self.growth.passed && self.near_zero.passed && self.sign.passed
    }
}

/// `a ≤ b` up to a few ulps, so bounds attained with equality survive rounding.
fn le(a: f64, b: f64) -> bool {
    a <= b + 4.0 * f64::EPSILON * b.abs()
}

/// Samples the three conditions on `F` over `grid`. A failed sample is
/// reported, never raised.
pub fn check_c2(nl: &dyn Nonlinearity, grid: &ProbeGrid, k: &C2Constants) -> C2Report {
    let pts = || {
        grid.vertices
            .iter()
            .flat_map(|&x| grid.t_values.iter().map(move |&t| (x, t)))
    };
    let growth = ConditionCheck::run(pts(), |x, t| {
        let a = k.weight.get(x).copied().unwrap_or(0.0);
        le(nl.primitive(x, t), k.growth * (a + t.abs().powf(k.alpha)))
    });
    let near_zero = ConditionCheck::run(pts().filter(|(_, t)| t.abs() <= k.t0), |x, t| {
        le(nl.primitive(x, t), k.near_zero * t.abs().powf(k.beta))
    });
    let n = grid.segment_samples.max(2);
    let segment = grid.vertices.iter().flat_map(|&x| {
        (0..n).map(move |j| (x, k.t1 * j as f64 / (n - 1) as f64))
    });
    let sign = ConditionCheck::run(segment, |x, t| {
        nl.primitive(x, k.t1) > 0.0 && nl.primitive(x, t) >= 0.0
    });
    C2Report {
        growth,
        near_zero,
        sign,
    }
}
