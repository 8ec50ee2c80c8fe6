//! Discrete energy functional `I(u) = ½ W_m(u) - Σ_x w(x) F(x, u(x))`, its
//! weak derivative, and the gradient in the energy metric.
//!
//! The integral is replaced by the vertex quadrature of the level, so the
//! residual below is the exact derivative of the discrete functional.

use std::sync::Arc;

use nalgebra::DMatrix;

use crate::energy::{compensated_sum, energy, CompensatedSum, DiscreteFunction};
use crate::error::{precondition, Error, Result};
use crate::gasket::GasketLevel;
use crate::nonlinearity::Nonlinearity;

/// Default relative tolerance of the conjugate gradient solve.
pub const CG_TOLERANCE: f64 = 1e-10;

/// Gasket level, nonlinearity and the stiffness structure of the free
/// vertices. Immutable once built.
#[derive(Debug, Clone)]
pub struct FunctionalContext {
    level: Arc<GasketLevel>,
    nl: Arc<dyn Nonlinearity>,
    free: Vec<usize>,
    slot: Vec<Option<usize>>,
    adjacency: Vec<Vec<usize>>,
    // stiffness rows over free vertices: (column slot, value)
    rows: Vec<Vec<(usize, f64)>>,
    diagonal: Vec<f64>,
    cg_tolerance: f64,
}

/// Energy-metric gradient together with solve diagnostics.
#[derive(Debug, Clone)]
pub struct Gradient {
    pub direction: DiscreteFunction,
    /// Energy norm of `direction`, which equals the dual norm of the residual.
    pub norm: f64,
    pub cg_iterations: usize,
}

impl FunctionalContext {
    /// Context whose free vertices are all of `V_m \ V_0`.
    pub fn new(level: Arc<GasketLevel>, nl: Arc<dyn Nonlinearity>) -> Self {
        let free: Vec<usize> = level.interior().collect();
        Self::build(level, nl, free)
    }

    /// Context restricted to the given interior vertices; every other vertex
    /// is held at zero.
    pub fn with_free_vertices(
        level: Arc<GasketLevel>,
        nl: Arc<dyn Nonlinearity>,
        mut free: Vec<usize>,
    ) -> Result<Self> {
        free.sort_unstable();
        free.dedup();
        if free.is_empty() {
            return precondition("at least one free vertex is required");
        }
        if let Some(&v) = free
            .iter()
            .find(|&&v| v >= level.vertex_count() || level.is_boundary(v))
        {
            return precondition(format!("vertex {v} cannot be free"));
        }
        Ok(Self::build(level, nl, free))
    }

    fn build(level: Arc<GasketLevel>, nl: Arc<dyn Nonlinearity>, free: Vec<usize>) -> Self {
        let adjacency = level.adjacency();
        let mut slot = vec![None; level.vertex_count()];
        for (k, &v) in free.iter().enumerate() {
            slot[v] = Some(k);
        }
        let scale = level.energy_scale();
        let mut rows = Vec::with_capacity(free.len());
        let mut diagonal = Vec::with_capacity(free.len());
        for &v in &free {
            diagonal.push(scale * adjacency[v].len() as f64);
            rows.push(
                adjacency[v]
                    .iter()
                    .filter_map(|&y| slot[y].map(|k| (k, -scale)))
                    .collect(),
            );
        }
        Self {
            level,
            nl,
            free,
            slot,
            adjacency,
            rows,
            diagonal,
            cg_tolerance: CG_TOLERANCE,
        }
    }

    pub fn with_cg_tolerance(mut self, tol: f64) -> Self {
        self.cg_tolerance = tol;
        self
    }

    pub fn level(&self) -> &Arc<GasketLevel> {
        &self.level
    }

    pub fn nonlinearity(&self) -> &Arc<dyn Nonlinearity> {
        &self.nl
    }

    /// Same level and free set, different nonlinearity.
    pub fn with_nonlinearity(&self, nl: Arc<dyn Nonlinearity>) -> Self {
        Self {
            nl,
            ..self.clone()
        }
    }

    pub fn free_vertices(&self) -> &[usize] {
        &self.free
    }

    pub fn is_free(&self, v: usize) -> bool {
        self.slot[v].is_some()
    }

    pub fn zero(&self) -> DiscreteFunction {
        DiscreteFunction::zeros(self.level.clone())
    }

    /// Function with the given values on the free vertices, zero elsewhere.
    pub fn from_free_values(&self, values: &[f64]) -> Result<DiscreteFunction> {
        if values.len() != self.free.len() {
            return precondition(format!(
                "expected {} free values, got {}",
                self.free.len(),
                values.len()
            ));
        }
        let mut u = self.zero();
        for (&v, &x) in self.free.iter().zip(values) {
            u.values_mut()[v] = x;
        }
        Ok(u)
    }

    pub fn free_values(&self, u: &DiscreteFunction) -> Vec<f64> {
        self.free.iter().map(|&v| u.values()[v]).collect()
    }

    fn check(&self, u: &DiscreteFunction) -> Result<()> {
        crate::energy::check_same_level(&self.level, u.level())?;
        if let Some(v) = (0..self.level.vertex_count()).find(|&v| !self.is_free(v) && u.values()[v] != 0.0) {
            return precondition(format!("function is nonzero at constrained vertex {v}"));
        }
        Ok(())
    }

    /// `Σ_x w(x) F(x, u(x))`.
    pub fn potential(&self, u: &DiscreteFunction) -> f64 {
        let w = self.level.weights();
        compensated_sum(
            self.free
                .iter()
                .map(|&v| w[v] * self.nl.primitive(v, u.values()[v])),
        )
    }

    /// Discrete energy functional `½ W_m(u) - Σ_x w(x) F(x, u(x))`.
    pub fn eval(&self, u: &DiscreteFunction) -> Result<f64> {
        self.check(u)?;
        Ok(self.eval_unchecked(u))
    }

    pub(crate) fn eval_unchecked(&self, u: &DiscreteFunction) -> f64 {
        0.5 * energy(u) - self.potential(u)
    }

    /// Weak derivative tested against each vertex indicator:
    /// `𝒲_m(u, φ_x) - w(x) f(x, u(x))` at free `x`, zero elsewhere.
    pub fn weak_residual(&self, u: &DiscreteFunction) -> Result<DiscreteFunction> {
        self.check(u)?;
        Ok(self.residual_unchecked(u))
    }

    pub(crate) fn residual_unchecked(&self, u: &DiscreteFunction) -> DiscreteFunction {
        let vals = u.values();
        let w = self.level.weights();
        let scale = self.level.energy_scale();
        let mut r = self.zero();
        for &x in &self.free {
            let mut acc = CompensatedSum::default();
            for &y in &self.adjacency[x] {
                acc.add(vals[x] - vals[y]);
            }
            r.values_mut()[x] = scale * acc.value() - w[x] * self.nl.f(x, vals[x]);
        }
        r
    }

    /// Stiffness product on free-vertex coordinates.
    pub fn apply_stiffness(&self, v: &[f64], out: &mut [f64]) {
        for (k, row) in self.rows.iter().enumerate() {
            let mut acc = self.diagonal[k] * v[k];
            for &(j, a) in row {
                acc += a * v[j];
            }
            out[k] = acc;
        }
    }

    /// Solves `𝒲_m(g, φ_x) = rhs(x)` for all free `x`.
    pub fn solve_stiffness(&self, rhs: &[f64]) -> Result<(Vec<f64>, usize)> {
        let n = rhs.len();
        let bnorm = rhs.iter().map(|x| x * x).sum::<f64>().sqrt();
        let mut x = vec![0.0; n];
        if bnorm == 0.0 {
            return Ok((x, 0));
        }
        let mut r = rhs.to_vec();
        let mut z: Vec<f64> = r.iter().zip(&self.diagonal).map(|(a, d)| a / d).collect();
        let mut p = z.clone();
        let mut ap = vec![0.0; n];
        let mut rz: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
        let max_iter = 20 * n + 100;
        let mut rel = 1.0;
        for it in 1..=max_iter {
            self.apply_stiffness(&p, &mut ap);
            let pap: f64 = p.iter().zip(&ap).map(|(a, b)| a * b).sum();
            let alpha = rz / pap;
            for k in 0..n {
                x[k] += alpha * p[k];
                r[k] -= alpha * ap[k];
            }
            rel = r.iter().map(|a| a * a).sum::<f64>().sqrt() / bnorm;
            if rel <= self.cg_tolerance {
                return Ok((x, it));
            }
            for k in 0..n {
                z[k] = r[k] / self.diagonal[k];
            }
            let rz_next: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
            let beta = rz_next / rz;
            rz = rz_next;
            for k in 0..n {
                p[k] = z[k] + beta * p[k];
            }
        }
        Err(Error::LinearSolve {
            iterations: max_iter,
            relative_residual: rel,
        })
    }

    /// Riesz representative of the derivative in the `𝒲_m` inner product:
    /// the steepest-ascent direction of `I` in the energy metric.
    pub fn energy_gradient(&self, u: &DiscreteFunction) -> Result<Gradient> {
        self.check(u)?;
        let r = self.residual_unchecked(u);
        self.gradient_from_residual(&r)
    }

    pub(crate) fn gradient_from_residual(&self, r: &DiscreteFunction) -> Result<Gradient> {
        let rhs = self.free_values(r);
        let (g, cg_iterations) = self.solve_stiffness(&rhs)?;
        let dual = compensated_sum(rhs.iter().zip(&g).map(|(a, b)| a * b));
        Ok(Gradient {
            direction: self.from_free_values(&g)?,
            norm: dual.max(0.0).sqrt(),
            cg_iterations,
        })
    }

    /// Dense second derivative on free vertices:
    /// `𝒲_m(φ_x, φ_y) - δ_xy w(x) ∂f/∂t(x, u(x))`.
    pub fn hessian(&self, u: &DiscreteFunction) -> DMatrix<f64> {
        let n = self.free.len();
        let w = self.level.weights();
        let mut h = DMatrix::<f64>::zeros(n, n);
        for (k, row) in self.rows.iter().enumerate() {
            let x = self.free[k];
            h[(k, k)] = self.diagonal[k] - w[x] * self.nl.derivative(x, u.values()[x]);
            for &(j, a) in row {
                h[(k, j)] += a;
            }
        }
        h
    }
}
