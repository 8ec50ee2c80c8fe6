//! Renormalized graph energies on a gasket level.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{precondition, Error, Result};
use crate::gasket::{build_level, GasketLevel};

/// Real values on the vertices of a gasket level.
#[derive(Debug, Clone)]
pub struct DiscreteFunction {
    level: Arc<GasketLevel>,
    values: Vec<f64>,
    zero_boundary: bool,
}

impl DiscreteFunction {
    /// Wraps `values`, enforcing finiteness and, if `zero_boundary`, that the
    /// corner values vanish.
    pub fn new(level: Arc<GasketLevel>, values: Vec<f64>, zero_boundary: bool) -> Result<Self> {
        if values.len() != level.vertex_count() {
            return precondition(format!(
                "expected {} values, got {}",
                level.vertex_count(),
                values.len()
            ));
        }
        if let Some(v) = values.iter().position(|x| !x.is_finite()) {
            return precondition(format!("value at vertex {v} is not finite"));
        }
        if zero_boundary && level.boundary().any(|v| values[v] != 0.0) {
            return precondition("boundary values must be exactly zero");
        }
        Ok(Self {
            level,
            values,
            zero_boundary,
        })
    }

    pub fn zeros(level: Arc<GasketLevel>) -> Self {
        let values = vec![0.0; level.vertex_count()];
        Self {
            level,
            values,
            zero_boundary: true,
        }
    }

    /// Zero-boundary function with the given interior values (in interior
    /// vertex order).
    pub fn from_interior(level: Arc<GasketLevel>, interior: &[f64]) -> Result<Self> {
        let mut values = vec![0.0; level.vertex_count()];
        if interior.len() != level.interior().len() {
            return precondition(format!(
                "expected {} interior values, got {}",
                level.interior().len(),
                interior.len()
            ));
        }
        values[level.n()..].copy_from_slice(interior);
        Self::new(level, values, true)
    }

    /// Zero-boundary indicator of vertex `v`.
    pub fn indicator(level: Arc<GasketLevel>, v: usize) -> Self {
        let mut u = Self::zeros(level);
        assert!(!u.level.is_boundary(v), "indicator of a boundary vertex");
        u.values[v] = 1.0;
        u
    }

    pub fn level(&self) -> &Arc<GasketLevel> {
        &self.level
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Mutable access to the values. Callers must keep boundary values at
    /// zero for zero-boundary functions.
    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn is_zero_boundary(&self) -> bool {
        self.zero_boundary
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |a, &x| a.max(x.abs()))
    }

    /// Energy norm `sqrt(W_m(u))`.
    pub fn norm(&self) -> f64 {
        energy(self).sqrt()
    }

    pub fn scaled(&self, t: f64) -> Self {
        self.map_values(|x| t * x)
    }

    pub fn map_values(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            level: self.level.clone(),
            values: self.values.iter().map(|&x| f(x)).collect(),
            zero_boundary: self.zero_boundary,
        }
    }

    /// `self + t * other`.
    pub fn axpy(&self, t: f64, other: &Self) -> Self {
        Self {
            level: self.level.clone(),
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a + t * b)
                .collect(),
            zero_boundary: self.zero_boundary && other.zero_boundary,
        }
    }

    /// Maximum absolute difference of values.
    pub fn sup_distance(&self, other: &Self) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .fold(0.0, |a, (x, y)| a.max((x - y).abs()))
    }

    pub(crate) fn same_level(&self, other: &Self) -> Result<()> {
        check_same_level(&self.level, &other.level)
    }
}

pub(crate) fn check_same_level(a: &GasketLevel, b: &GasketLevel) -> Result<()> {
    if a.n() != b.n() || a.m() != b.m() {
        return Err(Error::LevelMismatch(a.n(), a.m(), b.n(), b.m()));
    }
    Ok(())
}

/// Neumaier-compensated running sum.
#[derive(Debug, Default, Clone, Copy)]
pub struct CompensatedSum {
    sum: f64,
    carry: f64,
}

impl CompensatedSum {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.carry += (self.sum - t) + x;
        } else {
            self.carry += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

impl FromIterator<f64> for CompensatedSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut s = CompensatedSum::default();
        for x in iter {
            s.add(x);
        }
        s
    }
}

pub fn compensated_sum(xs: impl IntoIterator<Item = f64>) -> f64 {
    xs.into_iter().collect::<CompensatedSum>().value()
}

/// `W_m(u) = ((N+2)/N)^m * sum over edges of (u(x) - u(y))^2`.
pub fn energy(u: &DiscreteFunction) -> f64 {
    let v = &u.values;
    let s = compensated_sum(u.level.edges().iter().map(|&[a, b]| (v[a] - v[b]).powi(2)));
    u.level.energy_scale() * s
}

/// The bilinear form `𝒲_m(u, v)`.
pub fn inner(u: &DiscreteFunction, v: &DiscreteFunction) -> Result<f64> {
    u.same_level(v)?;
    let (x, y) = (&u.values, &v.values);
    let s = compensated_sum(
        u.level
            .edges()
            .iter()
            .map(|&[a, b]| (x[a] - x[b]) * (y[a] - y[b])),
    );
    Ok(u.level.energy_scale() * s)
}

/// Vertex quadrature of `∫ |u|^p dμ`.
pub fn power_integral(u: &DiscreteFunction, p: f64) -> f64 {
    let w = u.level.weights();
    compensated_sum(u.values.iter().zip(w).map(|(x, w)| w * x.abs().powf(p)))
}

/// Constant `c = 2N + 3` of the sup-norm embedding.
pub fn embedding_constant(n: usize) -> f64 {
    2.0 * n as f64 + 3.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SupNormBound {
    pub sup: f64,
    pub bound: f64,
    pub holds: bool,
}

/// Compares `‖u‖_sup` against `(2N+3) * sqrt(W_m(u))`.
pub fn sup_norm_bound_check(u: &DiscreteFunction) -> SupNormBound {
    let sup = u.sup_norm();
    let bound = embedding_constant(u.level.n()) * energy(u).sqrt();
    SupNormBound {
        sup,
        bound,
        holds: sup <= bound,
    }
}

/// Applies `h` pointwise. A zero-boundary input stays zero-boundary only if
/// `h(0) = 0`, which is checked.
pub fn lipschitz_compose(h: impl Fn(f64) -> f64, u: &DiscreteFunction) -> Result<DiscreteFunction> {
    if u.zero_boundary && h(0.0) != 0.0 {
        return precondition("composition map must fix 0 to keep the boundary condition");
    }
    Ok(u.map_values(h))
}

/// Restriction of a level-(m+1) function to the vertices of level m.
pub fn restrict(u: &DiscreteFunction, coarse: &Arc<GasketLevel>) -> Result<DiscreteFunction> {
    let fine = &u.level;
    if fine.n() != coarse.n() || fine.m() != coarse.m() + 1 {
        return Err(Error::LevelMismatch(fine.n(), fine.m(), coarse.n(), coarse.m() + 1));
    }
    // vertex numbering is nested across levels
    let values = u.values[..coarse.vertex_count()].to_vec();
    DiscreteFunction::new(coarse.clone(), values, u.zero_boundary)
}

/// Linear map from the `N` corner values of a cell to the energy-minimizing
/// values at its `N(N-1)/2` edge midpoints, in `(i, j), i < j` order.
fn cell_extension_operator(n: usize) -> DMatrix<f64> {
    let pairs: Vec<(usize, usize)> = (0..n)
        .flat_map(|i| ((i + 1)..n).map(move |j| (i, j)))
        .collect();
    let k = pairs.len();
    let pos = |i: usize, j: usize| {
        let (a, b) = if i < j { (i, j) } else { (j, i) };
        pairs.iter().position(|&p| p == (a, b)).unwrap()
    };
    let mut lmm = DMatrix::<f64>::zeros(k, k);
    let mut lmc = DMatrix::<f64>::zeros(k, n);
    // child cell i has corners c_i and m_ij (j != i)
    for i in 0..n {
        let others: Vec<usize> = (0..n).filter(|&j| j != i).collect();
        for &j in &others {
            let a = pos(i, j);
            lmm[(a, a)] += 1.0;
            lmc[(a, i)] -= 1.0;
        }
        for (x, &j) in others.iter().enumerate() {
            for &l in &others[x + 1..] {
                let (a, b) = (pos(i, j), pos(i, l));
                lmm[(a, a)] += 1.0;
                lmm[(b, b)] += 1.0;
                lmm[(a, b)] -= 1.0;
                lmm[(b, a)] -= 1.0;
            }
        }
    }
    let chol = lmm.cholesky().expect("midpoint Laplacian block is positive definite");
    chol.solve(&(-lmc))
}

/// Energy-minimizing extension of a level-m function to level m+1.
pub fn harmonic_extension(
    u: &DiscreteFunction,
    fine: &Arc<GasketLevel>,
) -> Result<DiscreteFunction> {
    let coarse = &u.level;
    let n = coarse.n();
    if fine.n() != n || fine.m() != coarse.m() + 1 {
        return Err(Error::LevelMismatch(fine.n(), fine.m(), n, coarse.m() + 1));
    }
    let op = cell_extension_operator(n);
    let mut values = vec![0.0; fine.vertex_count()];
    values[..coarse.vertex_count()].copy_from_slice(&u.values);
    let mut corners = DVector::<f64>::zeros(n);
    let mut key = vec![0u64; n];
    for cell in coarse.cells() {
        for (c, &v) in corners.iter_mut().zip(cell) {
            *c = u.values[v];
        }
        let mids = &op * &corners;
        let mut slot = 0;
        for i in 0..n {
            for j in (i + 1)..n {
                for (t, k) in key.iter_mut().enumerate() {
                    *k = coarse.vertex(cell[i])[t] + coarse.vertex(cell[j])[t];
                }
                let id = fine
                    .locate(&key)
                    .ok_or_else(|| Error::Consistency("edge midpoint missing on finer level".into()))?;
                values[id] = mids[slot];
                slot += 1;
            }
        }
    }
    DiscreteFunction::new(fine.clone(), values, u.zero_boundary)
}

/// Builds level m+1 and extends `u` onto it.
pub fn harmonic_extension_auto(u: &DiscreteFunction) -> Result<DiscreteFunction> {
    let fine = Arc::new(build_level(u.level.n(), u.level.m() + 1)?);
    harmonic_extension(u, &fine)
}
