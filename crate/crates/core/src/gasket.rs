//! Level-m graph approximations of the Sierpinski gasket in R^(N-1).
//!
//! Points are stored as barycentric numerators with respect to the corner
//! points `p_1..p_N`: a vertex of level `m` is `sum_i k_i p_i / 2^m` with
//! nonnegative integers `k_i` summing to `2^m`. The corners are affinely
//! independent, so this representation is unique and deduplication is an
//! exact integer comparison. For two points with numerator difference `d`
//! (which sums to zero) on a unit-edge simplex,
//! `|x - y|^2 = (sum_i d_i^2) / (2 * 4^m)`, hence `|x - y| = 2^-m` exactly
//! when `sum_i d_i^2 == 2`.
//!
//! Level `m+1` is obtained from level `m` by splitting every cell `w` into
//! the `N` cells `S_w S_i`. Old vertices keep their indices, so
//! `V_0 ⊆ V_1 ⊆ ...` holds index-wise, and new vertices are the edge
//! midpoints in edge order.

use std::collections::HashMap;

use crate::error::{precondition, Error, Result};

/// Default upper bound on the number of vertices `build_level` will allocate.
pub const DEFAULT_VERTEX_CAP: usize = 4_000_000;

/// Exact graph approximation `V_m` of the gasket together with its cells and
/// a vertex quadrature for the normalized measure.
#[derive(Debug, Clone)]
pub struct GasketLevel {
    n: usize,
    m: u32,
    numerators: Vec<u64>,
    edges: Vec<[usize; 2]>,
    cells: Vec<usize>,
    incidence: Vec<u32>,
    weights: Vec<f64>,
    index: HashMap<Box<[u64]>, usize>,
}

/// Number of vertices of `V_m` for the `N`-corner gasket: `N + N(N^m - 1)/2`.
pub fn vertex_count(n: usize, m: u32) -> u128 {
    let n = n as u128;
    n + n * (n.pow(m) - 1) / 2
}

/// Hausdorff dimension `ln N / ln 2` of the `N`-corner gasket.
pub fn hausdorff_dimension(n: usize) -> f64 {
    assert!(n >= 2, "the gasket needs at least two corners");
    (n as f64).ln() / std::f64::consts::LN_2
}

/// Builds `V_m` with the default vertex cap.
pub fn build_level(n: usize, m: u32) -> Result<GasketLevel> {
    build_level_capped(n, m, DEFAULT_VERTEX_CAP)
}

/// Builds `V_m`, refusing levels with more than `cap` vertices.
pub fn build_level_capped(n: usize, m: u32, cap: usize) -> Result<GasketLevel> {
    if n < 2 {
        return precondition(format!("N must be at least 2, got {n}"));
    }
    if m >= 62 {
        return precondition(format!("level {m} overflows 64-bit dyadic numerators"));
    }
    let count = n
        .checked_pow(m)
        .map(|_| vertex_count(n, m))
        .unwrap_or(u128::MAX);
    if count > cap as u128 {
        return Err(Error::ResourceCap {
            n,
            m,
            vertices: count,
            cap,
        });
    }
    let mut level = GasketLevel::initial(n);
    for _ in 0..m {
        level = level.refine();
    }
    Ok(level)
}

impl GasketLevel {
    fn initial(n: usize) -> Self {
        let mut numerators = vec![0u64; n * n];
        for i in 0..n {
            numerators[i * n + i] = 1;
        }
        let cells: Vec<usize> = (0..n).collect();
        Self::assemble(n, 0, numerators, cells)
    }

    /// Splits every cell into its `N` children.
    fn refine(&self) -> Self {
        let n = self.n;
        let mut numerators: Vec<u64> = self.numerators.iter().map(|k| 2 * k).collect();
        let mut index: HashMap<Box<[u64]>, usize> = HashMap::with_capacity(
            self.vertex_count() + self.edges.len(),
        );
        for v in 0..self.vertex_count() {
            index.insert(numerators[v * n..(v + 1) * n].into(), v);
        }
        let mut cells = Vec::with_capacity(self.cells.len() * n);
        let mut mid = vec![0usize; n * n];
        let mut scratch = vec![0u64; n];
        for cell in self.cells.chunks_exact(n) {
            for i in 0..n {
                mid[i * n + i] = cell[i];
                for j in (i + 1)..n {
                    let (a, b) = (cell[i], cell[j]);
                    for (t, s) in scratch.iter_mut().enumerate() {
                        *s = self.numerators[a * n + t] + self.numerators[b * n + t];
                    }
                    let next = index.len();
                    let id = *index.entry(scratch.as_slice().into()).or_insert_with(|| {
                        numerators.extend_from_slice(&scratch);
                        next
                    });
                    mid[i * n + j] = id;
                    mid[j * n + i] = id;
                }
            }
            for i in 0..n {
                cells.extend((0..n).map(|j| mid[i * n + j]));
            }
        }
        let mut level = Self::assemble(n, self.m + 1, numerators, cells);
        level.index = index;
        level
    }

    fn assemble(n: usize, m: u32, numerators: Vec<u64>, cells: Vec<usize>) -> Self {
        let vertices = numerators.len() / n;
        let mut edges = Vec::with_capacity(cells.len() / n * n * (n - 1) / 2);
        let mut incidence = vec![0u32; vertices];
        for cell in cells.chunks_exact(n) {
            for i in 0..n {
                incidence[cell[i]] += 1;
                for j in (i + 1)..n {
                    let (a, b) = (cell[i], cell[j]);
                    edges.push(if a < b { [a, b] } else { [b, a] });
                }
            }
        }
        // each cell carries N^-m, split evenly over its N corners
        let share = (n as f64).powi(-(m as i32) - 1);
        let weights = incidence.iter().map(|&k| k as f64 * share).collect();
        let index = if m == 0 {
            (0..vertices)
                .map(|v| (numerators[v * n..(v + 1) * n].into(), v))
                .collect()
        } else {
            HashMap::new()
        };
        GasketLevel {
            n,
            m,
            numerators,
            edges,
            cells,
            incidence,
            weights,
            index,
        }
    }

    /// Number of corners `N`.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Approximation level `m`.
    pub fn m(&self) -> u32 {
        self.m
    }

    pub fn vertex_count(&self) -> usize {
        self.numerators.len() / self.n
    }

    /// Common denominator `2^m` of the vertex numerators.
    pub fn denominator(&self) -> u64 {
        1u64 << self.m
    }

    /// Barycentric numerators of vertex `v`.
    pub fn vertex(&self, v: usize) -> &[u64] {
        &self.numerators[v * self.n..(v + 1) * self.n]
    }

    /// Index of the vertex with the given numerators, if present.
    pub fn locate(&self, numerators: &[u64]) -> Option<usize> {
        self.index.get(numerators).copied()
    }

    /// Indices of the intrinsic boundary `V_0`; always `0..N`.
    pub fn boundary(&self) -> std::ops::Range<usize> {
        0..self.n
    }

    pub fn is_boundary(&self, v: usize) -> bool {
        v < self.n
    }

    /// Vertices outside `V_0`, in index order.
    pub fn interior(&self) -> std::ops::Range<usize> {
        self.n..self.vertex_count()
    }

    pub fn edges(&self) -> &[[usize; 2]] {
        &self.edges
    }

    pub fn cell_count(&self) -> usize {
        self.cells.len() / self.n
    }

    /// Corners of cell `k`; cell `k` corresponds to the word whose base-`N`
    /// digits (most significant first) spell `k`.
    pub fn cell(&self, k: usize) -> &[usize] {
        &self.cells[k * self.n..(k + 1) * self.n]
    }

    pub fn cells(&self) -> impl Iterator<Item = &[usize]> {
        self.cells.chunks_exact(self.n)
    }

    /// Number of `m`-cells containing each vertex.
    pub fn incidence(&self) -> &[u32] {
        &self.incidence
    }

    /// Vertex quadrature weights for the normalized measure.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Renormalization factor `((N+2)/N)^m` of the level-`m` energy.
    pub fn energy_scale(&self) -> f64 {
        ((self.n as f64 + 2.0) / self.n as f64).powi(self.m as i32)
    }

    /// Vertex degrees in the level graph.
    pub fn degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.vertex_count()];
        for &[a, b] in &self.edges {
            deg[a] += 1;
            deg[b] += 1;
        }
        deg
    }

    /// Neighbour lists derived from the edge list.
    pub fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::with_capacity(2 * (self.n - 1)); self.vertex_count()];
        for &[a, b] in &self.edges {
            adj[a].push(b);
            adj[b].push(a);
        }
        adj
    }

    /// Exact test for `|x - y| = 2^-m`.
    pub fn at_unit_distance(&self, a: usize, b: usize) -> bool {
        let sq: u64 = self
            .vertex(a)
            .iter()
            .zip(self.vertex(b))
            .map(|(&x, &y)| x.abs_diff(y).pow(2))
            .sum();
        sq == 2
    }

    /// Cartesian coordinates of every vertex in R^(N-1), for plotting.
    pub fn cartesian(&self) -> Vec<Vec<f64>> {
        let corners = simplex_corners(self.n);
        let denom = self.denominator() as f64;
        (0..self.vertex_count())
            .map(|v| {
                let mut x = vec![0.0; self.n - 1];
                for (k, p) in self.vertex(v).iter().zip(&corners) {
                    let t = *k as f64 / denom;
                    for (xi, pi) in x.iter_mut().zip(p) {
                        *xi += t * pi;
                    }
                }
                x
            })
            .collect()
    }
}

/// Corners of a unit-edge regular simplex in R^(N-1).
pub fn simplex_corners(n: usize) -> Vec<Vec<f64>> {
    let dim = n - 1;
    let mut pts: Vec<Vec<f64>> = vec![vec![0.0; dim]];
    for k in 1..n {
        let mut centroid = vec![0.0; dim];
        for p in &pts {
            for (c, x) in centroid.iter_mut().zip(p) {
                *c += x / k as f64;
            }
        }
        let r2: f64 = pts[0]
            .iter()
            .zip(&centroid)
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        let mut next = centroid;
        next[k - 1] = (1.0 - r2).sqrt();
        pts.push(next);
    }
    pts
}

/// Quadrature weights of a level; equivalent to `level.weights()`.
pub fn measure_weights(level: &GasketLevel) -> Vec<f64> {
    level.weights().to_vec()
}
