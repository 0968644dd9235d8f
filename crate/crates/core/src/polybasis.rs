//! Orthonormal shifted Legendre polynomials on `[0,1]` and their tensor products.
//!
//! `P̃_n(x) = √(2n+1)·P_n(2x−1)` so that `∫₀¹ P̃_n P̃_k dx = δ_{nk}`.

use crate::error::{check_dim, Error, Result};
use crate::indexsets::{DownwardClosedSet, MultiIndex};

/// Value of the degree-`n` orthonormal Legendre polynomial at `x ∈ [0,1]`.
pub fn legendre(n: usize, x: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::Domain(format!("point {x} outside [0,1]")));
    }
    let mut table = vec![0.0; n + 1];
    legendre_table(x, &mut table);
    Ok(table[n])
}

/// Fills `out[j] = P̃_j(x)` for `j < out.len()`. No domain check.
pub fn legendre_table(x: f64, out: &mut [f64]) {
    if out.is_empty() {
        return;
    }
    let t = 2.0 * x - 1.0;
    let mut prev = 1.0;
    out[0] = 1.0;
    if out.len() == 1 {
        return;
    }
    let mut cur = t;
    out[1] = 3f64.sqrt() * t;
    for k in 1..out.len() - 1 {
        let kf = k as f64;
        let next = ((2.0 * kf + 1.0) * t * cur - kf * prev) / (kf + 1.0);
        prev = cur;
        cur = next;
        out[k + 1] = (2.0 * kf + 3.0).sqrt() * next;
    }
}

/// Tensor product `Π_j P̃_{η_j}(y_j)`.
pub fn eval_tensor(eta: &MultiIndex, y: &[f64]) -> Result<f64> {
    check_dim(eta.dim(), y.len())?;
    let mut v = 1.0;
    for (&e, &yj) in eta.entries().iter().zip(y) {
        v *= legendre(e as usize, yj)?;
    }
    Ok(v)
}

/// An ordered tensor Legendre basis.
#[derive(Clone, Debug, PartialEq)]
pub struct TensorLegendreBasis {
    dim: usize,
    exponents: Vec<MultiIndex>,
    flat: Vec<u32>,
    max_degree: Vec<usize>,
}

impl TensorLegendreBasis {
    /// Exponents are sorted lexicographically; duplicates are rejected.
    pub fn new(dim: usize, mut exponents: Vec<MultiIndex>) -> Result<Self> {
        for e in &exponents {
            check_dim(dim, e.dim())?;
        }
        exponents.sort();
        if exponents.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Precondition("duplicate exponent in basis".into()));
        }
        let mut max_degree = vec![0usize; dim];
        let mut flat = Vec::with_capacity(exponents.len() * dim);
        for e in &exponents {
            for (j, &v) in e.entries().iter().enumerate() {
                max_degree[j] = max_degree[j].max(v as usize);
                flat.push(v);
            }
        }
        Ok(TensorLegendreBasis {
            dim,
            exponents,
            flat,
            max_degree,
        })
    }

    pub fn from_set(set: &DownwardClosedSet) -> Self {
        Self::new(set.dim(), set.iter().cloned().collect()).expect("sets are duplicate free")
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.exponents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.exponents.is_empty()
    }

    pub fn exponents(&self) -> &[MultiIndex] {
        &self.exponents
    }

    pub fn position(&self, eta: &MultiIndex) -> Option<usize> {
        self.exponents.binary_search(eta).ok()
    }

    pub fn scratch(&self) -> BasisScratch {
        let offsets: Vec<usize> = self
            .max_degree
            .iter()
            .scan(0, |acc, &m| {
                let o = *acc;
                *acc += m + 1;
                Some(o)
            })
            .collect();
        let total = self.max_degree.iter().map(|m| m + 1).sum();
        BasisScratch {
            tables: vec![0.0; total],
            offsets,
        }
    }

    /// Writes every basis function at `y` into `out`. `y` must lie in the cube.
    pub fn eval_into(&self, y: &[f64], scratch: &mut BasisScratch, out: &mut [f64]) {
        debug_assert_eq!(y.len(), self.dim);
        debug_assert_eq!(out.len(), self.len());
        for j in 0..self.dim {
            let o = scratch.offsets[j];
            legendre_table(y[j], &mut scratch.tables[o..o + self.max_degree[j] + 1]);
        }
        let d = self.dim;
        for (i, v) in out.iter_mut().enumerate() {
            let e = &self.flat[i * d..(i + 1) * d];
            let mut p = 1.0;
            for j in 0..d {
                p *= scratch.tables[scratch.offsets[j] + e[j] as usize];
            }
            *v = p;
        }
    }

    pub fn eval_all(&self, y: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim, y.len())?;
        if let Some(bad) = y.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::Domain(format!("point coordinate {bad} outside [0,1]")));
        }
        let mut out = vec![0.0; self.len()];
        self.eval_into(y, &mut self.scratch(), &mut out);
        Ok(out)
    }

    /// `Σ_η P_η(y)²`.
    pub fn sum_squares(&self, y: &[f64], scratch: &mut BasisScratch, buf: &mut [f64]) -> f64 {
        self.eval_into(y, scratch, buf);
        buf.iter().map(|v| v * v).sum()
    }

    /// `Σ_i c_i P_i(y)`.
    pub fn combine(&self, coefficients: &[f64], y: &[f64], scratch: &mut BasisScratch, buf: &mut [f64]) -> f64 {
        self.eval_into(y, scratch, buf);
        buf.iter().zip(coefficients).map(|(b, c)| b * c).sum()
    }
}

/// Reusable per-thread buffers for basis evaluation.
#[derive(Clone, Debug)]
pub struct BasisScratch {
    tables: Vec<f64>,
    offsets: Vec<usize>,
}

/// Gauss–Legendre nodes and weights on `[0,1]`, weights summing to one.
pub fn gauss_legendre(q: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(q >= 1);
    let mut nodes = vec![0.0; q];
    let mut weights = vec![0.0; q];
    for i in 0..(q + 1) / 2 {
        let mut t = (std::f64::consts::PI * (i as f64 + 0.75) / (q as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (p, d) = legendre_and_derivative(q, t);
            dp = d;
            let dt = p / d;
            t -= dt;
            if dt.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_and_derivative(q, t);
        dp = if d != 0.0 { d } else { dp };
        let w = 2.0 / ((1.0 - t * t) * dp * dp);
        nodes[i] = 0.5 * (1.0 - t);
        nodes[q - 1 - i] = 0.5 * (1.0 + t);
        weights[i] = 0.5 * w;
        weights[q - 1 - i] = 0.5 * w;
    }
    (nodes, weights)
}

fn legendre_and_derivative(n: usize, t: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = t;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 1..n {
        let kf = k as f64;
        let p2 = ((2.0 * kf + 1.0) * t * p1 - kf * p0) / (kf + 1.0);
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (t * p1 - p0) / (t * t - 1.0);
    (p1, d)
}

/// Tensor quadrature on `[0,1]^d`; points are stored row-major.
#[derive(Clone, Debug)]
pub struct QuadratureRule {
    pub dim: usize,
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl QuadratureRule {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.nodes[i * self.dim..(i + 1) * self.dim]
    }

    pub fn integrate(&self, mut f: impl FnMut(&[f64]) -> f64) -> f64 {
        (0..self.len()).map(|i| self.weights[i] * f(self.point(i))).sum()
    }
}

/// Tensor Gauss–Legendre rule, exact for per-axis degree `≤ 2q − 1`.
pub fn gauss_rule(d: usize, q: usize) -> QuadratureRule {
    let (x, w) = gauss_legendre(q);
    let total = q.pow(d as u32);
    let mut nodes = Vec::with_capacity(total * d);
    let mut weights = Vec::with_capacity(total);
    let mut idx = vec![0usize; d];
    for _ in 0..total {
        let mut wt = 1.0;
        for &i in &idx {
            nodes.push(x[i]);
            wt *= w[i];
        }
        weights.push(wt);
        for j in (0..d).rev() {
            idx[j] += 1;
            if idx[j] < q {
                break;
            }
            idx[j] = 0;
        }
    }
    QuadratureRule {
        dim: d,
        nodes,
        weights,
    }
}
