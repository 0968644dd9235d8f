//! Weighted discrete least squares.
//!
//! The scaled design matrix `M_ij = √(w_i/N)·B_j(y_i)` is the only object the
//! solver touches: the Gramian `G = MᵀM` is applied as `Mᵀ(Mx)` and never
//! formed. Small designs keep `M` in memory; large ones recompute rows on every
//! product, which costs one basis evaluation per row.

use std::fmt::Write as _;
use std::ops::Range;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use rayon::prelude::*;

use crate::error::{check_dim, Error, Result};
use crate::indexsets::{DownwardClosedSet, MultiIndex};
use crate::polybasis::TensorLegendreBasis;
use crate::rng::RngKey;
use crate::sampling::{for_grid, WeightedSampleSet};

/// Largest `N·m` kept as an explicit matrix.
pub const DENSE_LIMIT: usize = 30_000_000;
const CHUNK: usize = 2048;

pub const CG_TOLERANCE: f64 = 1e-10;
pub const DEVIATION_TOLERANCE: f64 = 1e-6;
/// Conditioned fits are zeroed above this Gramian deviation.
pub const CONDITIONING_THRESHOLD: f64 = 0.5;

/// Borrowed inputs of a projection.
#[derive(Clone, Copy, Debug)]
pub struct LeastSquaresProblem<'a> {
    basis: &'a TensorLegendreBasis,
    points: &'a [f64],
    weights: &'a [f64],
    values: &'a [f64],
}

impl<'a> LeastSquaresProblem<'a> {
    pub fn new(
        basis: &'a TensorLegendreBasis,
        points: &'a [f64],
        weights: &'a [f64],
        values: &'a [f64],
    ) -> Result<Self> {
        check_dim(weights.len() * basis.dim(), points.len())?;
        check_dim(weights.len(), values.len())?;
        if weights.is_empty() {
            return Err(Error::Precondition("least squares needs at least one sample".into()));
        }
        if let Some(w) = weights.iter().find(|w| !(w.is_finite() && **w > 0.0)) {
            return Err(Error::Precondition(format!("non-positive weight {w}")));
        }
        Ok(LeastSquaresProblem {
            basis,
            points,
            weights,
            values,
        })
    }

    pub fn from_samples(basis: &'a TensorLegendreBasis, samples: &'a WeightedSampleSet, values: &'a [f64]) -> Result<Self> {
        check_dim(basis.dim(), samples.dim)?;
        Self::new(basis, &samples.points, &samples.weights, values)
    }

    pub fn basis(&self) -> &'a TensorLegendreBasis {
        self.basis
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    fn point(&self, i: usize) -> &'a [f64] {
        let d = self.basis.dim();
        &self.points[i * d..(i + 1) * d]
    }
}

/// `M` with rows `√(w_i/N)·B(y_i)`.
pub struct DesignMatrix<'a> {
    problem: LeastSquaresProblem<'a>,
    scale: Vec<f64>,
    dense: Option<Vec<f64>>,
}

impl<'a> DesignMatrix<'a> {
    pub fn new(problem: LeastSquaresProblem<'a>) -> Self {
        Self::with_limit(problem, DENSE_LIMIT)
    }

    pub fn with_limit(problem: LeastSquaresProblem<'a>, dense_limit: usize) -> Self {
        let n = problem.len() as f64;
        let scale: Vec<f64> = problem.weights.iter().map(|w| (w / n).sqrt()).collect();
        let mut dm = DesignMatrix {
            problem,
            scale,
            dense: None,
        };
        let m = problem.basis.len();
        if problem.len() * m <= dense_limit {
            let mut data = vec![0.0; problem.len() * m];
            data.par_chunks_mut(CHUNK * m).enumerate().for_each(|(c, block)| {
                let mut scratch = problem.basis.scratch();
                for (r, row) in block.chunks_mut(m).enumerate() {
                    dm.fill_row(c * CHUNK + r, &mut scratch, row);
                }
            });
            dm.dense = Some(data);
        }
        dm
    }

    pub fn rows(&self) -> usize {
        self.problem.len()
    }

    pub fn cols(&self) -> usize {
        self.problem.basis.len()
    }

    pub fn is_dense(&self) -> bool {
        self.dense.is_some()
    }

    fn fill_row(&self, i: usize, scratch: &mut crate::polybasis::BasisScratch, row: &mut [f64]) {
        self.problem.basis.eval_into(self.problem.point(i), scratch, row);
        let s = self.scale[i];
        for v in row.iter_mut() {
            *v *= s;
        }
    }

    /// Calls `f(i, row_i)` for every row of `range`.
    fn for_rows(&self, range: Range<usize>, mut f: impl FnMut(usize, &[f64])) {
        let m = self.cols();
        match &self.dense {
            Some(data) => {
                for i in range {
                    f(i, &data[i * m..(i + 1) * m]);
                }
            }
            None => {
                let mut scratch = self.problem.basis.scratch();
                let mut row = vec![0.0; m];
                for i in range {
                    self.fill_row(i, &mut scratch, &mut row);
                    f(i, &row);
                }
            }
        }
    }

    /// Row `i` as a vector.
    pub fn row(&self, i: usize) -> Vec<f64> {
        let mut out = Vec::new();
        self.for_rows(i..i + 1, |_, r| out = r.to_vec());
        out
    }

    /// `Mx`.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.rows()];
        out.par_chunks_mut(CHUNK).enumerate().for_each(|(c, block)| {
            let start = c * CHUNK;
            self.for_rows(start..start + block.len(), |i, row| block[i - start] = dot(row, x));
        });
        out
    }

    /// `Mᵀr`, reduced over fixed row chunks in order.
    pub fn apply_transpose(&self, r: &[f64]) -> Vec<f64> {
        self.accumulate(|range, acc| {
            self.for_rows(range, |i, row| axpy(r[i], row, acc));
        })
    }

    /// `Mᵀ(Mx)` in one pass over the rows.
    pub fn gram_apply(&self, x: &[f64]) -> Vec<f64> {
        self.accumulate(|range, acc| {
            self.for_rows(range, |_, row| axpy(dot(row, x), row, acc));
        })
    }

    fn accumulate(&self, f: impl Fn(Range<usize>, &mut [f64]) + Sync) -> Vec<f64> {
        let n = self.rows();
        let m = self.cols();
        let parts: Vec<Vec<f64>> = (0..n.div_ceil(CHUNK))
            .into_par_iter()
            .map(|c| {
                let mut acc = vec![0.0; m];
                f(c * CHUNK..((c + 1) * CHUNK).min(n), &mut acc);
                acc
            })
            .collect();
        let mut out = vec![0.0; m];
        for p in parts {
            for (o, v) in out.iter_mut().zip(p) {
                *o += v;
            }
        }
        out
    }

    /// Dense `MᵀM`; for tests and small diagnostics only.
    pub fn gramian(&self) -> DMatrix<f64> {
        let m = self.cols();
        let mut g = DMatrix::zeros(m, m);
        self.for_rows(0..self.rows(), |_, row| {
            for a in 0..m {
                for b in 0..m {
                    g[(a, b)] += row[a] * row[b];
                }
            }
        });
        g
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Design matrix and right-hand side `c_j = (1/N)Σ_i w_i f_i B_j(y_i)`.
pub fn assemble(problem: LeastSquaresProblem<'_>) -> (DesignMatrix<'_>, Vec<f64>) {
    let design = DesignMatrix::new(problem);
    let rhs = rhs(&design);
    (design, rhs)
}

fn rhs(design: &DesignMatrix<'_>) -> Vec<f64> {
    let scaled: Vec<f64> = design
        .scale
        .iter()
        .zip(design.problem.values)
        .map(|(s, f)| s * f)
        .collect();
    design.apply_transpose(&scaled)
}

/// Extreme eigenvalues of `G` by Lanczos with full reorthogonalization.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Spectrum {
    pub min: f64,
    pub max: f64,
    pub iterations: usize,
}

impl Spectrum {
    /// `‖G − I‖₂`.
    pub fn deviation(&self) -> f64 {
        (self.max - 1.0).max(1.0 - self.min).max(0.0)
    }
}

pub fn gram_spectrum(design: &DesignMatrix<'_>) -> Result<Spectrum> {
    let m = design.cols();
    let max_iter = m.min(10_000);
    let mut rng = RngKey::new(0x4c41_4e43, m as u64).rng_for(design.rows() as u64);
    let mut v: Vec<f64> = (0..m).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let nv = norm(&v);
    v.iter_mut().for_each(|x| *x /= nv);

    let mut basis: Vec<Vec<f64>> = Vec::new();
    let mut alpha: Vec<f64> = Vec::new();
    let mut beta: Vec<f64> = Vec::new();
    let mut last = None;
    for k in 0..max_iter {
        let mut w = design.gram_apply(&v);
        let a = dot(&w, &v);
        alpha.push(a);
        axpy(-a, &v, &mut w);
        if let Some(prev) = basis.last() {
            axpy(-beta[k - 1], prev, &mut w);
        }
        basis.push(v);
        for _ in 0..2 {
            for q in &basis {
                let c = dot(&w, q);
                axpy(-c, q, &mut w);
            }
        }
        let b = norm(&w);
        let k1 = k + 1;
        let done = b <= 1e-12 * alpha.iter().fold(1e-300f64, |s, x| s.max(x.abs())) || k1 == max_iter;
        if done || k1 < 24 || k1 % 4 == 0 {
            let (sp, err) = ritz_extremes(&alpha, &beta, b);
            let tol = DEVIATION_TOLERANCE * sp.deviation().max(1e-3);
            last = Some(Spectrum { iterations: k1, ..sp });
            if done || err <= tol {
                return Ok(last.unwrap());
            }
        }
        beta.push(b);
        v = w.into_iter().map(|x| x / b).collect();
    }
    last.ok_or_else(|| Error::Numerical("Lanczos produced no estimate".into()))
}

/// Extreme Ritz values and the larger of their error estimates.
fn ritz_extremes(alpha: &[f64], beta: &[f64], next_beta: f64) -> (Spectrum, f64) {
    let k = alpha.len();
    let mut t = DMatrix::zeros(k, k);
    for i in 0..k {
        t[(i, i)] = alpha[i];
        if i + 1 < k {
            t[(i, i + 1)] = beta[i];
            t[(i + 1, i)] = beta[i];
        }
    }
    let eig = SymmetricEigen::new(t);
    let vals = &eig.eigenvalues;
    let (mut imin, mut imax) = (0, 0);
    for i in 0..k {
        if vals[i] < vals[imin] {
            imin = i;
        }
        if vals[i] > vals[imax] {
            imax = i;
        }
    }
    let err_of = |i: usize| {
        let r = next_beta * eig.eigenvectors[(k - 1, i)].abs();
        let gap = (0..k)
            .filter(|&j| j != i)
            .map(|j| (vals[j] - vals[i]).abs())
            .fold(f64::INFINITY, f64::min);
        if gap.is_finite() && gap > 0.0 {
            r.min(r * r / gap)
        } else {
            r
        }
    };
    let err = err_of(imin).max(err_of(imax));
    (
        Spectrum {
            min: vals[imin],
            max: vals[imax],
            iterations: k,
        },
        err,
    )
}

pub fn gramian_deviation(design: &DesignMatrix<'_>) -> Result<f64> {
    Ok(gram_spectrum(design)?.deviation())
}

/// Basis coefficients of a projection with its conditioning certificate.
#[derive(Clone, Debug, PartialEq)]
pub struct LeastSquaresFit {
    pub basis: TensorLegendreBasis,
    pub coefficients: Vec<f64>,
    pub gramian_deviation: f64,
    pub conditioned_zeroed: bool,
    pub solver_iterations: usize,
    pub converged: bool,
}

impl LeastSquaresFit {
    pub fn zero(basis: TensorLegendreBasis) -> Self {
        let m = basis.len();
        LeastSquaresFit {
            basis,
            coefficients: vec![0.0; m],
            gramian_deviation: 0.0,
            conditioned_zeroed: false,
            solver_iterations: 0,
            converged: true,
        }
    }

    pub fn evaluate(&self, y: &[f64]) -> f64 {
        let mut scratch = self.basis.scratch();
        let mut buf = vec![0.0; self.basis.len()];
        self.basis.combine(&self.coefficients, y, &mut scratch, &mut buf)
    }

    /// Values at row-major `points`.
    pub fn evaluate_many(&self, points: &[f64]) -> Vec<f64> {
        let d = self.basis.dim();
        points
            .par_chunks(d)
            .map_init(
                || (self.basis.scratch(), vec![0.0; self.basis.len()]),
                |(scratch, buf), y| self.basis.combine(&self.coefficients, y, scratch, buf),
            )
            .collect()
    }

    pub fn coefficient(&self, eta: &MultiIndex) -> f64 {
        self.basis.position(eta).map_or(0.0, |i| self.coefficients[i])
    }

    /// `exponent,coefficient` rows in basis order.
    pub fn to_rows(&self) -> String {
        let mut s = String::new();
        for (e, c) in self.basis.exponents().iter().zip(&self.coefficients) {
            let _ = writeln!(s, "{e};{c}");
        }
        s
    }
}

#[derive(Clone, Copy, Debug)]
pub struct SolveOptions {
    pub tolerance: f64,
    /// Iteration cap as a multiple of the space dimension.
    pub cap_factor: usize,
    pub dense_limit: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            tolerance: CG_TOLERANCE,
            cap_factor: 10,
            dense_limit: DENSE_LIMIT,
        }
    }
}

/// Plain projection: conjugate gradients on `Gv = c` from zero.
pub fn solve(problem: LeastSquaresProblem<'_>) -> Result<LeastSquaresFit> {
    solve_with(problem, false, SolveOptions::default())
}

/// Projection that returns zero when `‖G − I‖ > 1/2`.
pub fn solve_conditioned(problem: LeastSquaresProblem<'_>) -> Result<LeastSquaresFit> {
    solve_with(problem, true, SolveOptions::default())
}

pub fn solve_with(problem: LeastSquaresProblem<'_>, conditioned: bool, opts: SolveOptions) -> Result<LeastSquaresFit> {
    let design = DesignMatrix::with_limit(problem, opts.dense_limit);
    let deviation = gramian_deviation(&design)?;
    let basis = problem.basis.clone();
    if conditioned && deviation > CONDITIONING_THRESHOLD {
        let mut fit = LeastSquaresFit::zero(basis);
        fit.gramian_deviation = deviation;
        fit.conditioned_zeroed = true;
        return Ok(fit);
    }
    let c = rhs(&design);
    let cg = conjugate_gradient(|x| design.gram_apply(x), &c, opts.tolerance, opts.cap_factor * c.len().max(1));
    Ok(LeastSquaresFit {
        basis,
        coefficients: cg.x,
        gramian_deviation: deviation,
        conditioned_zeroed: false,
        solver_iterations: cg.iterations,
        converged: cg.converged,
    })
}

pub struct CgOutcome {
    pub x: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// Conjugate gradients for a symmetric positive semi-definite operator, from zero.
pub fn conjugate_gradient(apply: impl Fn(&[f64]) -> Vec<f64>, b: &[f64], tol: f64, cap: usize) -> CgOutcome {
    let n = b.len();
    let mut x = vec![0.0; n];
    let bnorm = norm(b);
    if bnorm == 0.0 {
        return CgOutcome {
            x,
            iterations: 0,
            converged: true,
        };
    }
    let mut r = b.to_vec();
    let mut p = r.clone();
    let mut rr = dot(&r, &r);
    for it in 0..cap {
        let ap = apply(&p);
        let pap = dot(&p, &ap);
        if pap <= 0.0 || !pap.is_finite() {
            return CgOutcome {
                x,
                iterations: it,
                converged: false,
            };
        }
        let a = rr / pap;
        axpy(a, &p, &mut x);
        axpy(-a, &ap, &mut r);
        let rr_new = dot(&r, &r);
        if rr_new.sqrt() <= tol * bnorm {
            return CgOutcome {
                x,
                iterations: it + 1,
                converged: true,
            };
        }
        let beta = rr_new / rr;
        rr = rr_new;
        for (pi, ri) in p.iter_mut().zip(&r) {
            *pi = ri + beta * *pi;
        }
    }
    CgOutcome {
        x,
        iterations: cap,
        converged: false,
    }
}

/// `(1/N)Σ w_i g(y_i)²`.
pub fn discrete_norm_sq(values: &[f64], weights: &[f64]) -> f64 {
    values.iter().zip(weights).map(|(v, w)| w * v * v).sum::<f64>() / values.len() as f64
}

/// Smallest `N ≥ 3` with `κN/ln N ≥ target`.
pub fn sample_count_for(target: f64, kappa: f64) -> Result<usize> {
    if !(target.is_finite() && target > 0.0) {
        return Err(Error::Precondition(format!("sample target {target} must be positive")));
    }
    if !(kappa.is_finite() && kappa > 0.0) {
        return Err(Error::Precondition(format!("kappa {kappa} must be positive")));
    }
    let ok = |n: usize| kappa * n as f64 / (n as f64).ln() >= target;
    let mut hi = 3usize;
    while !ok(hi) {
        hi = hi.checked_mul(2).ok_or_else(|| Error::Numerical("sample count overflow".into()))?;
    }
    let mut lo = (hi / 2).max(2);
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if ok(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi.max(3))
}

/// Whether `κN/ln N ≤ 2·target`, the upper half of the coupling.
pub fn within_upper_coupling(target: f64, kappa: f64, n: usize) -> bool {
    kappa * n as f64 / (n as f64).ln() <= 2.0 * target
}

/// Grid supremum of `w(y)·Σ_η P_η(y)²` over cell midpoints.
pub fn k_constant(space: &DownwardClosedSet, weight: &dyn Fn(&[f64]) -> f64) -> Result<f64> {
    let d = space.dim();
    if d > 3 {
        return Err(Error::Precondition("k constant grid limited to d ≤ 3".into()));
    }
    let res = ((1e6f64).powf(1.0 / d as f64) as usize).min(10_000);
    k_constant_on_grid(space, weight, res)
}

pub fn k_constant_on_grid(space: &DownwardClosedSet, weight: &dyn Fn(&[f64]) -> f64, res: usize) -> Result<f64> {
    let basis = TensorLegendreBasis::from_set(space);
    let mut scratch = basis.scratch();
    let mut buf = vec![0.0; basis.len()];
    let mut sup = 0.0f64;
    for_grid(space.dim(), res, |y| {
        sup = sup.max(weight(y) * basis.sum_squares(y, &mut scratch, &mut buf));
    });
    Ok(sup)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::indexsets::total_degree_set;
    use crate::polybasis::{gauss_rule, legendre};
    use crate::sampling::{arcsine_weight, optimal_weight, sample_optimal};

    fn basis(d: usize, deg: u32) -> TensorLegendreBasis {
        TensorLegendreBasis::from_set(&total_degree_set(d, deg))
    }

    #[test]
    fn constants_design() {
        let b = basis(1, 0);
        let pts = [0.1, 0.5, 0.7, 0.9];
        let w = [1.0; 4];
        let vals = [1.0, 2.0, 3.0, 6.0];
        let (m, c) = assemble(LeastSquaresProblem::new(&b, &pts, &w, &vals).unwrap());
        for i in 0..4 {
            assert!((m.row(i)[0] - 0.5).abs() < 1e-15);
        }
        assert!((c[0] - 3.0).abs() < 1e-14);
        let zeros = [0.0; 4];
        let (_, c0) = assemble(LeastSquaresProblem::new(&b, &pts, &w, &zeros).unwrap());
        assert_eq!(c0, vec![0.0]);
    }

    #[test]
    fn hand_computed_entries() {
        let b = basis(1, 1);
        let pts = [0.0, 0.25, 1.0];
        let w = [1.0; 3];
        let vals = [0.0; 3];
        let (m, _) = assemble(LeastSquaresProblem::new(&b, &pts, &w, &vals).unwrap());
        let s = (1.0f64 / 3.0).sqrt();
        let r3 = 3f64.sqrt();
        let want = [[s, -s * r3], [s, -0.5 * s * r3], [s, s * r3]];
        for i in 0..3 {
            let row = m.row(i);
            for j in 0..2 {
                assert!((row[j] - want[i][j]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn streaming_matches_dense() {
        let b = basis(2, 4);
        let set = sample_optimal(&total_degree_set(2, 4), 300, 1).unwrap();
        let vals: Vec<f64> = (0..set.len()).map(|i| set.point(i)[0].sin()).collect();
        let p = LeastSquaresProblem::from_samples(&b, &set, &vals).unwrap();
        let dense = DesignMatrix::new(p);
        let stream = DesignMatrix::with_limit(p, 0);
        assert!(dense.is_dense() && !stream.is_dense());
        let x: Vec<f64> = (0..b.len()).map(|i| (i as f64).cos()).collect();
        let (a, s) = (dense.gram_apply(&x), stream.gram_apply(&x));
        assert_eq!(a, s);
        assert_eq!(dense.apply(&x), stream.apply(&x));
    }

    #[test]
    fn deviation_zero_for_constants_with_optimal_weight() {
        let b = basis(2, 0);
        let set = sample_optimal(&total_degree_set(2, 0), 10, 2).unwrap();
        let vals = vec![0.0; 10];
        let p = LeastSquaresProblem::from_samples(&b, &set, &vals).unwrap();
        assert!(gramian_deviation(&DesignMatrix::new(p)).unwrap() < 1e-15);
    }

    #[test]
    fn duplicated_point_rank_one() {
        let b = basis(1, 1);
        let pts = [0.8, 0.8];
        let w = [1.3, 1.3];
        let vals = [0.0, 0.0];
        let p = LeastSquaresProblem::new(&b, &pts, &w, &vals).unwrap();
        let dev = gramian_deviation(&DesignMatrix::new(p)).unwrap();
        // G = w·vvᵀ with v = (1, P̃_1(0.8)); eigenvalues w‖v‖² and 0.
        let v1 = legendre(1, 0.8).unwrap();
        let lam = 1.3 * (1.0 + v1 * v1);
        let want = (lam - 1.0).abs().max(1.0);
        assert!((dev - want).abs() < 1e-10, "{dev} vs {want}");
    }

    #[test]
    fn lanczos_matches_dense_eigenvalues() {
        for (d, deg, n, seed) in [(1, 12, 60, 3), (2, 6, 120, 4), (3, 3, 80, 5)] {
            let space = total_degree_set(d, deg);
            let b = TensorLegendreBasis::from_set(&space);
            let set = sample_optimal(&space, n, seed).unwrap();
            let vals = vec![0.0; n];
            let design = DesignMatrix::new(LeastSquaresProblem::from_samples(&b, &set, &vals).unwrap());
            let eig = SymmetricEigen::new(design.gramian()).eigenvalues;
            let (lo, hi) = (eig.min(), eig.max());
            let want = (hi - 1.0).max(1.0 - lo);
            let got = gramian_deviation(&design).unwrap();
            assert!((got - want).abs() < 1e-6 * want.max(1e-3), "d={d}: {got} vs {want}");
        }
    }

    #[test]
    fn cg_matches_dense_solve() {
        let space = total_degree_set(2, 5);
        let b = TensorLegendreBasis::from_set(&space);
        let set = sample_optimal(&space, 400, 9).unwrap();
        let vals: Vec<f64> = (0..set.len()).map(|i| (3.0 * set.point(i)[0]).exp() * set.point(i)[1]).collect();
        let p = LeastSquaresProblem::from_samples(&b, &set, &vals).unwrap();
        let fit = solve(p).unwrap();
        assert!(fit.converged);
        let (design, c) = assemble(p);
        let g = design.gramian();
        let x = g.cholesky().unwrap().solve(&nalgebra::DVector::from_vec(c));
        for (a, e) in fit.coefficients.iter().zip(x.iter()) {
            assert!((a - e).abs() < 1e-8);
        }
    }

    #[test]
    fn reproduces_space_members() {
        let space = total_degree_set(1, 3);
        let b = TensorLegendreBasis::from_set(&space);
        let set = sample_optimal(&space, 100, 4).unwrap();
        let f = |y: f64| 1.0 - 2.0 * y + 0.5 * y.powi(3);
        let vals: Vec<f64> = set.points.iter().map(|&y| f(y)).collect();
        let fit = solve(LeastSquaresProblem::from_samples(&b, &set, &vals).unwrap()).unwrap();
        assert!(fit.gramian_deviation <= 0.5);
        let rule = gauss_rule(1, 10);
        let err = rule.integrate(|y| (fit.evaluate(y) - f(y[0])).powi(2)).sqrt();
        assert!(err < 1e-8);
    }

    #[test]
    fn conditioned_zeroes_ill_conditioned() {
        let b = basis(1, 2);
        let pts = [0.3; 4];
        let w = [1.0; 4];
        let vals = [1.0; 4];
        let p = LeastSquaresProblem::new(&b, &pts, &w, &vals).unwrap();
        let fit = solve_conditioned(p).unwrap();
        assert!(fit.conditioned_zeroed && fit.gramian_deviation > 0.5);
        assert!(fit.coefficients.iter().all(|&c| c == 0.0));
        let plain = solve(p).unwrap();
        assert!(!plain.conditioned_zeroed);
    }

    #[test]
    fn conditioned_equals_plain_when_well_conditioned() {
        let space = total_degree_set(2, 2);
        let b = TensorLegendreBasis::from_set(&space);
        let set = sample_optimal(&space, 500, 12).unwrap();
        let vals: Vec<f64> = (0..set.len()).map(|i| set.point(i)[1].powi(4)).collect();
        let p = LeastSquaresProblem::from_samples(&b, &set, &vals).unwrap();
        let a = solve(p).unwrap();
        let c = solve_conditioned(p).unwrap();
        assert!(a.gramian_deviation <= 0.5);
        assert_eq!(a, c);
    }

    #[test]
    fn sample_count_examples() {
        let kappa = (1.0 - 2f64.ln()) / 4.0;
        assert_eq!(sample_count_for(10.0, kappa).unwrap(), 885);
        let scan = (3..5000usize).find(|&n| kappa * n as f64 / (n as f64).ln() >= 10.0).unwrap();
        assert_eq!(scan, 885);
        assert_eq!(sample_count_for(1e-9, kappa).unwrap(), 3);
        assert!(sample_count_for(0.0, kappa).is_err());
        assert!(sample_count_for(1.0, -1.0).is_err());
        for t in [1.0, 7.5, 40.0, 333.0] {
            let n1 = sample_count_for(t, kappa).unwrap();
            let n2 = sample_count_for(2.0 * t, kappa).unwrap();
            assert!(n2 >= 2 * n1);
            assert!(within_upper_coupling(t, kappa, n1));
        }
    }

    #[test]
    fn k_constant_examples() {
        let c = total_degree_set(1, 0);
        assert!((k_constant(&c, &|_| 1.0).unwrap() - 1.0).abs() < 1e-14);
        let s = total_degree_set(2, 3);
        let opt = k_constant_on_grid(&s, &|y| optimal_weight(&s, y).unwrap(), 30).unwrap();
        assert!((opt - 10.0).abs() < 1e-10);
        let m9 = total_degree_set(1, 9);
        let k = k_constant(&m9, &arcsine_weight).unwrap();
        assert!((10.0..=4.0 * std::f64::consts::E * 10.0).contains(&k), "{k}");
    }

    #[test]
    fn fit_rows_format() {
        let mut fit = LeastSquaresFit::zero(basis(2, 1));
        fit.coefficients[1] = 0.25;
        let rows = fit.to_rows();
        assert!(rows.starts_with("0,0;0\n0,1;0.25\n"));
        assert_eq!(fit.coefficient(&MultiIndex::from([0, 1])), 0.25);
        assert_eq!(fit.coefficient(&MultiIndex::from([3, 3])), 0.0);
    }
}
