//! Level families: evaluator hierarchies `f_0, f_1, …` with a cost per call.
//!
//! Two concrete families are provided. [`SyntheticFamily`] has closed-form
//! levels with prescribed convergence and cost rates. [`Elliptic2D`] solves a
//! diffusion problem on `[−1,1]²` whose coefficient depends on the parameter.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::polybasis::legendre_table;
use crate::rng::mix;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Evaluation {
    pub value: f64,
    pub cost: f64,
}

/// A hierarchy of evaluators on `[0,1]^d`.
pub trait LevelFamily: Sync + Send {
    fn dim(&self) -> usize;

    fn name(&self) -> String;

    /// `f_level(y)` and its cost.
    fn eval(&self, level: usize, y: &[f64]) -> Result<Evaluation>;

    /// Cost model of one call at `level`; never depends on the point.
    fn nominal_cost(&self, level: usize) -> f64;

    /// `f_level − f_{level−1}` with `f_{−1} = 0`; cost is the sum of both calls.
    fn eval_difference(&self, level: usize, y: &[f64]) -> Result<Evaluation> {
        let fine = self.eval(level, y)?;
        if level == 0 {
            return Ok(fine);
        }
        let coarse = self.eval(level - 1, y)?;
        Ok(Evaluation {
            value: fine.value - coarse.value,
            cost: fine.cost + coarse.cost,
        })
    }

    /// Nominal cost of one difference evaluation.
    fn difference_cost(&self, level: usize) -> f64 {
        self.nominal_cost(level) + if level > 0 { self.nominal_cost(level - 1) } else { 0.0 }
    }

    /// Discretization parameter `n_level`.
    fn discretization(&self, level: usize) -> f64 {
        2f64.powi(level as i32)
    }

    /// Closed-form limit, when one is known.
    fn exact(&self, _y: &[f64]) -> Option<f64> {
        None
    }
}

impl fmt::Debug for dyn LevelFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "LevelFamily({})", self.name())
    }
}

/// The same function at every level; cost `2^{γl}`.
pub struct FnFamily<F> {
    dim: usize,
    gamma: f64,
    f: F,
}

impl<F: Fn(&[f64]) -> f64 + Sync + Send> FnFamily<F> {
    pub fn new(dim: usize, gamma: f64, f: F) -> Self {
        FnFamily { dim, gamma, f }
    }
}

impl<F: Fn(&[f64]) -> f64 + Sync + Send> LevelFamily for FnFamily<F> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn name(&self) -> String {
        "level-independent".into()
    }

    fn eval(&self, level: usize, y: &[f64]) -> Result<Evaluation> {
        check_dim(self.dim, y.len())?;
        Ok(Evaluation {
            value: (self.f)(y),
            cost: self.nominal_cost(level),
        })
    }

    fn nominal_cost(&self, level: usize) -> f64 {
        2f64.powf(self.gamma * level as f64)
    }

    fn eval_difference(&self, level: usize, y: &[f64]) -> Result<Evaluation> {
        if level == 0 {
            return self.eval(0, y);
        }
        check_dim(self.dim, y.len())?;
        Ok(Evaluation {
            value: 0.0,
            cost: self.difference_cost(level),
        })
    }

    fn exact(&self, y: &[f64]) -> Option<f64> {
        Some((self.f)(y))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticConfig {
    pub dim: usize,
    pub alpha: f64,
    pub sigma: f64,
    pub beta_s: f64,
    pub beta_w: f64,
    pub gamma: f64,
    /// Size of the level perturbations.
    #[serde(default = "default_amplitude")]
    pub amplitude: f64,
    /// Per-axis spectral decay exponents; derived from `alpha/sigma` when absent.
    #[serde(default)]
    pub decay: Option<Vec<f64>>,
    /// Highest univariate degree kept in the limit series.
    #[serde(default = "default_truncation")]
    pub truncation: usize,
}

fn default_amplitude() -> f64 {
    1.0
}

fn default_truncation() -> usize {
    2048
}

impl SyntheticConfig {
    pub fn new(dim: usize, alpha: f64, sigma: f64, beta_s: f64, beta_w: f64, gamma: f64) -> Self {
        SyntheticConfig {
            dim,
            alpha,
            sigma,
            beta_s,
            beta_w,
            gamma,
            amplitude: default_amplitude(),
            decay: None,
            truncation: default_truncation(),
        }
    }
}

/// `f_l = f_∞ + c·n_l^{−β_w}·g_l + c·n_l^{−β_s}·h_l` with `n_l = 2^l`.
///
/// `f_∞(y) = Π_j Σ_n (1+n)^{−a_j} P̃_n(y_j)`, so the best total-degree error in
/// a space of dimension `D` decays like `D^{−α/σ}`. `g_l` is a unit low-degree
/// combination with level-dependent signs. `h_l` is present only when
/// `β_w > β_s` and is a Legendre polynomial of growing degree with unit sup norm
/// whose L² norm is `n_l^{β_s−β_w}`.
#[derive(Clone, Debug)]
pub struct SyntheticFamily {
    config: SyntheticConfig,
    coeffs: Vec<Vec<f64>>,
}

impl SyntheticFamily {
    pub fn new(config: SyntheticConfig) -> Result<Self> {
        let c = &config;
        if c.dim == 0 {
            return Err(Error::Config("synthetic family needs d ≥ 1".into()));
        }
        for (name, v) in [
            ("alpha", c.alpha),
            ("sigma", c.sigma),
            ("beta_s", c.beta_s),
            ("beta_w", c.beta_w),
            ("gamma", c.gamma),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if c.beta_w < c.beta_s {
            return Err(Error::Config("beta_w must be at least beta_s".into()));
        }
        let decay = match &c.decay {
            Some(v) => {
                check_dim(c.dim, v.len())?;
                v.clone()
            }
            None => vec![0.5 + c.alpha * c.dim as f64 / c.sigma; c.dim],
        };
        if decay.iter().any(|&a| a <= 0.5) {
            return Err(Error::Config("decay exponents must exceed 1/2".into()));
        }
        let coeffs = decay
            .iter()
            .map(|&a| (0..=c.truncation).map(|n| (1.0 + n as f64).powf(-a)).collect())
            .collect();
        Ok(SyntheticFamily { config: config.clone(), coeffs })
    }

    pub fn config(&self) -> &SyntheticConfig {
        &self.config
    }

    /// Univariate limit coefficients along `axis`.
    pub fn limit_coefficients(&self, axis: usize) -> &[f64] {
        &self.coeffs[axis]
    }

    pub fn limit(&self, y: &[f64]) -> f64 {
        y.iter().zip(&self.coeffs).map(|(&t, c)| clenshaw(c, t)).product()
    }

    fn sign(level: usize, slot: u64) -> f64 {
        if mix((level as u64) << 8 ^ slot) & 1 == 0 {
            1.0
        } else {
            -1.0
        }
    }

    /// Degree of `h_l`.
    pub fn strong_degree(&self, level: usize) -> usize {
        let gap = self.config.beta_w - self.config.beta_s;
        let n = 2f64.powi(level as i32);
        ((n.powf(2.0 * gap) - 1.0) / 2.0).round().max(0.0) as usize
    }

    /// Perturbation `f_l − f_∞`.
    pub fn perturbation(&self, level: usize, y: &[f64]) -> f64 {
        let c = &self.config;
        let n = 2f64.powi(level as i32);
        let d = c.dim;
        let mut g = Self::sign(level, 0);
        let mut t = [0.0; 3];
        for (j, &yj) in y.iter().enumerate() {
            legendre_table(yj, &mut t);
            g += Self::sign(level, 1 + j as u64) * t[1];
        }
        legendre_table(y[0], &mut t);
        g += Self::sign(level, 1 + d as u64) * t[2];
        g /= ((d + 2) as f64).sqrt();
        let mut v = c.amplitude * n.powf(-c.beta_w) * g;
        if c.beta_w > c.beta_s {
            let p = self.strong_degree(level);
            let mut tab = vec![0.0; p + 1];
            legendre_table(y[0], &mut tab);
            let h = Self::sign(level, 999) * tab[p] / ((2 * p + 1) as f64).sqrt();
            v += c.amplitude * n.powf(-c.beta_s) * h;
        }
        v
    }
}

/// `Σ_n c_n P̃_n(t)` by Clenshaw's recurrence on the orthonormal family.
pub fn clenshaw(c: &[f64], t: f64) -> f64 {
    // P̃_n = √(2n+1)·P_n; fold the normalization into the coefficients.
    let x = 2.0 * t - 1.0;
    let mut b1 = 0.0;
    let mut b2 = 0.0;
    for n in (0..c.len()).rev() {
        let a = c[n] * ((2 * n + 1) as f64).sqrt();
        let nf = n as f64;
        let alpha = (2.0 * nf + 1.0) / (nf + 1.0) * x;
        let beta = (nf + 1.0) / (nf + 2.0);
        let b0 = a + alpha * b1 - beta * b2;
        b2 = b1;
        b1 = b0;
    }
    b1
}

impl LevelFamily for SyntheticFamily {
    fn dim(&self) -> usize {
        self.config.dim
    }

    fn name(&self) -> String {
        "synthetic".into()
    }

    fn eval(&self, level: usize, y: &[f64]) -> Result<Evaluation> {
        check_dim(self.config.dim, y.len())?;
        Ok(Evaluation {
            value: self.limit(y) + self.perturbation(level, y),
            cost: self.nominal_cost(level),
        })
    }

    fn eval_difference(&self, level: usize, y: &[f64]) -> Result<Evaluation> {
        if level == 0 {
            return self.eval(0, y);
        }
        check_dim(self.config.dim, y.len())?;
        Ok(Evaluation {
            value: self.perturbation(level, y) - self.perturbation(level - 1, y),
            cost: self.difference_cost(level),
        })
    }

    fn nominal_cost(&self, level: usize) -> f64 {
        2f64.powf(self.config.gamma * level as f64)
    }

    fn exact(&self, y: &[f64]) -> Option<f64> {
        Some(self.limit(y))
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EllipticSolver {
    /// Conjugate gradients preconditioned by a geometric multigrid V-cycle.
    #[default]
    Multigrid,
    /// Conjugate gradients with diagonal preconditioning.
    Jacobi,
}

/// `−∇·(a∇u) = 1` on `[−1,1]²`, `u = 0` on the boundary, with
/// `a(x, ŷ) = 1 + ‖x‖₂^r + ‖ŷ‖₂^s` and `ŷ = 2y − 1`. The output is `0.5·∫u`.
#[derive(Clone, Debug)]
pub struct Elliptic2D {
    pub dim: usize,
    pub r: f64,
    pub s: f64,
    pub solver: EllipticSolver,
    pub tolerance: f64,
}

impl Elliptic2D {
    pub fn new(dim: usize) -> Self {
        Elliptic2D {
            dim,
            r: 1.0,
            s: 3.0,
            solver: EllipticSolver::Multigrid,
            tolerance: 1e-10,
        }
    }

    pub fn with_solver(mut self, solver: EllipticSolver) -> Self {
        self.solver = solver;
        self
    }

    /// Grid points per axis at `level`, boundary included.
    pub fn points_per_axis(level: usize) -> usize {
        (1usize << (level + 2)) + 1
    }

    pub fn mesh_size(level: usize) -> f64 {
        2.0 / (Self::points_per_axis(level) - 1) as f64
    }

    fn param_term(&self, y: &[f64]) -> f64 {
        let norm = y.iter().map(|&t| (2.0 * t - 1.0).powi(2)).sum::<f64>().sqrt();
        norm.powf(self.s)
    }

    fn grid(&self, p: usize, y_term: f64) -> Grid {
        let r = self.r;
        Grid::new(p, |x1, x2| 1.0 + (x1 * x1 + x2 * x2).sqrt().powf(r) + y_term)
    }

    /// Nodal solution on the `level` grid, boundary included, row-major in `x₁`.
    pub fn solve_field(&self, level: usize, y: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim, y.len())?;
        if let Some(bad) = y.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::Domain(format!("parameter {bad} outside [0,1]")));
        }
        let y_term = self.param_term(y);
        let p = Self::points_per_axis(level);
        let mut grids = vec![self.grid(p, y_term)];
        if self.solver == EllipticSolver::Multigrid {
            let mut q = p;
            while q > 3 {
                q = (q - 1) / 2 + 1;
                grids.push(self.grid(q, y_term));
            }
        }
        let b = grids[0].interior_mask(1.0);
        let cap = 10 * p * p;
        let (u, converged) = match self.solver {
            EllipticSolver::Multigrid => pcg(&grids[0], &b, self.tolerance, cap, |r| vcycle(&grids, 0, r)),
            EllipticSolver::Jacobi => {
                let g = &grids[0];
                pcg(g, &b, self.tolerance, cap, |r| {
                    r.iter().enumerate().map(|(k, v)| if g.diag[k] > 0.0 { v / (g.diag[k] * g.h2inv) } else { 0.0 }).collect()
                })
            }
        };
        if !converged {
            return Err(Error::Numerical(format!(
                "elliptic solver did not converge at level {level} for parameter {y:?}"
            )));
        }
        Ok(u)
    }

    /// `0.5·h²·Σ u` over interior nodes.
    pub fn quantity(level: usize, u: &[f64]) -> f64 {
        let h = Self::mesh_size(level);
        0.5 * h * h * u.iter().sum::<f64>()
    }

    /// Dense system matrix on the interior unknowns; for small grids in tests.
    pub fn dense_operator(&self, level: usize, y: &[f64]) -> Vec<Vec<f64>> {
        let g = self.grid(Self::points_per_axis(level), self.param_term(y));
        let p = g.p;
        let idx: Vec<usize> = (0..p * p).filter(|&k| g.diag[k] > 0.0).collect();
        idx.iter()
            .map(|&k| {
                let mut e = vec![0.0; p * p];
                let mut out = vec![0.0; p * p];
                idx.iter().for_each(|&c| e[c] = if c == k { 1.0 } else { 0.0 });
                g.apply(&e, &mut out);
                idx.iter().map(|&c| out[c]).collect()
            })
            .collect()
    }
}

impl LevelFamily for Elliptic2D {
    fn dim(&self) -> usize {
        self.dim
    }

    fn name(&self) -> String {
        "elliptic".into()
    }

    fn eval(&self, level: usize, y: &[f64]) -> Result<Evaluation> {
        let u = self.solve_field(level, y)?;
        Ok(Evaluation {
            value: Self::quantity(level, &u),
            cost: self.nominal_cost(level),
        })
    }

    fn nominal_cost(&self, level: usize) -> f64 {
        let interior = Self::points_per_axis(level) - 2;
        (interior * interior) as f64
    }
}

/// Vertex-centred grid on `[−1,1]²` with face coefficients.
struct Grid {
    p: usize,
    h2inv: f64,
    /// Face between `(i,j)` and `(i+1,j)` at `i*p + j`.
    ax: Vec<f64>,
    /// Face between `(i,j)` and `(i,j+1)` at `i*p + j`.
    ay: Vec<f64>,
    /// Sum of the four face coefficients; zero on boundary nodes.
    diag: Vec<f64>,
}

impl Grid {
    fn new(p: usize, a: impl Fn(f64, f64) -> f64) -> Grid {
        let h = 2.0 / (p - 1) as f64;
        let coord = |i: usize| -1.0 + h * i as f64;
        let nodal: Vec<f64> = (0..p * p).map(|k| a(coord(k / p), coord(k % p))).collect();
        let mut ax = vec![0.0; p * p];
        let mut ay = vec![0.0; p * p];
        for i in 0..p {
            for j in 0..p {
                let k = i * p + j;
                if i + 1 < p {
                    ax[k] = 0.5 * (nodal[k] + nodal[k + p]);
                }
                if j + 1 < p {
                    ay[k] = 0.5 * (nodal[k] + nodal[k + 1]);
                }
            }
        }
        let mut diag = vec![0.0; p * p];
        for i in 1..p - 1 {
            for j in 1..p - 1 {
                let k = i * p + j;
                diag[k] = ax[k] + ax[k - p] + ay[k] + ay[k - 1];
            }
        }
        Grid {
            p,
            h2inv: 1.0 / (h * h),
            ax,
            ay,
            diag,
        }
    }

    fn interior_mask(&self, v: f64) -> Vec<f64> {
        self.diag.iter().map(|&d| if d > 0.0 { v } else { 0.0 }).collect()
    }

    fn apply(&self, u: &[f64], out: &mut [f64]) {
        let p = self.p;
        for i in 1..p - 1 {
            for j in 1..p - 1 {
                let k = i * p + j;
                out[k] = (self.diag[k] * u[k]
                    - self.ax[k] * u[k + p]
                    - self.ax[k - p] * u[k - p]
                    - self.ay[k] * u[k + 1]
                    - self.ay[k - 1] * u[k - 1])
                    * self.h2inv;
            }
        }
    }

    /// One Gauss–Seidel sweep over nodes with `(i+j) % 2 == color`.
    fn gs_color(&self, u: &mut [f64], b: &[f64], color: usize) {
        let p = self.p;
        for i in 1..p - 1 {
            let start = 1 + (i + 1 + color) % 2;
            for j in (start..p - 1).step_by(2) {
                let k = i * p + j;
                let s = b[k] / self.h2inv
                    + self.ax[k] * u[k + p]
                    + self.ax[k - p] * u[k - p]
                    + self.ay[k] * u[k + 1]
                    + self.ay[k - 1] * u[k - 1];
                u[k] = s / self.diag[k];
            }
        }
    }
}

const SMOOTHING_STEPS: usize = 2;

/// Symmetric V-cycle applied to `b` from a zero initial guess.
fn vcycle(grids: &[Grid], level: usize, b: &[f64]) -> Vec<f64> {
    let g = &grids[level];
    let p = g.p;
    let mut u = vec![0.0; p * p];
    if p == 3 {
        u[4] = b[4] / (g.diag[4] * g.h2inv);
        return u;
    }
    for _ in 0..SMOOTHING_STEPS {
        g.gs_color(&mut u, b, 0);
        g.gs_color(&mut u, b, 1);
    }
    let mut au = vec![0.0; p * p];
    g.apply(&u, &mut au);
    let r: Vec<f64> = b.iter().zip(&au).map(|(b, a)| b - a).collect();
    let pc = (p - 1) / 2 + 1;
    let mut rc = vec![0.0; pc * pc];
    for ic in 1..pc - 1 {
        for jc in 1..pc - 1 {
            let (i, j) = (2 * ic, 2 * jc);
            let k = i * p + j;
            let edge = r[k - 1] + r[k + 1] + r[k - p] + r[k + p];
            let corner = r[k - p - 1] + r[k - p + 1] + r[k + p - 1] + r[k + p + 1];
            rc[ic * pc + jc] = (4.0 * r[k] + 2.0 * edge + corner) / 16.0;
        }
    }
    let ec = vcycle(grids, level + 1, &rc);
    for i in 1..p - 1 {
        for j in 1..p - 1 {
            let (ic, jc) = (i / 2, j / 2);
            let v = match (i % 2, j % 2) {
                (0, 0) => ec[ic * pc + jc],
                (1, 0) => 0.5 * (ec[ic * pc + jc] + ec[(ic + 1) * pc + jc]),
                (0, 1) => 0.5 * (ec[ic * pc + jc] + ec[ic * pc + jc + 1]),
                _ => {
                    0.25 * (ec[ic * pc + jc] + ec[(ic + 1) * pc + jc] + ec[ic * pc + jc + 1] + ec[(ic + 1) * pc + jc + 1])
                }
            };
            u[i * p + j] += v;
        }
    }
    for _ in 0..SMOOTHING_STEPS {
        g.gs_color(&mut u, b, 1);
        g.gs_color(&mut u, b, 0);
    }
    u
}

fn pcg(g: &Grid, b: &[f64], tol: f64, cap: usize, precond: impl Fn(&[f64]) -> Vec<f64>) -> (Vec<f64>, bool) {
    let n = b.len();
    let dot = |a: &[f64], c: &[f64]| a.iter().zip(c).map(|(x, y)| x * y).sum::<f64>();
    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    let bnorm = dot(b, b).sqrt();
    if bnorm == 0.0 {
        return (x, true);
    }
    let mut z = precond(&r);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];
    for _ in 0..cap {
        g.apply(&p, &mut ap);
        let alpha = rz / dot(&p, &ap);
        for k in 0..n {
            x[k] += alpha * p[k];
            r[k] -= alpha * ap[k];
        }
        if dot(&r, &r).sqrt() <= tol * bnorm {
            return (x, true);
        }
        z = precond(&r);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for k in 0..n {
            p[k] = z[k] + beta * p[k];
        }
    }
    (x, false)
}

/// Level families selectable by name from a configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ProblemSpec {
    Synthetic(SyntheticConfig),
    Elliptic {
        dim: usize,
        #[serde(default)]
        solver: EllipticSolver,
    },
}

impl ProblemSpec {
    pub fn dim(&self) -> usize {
        match self {
            ProblemSpec::Synthetic(c) => c.dim,
            ProblemSpec::Elliptic { dim, .. } => *dim,
        }
    }

    pub fn build(&self) -> Result<Box<dyn LevelFamily>> {
        match self {
            ProblemSpec::Synthetic(c) => Ok(Box::new(SyntheticFamily::new(c.clone())?)),
            ProblemSpec::Elliptic { dim, solver } => {
                if *dim == 0 {
                    return Err(Error::Config("elliptic problem needs d ≥ 1".into()));
                }
                Ok(Box::new(Elliptic2D::new(*dim).with_solver(*solver)))
            }
        }
    }
}
