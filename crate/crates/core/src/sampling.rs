//! Random designs on `[0,1]^d`: arcsine, optimal (mixture plus rejection) and
//! Metropolized independent sampling, with their weight functions and a few
//! diagnostics on the sampling densities.
//!
//! Densities are taken with respect to Lebesgue measure on the unit cube, which
//! is also the reference probability measure, so weights are reciprocal densities.

use std::f64::consts::{E, PI};
use std::fmt::Write as _;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::indexsets::DownwardClosedSet;
use crate::polybasis::{legendre_table, BasisScratch, QuadratureRule, TensorLegendreBasis};
use crate::rng::RngKey;

/// Envelope constant: `P̃_n² ≤ 4e·p∞₁` on `(0,1)` for every `n`.
pub const ENVELOPE: f64 = 4.0 * E;

/// Proposals allowed per coordinate before a rejection loop gives up.
pub const REJECTION_CAP: u64 = 1_000_000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SamplingSpec {
    Optimal { space: DownwardClosedSet },
    Arcsine { dim: usize },
    /// `(1 − ε)·ρ_base + ε·1`.
    Perturbed { base: Box<SamplingSpec>, contamination: f64 },
}

impl SamplingSpec {
    pub fn optimal(space: DownwardClosedSet) -> Self {
        SamplingSpec::Optimal { space }
    }

    pub fn arcsine(dim: usize) -> Self {
        SamplingSpec::Arcsine { dim }
    }

    pub fn perturbed(base: SamplingSpec, contamination: f64) -> Self {
        SamplingSpec::Perturbed {
            base: Box::new(base),
            contamination,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            SamplingSpec::Optimal { space } => space.dim(),
            SamplingSpec::Arcsine { dim } => *dim,
            SamplingSpec::Perturbed { base, .. } => base.dim(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            SamplingSpec::Optimal { space } if space.is_empty() => {
                Err(Error::Precondition("optimal sampling needs a non-empty space".into()))
            }
            SamplingSpec::Arcsine { dim: 0 } => Err(Error::Precondition("dimension must be positive".into())),
            SamplingSpec::Perturbed { contamination, .. } if !(0.0..1.0).contains(contamination) => Err(
                Error::Precondition(format!("contamination {contamination} outside [0,1)")),
            ),
            SamplingSpec::Perturbed { base, .. } => base.validate(),
            _ => Ok(()),
        }
    }
}

/// A spec with its basis precomputed, ready to evaluate densities and draw points.
#[derive(Clone, Debug)]
pub struct Sampler {
    spec: SamplingSpec,
    basis: Option<TensorLegendreBasis>,
}

impl Sampler {
    pub fn new(spec: SamplingSpec) -> Result<Self> {
        spec.validate()?;
        let basis = optimal_space(&spec).map(TensorLegendreBasis::from_set);
        Ok(Sampler { spec, basis })
    }

    pub fn spec(&self) -> &SamplingSpec {
        &self.spec
    }

    pub fn dim(&self) -> usize {
        self.spec.dim()
    }

    /// Density with respect to Lebesgue measure on the cube.
    pub fn density(&self, y: &[f64]) -> f64 {
        self.density_with(y, &mut self.work())
    }

    pub fn weight(&self, y: &[f64]) -> f64 {
        1.0 / self.density(y)
    }

    fn work(&self) -> Work {
        match &self.basis {
            Some(b) => Work {
                scratch: Some(b.scratch()),
                buf: vec![0.0; b.len()],
            },
            None => Work {
                scratch: None,
                buf: Vec::new(),
            },
        }
    }

    fn density_with(&self, y: &[f64], work: &mut Work) -> f64 {
        density_of(&self.spec, self.basis.as_ref(), y, work)
    }

    /// One point.
    pub fn draw<R: Rng>(&self, rng: &mut R) -> Result<Vec<f64>> {
        let mut y = vec![0.0; self.dim()];
        draw_of(&self.spec, self.basis.as_ref(), rng, &mut y)?;
        Ok(y)
    }

    /// Points `start..end` of the stream `key`, flattened row-major, with weights.
    pub fn draw_range(&self, key: RngKey, start: usize, end: usize) -> Result<(Vec<f64>, Vec<f64>)> {
        let rows: Vec<(Vec<f64>, f64)> = (start..end)
            .into_par_iter()
            .map_init(
                || self.work(),
                |work, i| {
                    let mut rng = key.rng_for(i as u64);
                    let mut y = vec![0.0; self.dim()];
                    draw_of(&self.spec, self.basis.as_ref(), &mut rng, &mut y)?;
                    let w = 1.0 / self.density_with(&y, work);
                    Ok((y, w))
                },
            )
            .collect::<Result<_>>()?;
        Ok(split_rows(rows))
    }
}

struct Work {
    scratch: Option<BasisScratch>,
    buf: Vec<f64>,
}

fn optimal_space(spec: &SamplingSpec) -> Option<&DownwardClosedSet> {
    match spec {
        SamplingSpec::Optimal { space } => Some(space),
        SamplingSpec::Arcsine { .. } => None,
        SamplingSpec::Perturbed { base, .. } => optimal_space(base),
    }
}

fn density_of(spec: &SamplingSpec, basis: Option<&TensorLegendreBasis>, y: &[f64], work: &mut Work) -> f64 {
    match spec {
        SamplingSpec::Arcsine { .. } => arcsine_density(y),
        SamplingSpec::Optimal { .. } => {
            let b = basis.expect("optimal spec carries a basis");
            let scratch = work.scratch.as_mut().expect("scratch");
            b.sum_squares(y, scratch, &mut work.buf) / b.len() as f64
        }
        SamplingSpec::Perturbed { base, contamination } => {
            (1.0 - contamination) * density_of(base, basis, y, work) + contamination
        }
    }
}

fn draw_of<R: Rng>(spec: &SamplingSpec, basis: Option<&TensorLegendreBasis>, rng: &mut R, y: &mut [f64]) -> Result<()> {
    match spec {
        SamplingSpec::Arcsine { .. } => {
            for v in y.iter_mut() {
                *v = arcsine_draw(rng);
            }
        }
        SamplingSpec::Optimal { .. } => {
            let b = basis.expect("optimal spec carries a basis");
            let eta = &b.exponents()[rng.gen_range(0..b.len())];
            for (v, &n) in y.iter_mut().zip(eta.entries()) {
                *v = sample_legendre_squared(n as usize, rng)?.0;
            }
        }
        SamplingSpec::Perturbed { base, contamination } => {
            if rng.gen::<f64>() < *contamination {
                for v in y.iter_mut() {
                    *v = rng.gen();
                }
            } else {
                draw_of(base, basis, rng, y)?;
            }
        }
    }
    Ok(())
}

fn split_rows(rows: Vec<(Vec<f64>, f64)>) -> (Vec<f64>, Vec<f64>) {
    let mut points = Vec::with_capacity(rows.first().map_or(0, |r| r.0.len()) * rows.len());
    let mut weights = Vec::with_capacity(rows.len());
    for (y, w) in rows {
        points.extend(y);
        weights.push(w);
    }
    (points, weights)
}

/// `p∞_d(y) = Π_j 1/(π√(y_j(1−y_j)))`.
pub fn arcsine_density(y: &[f64]) -> f64 {
    y.iter().map(|&v| 1.0 / (PI * (v * (1.0 - v)).sqrt())).product()
}

/// `1/p∞_d(y)`, evaluated directly so that it stays finite at the boundary.
pub fn arcsine_weight(y: &[f64]) -> f64 {
    y.iter().map(|&v| PI * (v * (1.0 - v)).sqrt()).product()
}

/// Arcsine transform of `x ∈ [−π/2, π/2]`, kept strictly inside `(0,1)`.
pub fn arcsine_transform(x: f64) -> f64 {
    let y = 0.5 * (x.sin() + 1.0);
    y.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0)
}

pub fn arcsine_draw<R: Rng>(rng: &mut R) -> f64 {
    arcsine_transform(rng.gen_range(-PI / 2.0..=PI / 2.0))
}

/// Draws from the density `P̃_n²` on `[0,1]` by rejection against the arcsine
/// proposal. Returns the point and the number of proposals used.
pub fn sample_legendre_squared<R: Rng>(n: usize, rng: &mut R) -> Result<(f64, u64)> {
    if n == 0 {
        return Ok((rng.gen(), 1));
    }
    let mut table = vec![0.0; n + 1];
    for proposals in 1..=REJECTION_CAP {
        let y = arcsine_draw(rng);
        legendre_table(y, &mut table);
        let p = table[n];
        let u: f64 = rng.gen();
        if u * ENVELOPE * arcsine_density(&[y]) <= p * p {
            return Ok((y, proposals));
        }
    }
    Err(Error::Internal(format!(
        "rejection sampler for degree {n} exceeded {REJECTION_CAP} proposals"
    )))
}

/// `m / Σ_η P_η(y)²`.
pub fn optimal_weight(space: &DownwardClosedSet, y: &[f64]) -> Result<f64> {
    check_dim(space.dim(), y.len())?;
    if space.is_empty() {
        return Err(Error::Precondition("empty space".into()));
    }
    let basis = TensorLegendreBasis::from_set(space);
    let vals = basis.eval_all(y)?;
    let s: f64 = vals.iter().map(|v| v * v).sum();
    let m = basis.len() as f64;
    Ok(m / s.max(m * f64::EPSILON))
}

/// A design with per-point weights.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightedSampleSet {
    pub dim: usize,
    /// Row-major, `len() * dim` entries.
    pub points: Vec<f64>,
    pub weights: Vec<f64>,
    pub spec: SamplingSpec,
    pub seed: u64,
}

impl WeightedSampleSet {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    /// One row per point: coordinates then weight. The header carries the spec.
    pub fn to_columnar(&self) -> String {
        let mut s = String::new();
        let spec = serde_json::to_string(&self.spec).expect("spec serializes");
        let _ = writeln!(s, "# dim {} seed {}", self.dim, self.seed);
        let _ = writeln!(s, "# spec {spec}");
        for i in 0..self.len() {
            for v in self.point(i) {
                let _ = write!(s, "{v} ");
            }
            let _ = writeln!(s, "{}", self.weights[i]);
        }
        s
    }

    pub fn from_columnar(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let head = lines.next().ok_or_else(|| Error::Parse("missing header".into()))?;
        let parts: Vec<&str> = head.split_whitespace().collect();
        let (dim, seed) = match parts.as_slice() {
            ["#", "dim", d, "seed", s] => (
                d.parse::<usize>().map_err(|e| Error::Parse(e.to_string()))?,
                s.parse::<u64>().map_err(|e| Error::Parse(e.to_string()))?,
            ),
            _ => return Err(Error::Parse(format!("bad header {head:?}"))),
        };
        let spec_line = lines.next().ok_or_else(|| Error::Parse("missing spec line".into()))?;
        let spec: SamplingSpec = serde_json::from_str(
            spec_line
                .strip_prefix("# spec ")
                .ok_or_else(|| Error::Parse("bad spec line".into()))?,
        )?;
        let mut points = Vec::new();
        let mut weights = Vec::new();
        for line in lines.filter(|l| !l.trim().is_empty()) {
            let vals = line
                .split_whitespace()
                .map(|t| t.parse::<f64>().map_err(|e| Error::Parse(format!("{t:?}: {e}"))))
                .collect::<Result<Vec<_>>>()?;
            check_dim(dim + 1, vals.len())?;
            points.extend_from_slice(&vals[..dim]);
            weights.push(vals[dim]);
        }
        Ok(WeightedSampleSet {
            dim,
            points,
            weights,
            spec,
            seed,
        })
    }
}

/// Draws `n` points of `spec` from stream 0 of `seed`.
pub fn sample(spec: &SamplingSpec, n: usize, seed: u64) -> Result<WeightedSampleSet> {
    sample_keyed(spec, n, RngKey::new(seed, 0))
}

pub fn sample_keyed(spec: &SamplingSpec, n: usize, key: RngKey) -> Result<WeightedSampleSet> {
    let sampler = Sampler::new(spec.clone())?;
    let (points, weights) = sampler.draw_range(key, 0, n)?;
    Ok(WeightedSampleSet {
        dim: spec.dim(),
        points,
        weights,
        spec: spec.clone(),
        seed: key.seed,
    })
}

pub fn sample_arcsine(d: usize, n: usize, seed: u64) -> Result<WeightedSampleSet> {
    sample(&SamplingSpec::arcsine(d), n, seed)
}

pub fn sample_optimal(space: &DownwardClosedSet, n: usize, seed: u64) -> Result<WeightedSampleSet> {
    sample(&SamplingSpec::optimal(space.clone()), n, seed)
}

/// `ceil(g⁻¹·log(24m²))`.
pub fn mis_burn_in(g: f64, m: usize) -> Result<usize> {
    if !(g.is_finite() && g > 0.0 && g <= 1.0 + 1e-12) {
        return Err(Error::Config(format!("density ratio bound g = {g} must lie in (0, 1]")));
    }
    if m == 0 {
        return Err(Error::Config("space dimension must be positive".into()));
    }
    let m = m as f64;
    Ok(((24.0 * m * m).ln() / g).ceil() as usize)
}

/// Grid estimate of `inf_y p(y)/ρ*(y)` over interior cell midpoints.
pub fn estimate_ratio_bound(space: &DownwardClosedSet, proposal: &SamplingSpec) -> Result<f64> {
    check_dim(space.dim(), proposal.dim())?;
    let target = Sampler::new(SamplingSpec::optimal(space.clone()))?;
    let prop = Sampler::new(proposal.clone())?;
    let d = space.dim();
    let res = ((200_000f64).powf(1.0 / d as f64).floor() as usize).clamp(2, 4000);
    let mut g = f64::INFINITY;
    for_grid(d, res, |y| {
        g = g.min(prop.density(y) / target.density(y));
    });
    if !(g.is_finite() && g > 0.0) {
        return Err(Error::Config("could not estimate a positive density ratio bound".into()));
    }
    Ok(g.min(1.0))
}

/// Metropolized independent sampler output with the target's weights.
#[derive(Clone, Debug)]
pub struct MisOutput {
    pub samples: WeightedSampleSet,
    pub burn_in: usize,
    pub g: f64,
}

/// Each point is the last state of an independent chain of length
/// `mis_burn_in(g, m)` whose start and proposals are drawn from `proposal`.
/// `g` is estimated on a grid when not supplied.
pub fn mis_sample(
    space: &DownwardClosedSet,
    n: usize,
    proposal: &SamplingSpec,
    g: Option<f64>,
    seed: u64,
) -> Result<MisOutput> {
    let g = match g {
        Some(g) => g,
        None => estimate_ratio_bound(space, proposal)?,
    };
    let burn_in = mis_burn_in(g, space.len())?;
    let target = Sampler::new(SamplingSpec::optimal(space.clone()))?;
    let prop = Sampler::new(proposal.clone())?;
    let key = RngKey::new(seed, 0x4d4953);
    let d = space.dim();
    let rows: Vec<(Vec<f64>, f64)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = key.rng_for(i as u64);
            let mut x = prop.draw(&mut rng)?;
            let mut ratio_x = target.density(&x) / prop.density(&x);
            for _ in 0..burn_in {
                let z = prop.draw(&mut rng)?;
                let ratio_z = target.density(&z) / prop.density(&z);
                let u: f64 = rng.gen();
                if u * ratio_x <= ratio_z {
                    x = z;
                    ratio_x = ratio_z;
                }
            }
            let w = 1.0 / target.density(&x);
            Ok((x, w))
        })
        .collect::<Result<_>>()?;
    let (points, weights) = split_rows(rows);
    Ok(MisOutput {
        samples: WeightedSampleSet {
            dim: d,
            points,
            weights,
            spec: SamplingSpec::optimal(space.clone()),
            seed,
        },
        burn_in,
        g,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum PNorm {
    One,
    Two,
    Inf,
}

impl PNorm {
    fn reciprocal(self) -> f64 {
        match self {
            PNorm::One => 1.0,
            PNorm::Two => 0.5,
            PNorm::Inf => 0.0,
        }
    }
}

/// `(1/6)·m^{−1−1/p}`.
pub fn stability_threshold(m: usize, p: PNorm) -> f64 {
    (m as f64).powf(-1.0 - p.reciprocal()) / 6.0
}

#[derive(Clone, Copy, Debug)]
pub enum NormEstimator {
    /// Tensor Gauss rule with this many nodes per axis.
    Quadrature(usize),
    /// Draws from the optimal distribution.
    MonteCarlo { samples: usize, seed: u64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub margin: f64,
    pub threshold: f64,
    pub pass: bool,
}

/// Estimates `‖1 − ρ̃/ρ*‖` in `L^p(ν*)` and compares it with the stability threshold.
pub fn stability_margin(
    space: &DownwardClosedSet,
    ratio: &(dyn Fn(&[f64]) -> f64 + Sync),
    p: PNorm,
    estimator: NormEstimator,
) -> Result<StabilityReport> {
    let target = Sampler::new(SamplingSpec::optimal(space.clone()))?;
    let dev = |y: &[f64]| (1.0 - ratio(y)).abs();
    let margin = match estimator {
        NormEstimator::Quadrature(q) => {
            let rule = crate::polybasis::gauss_rule(space.dim(), q);
            reduce_norm(p, (0..rule.len()).map(|i| {
                let y = rule.point(i);
                (rule.weights[i] * target.density(y), dev(y))
            }))
        }
        NormEstimator::MonteCarlo { samples, seed } => {
            let set = sample_optimal(space, samples, seed)?;
            let w = 1.0 / samples as f64;
            reduce_norm(p, (0..set.len()).map(|i| (w, dev(set.point(i)))))
        }
    };
    let threshold = stability_threshold(space.len(), p);
    Ok(StabilityReport {
        margin,
        threshold,
        pass: margin <= threshold,
    })
}

fn reduce_norm(p: PNorm, terms: impl Iterator<Item = (f64, f64)>) -> f64 {
    match p {
        PNorm::Inf => terms.filter(|t| t.0 > 0.0).map(|t| t.1).fold(0.0, f64::max),
        PNorm::One => terms.map(|(w, v)| w * v).sum(),
        PNorm::Two => terms.map(|(w, v)| w * v * v).sum::<f64>().sqrt(),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DensityBounds {
    /// Grid infimum of `ρ*`.
    pub inf_density: f64,
    /// Grid supremum of `ρ*/p∞_d`.
    pub sup_ratio: f64,
}

/// Evaluates the optimal density on a `res^d` grid of cell midpoints.
pub fn density_bounds_check(space: &DownwardClosedSet, res: usize) -> Result<DensityBounds> {
    if space.dim() > 3 {
        return Err(Error::Precondition("density grid limited to d ≤ 3".into()));
    }
    let target = Sampler::new(SamplingSpec::optimal(space.clone()))?;
    let mut inf_density = f64::INFINITY;
    let mut sup_ratio = 0.0f64;
    let mut work = target.work();
    for_grid(space.dim(), res.max(1), |y| {
        let rho = target.density_with(y, &mut work);
        inf_density = inf_density.min(rho);
        sup_ratio = sup_ratio.max(rho * arcsine_weight(y));
    });
    Ok(DensityBounds { inf_density, sup_ratio })
}

/// Calls `f` at every midpoint `((i_j + 1/2)/res)_j` of a uniform grid.
pub fn for_grid(d: usize, res: usize, mut f: impl FnMut(&[f64])) {
    let mut idx = vec![0usize; d];
    let mut y = vec![0.0; d];
    let total = res.pow(d as u32);
    for _ in 0..total {
        for j in 0..d {
            y[j] = (idx[j] as f64 + 0.5) / res as f64;
        }
        f(&y);
        for j in (0..d).rev() {
            idx[j] += 1;
            if idx[j] < res {
                break;
            }
            idx[j] = 0;
        }
    }
}

/// Probability of each of `bins` equal-width cells of `[0,1]` under a
/// polynomial density, by per-cell Gauss quadrature.
pub fn tabulate_bins(bins: usize, q: usize, density: impl Fn(f64) -> f64) -> Vec<f64> {
    let (x, w) = crate::polybasis::gauss_legendre(q);
    (0..bins)
        .map(|b| {
            let a = b as f64 / bins as f64;
            let h = 1.0 / bins as f64;
            x.iter().zip(&w).map(|(xi, wi)| wi * h * density(a + h * xi)).sum()
        })
        .collect()
}

pub fn histogram(values: impl IntoIterator<Item = f64>, bins: usize) -> Vec<usize> {
    let mut counts = vec![0usize; bins];
    for v in values {
        let b = ((v * bins as f64) as usize).min(bins - 1);
        counts[b] += 1;
    }
    counts
}

/// Tabulated univariate optimal density of a set of degrees (oracle helper).
pub fn univariate_optimal_density(degrees: &[usize], y: f64) -> f64 {
    let max = degrees.iter().copied().max().unwrap_or(0);
    let mut t = vec![0.0; max + 1];
    legendre_table(y, &mut t);
    degrees.iter().map(|&n| t[n] * t[n]).sum::<f64>() / degrees.len() as f64
}

/// Quadrature estimate of a grid-free integral of `ρ*` (should be one).
pub fn optimal_mass(space: &DownwardClosedSet, rule: &QuadratureRule) -> Result<f64> {
    let target = Sampler::new(SamplingSpec::optimal(space.clone()))?;
    Ok(rule.integrate(|y| target.density(y)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::indexsets::total_degree_set;
    use rand::SeedableRng;
    use statrs::distribution::{ChiSquared, ContinuousCDF};

    fn chi_square(counts: &[usize], probs: &[f64]) -> f64 {
        let n: usize = counts.iter().sum();
        counts
            .iter()
            .zip(probs)
            .map(|(&c, &p)| {
                let e = p * n as f64;
                (c as f64 - e).powi(2) / e
            })
            .sum()
    }

    #[test]
    fn arcsine_examples() {
        assert_eq!(arcsine_transform(0.0), 0.5);
        assert!((arcsine_weight(&[0.5]) - PI / 2.0).abs() < 1e-15);
        let t = arcsine_transform(PI / 2.0);
        assert!(t < 1.0 && t > 0.999);
        let b = arcsine_transform(-PI / 2.0);
        assert!(b > 0.0);
    }

    #[test]
    fn arcsine_ks_statistic() {
        let n = 100_000;
        let set = sample_arcsine(1, n, 5).unwrap();
        let mut ys = set.points.clone();
        ys.sort_by(f64::total_cmp);
        let cdf = |y: f64| 2.0 / PI * y.sqrt().asin();
        let ks = ys
            .iter()
            .enumerate()
            .map(|(i, &y)| {
                let f = cdf(y);
                (f - i as f64 / n as f64).abs().max(((i + 1) as f64 / n as f64 - f).abs())
            })
            .fold(0.0, f64::max);
        assert!(ks < 1.628 / (n as f64).sqrt(), "ks = {ks}");
    }

    #[test]
    fn arcsine_moments() {
        let n = 1_000_000;
        let set = sample_arcsine(1, n, 9).unwrap();
        let mean = set.points.iter().sum::<f64>() / n as f64;
        let var = set.points.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / n as f64;
        let se_mean = (0.125f64 / n as f64).sqrt();
        assert!((mean - 0.5).abs() < 4.0 * se_mean);
        // Fourth central moment of arcsine(0,1) is 3/128.
        let se_var = ((3.0 / 128.0 - 1.0 / 64.0) / n as f64).sqrt();
        assert!((var - 0.125).abs() < 4.0 * se_var);
    }

    #[test]
    fn arcsine_weights_are_reciprocal_density() {
        let set = sample_arcsine(3, 100, 1).unwrap();
        for i in 0..set.len() {
            let y = set.point(i);
            assert!((set.weights[i] * arcsine_density(y) - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn constants_space_gives_uniform_unit_weights() {
        let set = sample_optimal(&total_degree_set(2, 0), 500, 3).unwrap();
        assert!(set.weights.iter().all(|&w| w == 1.0));
        let mean = set.points.iter().sum::<f64>() / set.points.len() as f64;
        assert!((mean - 0.5).abs() < 0.03);
    }

    #[test]
    fn optimal_weight_examples() {
        assert_eq!(optimal_weight(&total_degree_set(3, 0), &[0.2, 0.4, 0.9]).unwrap(), 1.0);
        assert!((optimal_weight(&total_degree_set(1, 1), &[0.5]).unwrap() - 2.0).abs() < 1e-14);
    }

    #[test]
    fn optimal_samples_satisfy_weight_identity() {
        let space = total_degree_set(2, 3);
        let set = sample_optimal(&space, 1000, 2).unwrap();
        let basis = TensorLegendreBasis::from_set(&space);
        for i in 0..set.len() {
            let s: f64 = basis.eval_all(set.point(i)).unwrap().iter().map(|v| v * v).sum();
            assert!((set.weights[i] * s / basis.len() as f64 - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn optimal_samples_are_reproducible() {
        let space = total_degree_set(2, 4);
        let a = sample_optimal(&space, 300, 77).unwrap();
        let b = sample_optimal(&space, 300, 77).unwrap();
        let c = sample_optimal(&space, 300, 78).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.points, c.points);
    }

    #[test]
    fn optimal_density_goodness_of_fit() {
        let space = total_degree_set(1, 2);
        let n = 100_000;
        let set = sample_optimal(&space, n, 21).unwrap();
        let probs = tabulate_bins(50, 8, |y| univariate_optimal_density(&[0, 1, 2], y));
        assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let stat = chi_square(&histogram(set.points.iter().copied(), 50), &probs);
        let crit = ChiSquared::new(49.0).unwrap().inverse_cdf(0.99);
        assert!(stat < crit, "chi2 = {stat}, crit = {crit}");
    }

    #[test]
    fn rejection_cap_is_reported() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        let (y, k) = sample_legendre_squared(3, &mut rng).unwrap();
        assert!(y > 0.0 && y < 1.0 && k >= 1);
    }

    #[test]
    fn burn_in_examples() {
        assert_eq!(mis_burn_in(1.0, 1).unwrap(), 4);
        assert_eq!(mis_burn_in(0.5, 2).unwrap(), 10);
        assert!(matches!(mis_burn_in(0.0, 2), Err(Error::Config(_))));
        assert!(mis_burn_in(f64::NAN, 2).is_err());
    }

    #[test]
    fn mis_target_equal_to_proposal() {
        let space = total_degree_set(1, 1);
        let out = mis_sample(&space, 50, &SamplingSpec::optimal(space.clone()), None, 4).unwrap();
        assert!((out.g - 1.0).abs() < 1e-12);
        assert_eq!(out.burn_in, mis_burn_in(1.0, 2).unwrap());
    }

    #[test]
    fn stability_examples() {
        let space = total_degree_set(1, 3);
        let r = stability_margin(&space, &|_| 1.0, PNorm::Two, NormEstimator::Quadrature(10)).unwrap();
        assert_eq!(r.margin, 0.0);
        assert!(r.pass);
        assert_eq!(stability_threshold(1, PNorm::Inf), 1.0 / 6.0);
    }

    #[test]
    fn contamination_margin_matches_quadrature() {
        let space = total_degree_set(1, 2);
        let eps = 0.01;
        let target = Sampler::new(SamplingSpec::optimal(space.clone())).unwrap();
        let ratio = move |y: &[f64]| (1.0 - eps) + eps / target.density(y);
        let quad = stability_margin(&space, &ratio, PNorm::One, NormEstimator::Quadrature(40)).unwrap();
        let mc = stability_margin(
            &space,
            &ratio,
            PNorm::One,
            NormEstimator::MonteCarlo {
                samples: 200_000,
                seed: 1,
            },
        )
        .unwrap();
        assert!((quad.margin - mc.margin).abs() < 0.02 * quad.margin, "{quad:?} {mc:?}");
    }

    #[test]
    fn density_bounds_examples() {
        let c = density_bounds_check(&total_degree_set(2, 0), 101).unwrap();
        assert!((c.inf_density - 1.0).abs() < 1e-14);
        assert!(c.sup_ratio <= (PI / 2.0).powi(2) + 1e-12);
        let b = density_bounds_check(&total_degree_set(1, 10), 10_000).unwrap();
        assert!(b.sup_ratio <= ENVELOPE);
        let b2 = density_bounds_check(&total_degree_set(2, 4), 400).unwrap();
        assert!(b2.inf_density > 0.0 && b2.sup_ratio <= ENVELOPE * ENVELOPE);
        assert!(density_bounds_check(&total_degree_set(4, 1), 3).is_err());
    }

    #[test]
    fn perturbed_density_mixes_uniform() {
        let spec = SamplingSpec::perturbed(SamplingSpec::arcsine(1), 0.25);
        let s = Sampler::new(spec).unwrap();
        let y = [0.3];
        assert!((s.density(&y) - (0.75 * arcsine_density(&y) + 0.25)).abs() < 1e-14);
        assert!(Sampler::new(SamplingSpec::perturbed(SamplingSpec::arcsine(1), 1.0)).is_err());
    }

    #[test]
    fn columnar_round_trip() {
        let set = sample_optimal(&total_degree_set(2, 2), 20, 8).unwrap();
        let text = set.to_columnar();
        assert_eq!(WeightedSampleSet::from_columnar(&text).unwrap(), set);
    }
}
