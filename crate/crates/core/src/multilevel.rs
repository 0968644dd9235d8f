//! The non-adaptive multilevel estimator
//! `S_L = Σ_{l=0}^{L} Π_{L−l}(f_l − f_{l−1})`.
//!
//! Space sizes `m_k` and discretizations `n_l` follow geometric sequences in a
//! common log-scale. With the default scale one level step multiplies `n` by
//! `e^{1/(γ+β_s)}`; [`ScheduleOptions::dyadic`] rescales so that `n_l = 2^l`,
//! which lines the schedule up with families whose levels halve a mesh.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::indexsets::{binomial, total_degree_set, DownwardClosedSet};
use crate::lsq::{self, LeastSquaresFit, LeastSquaresProblem, SolveOptions};
use crate::polybasis::TensorLegendreBasis;
use crate::problems::{Evaluation, LevelFamily};
use crate::rng::{mix, RngKey};
use crate::sampling::{self, Sampler, SamplingSpec};

const TIE: f64 = 1e-12;

/// Rates of the approximation, discretization and cost assumptions.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateParams {
    pub alpha: f64,
    pub sigma: f64,
    pub beta_s: f64,
    pub beta_w: f64,
    pub gamma: f64,
    #[serde(default = "one")]
    pub kappa_scale: f64,
}

fn one() -> f64 {
    1.0
}

impl RateParams {
    pub fn new(alpha: f64, sigma: f64, beta_s: f64, beta_w: f64, gamma: f64) -> Result<Self> {
        let p = RateParams {
            alpha,
            sigma,
            beta_s,
            beta_w,
            gamma,
            kappa_scale: 1.0,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn with_kappa_scale(mut self, scale: f64) -> Result<Self> {
        self.kappa_scale = scale;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("alpha", self.alpha),
            ("sigma", self.sigma),
            ("beta_s", self.beta_s),
            ("beta_w", self.beta_w),
            ("gamma", self.gamma),
            ("kappa_scale", self.kappa_scale),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("{name} must be positive and finite, got {v}")));
            }
        }
        if self.beta_w < self.beta_s {
            return Err(Error::Config(format!(
                "beta_w = {} is below beta_s = {}",
                self.beta_w, self.beta_s
            )));
        }
        Ok(())
    }
}

/// Comparison of `γ/β_s` with `σ/α`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RegimeCase {
    /// `γ/β_s < σ/α`.
    A,
    /// `γ/β_s = σ/α`.
    B,
    /// `γ/β_s > σ/α` and `β_w = β_s`.
    CEqual,
    /// `γ/β_s > σ/α` and `β_w > β_s`.
    CStrict,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Regime {
    pub case: RegimeCase,
    pub lambda: f64,
    /// Power of `|log ε|` in the work bound.
    pub t: f64,
    pub delta: f64,
    /// Whether the space sequence is shifted by `M = exp(Lδ)`.
    pub shifted: bool,
}

pub fn classify_regime(params: &RateParams) -> Regime {
    let work_ratio = params.gamma / params.beta_s;
    let approx_ratio = params.sigma / params.alpha;
    let delta = (params.beta_w - params.beta_s) / (params.alpha * (params.gamma + params.beta_s));
    let equal = (work_ratio - approx_ratio).abs() <= TIE * work_ratio.max(approx_ratio);
    if equal || work_ratio < approx_ratio {
        let case = if equal { RegimeCase::B } else { RegimeCase::A };
        let t = if equal { 3.0 + approx_ratio } else { 2.0 };
        return Regime {
            case,
            lambda: approx_ratio,
            t,
            delta,
            shifted: false,
        };
    }
    let theta = params.beta_s / params.beta_w;
    let strict = params.beta_w > params.beta_s * (1.0 + TIE);
    Regime {
        case: if strict { RegimeCase::CStrict } else { RegimeCase::CEqual },
        lambda: theta * work_ratio + (1.0 - theta) * approx_ratio,
        t: if strict { 2.0 } else { 1.0 },
        delta,
        shifted: true,
    }
}

/// Smallest integer level count reaching accuracy `epsilon`.
pub fn choose_levels(params: &RateParams, epsilon: f64) -> Result<usize> {
    choose_levels_scaled(params, epsilon, 1.0)
}

/// As [`choose_levels`] for a schedule whose level step is `level_scale` in log units.
pub fn choose_levels_scaled(params: &RateParams, epsilon: f64, level_scale: f64) -> Result<usize> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::Domain(format!("tolerance {epsilon} outside (0,1)")));
    }
    let regime = classify_regime(params);
    let log_eps = -epsilon.ln();
    let a = params.alpha / (params.sigma + params.alpha);
    let formula = match regime.case {
        RegimeCase::A => log_eps / a,
        RegimeCase::B => solve_case_b(a, epsilon),
        RegimeCase::CEqual | RegimeCase::CStrict => {
            log_eps * (params.gamma + params.beta_s) / params.beta_w
        }
    };
    let l = (formula / level_scale).max(log_eps / level_scale);
    Ok((l - 1e-9).ceil().max(0.0) as usize)
}

/// Positive root of `exp(−aL)(L+1) = ε` beyond the maximum of the left side.
pub fn solve_case_b(a: f64, epsilon: f64) -> f64 {
    let g = |l: f64| (-a * l).exp() * (l + 1.0) - epsilon;
    let mut lo = (1.0 / a - 1.0).max(0.0);
    if g(lo) <= 0.0 {
        return lo;
    }
    let mut hi = lo + 1.0;
    while g(hi) > 0.0 {
        hi *= 2.0;
    }
    while hi - lo > 1e-12 * hi.max(1.0) {
        let mid = 0.5 * (lo + hi);
        if g(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Realizes the space `V_m` of a schedule.
pub trait SpaceBuilder: Sync {
    fn dim(&self) -> usize;

    fn build(&self, m: f64, sigma: f64) -> DownwardClosedSet;
}

/// Smallest total-degree space of sufficient dimension.
#[derive(Clone, Copy, Debug)]
pub struct TotalDegreeBuilder {
    pub dim: usize,
}

impl TotalDegreeBuilder {
    pub fn new(dim: usize) -> Self {
        TotalDegreeBuilder { dim }
    }
}

impl SpaceBuilder for TotalDegreeBuilder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn build(&self, m: f64, sigma: f64) -> DownwardClosedSet {
        let target = (m.powf(sigma) - 1e-9).ceil().max(1.0) as usize;
        let d = self.dim as u64;
        let mut deg = 0u32;
        while (binomial(deg as u64 + d, d) as usize) < target {
            deg += 1;
        }
        total_degree_set(self.dim, deg)
    }
}

/// Total degree `⌈m⌉`, so that `m` is read as a polynomial degree.
#[derive(Clone, Copy, Debug)]
pub struct DegreeBuilder {
    pub dim: usize,
}

impl SpaceBuilder for DegreeBuilder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn build(&self, m: f64, _sigma: f64) -> DownwardClosedSet {
        total_degree_set(self.dim, (m - 1e-9).ceil().max(0.0) as u32)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WorkMode {
    #[default]
    Standard,
    /// Slower space growth `m_k = M·exp(k/(2σ+α))` that budgets for solver cost.
    IncludeSolverCost,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScheduleOptions {
    /// Log-units per level step.
    pub level_scale: f64,
    /// Replaces `kappa_scale·(1−log 2)/(2+2L)` when set.
    pub kappa: Option<f64>,
    pub mode: WorkMode,
    /// Draw one design for the largest space and use prefixes of it on every level.
    pub nested: bool,
}

impl Default for ScheduleOptions {
    fn default() -> Self {
        ScheduleOptions {
            level_scale: 1.0,
            kappa: None,
            mode: WorkMode::Standard,
            nested: false,
        }
    }
}

impl ScheduleOptions {
    /// Scale giving `n_l = 2^l`.
    pub fn dyadic(params: &RateParams) -> Self {
        ScheduleOptions {
            level_scale: (params.gamma + params.beta_s) * std::f64::consts::LN_2,
            ..Default::default()
        }
    }
}

/// `κ = (1 − log 2)/(2 + 2L)`.
pub fn default_kappa(levels: usize) -> f64 {
    (1.0 - std::f64::consts::LN_2) / (2.0 + 2.0 * levels as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MultilevelSchedule {
    pub levels: usize,
    pub shift: f64,
    pub delta: f64,
    pub m: Vec<f64>,
    pub n: Vec<f64>,
    pub sample_counts: Vec<usize>,
    pub spaces: Vec<DownwardClosedSet>,
    pub regime: Regime,
    pub kappa: f64,
    pub options: ScheduleOptions,
    pub params: RateParams,
    /// Spaces whose count overshoots the upper coupling bound `2m_k^σ`.
    pub coupling_overshoot: Vec<usize>,
}

impl MultilevelSchedule {
    pub fn dims(&self) -> Vec<usize> {
        self.spaces.iter().map(|s| s.len()).collect()
    }

    /// Family level used for schedule level `l`: the first with `n_j ≥ n_l`.
    pub fn family_levels(&self, family: &dyn LevelFamily) -> Vec<usize> {
        self.n
            .iter()
            .map(|&nl| {
                let mut j = 0;
                while family.discretization(j) < nl * (1.0 - 1e-9) {
                    j += 1;
                }
                j
            })
            .collect()
    }
}

pub fn build_schedule(
    params: &RateParams,
    levels: usize,
    builder: &dyn SpaceBuilder,
    options: ScheduleOptions,
) -> Result<MultilevelSchedule> {
    params.validate()?;
    if !(options.level_scale.is_finite() && options.level_scale > 0.0) {
        return Err(Error::Config("level scale must be positive".into()));
    }
    let regime = classify_regime(params);
    let s = options.level_scale;
    let shift = if regime.shifted {
        (levels as f64 * s * regime.delta).exp()
    } else {
        1.0
    };
    let space_rate = match options.mode {
        WorkMode::Standard => params.sigma + params.alpha,
        WorkMode::IncludeSolverCost => 2.0 * params.sigma + params.alpha,
    };
    let m: Vec<f64> = (0..=levels).map(|k| shift * (k as f64 * s / space_rate).exp()).collect();
    let n: Vec<f64> = (0..=levels)
        .map(|l| (l as f64 * s / (params.gamma + params.beta_s)).exp())
        .collect();
    let kappa = options.kappa.unwrap_or(params.kappa_scale * default_kappa(levels));
    if !(kappa.is_finite() && kappa > 0.0) {
        return Err(Error::Config(format!("kappa {kappa} must be positive")));
    }
    let mut spaces = Vec::with_capacity(levels + 1);
    let mut sample_counts = Vec::with_capacity(levels + 1);
    let mut coupling_overshoot = Vec::new();
    for (k, &mk) in m.iter().enumerate() {
        let target = mk.powf(params.sigma);
        let space = builder.build(mk, params.sigma);
        let count = lsq::sample_count_for(space.len() as f64, kappa)?;
        if !lsq::within_upper_coupling(target, kappa, count) {
            coupling_overshoot.push(k);
        }
        spaces.push(space);
        sample_counts.push(count);
    }
    Ok(MultilevelSchedule {
        levels,
        shift,
        delta: regime.delta,
        m,
        n,
        sample_counts,
        spaces,
        regime,
        kappa,
        options,
        params: *params,
        coupling_overshoot,
    })
}

/// `|Γ_L|·W(f_0) + Σ_{l≥1} |Γ_{L−l}|·(W(f_l) + W(f_{l−1}))`, with `cost(l)` the
/// work of one call at schedule level `l`.
pub fn work_estimate(schedule: &MultilevelSchedule, cost: impl Fn(usize) -> f64) -> f64 {
    let big_l = schedule.levels;
    (0..=big_l)
        .map(|l| {
            let c = if l == 0 { cost(0) } else { cost(l) + cost(l - 1) };
            schedule.sample_counts[big_l - l] as f64 * c
        })
        .sum()
}

/// Model work of a schedule run on `family`.
pub fn family_work(schedule: &MultilevelSchedule, family: &dyn LevelFamily) -> f64 {
    let map = schedule.family_levels(family);
    work_estimate(schedule, |l| family.nominal_cost(map[l]))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SamplerKind {
    #[default]
    Optimal,
    Arcsine,
    Mis,
}

/// Per-level record of a multilevel run.
#[derive(Clone, Debug, PartialEq)]
pub struct LevelReport {
    pub level: usize,
    pub family_level: usize,
    pub samples: usize,
    pub dim: usize,
    pub observed_cost: f64,
}

#[derive(Clone, Debug)]
pub struct MultilevelEstimate {
    /// `fits[l]` approximates `f_l − f_{l−1}` on `V_{L−l}`.
    pub fits: Vec<LeastSquaresFit>,
    pub schedule: MultilevelSchedule,
    pub work: f64,
    pub conditioned: bool,
    pub levels: Vec<LevelReport>,
    pub wall_time: f64,
}

impl MultilevelEstimate {
    pub fn evaluate(&self, y: &[f64]) -> f64 {
        self.fits.iter().map(|f| f.evaluate(y)).sum()
    }

    pub fn evaluate_many(&self, points: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; points.len() / self.schedule.spaces[0].dim().max(1)];
        for fit in &self.fits {
            for (o, v) in out.iter_mut().zip(fit.evaluate_many(points)) {
                *o += v;
            }
        }
        out
    }
}

/// Difference of the mapped family levels at schedule level `l`.
fn level_difference(family: &dyn LevelFamily, map: &[usize], l: usize, y: &[f64]) -> Result<Evaluation> {
    let j = map[l];
    if l == 0 {
        return family.eval(j, y);
    }
    let jc = map[l - 1];
    if jc + 1 == j {
        return family.eval_difference(j, y);
    }
    let fine = family.eval(j, y)?;
    let coarse = family.eval(jc, y)?;
    Ok(Evaluation {
        value: fine.value - coarse.value,
        cost: fine.cost + coarse.cost,
    })
}

/// Evaluates `g` at every row of `points`, attaching level/point context to failures.
pub fn evaluate_points(
    level: usize,
    dim: usize,
    points: &[f64],
    g: impl Fn(&[f64]) -> Result<Evaluation> + Sync,
) -> Result<(Vec<f64>, f64)> {
    let evals: Vec<Evaluation> = points
        .par_chunks(dim)
        .enumerate()
        .map(|(i, y)| g(y).map_err(|e| Error::at(level, i, e)))
        .collect::<Result<_>>()?;
    let cost = evals.iter().map(|e| e.cost).sum();
    Ok((evals.into_iter().map(|e| e.value).collect(), cost))
}

pub fn run_multilevel(
    family: &dyn LevelFamily,
    schedule: &MultilevelSchedule,
    sampler: SamplerKind,
    seed: u64,
    conditioned: bool,
) -> Result<MultilevelEstimate> {
    run_multilevel_with(family, schedule, sampler, seed, conditioned, SolveOptions::default())
}

pub fn run_multilevel_with(
    family: &dyn LevelFamily,
    schedule: &MultilevelSchedule,
    sampler: SamplerKind,
    seed: u64,
    conditioned: bool,
    solve: SolveOptions,
) -> Result<MultilevelEstimate> {
    let start = Instant::now();
    let dim = family.dim();
    if schedule.spaces[0].dim() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            found: schedule.spaces[0].dim(),
        });
    }
    let big_l = schedule.levels;
    let map = schedule.family_levels(family);
    let nested = schedule.options.nested.then(|| {
        let n = schedule.sample_counts[big_l];
        draw_points(sampler, &schedule.spaces[big_l], dim, n, RngKey::new(seed, 0))
    });
    let nested = nested.transpose()?;
    let mut fits = Vec::with_capacity(big_l + 1);
    let mut levels = Vec::with_capacity(big_l + 1);
    for l in 0..=big_l {
        let k = big_l - l;
        let space = &schedule.spaces[k];
        let count = schedule.sample_counts[k];
        let (points, weights) = match &nested {
            Some((p, w)) => (p[..count * dim].to_vec(), w[..count].to_vec()),
            None => draw_points(sampler, space, dim, count, RngKey::new(seed, l as u64))?,
        };
        let (values, observed_cost) =
            evaluate_points(l, dim, &points, |y| level_difference(family, &map, l, y))?;
        let basis = TensorLegendreBasis::from_set(space);
        let problem = LeastSquaresProblem::new(&basis, &points, &weights, &values)?;
        fits.push(lsq::solve_with(problem, conditioned, solve)?);
        levels.push(LevelReport {
            level: l,
            family_level: map[l],
            samples: count,
            dim: space.len(),
            observed_cost,
        });
    }
    Ok(MultilevelEstimate {
        fits,
        work: work_estimate(schedule, |l| family.nominal_cost(map[l])),
        schedule: schedule.clone(),
        conditioned,
        levels,
        wall_time: start.elapsed().as_secs_f64(),
    })
}

/// `n` points and weights for `space` from the sampler `kind`.
pub fn draw_points(
    kind: SamplerKind,
    space: &DownwardClosedSet,
    dim: usize,
    n: usize,
    key: RngKey,
) -> Result<(Vec<f64>, Vec<f64>)> {
    match kind {
        SamplerKind::Optimal => Sampler::new(SamplingSpec::optimal(space.clone()))?.draw_range(key, 0, n),
        SamplerKind::Arcsine => Sampler::new(SamplingSpec::arcsine(dim))?.draw_range(key, 0, n),
        SamplerKind::Mis => {
            let out = sampling::mis_sample(space, n, &SamplingSpec::arcsine(dim), None, mix(key.seed ^ mix(key.stream)))?;
            Ok((out.samples.points, out.samples.weights))
        }
    }
}
