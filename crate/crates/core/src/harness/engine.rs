use std::collections::BTreeMap;
use std::time::Instant;

use rand::Rng as _;
use rayon::prelude::*;

use super::config::{LevelScale, Method, ReferenceRule, RunConfig, SpaceRule, Sweep};
use super::rates::fit_rate;
use super::record::{LevelBlock, Row, RunRecord};
use crate::adaptive::{self, AdaptiveOptions, Budget};
use crate::error::{Error, Result};
use crate::indexsets::total_degree_set;
use crate::lsq::{self, LeastSquaresProblem, SolveOptions};
use crate::multilevel::{
    build_schedule, choose_levels_scaled, draw_points, evaluate_points, run_multilevel, DegreeBuilder, RateParams,
    ScheduleOptions, SpaceBuilder, TotalDegreeBuilder, WorkMode,
};
use crate::polybasis::TensorLegendreBasis;
use crate::problems::LevelFamily;
use crate::rng::{mix, RngKey};

const ERROR_STREAM: u64 = 0x4552_524f;

/// `κ` of a single-level fit, `(1 − log 2)/2`.
pub fn single_level_kappa() -> f64 {
    (1.0 - std::f64::consts::LN_2) / 2.0
}

/// `m` uniform points on `[0,1]^d`, row-major.
pub fn error_points(dim: usize, m: usize, seed: u64) -> Vec<f64> {
    let key = RngKey::new(seed, ERROR_STREAM);
    (0..m)
        .into_par_iter()
        .flat_map_iter(|i| {
            let mut rng = key.rng_for(i as u64);
            (0..dim).map(move |_| rng.gen::<f64>()).collect::<Vec<_>>()
        })
        .collect()
}

/// Reference values at `points` under `rule` for a run whose finest family level is `finest`.
pub fn reference_values(
    family: &dyn LevelFamily,
    rule: ReferenceRule,
    finest: usize,
    points: &[f64],
) -> Result<Vec<f64>> {
    let dim = family.dim();
    let level = match rule {
        ReferenceRule::NextLevel => finest + 1,
        ReferenceRule::FixedLevel(j) => j,
        ReferenceRule::Exact => {
            return points
                .chunks(dim)
                .map(|y| {
                    family
                        .exact(y)
                        .ok_or_else(|| Error::Config(format!("{} has no closed-form limit", family.name())))
                })
                .collect();
        }
    };
    Ok(evaluate_points(level, dim, points, |y| family.eval(level, y))?.0)
}

/// Root mean square of `estimate − reference` and its delta-method standard error.
pub fn mc_error(estimate: &[f64], reference: &[f64]) -> Result<(f64, f64)> {
    if estimate.is_empty() {
        return Err(Error::Precondition("error estimate needs at least one point".into()));
    }
    if estimate.len() != reference.len() {
        return Err(Error::DimensionMismatch {
            expected: reference.len(),
            found: estimate.len(),
        });
    }
    let mut mean = 0.0;
    let mut m2 = 0.0;
    for (j, (e, r)) in estimate.iter().zip(reference).enumerate() {
        let s = (e - r).powi(2);
        let delta = s - mean;
        mean += delta / (j + 1) as f64;
        m2 += delta * (s - mean);
    }
    let n = estimate.len() as f64;
    let error = mean.sqrt();
    if error == 0.0 || n < 2.0 {
        return Ok((error, 0.0));
    }
    let se_sq = (m2 / (n - 1.0) / n).sqrt();
    Ok((error, se_sq / (2.0 * error)))
}

/// Monte-Carlo error of `estimate` against `rule` at `m` uniform points.
pub fn mc_error_of(
    estimate: &(dyn Fn(&[f64]) -> Vec<f64> + Sync),
    family: &dyn LevelFamily,
    rule: ReferenceRule,
    finest: usize,
    m: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    let points = error_points(family.dim(), m, seed);
    let reference = reference_values(family, rule, finest, &points)?;
    mc_error(&estimate(&points), &reference)
}

/// Error points and reference values shared by the rows of one seed.
struct ReferenceCache<'a> {
    family: &'a dyn LevelFamily,
    rule: ReferenceRule,
    points: BTreeMap<u64, Vec<f64>>,
    values: BTreeMap<(u64, usize), Vec<f64>>,
    m: usize,
}

impl<'a> ReferenceCache<'a> {
    fn new(family: &'a dyn LevelFamily, rule: ReferenceRule, m: usize) -> Self {
        ReferenceCache {
            family,
            rule,
            points: BTreeMap::new(),
            values: BTreeMap::new(),
            m,
        }
    }

    fn error(&mut self, seed: u64, finest: usize, estimate: impl Fn(&[f64]) -> Vec<f64>) -> Result<(f64, f64)> {
        let dim = self.family.dim();
        let m = self.m;
        let points = self.points.entry(seed).or_insert_with(|| error_points(dim, m, seed));
        let key = match self.rule {
            ReferenceRule::NextLevel => finest + 1,
            ReferenceRule::FixedLevel(j) => j,
            ReferenceRule::Exact => usize::MAX,
        };
        if !self.values.contains_key(&(seed, key)) {
            let v = reference_values(self.family, self.rule, finest, points)?;
            self.values.insert((seed, key), v);
        }
        mc_error(&estimate(points), &self.values[&(seed, key)])
    }
}

fn level_scale(config: &RunConfig, params: &RateParams) -> f64 {
    match config.level_scale {
        LevelScale::Natural => 1.0,
        LevelScale::Dyadic => ScheduleOptions::dyadic(params).level_scale,
    }
}

pub fn schedule_options(config: &RunConfig, params: &RateParams) -> ScheduleOptions {
    ScheduleOptions {
        level_scale: level_scale(config, params),
        kappa: None,
        mode: if config.include_solver_cost {
            WorkMode::IncludeSolverCost
        } else {
            WorkMode::Standard
        },
        nested: config.nested,
    }
}

pub fn space_builder(config: &RunConfig) -> Box<dyn SpaceBuilder> {
    let dim = config.problem.dim();
    match config.space {
        SpaceRule::Dimension => Box::new(TotalDegreeBuilder::new(dim)),
        SpaceRule::Degree => Box::new(DegreeBuilder { dim }),
    }
}

/// Runs every sweep point for every seed and collects the rows sorted by work.
pub fn run_sweep(config: &RunConfig) -> Result<RunRecord> {
    config.validate()?;
    let family = config.problem.build()?;
    let rows = match config.method {
        Method::Sl => run_single_level(config, family.as_ref())?,
        Method::Ml | Method::MlConditioned => run_ml(config, family.as_ref())?,
        Method::Adaptive => run_adaptive_sweep(config, family.as_ref())?,
    };
    let points: Vec<(f64, f64)> = rows.iter().map(|r| (r.work, r.error)).collect();
    let fitted = fit_rate(&points, None).ok();
    let record = RunRecord::new(config.clone(), rows, fitted);
    if let Some(path) = &config.output {
        record.emit(path)?;
    }
    Ok(record)
}

fn run_ml(config: &RunConfig, family: &dyn LevelFamily) -> Result<Vec<Row>> {
    let params = config.rate_params()?;
    let opts = schedule_options(config, &params);
    let levels: Vec<usize> = match &config.sweep {
        Sweep::Levels(v) => v.clone(),
        Sweep::Tolerances(t) => t
            .iter()
            .map(|&e| choose_levels_scaled(&params, e, opts.level_scale))
            .collect::<Result<_>>()?,
        _ => unreachable!("validated"),
    };
    let conditioned = config.method == Method::MlConditioned;
    let builder = space_builder(config);
    let mut cache = ReferenceCache::new(family, config.reference, config.mc_samples);
    let mut rows = Vec::new();
    for &seed in &config.seeds {
        for &big_l in &levels {
            let schedule = build_schedule(&params, big_l, builder.as_ref(), opts)?;
            let est = run_multilevel(family, &schedule, config.sampler, seed, conditioned)?;
            let finest = est.levels.last().map_or(0, |r| r.family_level);
            let (error, error_se) = cache.error(seed, finest, |p| est.evaluate_many(p))?;
            let blocks = est
                .levels
                .iter()
                .zip(&est.fits)
                .map(|(r, f)| LevelBlock {
                    samples: r.samples,
                    dim: r.dim,
                    deviation: f.gramian_deviation,
                    zeroed: f.conditioned_zeroed,
                })
                .collect();
            rows.push(Row {
                level: big_l,
                work: est.work,
                wall_time_s: est.wall_time,
                error,
                error_se,
                seed,
                blocks,
            });
        }
    }
    Ok(rows)
}

/// One weighted fit of `f_level` on the total-degree space of `degree`.
pub fn single_level_fit(
    config: &RunConfig,
    family: &dyn LevelFamily,
    level: usize,
    degree: u32,
    seed: u64,
) -> Result<(lsq::LeastSquaresFit, usize, f64)> {
    let dim = family.dim();
    let space = total_degree_set(dim, degree);
    let count = lsq::sample_count_for(space.len() as f64, config.kappa_scale * single_level_kappa())?;
    let key = RngKey::new(seed, mix(((level as u64) << 32) | degree as u64));
    let (points, weights) = draw_points(config.sampler, &space, dim, count, key)?;
    let (values, _) = evaluate_points(level, dim, &points, |y| family.eval(level, y))?;
    let basis = TensorLegendreBasis::from_set(&space);
    let problem = LeastSquaresProblem::new(&basis, &points, &weights, &values)?;
    let fit = lsq::solve_with(problem, false, SolveOptions::default())?;
    Ok((fit, count, count as f64 * family.nominal_cost(level)))
}

/// Rows for every `(level, degree)` pair; the envelope is left to post-processing.
pub fn run_single_level(config: &RunConfig, family: &dyn LevelFamily) -> Result<Vec<Row>> {
    let Sweep::Grid { levels, degrees } = &config.sweep else {
        return Err(Error::Config("single-level runs need a grid sweep".into()));
    };
    let mut cache = ReferenceCache::new(family, config.reference, config.mc_samples);
    let mut rows = Vec::new();
    for &seed in &config.seeds {
        for &level in levels {
            for &degree in degrees {
                let start = Instant::now();
                let (fit, samples, work) = single_level_fit(config, family, level, degree, seed)?;
                let wall = start.elapsed().as_secs_f64();
                let (error, error_se) = cache.error(seed, level, |p| fit.evaluate_many(p))?;
                rows.push(Row {
                    level,
                    work,
                    wall_time_s: wall,
                    error,
                    error_se,
                    seed,
                    blocks: vec![LevelBlock {
                        samples,
                        dim: fit.coefficients.len(),
                        deviation: fit.gramian_deviation,
                        zeroed: fit.conditioned_zeroed,
                    }],
                });
            }
        }
    }
    Ok(rows)
}

fn run_adaptive_sweep(config: &RunConfig, family: &dyn LevelFamily) -> Result<Vec<Row>> {
    let budgets: Vec<Budget> = match &config.sweep {
        Sweep::Budgets(b) => b.iter().map(|&w| Budget::Work(w)).collect(),
        Sweep::Steps(s) => s.iter().map(|&n| Budget::Steps(n)).collect(),
        _ => unreachable!("validated"),
    };
    let options = AdaptiveOptions::with_kappa_scale(config.kappa_scale);
    let mut cache = ReferenceCache::new(family, config.reference, config.mc_samples);
    let mut rows = Vec::new();
    for &seed in &config.seeds {
        for &budget in &budgets {
            let start = Instant::now();
            let state = adaptive::run_adaptive(family, budget, seed, options)?;
            let wall = start.elapsed().as_secs_f64();
            let finest = state.active_levels().last().copied().unwrap_or(0) as usize;
            let (error, error_se) = cache.error(seed, finest, |p| state.evaluate_many(p))?;
            let blocks = (0..=finest as u32)
                .map(|l| LevelBlock {
                    samples: state.pools.get(&l).map_or(0, |p| p.len()),
                    dim: state.level_dim(l),
                    deviation: state.fits.get(&l).map_or(0.0, |f| f.gramian_deviation),
                    zeroed: false,
                })
                .collect();
            rows.push(Row {
                level: finest,
                work: state.total_work,
                wall_time_s: wall,
                error,
                error_se,
                seed,
                blocks,
            });
        }
    }
    Ok(rows)
}
