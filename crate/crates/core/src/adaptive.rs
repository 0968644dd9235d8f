//! Adaptive multilevel approximation.
//!
//! A downward-closed set `I ⊂ ℕ^{d+1}` of space-level indices `(k, l)` is grown
//! one index at a time. The slice `I_l = {k : (k, l) ∈ I}` selects the dyadic
//! blocks spanning the space for level `l`, and `Δ_l` is the projection of
//! `f_l − f_{l−1}` onto it. All levels sample from the arcsine density, whose
//! weight does not depend on the space, so points are kept as spaces grow.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::indexsets::{block_indices, block_size, block_union, DownwardClosedSet, MultiIndex};
use crate::lsq::{self, LeastSquaresFit, LeastSquaresProblem, SolveOptions};
use crate::multilevel::evaluate_points;
use crate::polybasis::TensorLegendreBasis;
use crate::problems::LevelFamily;
use crate::rng::RngKey;
use crate::sampling::{Sampler, SamplingSpec};

/// Floor applied to a zero work increment.
pub const WORK_FLOOR: f64 = 1e-12;

/// `(1 − log 2)/4`.
pub fn default_kappa() -> f64 {
    (1.0 - std::f64::consts::LN_2) / 4.0
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Budget {
    Steps(usize),
    Work(f64),
}

impl Budget {
    fn validate(&self) -> Result<()> {
        match *self {
            Budget::Steps(0) => Err(Error::Config("step budget must be positive".into())),
            Budget::Work(w) if !(w.is_finite() && w > 0.0) => {
                Err(Error::Config(format!("work budget {w} must be positive")))
            }
            _ => Ok(()),
        }
    }
}

/// Evaluated arcsine samples of `f_l − f_{l−1}`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Pool {
    pub points: Vec<f64>,
    pub weights: Vec<f64>,
    pub values: Vec<f64>,
    /// Total observed cost of producing `values`.
    pub cost: f64,
}

impl Pool {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AdaptiveState {
    pub dim: usize,
    pub seed: u64,
    pub kappa: f64,
    pub index_set: DownwardClosedSet,
    pub pools: BTreeMap<u32, Pool>,
    /// Work per evaluation of `f_l − f_{l−1}`.
    pub work_rates: BTreeMap<u32, f64>,
    pub total_work: f64,
    pub steps: usize,
    /// Number of family evaluations per level; equals the pool size since values are never recomputed.
    pub evaluations: BTreeMap<u32, usize>,
    #[serde(skip)]
    pub fits: BTreeMap<u32, LeastSquaresFit>,
}

/// Outcome of one step.
#[derive(Clone, Debug, PartialEq)]
pub struct StepReport {
    pub index: MultiIndex,
    pub gain: f64,
    pub work_increment: f64,
    pub new_samples: usize,
}

impl AdaptiveState {
    pub fn new(dim: usize, seed: u64, kappa: f64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Config("parameter dimension must be positive".into()));
        }
        if !(kappa.is_finite() && kappa > 0.0) {
            return Err(Error::Config(format!("kappa {kappa} must be positive")));
        }
        Ok(AdaptiveState {
            dim,
            seed,
            kappa,
            index_set: DownwardClosedSet::empty(dim + 1),
            pools: BTreeMap::new(),
            work_rates: BTreeMap::new(),
            total_work: 0.0,
            steps: 0,
            evaluations: BTreeMap::new(),
            fits: BTreeMap::new(),
        })
    }

    /// `{k : (k, level) ∈ I}`.
    pub fn slice(&self, level: u32) -> Vec<MultiIndex> {
        self.index_set
            .iter()
            .filter_map(|idx| {
                let (k, l) = idx.split_last();
                (l == level).then_some(k)
            })
            .collect()
    }

    pub fn active_levels(&self) -> Vec<u32> {
        let mut levels: Vec<u32> = self.index_set.iter().map(|i| i.split_last().1).collect();
        levels.sort_unstable();
        levels.dedup();
        levels
    }

    /// Dimension of the level space, the sum of its block sizes.
    pub fn level_dim(&self, level: u32) -> usize {
        self.slice(level).iter().map(block_size).sum()
    }

    pub fn level_basis(&self, level: u32) -> Result<TensorLegendreBasis> {
        let blocks = self.slice(level);
        TensorLegendreBasis::new(self.dim, block_union(&blocks).into_iter().collect())
    }

    pub fn evaluate(&self, y: &[f64]) -> f64 {
        self.fits.values().map(|f| f.evaluate(y)).sum()
    }

    pub fn evaluate_many(&self, points: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; points.len() / self.dim];
        for fit in self.fits.values() {
            for (o, v) in out.iter_mut().zip(fit.evaluate_many(points)) {
                *o += v;
            }
        }
        out
    }

    /// Samples required for a level space of dimension `dim`; zero for an empty space.
    pub fn required_samples(&self, dim: usize) -> Result<usize> {
        if dim == 0 {
            return Ok(0);
        }
        lsq::sample_count_for(dim as f64, self.kappa)
    }

    /// Mean block-coefficient norm over the neighbors of `candidate` in `I`;
    /// infinite when there are none.
    pub fn gain(&self, candidate: &MultiIndex) -> Result<f64> {
        if !self.index_set.is_admissible(candidate) {
            return Err(Error::Precondition(format!("{candidate:?} is not admissible")));
        }
        let nbrs = self.index_set.neighbors(candidate);
        if nbrs.is_empty() {
            return Ok(f64::INFINITY);
        }
        let total: f64 = nbrs
            .iter()
            .map(|n| {
                let (k, l) = n.split_last();
                self.fits.get(&l).map_or(0.0, |fit| block_norm(fit, &k))
            })
            .sum();
        Ok(total / nbrs.len() as f64)
    }

    /// `rate_l·(N(I_l ∪ {k}) − N(I_l))`.
    pub fn work_increment(&self, candidate: &MultiIndex, family: &dyn LevelFamily) -> Result<f64> {
        let (k, l) = candidate.split_last();
        let before = self.level_dim(l);
        let needed = self.required_samples(before + block_size(&k))?;
        let have = self.pools.get(&l).map_or(0, Pool::len).max(self.required_samples(before)?);
        Ok(increment_cost(self.rate(l, family), have, needed))
    }

    /// Observed average once samples exist, else the family's cost model.
    pub fn rate(&self, level: u32, family: &dyn LevelFamily) -> f64 {
        self.work_rates
            .get(&level)
            .copied()
            .unwrap_or_else(|| family.difference_cost(level as usize))
    }

    /// Admissible candidate of largest profit; ties go to the smallest `(l, k)`.
    pub fn select(&self, family: &dyn LevelFamily) -> Result<Option<(MultiIndex, f64, f64)>> {
        let mut best: Option<(MultiIndex, f64, f64, f64)> = None;
        let mut candidates: Vec<&MultiIndex> = self.index_set.admissible().iter().collect();
        candidates.sort_by_key(|c| {
            let (k, l) = c.split_last();
            (l, k)
        });
        for c in candidates {
            let gain = self.gain(c)?;
            let work = self.work_increment(c, family)?;
            let profit = gain / work.max(WORK_FLOOR);
            if best.as_ref().map_or(true, |b| profit > b.3) {
                best = Some((c.clone(), gain, work, profit));
            }
        }
        Ok(best.map(|(c, g, w, _)| (c, g, w)))
    }

    /// Adds the most profitable candidate, tops up its pool and refits its level.
    pub fn step(&mut self, family: &dyn LevelFamily, solve: SolveOptions) -> Result<StepReport> {
        if family.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: family.dim(),
            });
        }
        let Some((index, gain, work_increment)) = self.select(family)? else {
            return Err(Error::Internal("no admissible candidate".into()));
        };
        let (k, l) = index.split_last();
        let needed = self.required_samples(self.level_dim(l) + block_size(&k))?;
        self.index_set.insert(index.clone())?;
        let new_samples = self.extend_pool(l, needed, family)?;
        self.refit(l, solve)?;
        self.steps += 1;
        Ok(StepReport {
            index,
            gain,
            work_increment,
            new_samples,
        })
    }

    fn extend_pool(&mut self, level: u32, needed: usize, family: &dyn LevelFamily) -> Result<usize> {
        let have = self.pools.get(&level).map_or(0, Pool::len);
        if needed <= have {
            return Ok(0);
        }
        let sampler = Sampler::new(SamplingSpec::arcsine(self.dim))?;
        let key = RngKey::new(self.seed, level as u64);
        let (points, weights) = sampler.draw_range(key, have, needed)?;
        let (values, cost) = evaluate_points(level as usize, self.dim, &points, |y| {
            family.eval_difference(level as usize, y)
        })?;
        let pool = self.pools.entry(level).or_default();
        pool.points.extend(points);
        pool.weights.extend(weights);
        pool.values.extend(values);
        pool.cost += cost;
        *self.evaluations.entry(level).or_default() += needed - have;
        self.work_rates.insert(level, pool.cost / pool.len() as f64);
        self.total_work += cost;
        Ok(needed - have)
    }

    fn refit(&mut self, level: u32, solve: SolveOptions) -> Result<()> {
        let basis = self.level_basis(level)?;
        let pool = &self.pools[&level];
        let problem = LeastSquaresProblem::new(&basis, &pool.points, &pool.weights, &pool.values)?;
        let fit = lsq::solve_with(problem, false, solve)?;
        self.fits.insert(level, fit);
        Ok(())
    }

    /// Recomputes the fits after deserialization.
    pub fn restore(&mut self, solve: SolveOptions) -> Result<()> {
        if !crate::indexsets::is_downward_closed(&self.index_set.iter().cloned().collect::<Vec<_>>())? {
            return Err(Error::NotDownwardClosed);
        }
        self.fits.clear();
        for l in self.active_levels() {
            let dim = self.level_dim(l);
            if self.pools.get(&l).map_or(0, Pool::len) < self.required_samples(dim)? {
                return Err(Error::Precondition(format!("pool at level {l} is below its required size")));
            }
            self.refit(l, solve)?;
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str, solve: SolveOptions) -> Result<Self> {
        let mut state: AdaptiveState = serde_json::from_str(text)?;
        state.restore(solve)?;
        Ok(state)
    }
}

/// Work of raising a pool from `have` to `needed` samples at `rate` per sample.
pub fn increment_cost(rate: f64, have: usize, needed: usize) -> f64 {
    rate * needed.saturating_sub(have) as f64
}

/// Euclidean norm of the coefficients of `fit` on block `k`.
pub fn block_norm(fit: &LeastSquaresFit, k: &MultiIndex) -> f64 {
    block_indices(k)
        .iter()
        .map(|eta| fit.coefficient(eta).powi(2))
        .sum::<f64>()
        .sqrt()
}

#[derive(Clone, Copy, Debug)]
pub struct AdaptiveOptions {
    pub kappa: f64,
    pub solve: SolveOptions,
}

impl Default for AdaptiveOptions {
    fn default() -> Self {
        AdaptiveOptions {
            kappa: default_kappa(),
            solve: SolveOptions::default(),
        }
    }
}

impl AdaptiveOptions {
    pub fn with_kappa_scale(scale: f64) -> Self {
        AdaptiveOptions {
            kappa: scale * default_kappa(),
            ..Default::default()
        }
    }
}

pub fn run_adaptive(
    family: &dyn LevelFamily,
    budget: Budget,
    seed: u64,
    options: AdaptiveOptions,
) -> Result<AdaptiveState> {
    run_adaptive_observed(family, budget, seed, options, |_, _| true)
}

/// As [`run_adaptive`], calling `observe` after every step; returning false stops the run.
pub fn run_adaptive_observed(
    family: &dyn LevelFamily,
    budget: Budget,
    seed: u64,
    options: AdaptiveOptions,
    mut observe: impl FnMut(&AdaptiveState, &StepReport) -> bool,
) -> Result<AdaptiveState> {
    budget.validate()?;
    let mut state = AdaptiveState::new(family.dim(), seed, options.kappa)?;
    resume(&mut state, family, budget, options.solve, &mut observe)?;
    Ok(state)
}

/// Continues `state` until `budget` is spent.
pub fn resume(
    state: &mut AdaptiveState,
    family: &dyn LevelFamily,
    budget: Budget,
    solve: SolveOptions,
    observe: &mut dyn FnMut(&AdaptiveState, &StepReport) -> bool,
) -> Result<()> {
    budget.validate()?;
    let start = state.steps;
    loop {
        let more = match budget {
            Budget::Steps(n) => state.steps - start < n,
            Budget::Work(w) => state.total_work < w,
        };
        if !more {
            return Ok(());
        }
        let report = state.step(family, solve)?;
        if !observe(state, &report) {
            return Ok(());
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::indexsets::is_downward_closed;
    use crate::polybasis::{eval_tensor, gauss_rule};
    use crate::problems::{FnFamily, SyntheticConfig, SyntheticFamily};

    fn mi(v: &[u32]) -> MultiIndex {
        MultiIndex::new(v.to_vec())
    }

    #[test]
    fn gain_examples() {
        let mut state = AdaptiveState::new(1, 0, default_kappa()).unwrap();
        assert_eq!(state.gain(&mi(&[0, 0])).unwrap(), f64::INFINITY);
        assert!(matches!(state.gain(&mi(&[1, 0])), Err(Error::Precondition(_))));
        state.index_set.insert(mi(&[0, 0])).unwrap();
        state.index_set.insert(mi(&[1, 0])).unwrap();
        let basis = TensorLegendreBasis::new(1, vec![mi(&[0]), mi(&[1]), mi(&[2])]).unwrap();
        let mut fit = LeastSquaresFit::zero(basis);
        fit.coefficients = vec![1.0, 3.0, 4.0];
        state.fits.insert(0, fit);
        // Block 1 holds exponents 1 and 2; the only neighbor of (2,0) in I is (1,0).
        assert_eq!(state.gain(&mi(&[2, 0])).unwrap(), 5.0);
        state.fits.get_mut(&0).unwrap().coefficients = vec![0.0; 3];
        assert_eq!(state.gain(&mi(&[2, 0])).unwrap(), 0.0);
    }

    #[test]
    fn work_examples() {
        let fam = FnFamily::new(1, 1.0, |_: &[f64]| 0.0);
        let mut state = AdaptiveState::new(1, 0, default_kappa()).unwrap();
        state.work_rates.insert(0, 2.0);
        let before = state.required_samples(0).unwrap();
        let after = state.required_samples(1).unwrap();
        assert_eq!(before, 0);
        assert_eq!(state.work_increment(&mi(&[0, 0]), &fam).unwrap(), 2.0 * after as f64);
        assert_eq!(increment_cost(2.0, 100, 130), 60.0);
        assert_eq!(increment_cost(2.0, 130, 130), 0.0);
        let unseen = state.rate(3, &fam);
        assert_eq!(unseen, fam.difference_cost(3));
    }

    #[test]
    fn observed_rate_update() {
        struct Costly;
        impl LevelFamily for Costly {
            fn dim(&self) -> usize {
                1
            }
            fn name(&self) -> String {
                "costly".into()
            }
            fn eval(&self, _l: usize, _y: &[f64]) -> Result<crate::problems::Evaluation> {
                Ok(crate::problems::Evaluation { value: 1.0, cost: 2.5 })
            }
            fn nominal_cost(&self, _l: usize) -> f64 {
                100.0
            }
        }
        let mut state = AdaptiveState::new(1, 3, default_kappa()).unwrap();
        state.index_set.insert(mi(&[0, 0])).unwrap();
        state.extend_pool(0, 10, &Costly).unwrap();
        assert_eq!(state.pools[&0].cost, 25.0);
        assert_eq!(state.work_rates[&0], 2.5);
        assert_eq!(state.total_work, 25.0);
    }

    #[test]
    fn first_step_fits_constants() {
        let fam = FnFamily::new(2, 1.0, |y: &[f64]| 3.0 + y[0]);
        let state = run_adaptive(&fam, Budget::Steps(1), 5, AdaptiveOptions::default()).unwrap();
        assert_eq!(state.index_set.len(), 1);
        let fit = &state.fits[&0];
        assert_eq!(fit.coefficients.len(), 1);
        assert!((fit.coefficients[0] - 3.5).abs() < 0.2);
        assert!(state.pools[&0].len() >= state.required_samples(1).unwrap());
    }

    #[test]
    fn level_independent_family_stays_on_level_zero() {
        let fam = FnFamily::new(2, 2.0, |y: &[f64]| (y[0] + 2.0 * y[1]).exp());
        let mut closed = true;
        let state = run_adaptive_observed(&fam, Budget::Steps(30), 2, AdaptiveOptions::default(), |s, _| {
            closed &= is_downward_closed(&s.index_set.iter().cloned().collect::<Vec<_>>()).unwrap();
            true
        })
        .unwrap();
        assert!(closed);
        let levels: Vec<u32> = state.index_set.iter().map(|i| i.split_last().1).collect();
        assert!(levels.iter().all(|&l| l <= 1));
        let upper = levels.iter().filter(|&&l| l == 1).count();
        assert!(2 * upper < levels.len(), "{upper}");
        for (&l, fit) in &state.fits {
            if l >= 1 {
                assert!(fit.coefficients.iter().all(|&c| c == 0.0));
            }
        }
    }

    #[test]
    fn reproduces_polynomial_in_few_blocks() {
        let f = |y: &[f64]| {
            1.0 + eval_tensor(&mi(&[1, 0]), y).unwrap() - 0.5 * eval_tensor(&mi(&[2, 1]), y).unwrap()
        };
        let fam = FnFamily::new(2, 1.0, f);
        let state = run_adaptive(&fam, Budget::Steps(12), 9, AdaptiveOptions::default()).unwrap();
        let rule = gauss_rule(2, 8);
        let err = rule.integrate(|y| (state.evaluate(y) - f(y)).powi(2)).sqrt();
        assert!(err < 1e-6, "{err}");
    }

    #[test]
    fn deterministic_replay_and_checkpoint() {
        let fam = SyntheticFamily::new(SyntheticConfig::new(2, 3.0, 2.0, 2.0, 2.0, 2.0)).unwrap();
        let a = run_adaptive(&fam, Budget::Steps(20), 11, AdaptiveOptions::default()).unwrap();
        let b = run_adaptive(&fam, Budget::Steps(20), 11, AdaptiveOptions::default()).unwrap();
        assert_eq!(a.index_set, b.index_set);
        assert_eq!(a.fits, b.fits);
        let restored = AdaptiveState::from_json(&a.to_json().unwrap(), SolveOptions::default()).unwrap();
        assert_eq!(restored.fits, a.fits);
        let mut resumed = restored;
        resume(&mut resumed, &fam, Budget::Steps(5), SolveOptions::default(), &mut |_, _| true).unwrap();
        let straight = run_adaptive(&fam, Budget::Steps(25), 11, AdaptiveOptions::default()).unwrap();
        assert_eq!(resumed.index_set, straight.index_set);
        assert_eq!(resumed.total_work, straight.total_work);
    }

    #[test]
    fn stability_and_reuse_hold_each_step() {
        let fam = SyntheticFamily::new(SyntheticConfig::new(2, 3.0, 2.0, 2.0, 2.0, 2.0)).unwrap();
        let mut sizes: BTreeMap<u32, usize> = BTreeMap::new();
        run_adaptive_observed(&fam, Budget::Steps(25), 4, AdaptiveOptions::default(), |s, _| {
            for l in s.active_levels() {
                let n = s.pools[&l].len();
                assert!(n >= sizes.get(&l).copied().unwrap_or(0));
                assert!(s.kappa * n as f64 / (n as f64).ln() >= s.level_dim(l) as f64);
                assert_eq!(s.evaluations[&l], n);
                assert_eq!(s.fits[&l].coefficients.len(), s.level_dim(l));
                sizes.insert(l, n);
            }
            true
        })
        .unwrap();
    }

    #[test]
    fn budgets_validated() {
        let fam = FnFamily::new(1, 1.0, |_: &[f64]| 1.0);
        assert!(run_adaptive(&fam, Budget::Steps(0), 0, AdaptiveOptions::default()).is_err());
        assert!(run_adaptive(&fam, Budget::Work(-1.0), 0, AdaptiveOptions::default()).is_err());
        let s = run_adaptive(&fam, Budget::Work(500.0), 0, AdaptiveOptions::default()).unwrap();
        assert!(s.total_work >= 500.0);
    }
}
