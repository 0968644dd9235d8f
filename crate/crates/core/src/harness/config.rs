use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::multilevel::{RateParams, SamplerKind};
use crate::problems::ProblemSpec;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Sl,
    Ml,
    MlConditioned,
    Adaptive,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Sweep {
    Levels(Vec<usize>),
    Tolerances(Vec<f64>),
    /// Adaptive work budgets.
    Budgets(Vec<f64>),
    /// Adaptive step counts.
    Steps(Vec<usize>),
    /// Single-level grid of discretization levels and total degrees.
    Grid { levels: Vec<usize>, degrees: Vec<u32> },
}

impl Sweep {
    pub fn len(&self) -> usize {
        match self {
            Sweep::Levels(v) | Sweep::Steps(v) => v.len(),
            Sweep::Tolerances(v) | Sweep::Budgets(v) => v.len(),
            Sweep::Grid { levels, degrees } => levels.len() * degrees.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Default `σ` for problems without built-in rates.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SigmaMode {
    /// `σ = d`.
    #[default]
    Full,
    /// `σ = d/2`.
    Half,
}

/// Which evaluator the Monte-Carlo error compares against.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReferenceRule {
    /// `f_{L+1}` for a run whose finest level is `L`.
    #[default]
    NextLevel,
    FixedLevel(usize),
    /// The family's closed-form limit.
    Exact,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LevelScale {
    /// One level step is one log-unit of `n^{γ+β_s}`.
    Natural,
    /// `n_l = 2^l`, matching families whose levels halve a mesh.
    #[default]
    Dyadic,
}

/// How a schedule's `m_k` selects a total-degree space.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SpaceRule {
    /// Smallest space of dimension at least `m_k^σ`.
    #[default]
    Dimension,
    /// Total degree `⌈m_k⌉`.
    Degree,
}

fn default_mc() -> usize {
    1000
}

fn one() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub problem: ProblemSpec,
    pub method: Method,
    pub sweep: Sweep,
    #[serde(default)]
    pub sampler: SamplerKind,
    pub seeds: Vec<u64>,
    #[serde(default = "default_mc")]
    pub mc_samples: usize,
    #[serde(default)]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub nested: bool,
    #[serde(default)]
    pub include_solver_cost: bool,
    #[serde(default = "one")]
    pub kappa_scale: f64,
    /// Overrides the rates implied by the problem.
    #[serde(default)]
    pub rates: Option<RateParams>,
    #[serde(default)]
    pub sigma_mode: SigmaMode,
    #[serde(default)]
    pub reference: ReferenceRule,
    #[serde(default)]
    pub level_scale: LevelScale,
    #[serde(default)]
    pub space: SpaceRule,
}

impl RunConfig {
    pub fn new(problem: ProblemSpec, method: Method, sweep: Sweep, seeds: Vec<u64>) -> Self {
        RunConfig {
            problem,
            method,
            sweep,
            sampler: SamplerKind::default(),
            seeds,
            mc_samples: default_mc(),
            output: None,
            nested: false,
            include_solver_cost: false,
            kappa_scale: 1.0,
            rates: None,
            sigma_mode: SigmaMode::default(),
            reference: ReferenceRule::default(),
            level_scale: LevelScale::default(),
            space: SpaceRule::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.sweep.is_empty() {
            return Err(Error::Config("sweep is empty".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("no seeds given".into()));
        }
        if self.mc_samples == 0 {
            return Err(Error::Config("mc_samples must be at least 1".into()));
        }
        if !(self.kappa_scale.is_finite() && self.kappa_scale > 0.0) {
            return Err(Error::Config("kappa_scale must be positive".into()));
        }
        let sweep_ok = match (&self.method, &self.sweep) {
            (Method::Sl, Sweep::Grid { .. }) => true,
            (Method::Ml | Method::MlConditioned, Sweep::Levels(_) | Sweep::Tolerances(_)) => true,
            (Method::Adaptive, Sweep::Budgets(_) | Sweep::Steps(_)) => true,
            _ => false,
        };
        if !sweep_ok {
            return Err(Error::Config(format!("{:?} sweep does not fit method {:?}", self.sweep, self.method)));
        }
        if let Sweep::Tolerances(t) = &self.sweep {
            if let Some(bad) = t.iter().find(|e| !(**e > 0.0 && **e < 1.0)) {
                return Err(Error::Config(format!("tolerance {bad} outside (0,1)")));
            }
        }
        if let Some(r) = &self.rates {
            r.validate()?;
        }
        self.problem.build()?;
        Ok(())
    }

    /// Configured rates, else the problem's own.
    pub fn rate_params(&self) -> Result<RateParams> {
        let base = match (&self.rates, &self.problem) {
            (Some(r), _) => *r,
            (None, ProblemSpec::Synthetic(c)) => RateParams::new(c.alpha, c.sigma, c.beta_s, c.beta_w, c.gamma)?,
            (None, ProblemSpec::Elliptic { dim, .. }) => {
                let d = *dim as f64;
                let sigma = match self.sigma_mode {
                    SigmaMode::Full => d,
                    SigmaMode::Half => d / 2.0,
                };
                RateParams::new(3.0, sigma, 2.0, 2.0, 2.0)?
            }
        };
        base.with_kappa_scale(self.kappa_scale)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let c: RunConfig = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::SyntheticConfig;

    fn synthetic() -> ProblemSpec {
        ProblemSpec::Synthetic(SyntheticConfig::new(1, 3.0, 2.0, 2.0, 2.0, 2.0))
    }

    #[test]
    fn empty_sweep_rejected() {
        let c = RunConfig::new(synthetic(), Method::Ml, Sweep::Levels(vec![]), vec![1]);
        assert!(matches!(c.validate(), Err(Error::Config(_))));
        let c = RunConfig::new(synthetic(), Method::Ml, Sweep::Levels(vec![1]), vec![]);
        assert!(matches!(c.validate(), Err(Error::Config(_))));
        let mut c = RunConfig::new(synthetic(), Method::Ml, Sweep::Levels(vec![1]), vec![1]);
        c.mc_samples = 0;
        assert!(matches!(c.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn method_sweep_pairing() {
        let c = RunConfig::new(synthetic(), Method::Sl, Sweep::Levels(vec![1]), vec![1]);
        assert!(c.validate().is_err());
        let c = RunConfig::new(synthetic(), Method::Adaptive, Sweep::Steps(vec![5]), vec![1]);
        assert!(c.validate().is_ok());
    }

    #[test]
    fn json_defaults_and_round_trip() {
        let text = r#"{"problem":{"name":"elliptic","dim":2},"method":"ml","sweep":{"levels":[1,2]},"seeds":[3],"sigma_mode":"half"}"#;
        let c = RunConfig::from_json(text).unwrap();
        assert_eq!(c.mc_samples, 1000);
        assert_eq!(c.reference, ReferenceRule::NextLevel);
        assert_eq!(c.rate_params().unwrap().sigma, 1.0);
        let back = RunConfig::from_json(&serde_json::to_string(&c).unwrap()).unwrap();
        assert_eq!(back, c);
        assert!(matches!(RunConfig::from_json("{"), Err(Error::Parse(_))));
        assert!(matches!(
            RunConfig::from_json(r#"{"problem":{"name":"elliptic","dim":2},"method":"ml","sweep":{"levels":[1]},"seeds":[1],"typo":1}"#),
            Err(Error::Parse(_))
        ));
    }
}
