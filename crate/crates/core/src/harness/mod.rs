//! Sweeps over levels, tolerances or budgets, Monte-Carlo error estimation,
//! rate fits and result files.
//!
//! Model work follows the sample counts and the family's cost model; wall time
//! covers evaluations and fits only and is kept out of every fitted rate.

pub mod config;
pub mod engine;
pub mod rates;
pub mod record;

pub use config::{LevelScale, Method, ReferenceRule, RunConfig, SigmaMode, SpaceRule, Sweep};
pub use engine::{mc_error, mc_error_of, run_single_level, run_sweep};
pub use rates::{fit_rate, lower_envelope, work_to_reach, RateFit};
pub use record::{LevelBlock, Row, RunRecord};
