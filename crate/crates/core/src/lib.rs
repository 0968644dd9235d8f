//! Multilevel weighted least-squares polynomial approximation.
//!
//! Functions are approximated on the unit cube `[0,1]^d` from evaluations of a
//! hierarchy of increasingly accurate evaluators. The crate is organised
//! bottom-up:
//!
//! - [`indexsets`]: multi-indices, downward-closed sets and dyadic blocks
//! - [`polybasis`]: orthonormal shifted Legendre polynomials and quadrature
//! - [`sampling`]: arcsine, optimal and Metropolized samplers
//! - [`lsq`]: weighted least-squares projections with a conditioning check
//! - [`multilevel`]: the non-adaptive multilevel schedule and estimator
//! - [`adaptive`]: profit-driven growth of a space-level index set
//! - [`problems`]: synthetic level families and a 2-D elliptic benchmark
//! - [`harness`]: sweeps, Monte-Carlo errors, rate fits and result files

pub mod adaptive;
pub mod error;
pub mod harness;
pub mod indexsets;
pub mod lsq;
pub mod multilevel;
pub mod polybasis;
pub mod problems;
pub mod rng;
pub mod sampling;

pub use error::{Error, Result};
pub use indexsets::{DownwardClosedSet, MultiIndex};
pub use lsq::{LeastSquaresFit, LeastSquaresProblem};
pub use multilevel::{MultilevelEstimate, MultilevelSchedule, RateParams};
pub use polybasis::TensorLegendreBasis;
pub use problems::LevelFamily;
pub use sampling::{SamplingSpec, WeightedSampleSet};
