//! Toolkit for transient editing-group statistics on MediaWiki revision
//! histories: episode segmentation, contention detection, a closed-form
//! group-size distribution with maximum-likelihood fitting, and a
//! detailed-balance simulator converging to the same law.

pub mod contention;
pub mod episodes;
pub mod ingest;
pub mod model;
pub mod montecarlo;
pub mod ngram;
pub mod report;
pub mod scalar;

pub use scalar::Scalar;

/// Default scalar for the pipeline.
pub type Real = f64;

pub type ModelParams = model::ModelParams<Real>;
pub type Pmf = model::Pmf<Real>;
pub type FitReport = model::FitReport<Real>;
pub type SimConfig = montecarlo::SimConfig<Real>;
pub type RateTable = montecarlo::RateTable<Real>;
pub type SweepRow = montecarlo::SweepRow<Real>;

pub type ModelParams32 = model::ModelParams<f32>;
pub type Pmf32 = model::Pmf<f32>;
