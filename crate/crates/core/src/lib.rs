//! Capacity planning for search clusters that partition their document collection across
//! `p` index servers behind a single broker.
//!
//! The crate has four parts:
//!
//! * [`model`]: closed-form lower/upper bounds on mean query response time from an open
//!   fork-join queueing model, plus a broker result-cache extension.
//! * [`scenario`]: what-if transformations (faster CPUs or disks, more memory), load sweeps,
//!   SLO-constrained rate search and replica sizing.
//! * [`simulator`]: a discrete-event fork-join simulator used to cross-check the bounds.
//! * [`workload`] and [`statfit`]: query-log characterization that produces model inputs.
//!
//! The analytic layer is generic over [`Real`] (`f32` or `f64`); the aliases below fix it
//! to `f64`, which is what the simulator and the log tools use.

#![forbid(unsafe_code)]

pub mod model;
pub mod regression;
pub mod scalar;
pub mod scenario;
pub mod simulator;
pub mod statfit;
pub mod workload;

pub use scalar::Real;

/// Service demands in `f64` seconds.
pub type ServiceParams64 = model::ServiceParams<f64>;
/// Service demands in `f32` seconds.
pub type ServiceParams32 = model::ServiceParams<f32>;
pub type Workload64 = model::Workload<f64>;
pub type CacheParams64 = model::CacheParams<f64>;
pub type ModelReport64 = model::ModelReport<f64>;
pub type ModelReport32 = model::ModelReport<f32>;
pub type LinearFit64 = regression::LinearFit<f64>;
pub type ParamTable64 = scenario::ParamTable<f64>;
pub type ScalingSpec64 = scenario::ScalingSpec<f64>;
pub type SloSpec64 = scenario::SloSpec<f64>;
pub type SweepResult64 = scenario::SweepResult<f64>;
pub type ZipfFit64 = statfit::ZipfFit<f64>;
