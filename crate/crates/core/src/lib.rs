//! Warranty failure-rate analytics.
//!
//! The crate fuses three data sources about a fleet of multi-part products:
//! part-failure records, tele-diagnostic trouble-code (DTC) occurrences and
//! DTC observations made at service visits. A small Bayesian network
//! `F -> I -> S` links failure cycles `F` (Weibull), DTC occurrence cycles `I`
//! and DTC observation cycles `S` (both Gaussian). Its parameters are learned
//! with a random-walk Metropolis-Hastings sampler, future failures of parts
//! whose symptoms were already seen are predicted by inverting the learned
//! dependency, and the refitted Weibull laws drive failure forecasts and the
//! choice of a cost-optimal warranty period.
//!
//! Module map:
//!
//! - [`domain`]: event records, windows and per-(part, DTC) dataset assembly
//! - [`simulator`]: synthetic fleets with known ground truth
//! - [`bayesnet`]: priors, likelihood and the sampler target for the network
//! - [`mcmc`]: the Metropolis-Hastings sampler and convergence diagnostics
//! - [`fusion`]: the failure-only, service-record and tele-diagnostic pipelines
//! - [`forecast`]: expected failures over a forecast window
//! - [`warranty`]: warranty cost, its gradient and the optimal period
//! - [`commands`]: the command layer behind the `failcast` binary, with
//!   [`config`], [`io`] and [`report`] owning configuration and file formats
//! - [`par`]: data-parallel helpers with a sequential fallback

pub mod bayesnet;
pub mod commands;
pub mod config;
pub mod domain;
mod error;
pub mod forecast;
pub mod fusion;
pub mod io;
pub mod mcmc;
pub mod par;
pub mod report;
pub mod seed;
pub mod simulator;
pub mod warranty;
pub mod weibull;

pub use error::{Error, ErrorClass, Result};
pub use weibull::WeibullParams;
