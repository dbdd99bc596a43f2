//! Permutation detection of expressed regions on tiled microarrays, and a
//! replicate-resampling harness measuring how consistently regions are
//! called within and between same-sample arrays.
//!
//! Pipeline: [`dataset`] parsing, [`normalize`], [`detect`] (window scores,
//! GC-binned permutation null, empirical p/q-values, region merging),
//! [`areas`] discretization, [`resample`] pseudo-array batches and
//! [`metrics`] consistency summaries. [`synth`] generates datasets with
//! known expressed segments.

pub mod areas;
pub mod cli;
pub mod dataset;
pub mod detect;
pub mod error;
pub mod metrics;
pub mod normalize;
pub mod plot;
pub mod resample;
pub mod rng;
pub mod synth;

pub use error::{Error, Result};
