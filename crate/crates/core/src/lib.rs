//! Bias-aware evaluation of overlapping, staggered policy rollouts on
//! firm-year panels.
//!
//! The crate covers the whole pipeline: ingesting and preparing long-format
//! panels ([`panel`]), deriving clean treated/control designs from a registry
//! of market launches ([`registry`]), the shared fixed-effects and
//! least-squares core ([`fe`]), TWFE difference-in-differences and event
//! studies ([`did`]), group-time ATTs for staggered adoption ([`csdid`]), the
//! averaged-control artificial counterfactual ([`arco`]), a seeded synthetic
//! panel generator with known ground truth ([`simulate`]), and report export
//! plus the batch replication run ([`report`], [`pipeline`]).

pub mod arco;
pub mod csdid;
pub mod did;
pub mod error;
pub mod fe;
pub mod panel;
pub mod pipeline;
pub mod registry;
pub mod report;
pub mod simulate;
mod stats;

pub use error::{Error, ErrorCategory, Result};
pub use panel::{Covariate, Observation, Outcome, PanelDataset};
pub use registry::{Exposure, MarketEvent, MarketKind, PanelSpec, TreatmentRegistry};
