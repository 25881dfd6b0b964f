//! Crash impact estimation on freeway detector panels with doubly robust
//! learners, Shapley-based variable selection and matched validation.

pub mod drl;
pub mod error;
pub mod frame;
pub mod ingest;
pub mod learners;
pub mod panel;
pub mod rng;
pub mod selection;
pub mod shapley;
pub mod stats;
pub mod synth;
pub mod validate;

pub use error::{Error, ErrorClass, Result};
pub use frame::FeatureMatrix;
pub use panel::{CrashType, Direction, Panel, PanelRow, Scenario, UnitKey};
