//! Multi-tone Molmer-Sorensen gate design and simulation.

pub mod analytic;
pub mod design;
pub mod error;
mod nullspace;
pub mod oracle;
pub mod scan;
pub mod special;
pub mod verify;

pub use analytic::{ErrorSetting, PopulationQuad, RadialForm, TrajectoryPoint};
pub use design::{Family, GateDesign, ToneIndexSet, ValidationReport, Violation};
pub use error::{Error, Result};
