//! Monte Carlo probes for the LAQ conditions and theorem conclusions.

mod probes;
mod profile;
mod report;
pub mod stats;

pub use probes::*;
pub use profile::{ConditionFamily, ConditionProfile};
pub use report::{GridRow, ProbeContext, ProbeReport, Verdict};
