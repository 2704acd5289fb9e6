//! Quasi-likelihood analysis (QLA) toolkit.
//!
//! The crate implements the locally-asymptotically-quadratic (LAQ) random-field
//! machinery used in quasi-likelihood estimation: parameter spaces and scaling
//! schedules, sampled quasi-log-likelihood fields with their localized
//! quantities (Δ, Γ, 𝕐, ℤ, the LAQ remainder), quasi-maximum-likelihood and
//! quasi-Bayesian estimators, three closed-form simulation models, and a set
//! of Monte Carlo probes that check the LAQ conditions and the theorem-level
//! conclusions (large-deviation tails, first-order efficiency, QMLE/QBE
//! equivalence, moment convergence, studentized normality) on those models.
//!
//! All randomness flows through explicit counter-based child streams, so every
//! computation is reproducible and independent of worker scheduling.

pub mod error;
pub mod estimators;
pub mod field;
pub mod limit;
pub mod models;
pub mod prior;
pub mod quad;
pub mod space;
pub mod stream;
pub mod verification;

pub use error::{QlaError, Result};
pub use estimators::{
    qbe, qmle, EstimateRecord, OptimizerSettings, QbeOutcome, QuadratureSettings,
};
pub use field::{FieldSample, LocalChart};
pub use limit::{limit_z, GammaSampler, LimitDraw, LimitLaw, LimitMode};
pub use models::{AnalyticLimits, GammaLimit, ModelKind, ModelSpec, SimulationModel};
pub use prior::Prior;
pub use space::{ParameterSpace, ScalingSchedule};
pub use verification::{
    ConditionFamily, ConditionProfile, GridRow, ProbeContext, ProbeReport, Verdict,
};
