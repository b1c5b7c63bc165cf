//! Rate-distortion analysis for layered inference pipelines.
//!
//! A pipeline `X -> Y1 -> Y2 -> T` is modelled over finite alphabets with
//! deterministic layer maps. Distortion is measured at the task output `T`
//! and pulled back to each intermediate feature, after which rate-distortion
//! functions are traced with Blahut-Arimoto alternating minimization.
//!
//! The crate also carries the supporting machinery used to compare coding
//! schemes in practice: Bjontegaard delta metrics and Lagrangian
//! operating-point selection.

pub mod bd;
pub mod distortion;
mod error;
pub mod io;
pub mod pipeline;
pub mod rd;
pub mod theorem;

pub use bd::{
    bd_quality, bd_rate, fit_log_poly, lagrangian_select, BdResult, Cubic, LogPolyFit,
    OperatingPoint, RateQualityCurve, Selection,
};
pub use distortion::{
    check_distortion_magnitude, concat_branch_distortion, expected_distortion, pullback_distortion,
    scale_distortion, DistortionMatrix,
};
pub use error::{Error, Result};
pub use io::{load_pipeline, save_pipeline, RunManifest};
pub use pipeline::{
    compose, pushforward, random_pipeline, validate_pipeline, Alphabet, Branch, DeterministicMap,
    DistortionKind, FiniteDistribution, LayeredPipeline, PipelineSizes, PipelineSpec,
    ValidationReport, Violation,
};
pub use rd::{
    ba_fixed_beta, brute_force_rd, cross_rd_curve, distortion_range, entropy, mutual_information,
    rate_at, solve_rd_curve, trace_cross_curve, trace_rd_curve, Channel, RdCurve, RdPoint,
    SolverConfig, TracedCurve,
};
pub use theorem::{
    check_theorem1, check_theorem2, dpi_check, two_step_channel, verify_theorem1, verify_theorem2,
    verify_two_step_achievability, AchievabilityReport, DpiOutcome, TheoremId, TheoremReport,
    Verdict, Verification,
};
