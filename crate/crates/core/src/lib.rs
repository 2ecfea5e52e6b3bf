//! Detection and quantification of context-dependent errors in
//! quantum-circuit outcome counts.
//!
//! A circuit repeated in several contexts (time windows, spectator-qubit
//! activity) yields one pool of outcome counts per context. This crate tests
//! whether those pools share an outcome distribution, controls the
//! family-wise error rate across many circuits and comparisons, and reports
//! effect sizes. It also generates GST circuit lists and simulates a
//! single-qubit drift experiment to exercise the analysis end to end.
//!
//! Numerics are generic over [`scalar::Real`] (`f32` or `f64`); the aliases
//! below fix `f64`, which the analysis pipeline uses.

pub mod chi2;
pub mod counts;
pub mod divergence;
pub mod error;
pub mod gstgen;
pub mod hypothesis;
pub mod multitest;
pub mod pipeline;
pub mod qsim;
pub mod scalar;

pub use counts::{load_report, save_report, CircuitRecord, ContextDataset, OutcomeCounts};
pub use error::{Error, Result};
pub use gstgen::{lgst_circuits, lsgst_circuits, CircuitSpec, GateLabel, GstDesign};
pub use multitest::Strategy;
pub use pipeline::{run_analysis, AnalysisReport, ComparisonPlan, ComparisonReport};
pub use qsim::{run_drift_experiment, CircuitFamily, ErrorModel, SimConfig};
pub use scalar::Real;

pub type TestResult = hypothesis::CircuitTestResult<f64>;
pub type AggregateResult = hypothesis::AggregateTestResult<f64>;
pub type MultiTestOutcome = multitest::MultiTestOutcome<f64>;
pub type CorrectionPlan = multitest::CorrectionPlan<f64>;
pub type QuantificationResult = divergence::QuantificationResult<f64>;
pub type Unitary2 = qsim::Unitary2<f64>;
pub type GateModel = qsim::GateModel<f64>;
