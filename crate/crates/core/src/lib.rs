//! Completely positive integrators for the Lindblad master equation.
//!
//! The integrating-factor (Lawson) Runge–Kutta step keeps every stage in
//! Kraus form, so the discrete map is completely positive for any tableau
//! with non-negative coefficients. It comes in a dense form acting on `ρ`
//! and a low-rank form acting on a factor `V` with `ρ = VV†`, where each
//! stage is recompressed by [`truncation::truncate`].

pub mod diagnostics;
pub mod error;
pub mod flow;
pub mod integrators;
pub mod linalg;
pub mod model;
pub mod scenarios;
pub mod simulate;
pub mod tableau;
pub mod truncation;

pub use diagnostics::{choi_matrix, cptp_report, cptp_report_factor, rank_series, CptpReport};
pub use error::{Error, Result};
pub use flow::{FlowMethod, FlowOperator};
pub use integrators::{
    extract_kraus, if_step_dense, if_step_lowrank, kraus_count, normalize_factor, normalize_trace,
    rk_step_dense, KrausList, StepOptions,
};
pub use linalg::ComplexMatrix;
pub use model::{jump_map, lindblad_rhs, LindbladModel};
pub use num_complex::Complex64;
pub use scenarios::{ConvergenceRow, ConvergenceTable, JcParams, MethodSpec, Observable, Reference, Scenario};
pub use simulate::{run_trajectory, EpsilonPolicy, Integrator, State, Stepper};
pub use tableau::{validate_tableau, ButcherTableau, CpValidity};
pub use truncation::{kraus_witness, truncate, LowRankFactor, TruncationPolicy};
