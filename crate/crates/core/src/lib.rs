//! Target oriented control of higher-order difference equations
//! `u_{n+1} = f(u_n, ..., u_{n-k+1})`.
//!
//! The controlled map is `c T + (1 - c) f`. This crate parses map
//! expressions, iterates orbits, composes controls, locates fixed points,
//! tests their linear stability and estimates the smallest stabilizing
//! intensity `c*`.

// `!(x <= tol)` is used on purpose so that NaN fails the check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod control;
pub mod dynamics;
pub mod expr;
pub mod format;
pub mod scan;
pub mod stability;

pub use control::{
    apply_control, compose_controls, proportional_feedback, solve_target, targeting_pipeline,
    ControlError, ControlledSystem, TargetControl, TargetPreference, TargetingPlan,
};
pub use dynamics::{
    builtin_exp2, builtin_pielou, builtin_ricker, from_expression, iterate, DifferenceMap,
    GradientSource, LipschitzPair, MapError, MapModel, Orbit, OrbitError, SeedError,
};
pub use expr::{parse_expr, ExprAst, ExprError};
pub use format::fmt_real;
pub use scan::{
    export_scan, run_scan, verify_contraction, ConvergenceCheck, ExportFormat, ScanConfig,
    ScanError, ScanResult, ScanRow,
};
pub use stability::{
    char_poly, find_fixed_points, schur_test, CStarEstimate, CStarMethod, CharPoly,
    SchurOutcome, StabilityError, StabilityReport, StabilityVerdict,
};
