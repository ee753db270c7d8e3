//! Fixed points of controlled systems, Schur tests of their linearization,
//! and the stabilizing thresholds `c*`.

mod cstar;
mod fixed_points;
mod lipschitz;
mod poly;
mod report;

use thiserror::Error;

use crate::control::ControlError;
use crate::dynamics::MapError;

pub use cstar::{
    cstar_derivative_sum, cstar_fujiwara, cstar_global, cstar_k2_sharp, minimal_stabilizing_c,
    CStarEstimate, CStarInputs, CStarMethod, FujiwaraSample, StabilityTransition, ThresholdScan,
};
pub use fixed_points::{find_fixed_points, FixedPoint, FixedPointReport, FIXED_POINT_GRID};
pub use lipschitz::{lipschitz_from_bounded, lipschitz_grid_lower, BoundedLipschitz};
pub use poly::{
    char_poly, durand_kerner, jury_table, jury_test_k2, root_oracle, schur_test, CharPoly, Roots,
    SchurOutcome, SchurTest, StabilityVerdict,
};
pub use report::{PointAnalysis, StabilityReport};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StabilityError {
    #[error("no search bound given and the map has no diagonal bound")]
    NoSearchBound,
    #[error("{point} is not a fixed point (residual {residual:e})")]
    NotFixedPoint { point: f64, residual: f64 },
    #[error("expected a polynomial of degree {expected}, got {got}")]
    WrongDegree { expected: usize, got: usize },
    #[error("root iteration did not converge after {sweeps} sweeps")]
    NonConvergence { sweeps: usize },
    #[error("no Lipschitz constant supplied and none known for K = {point}")]
    NoLipschitz { point: f64 },
    #[error("map carries no global bound")]
    MissingGlobalBound,
    #[error("no stabilizing intensity found on the grid")]
    NoStableIntensity,
    #[error("{0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Map(#[from] MapError),
    #[error(transparent)]
    Control(#[from] ControlError),
}
