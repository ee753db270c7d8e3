use serde::{Deserialize, Serialize};

use super::StabilityError;
use crate::dynamics::DifferenceMap;

/// Number of uniform subintervals scanned for sign changes.
pub const FIXED_POINT_GRID: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixedPoint {
    pub value: f64,
    /// `|P - g(P, ..., P)|`
    pub residual: f64,
    pub bracket: (f64, f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixedPointReport {
    pub points: Vec<FixedPoint>,
    pub search_bound: f64,
}

impl FixedPointReport {
    pub fn largest(&self) -> Option<f64> {
        self.points.last().map(|p| p.value)
    }

    pub fn values(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.value).collect()
    }
}

/// Diagonal fixed points `P = g(P, ..., P)` in `[0, B]`.
///
/// `B` is `search_bound` when given, otherwise the map's diagonal bound (for a
/// controlled system this is `max(T, M)` over its controls). Sign changes of
/// `x - g(x, ..., x)` on a uniform grid are bisected to width
/// `1e-13 (1 + B)`. Grid points where the residual is exactly zero are
/// reported as they are. Tangential roots between grid points are missed.
pub fn find_fixed_points<M: DifferenceMap + ?Sized>(
    system: &M,
    search_bound: Option<f64>,
) -> Result<FixedPointReport, StabilityError> {
    let bound = match search_bound.or_else(|| system.diagonal_bound()) {
        Some(b) if b >= 0.0 && b.is_finite() => b,
        Some(b) => {
            return Err(StabilityError::InvalidArgument(format!(
                "search bound must be nonnegative and finite, got {b}"
            )))
        }
        None => return Err(StabilityError::NoSearchBound),
    };
    let residual = |x: f64| -> Result<f64, StabilityError> { Ok(x - system.eval_diagonal(x)?) };

    let mut points = Vec::new();
    if bound == 0.0 {
        let r = residual(0.0)?;
        if r == 0.0 {
            points.push(FixedPoint {
                value: 0.0,
                residual: 0.0,
                bracket: (0.0, 0.0),
            });
        }
        return Ok(FixedPointReport {
            points,
            search_bound: bound,
        });
    }

    let width = 1e-13 * (1.0 + bound);
    let grid = |i: usize| bound * i as f64 / FIXED_POINT_GRID as f64;
    let mut prev_x = 0.0;
    let mut prev_r = residual(0.0)?;
    if prev_r == 0.0 {
        points.push(FixedPoint {
            value: 0.0,
            residual: 0.0,
            bracket: (0.0, 0.0),
        });
    }
    for i in 1..=FIXED_POINT_GRID {
        let x = grid(i);
        let r = residual(x)?;
        if r == 0.0 {
            points.push(FixedPoint {
                value: x,
                residual: 0.0,
                bracket: (x, x),
            });
        } else if prev_r != 0.0 && (prev_r < 0.0) != (r < 0.0) {
            points.push(bisect(system, prev_x, prev_r, x, width)?);
        }
        prev_x = x;
        prev_r = r;
    }
    points.sort_by(|a, b| a.value.total_cmp(&b.value));
    Ok(FixedPointReport {
        points,
        search_bound: bound,
    })
}

fn bisect<M: DifferenceMap + ?Sized>(
    system: &M,
    mut lo: f64,
    r_lo: f64,
    mut hi: f64,
    width: f64,
) -> Result<FixedPoint, StabilityError> {
    let bracket = (lo, hi);
    let lo_negative = r_lo < 0.0;
    while hi - lo > width {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let r = mid - system.eval_diagonal(mid)?;
        if r == 0.0 {
            lo = mid;
            hi = mid;
            break;
        }
        if (r < 0.0) == lo_negative {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let value = 0.5 * (lo + hi);
    let residual = (value - system.eval_diagonal(value)?).abs();
    Ok(FixedPoint {
        value,
        residual,
        bracket,
    })
}
