//! Control-intensity thresholds `c*` above which stability is guaranteed.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::fixed_points::find_fixed_points;
use super::poly::{char_poly, schur_test};
use super::StabilityError;
use crate::control::{ControlError, ControlledSystem};
use crate::dynamics::{gradient_with_fallback, DifferenceMap};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CStarMethod {
    /// Exact second order condition at a fixed point `K` with `T = K`.
    K2Sharp,
    /// `sum_j |df/dx_j(K)| < 1/(1-c)`.
    DerivativeSum,
    /// Fujiwara root bound over fixed points sampled along `c`.
    Fujiwara,
    /// Global contraction from `|f(x) - K| <= L |x - K|`.
    GlobalLipschitz,
}

impl CStarMethod {
    pub fn tag(self) -> &'static str {
        match self {
            CStarMethod::K2Sharp => "k2_sharp",
            CStarMethod::DerivativeSum => "derivative_sum",
            CStarMethod::Fujiwara => "fujiwara",
            CStarMethod::GlobalLipschitz => "global_lipschitz",
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CStarInputs {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub point: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub partials: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lipschitz: Option<f64>,
    /// Sampled supremum of `max_i |df/dx_i(P_c)|^{1/i}`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fujiwara_a: Option<f64>,
}

/// One `c` sample of the Fujiwara estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FujiwaraSample {
    pub c: f64,
    pub fixed_points: Vec<f64>,
    /// `None` when no fixed point was found in the interval at this `c`.
    pub value: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CStarEstimate {
    pub value: f64,
    pub method: CStarMethod,
    pub inputs: CStarInputs,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub flags: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub samples: Vec<FujiwaraSample>,
}

impl CStarEstimate {
    fn new(value: f64, method: CStarMethod, inputs: CStarInputs) -> Self {
        Self {
            value,
            method,
            inputs,
            flags: Vec::new(),
            samples: Vec::new(),
        }
    }
}

/// `max{0, 1 - 1/d}`, with `d <= 0` mapping to zero.
fn threshold_from(d: f64) -> f64 {
    if d > 0.0 {
        (1.0 - 1.0 / d).max(0.0)
    } else {
        0.0
    }
}

fn partials_at_fixed_point<M: DifferenceMap + ?Sized>(
    map: &M,
    point: f64,
) -> Result<Vec<f64>, StabilityError> {
    let x = vec![point; map.order()];
    let residual = (map.eval(&x)? - point).abs();
    if !(residual <= 1e-8 * (1.0 + point.abs())) {
        return Err(StabilityError::NotFixedPoint { point, residual });
    }
    let (g, _) = gradient_with_fallback(map, &x, 1e-6 * (1.0 + point.abs()))?;
    Ok(g)
}

/// Second order threshold at a fixed point `K` of `f` with target `T = K`:
/// `1 - 1 / max{|f_y|, |f_x| + f_y}`, clamped at zero.
pub fn cstar_k2_sharp<M: DifferenceMap + ?Sized>(
    map: &M,
    point: f64,
) -> Result<CStarEstimate, StabilityError> {
    if map.order() != 2 {
        return Err(StabilityError::WrongDegree {
            expected: 2,
            got: map.order(),
        });
    }
    let g = partials_at_fixed_point(map, point)?;
    let (fx, fy) = (g[0], g[1]);
    let denominator = fy.abs().max(fx.abs() + fy);
    Ok(CStarEstimate::new(
        threshold_from(denominator),
        CStarMethod::K2Sharp,
        CStarInputs {
            point: Some(point),
            partials: Some(g),
            ..Default::default()
        },
    ))
}

/// `1 - 1 / sum_j |df/dx_j(K)|`, clamped at zero. Valid for any order.
pub fn cstar_derivative_sum<M: DifferenceMap + ?Sized>(
    map: &M,
    point: f64,
) -> Result<CStarEstimate, StabilityError> {
    let g = partials_at_fixed_point(map, point)?;
    let sum: f64 = g.iter().map(|v| v.abs()).sum();
    Ok(CStarEstimate::new(
        threshold_from(sum),
        CStarMethod::DerivativeSum,
        CStarInputs {
            point: Some(point),
            partials: Some(g),
            ..Default::default()
        },
    ))
}

/// Fujiwara-bound threshold `max{0, 1 - 1/(2A)}`.
///
/// The outermost control of `system` supplies the target; its intensity is
/// swept over `c = i / (c_samples + 1)`. At each `c` the fixed points in
/// `interval` are located, and `A` is the largest value of
/// `max_i |df/dx_i(P_c)|^{1/i}` seen, where `f` is the system below the
/// outermost control. This samples a supremum and is flagged as such unless the
/// target is itself a fixed point of `f`.
pub fn cstar_fujiwara(
    system: &ControlledSystem,
    interval: (f64, f64),
    c_samples: usize,
) -> Result<CStarEstimate, StabilityError> {
    let (lo, hi) = interval;
    if !(lo <= hi && lo >= 0.0 && hi.is_finite()) || c_samples == 0 {
        return Err(StabilityError::InvalidArgument(format!(
            "need 0 <= lo <= hi and at least one c sample, got ({lo}, {hi}) with {c_samples}"
        )));
    }
    let inner = system.inner();
    let target = system.outermost().map(|c| c.target()).unwrap_or(0.0);

    let samples: Vec<FujiwaraSample> = (1..=c_samples)
        .into_par_iter()
        .map(|i| -> Result<FujiwaraSample, StabilityError> {
            let c = i as f64 / (c_samples + 1) as f64;
            let sys_c = system.with_outer_intensity(c)?;
            let report = find_fixed_points(&sys_c, Some(hi))?;
            let points: Vec<f64> = report
                .values()
                .into_iter()
                .filter(|p| *p >= lo && *p <= hi)
                .collect();
            let mut value: Option<f64> = None;
            for &p in &points {
                let x = vec![p; inner.order()];
                let (g, _) = gradient_with_fallback(&inner, &x, 1e-6 * (1.0 + p))?;
                let v = g
                    .iter()
                    .enumerate()
                    .map(|(i, d)| d.abs().powf(1.0 / (i + 1) as f64))
                    .fold(0.0, f64::max);
                value = Some(value.map_or(v, |m: f64| m.max(v)));
            }
            Ok(FujiwaraSample {
                c,
                fixed_points: points,
                value,
            })
        })
        .collect::<Result<_, _>>()?;

    let a = samples
        .iter()
        .filter_map(|s| s.value)
        .fold(None, |m: Option<f64>, v| Some(m.map_or(v, |m| m.max(v))));
    let Some(a) = a else {
        return Err(StabilityError::InvalidArgument(format!(
            "no fixed point of the controlled system lies in [{lo}, {hi}] for any sampled c"
        )));
    };
    let mut estimate = CStarEstimate::new(
        threshold_from(2.0 * a),
        CStarMethod::Fujiwara,
        CStarInputs {
            fujiwara_a: Some(a),
            ..Default::default()
        },
    );
    let exact = (inner.eval_diagonal(target)? - target).abs() <= 1e-12 * (1.0 + target);
    if exact {
        estimate.inputs.point = Some(target);
    } else {
        estimate.flags.push("sampled_supremum".to_string());
    }
    let skipped = samples.iter().filter(|s| s.value.is_none()).count();
    if skipped > 0 {
        estimate
            .flags
            .push(format!("skipped_{skipped}_samples_without_fixed_point"));
    }
    estimate.samples = samples;
    Ok(estimate)
}

/// Global threshold `max{0, 1 - 1/L}` for a pair `(K, L)` with
/// `|f(x) - K| <= L max_j |x_j - K|`. When `l` is `None` the map's analytic
/// pair is used, provided it refers to the same `K`.
pub fn cstar_global<M: DifferenceMap + ?Sized>(
    map: &M,
    point: f64,
    l: Option<f64>,
) -> Result<CStarEstimate, StabilityError> {
    let mut flags = Vec::new();
    let l = match l {
        Some(l) => {
            flags.push("supplied_constant".to_string());
            l
        }
        None => match map.analytic_lipschitz() {
            Some(pair) if (pair.k - point).abs() <= 1e-12 * (1.0 + point.abs()) => {
                flags.push("analytic_constant".to_string());
                pair.l
            }
            _ => return Err(StabilityError::NoLipschitz { point }),
        },
    };
    if !(l > 0.0 && l.is_finite()) {
        return Err(StabilityError::InvalidArgument(format!(
            "Lipschitz constant must be positive and finite, got {l}"
        )));
    }
    let mut estimate = CStarEstimate::new(
        threshold_from(l),
        CStarMethod::GlobalLipschitz,
        CStarInputs {
            point: Some(point),
            lipschitz: Some(l),
            ..Default::default()
        },
    );
    estimate.flags = flags;
    Ok(estimate)
}

/// A change of verdict between neighbouring grid intensities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityTransition {
    pub c_lo: f64,
    pub c_hi: f64,
    pub becomes_stable: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdScan {
    /// Smallest intensity past the last unstable-to-stable transition.
    pub threshold: f64,
    pub transitions: Vec<StabilityTransition>,
    /// `(c, stable)`; `None` where no fixed point could be examined.
    pub grid: Vec<(f64, Option<bool>)>,
}

const BISECTION_WIDTH: f64 = 1e-6;

fn stable_at<B>(builder: &B, c: f64, target: Option<f64>) -> Result<Option<bool>, StabilityError>
where
    B: Fn(f64) -> Result<ControlledSystem, ControlError> + Sync,
{
    let system = builder(c)?;
    let point = match target {
        Some(p) => p,
        None => match find_fixed_points(&system, None)?.largest() {
            Some(p) => p,
            None => return Ok(None),
        },
    };
    let poly = match char_poly(&system, point) {
        Ok(p) => p,
        Err(StabilityError::NotFixedPoint { .. }) => return Ok(None),
        Err(e) => return Err(e),
    };
    Ok(Some(schur_test(&poly)?.schur_stable()))
}

/// Smallest stabilizing intensity found empirically.
///
/// Scans `c = i / c_grid` for `i = 0 .. c_grid - 1`, classifies the fixed
/// point (`target_point`, or the largest one found) with the Jury table, and
/// bisects the last unstable-to-stable transition to width `1e-6`. Returns
/// zero when the grid starts stable and never switches from unstable to
/// stable.
pub fn minimal_stabilizing_c<B>(
    builder: B,
    c_grid: usize,
    target_point: Option<f64>,
) -> Result<ThresholdScan, StabilityError>
where
    B: Fn(f64) -> Result<ControlledSystem, ControlError> + Sync,
{
    if c_grid == 0 {
        return Err(StabilityError::InvalidArgument("c_grid must be positive".into()));
    }
    let grid: Vec<(f64, Option<bool>)> = (0..c_grid)
        .into_par_iter()
        .map(|i| {
            let c = i as f64 / c_grid as f64;
            stable_at(&builder, c, target_point).map(|s| (c, s))
        })
        .collect::<Result<_, _>>()?;

    let known: Vec<(f64, bool)> = grid
        .iter()
        .filter_map(|&(c, s)| s.map(|s| (c, s)))
        .collect();
    if !known.iter().any(|&(_, s)| s) {
        return Err(StabilityError::NoStableIntensity);
    }
    let transitions: Vec<StabilityTransition> = known
        .windows(2)
        .filter(|w| w[0].1 != w[1].1)
        .map(|w| StabilityTransition {
            c_lo: w[0].0,
            c_hi: w[1].0,
            becomes_stable: w[1].1,
        })
        .collect();

    let threshold = match transitions.iter().rev().find(|t| t.becomes_stable) {
        None => known.iter().find(|&&(_, s)| s).map(|&(c, _)| c).unwrap_or(0.0),
        Some(t) => {
            let (mut lo, mut hi) = (t.c_lo, t.c_hi);
            while hi - lo > BISECTION_WIDTH {
                let mid = 0.5 * (lo + hi);
                if stable_at(&builder, mid, target_point)? == Some(true) {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            0.5 * (lo + hi)
        }
    };
    Ok(ThresholdScan {
        threshold,
        transitions,
        grid,
    })
}
