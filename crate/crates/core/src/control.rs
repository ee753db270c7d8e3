//! Target oriented control `u_{n+1} = cT + (1-c) f(u_n, ..., u_{n-k+1})`,
//! composition of controls, and targeting of arbitrary points.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::{
    DifferenceMap, GradientSource, LipschitzPair, MapError, MapModel,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ControlError {
    #[error("control intensity must lie in [0, 1), got {0}")]
    InvalidIntensity(f64),
    #[error("target must be nonnegative and finite, got {0}")]
    InvalidTarget(f64),
    #[error("cannot parse control `{0}` (expected `c=<real>,T=<real>`)")]
    Parse(String),
    #[error("desired point must be positive and finite, got {0}")]
    InvalidPoint(f64),
    #[error("f(K,...,K) is not finite at K = {0}")]
    NonFiniteImage(f64),
    #[error("infeasible targeting request: {0}")]
    Infeasible(String),
    #[error(transparent)]
    Map(#[from] MapError),
}

/// An affine post-transform `phi(y) = cT + (1-c) y` with `0 <= c < 1`, `T >= 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TargetControl {
    c: f64,
    #[serde(rename = "T")]
    t: f64,
}

impl TargetControl {
    pub fn new(c: f64, t: f64) -> Result<Self, ControlError> {
        if !(0.0..1.0).contains(&c) {
            return Err(ControlError::InvalidIntensity(c));
        }
        if !(t >= 0.0 && t.is_finite()) {
            return Err(ControlError::InvalidTarget(t));
        }
        Ok(Self { c, t })
    }

    pub const fn identity() -> Self {
        Self { c: 0.0, t: 0.0 }
    }

    pub fn intensity(&self) -> f64 {
        self.c
    }

    pub fn target(&self) -> f64 {
        self.t
    }

    pub fn phi(&self, y: f64) -> f64 {
        self.c * self.t + (1.0 - self.c) * y
    }
}

impl fmt::Display for TargetControl {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "c={},T={}", self.c, self.t)
    }
}

impl FromStr for TargetControl {
    type Err = ControlError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parse_err = || ControlError::Parse(s.to_string());
        let mut c = None;
        let mut t = None;
        for part in s.split(',') {
            let (key, value) = part.split_once('=').ok_or_else(parse_err)?;
            let value: f64 = value.trim().parse().map_err(|_| parse_err())?;
            match key.trim() {
                "c" if c.is_none() => c = Some(value),
                "T" if t.is_none() => t = Some(value),
                _ => return Err(parse_err()),
            }
        }
        match (c, t) {
            (Some(c), Some(t)) => TargetControl::new(c, t),
            _ => Err(parse_err()),
        }
    }
}

/// `phi_outer(phi_inner(y))` as a single control.
///
/// With `c3 = c1 + c2 - c1 c2` and `T3 = (c1 T1 + c2 T2 - c1 c2 T2) / c3`,
/// where `(c1, T1)` is the outer control.
pub fn compose_controls(outer: TargetControl, inner: TargetControl) -> TargetControl {
    match (outer.c == 0.0, inner.c == 0.0) {
        (true, true) => TargetControl::identity(),
        (true, false) => inner,
        (false, true) => outer,
        (false, false) => {
            let (c1, t1, c2, t2) = (outer.c, outer.t, inner.c, inner.t);
            let c3 = c1 + c2 - c1 * c2;
            let t3 = (c1 * t1 + c2 * t2 - c1 * c2 * t2) / c3;
            TargetControl { c: c3, t: t3 }
        }
    }
}

/// A base map wrapped by a stack of controls. `controls[0]` is applied first;
/// the last entry is the outermost.
#[derive(Debug, Clone)]
pub struct ControlledSystem {
    base: MapModel,
    controls: Vec<TargetControl>,
}

impl ControlledSystem {
    pub fn new(base: MapModel, controls: Vec<TargetControl>) -> Self {
        Self { base, controls }
    }

    pub fn uncontrolled(base: MapModel) -> Self {
        Self::new(base, Vec::new())
    }

    pub fn base(&self) -> &MapModel {
        &self.base
    }

    pub fn controls(&self) -> &[TargetControl] {
        &self.controls
    }

    pub fn outermost(&self) -> Option<TargetControl> {
        self.controls.last().copied()
    }

    /// Adds a new outermost control.
    pub fn then(mut self, control: TargetControl) -> Self {
        self.controls.push(control);
        self
    }

    /// The system without its outermost control.
    pub fn inner(&self) -> ControlledSystem {
        let mut inner = self.clone();
        inner.controls.pop();
        inner
    }

    /// Replaces the intensity of the outermost control (or adds one with `T = 0`).
    pub fn with_outer_intensity(&self, c: f64) -> Result<ControlledSystem, ControlError> {
        let mut next = self.clone();
        match next.controls.last_mut() {
            Some(last) => *last = TargetControl::new(c, last.t)?,
            None => next.controls.push(TargetControl::new(c, 0.0)?),
        }
        Ok(next)
    }

    /// The stack collapsed into one equivalent control.
    pub fn equivalent_control(&self) -> TargetControl {
        self.controls
            .iter()
            .fold(TargetControl::identity(), |acc, &ctl| compose_controls(ctl, acc))
    }

    /// `prod (1 - c)` over the stack; the gradient scale of the controlled map.
    pub fn retained_fraction(&self) -> f64 {
        self.controls.iter().map(|c| 1.0 - c.c).product()
    }

    /// This system as a plain [`MapModel`] carrying the propagated metadata.
    pub fn to_map_model(&self) -> MapModel {
        let sys = self.clone();
        let grad_sys = self.clone();
        let mut model = MapModel::custom(self.order(), self.label(), move |x| sys.eval(x));
        if self.base.gradient_source().is_some() {
            model = model.with_gradient(move |x| {
                grad_sys
                    .gradient(x)
                    .unwrap_or_else(|| Err(MapError::Custom("gradient unavailable".into())))
            });
        }
        if let Some(b) = self.diagonal_bound() {
            model = model.with_diagonal_bound(b);
        }
        if let Some(a) = self.global_bound() {
            model = model.with_global_bound(a);
        }
        if let Some(p) = self.analytic_lipschitz() {
            model = model.with_analytic_lipschitz(p);
        }
        model
    }
}

impl DifferenceMap for ControlledSystem {
    fn order(&self) -> usize {
        self.base.order()
    }

    fn label(&self) -> String {
        if self.controls.is_empty() {
            return self.base.label();
        }
        let stack: Vec<String> = self.controls.iter().map(|c| format!("[{c}]")).collect();
        format!("{} {}", self.base.label(), stack.join(" "))
    }

    fn eval(&self, x: &[f64]) -> Result<f64, MapError> {
        let y = self.base.eval(x)?;
        Ok(self.controls.iter().fold(y, |y, ctl| ctl.phi(y)))
    }

    fn gradient(&self, x: &[f64]) -> Option<Result<Vec<f64>, MapError>> {
        let scale = self.retained_fraction();
        self.base.gradient(x).map(|g| {
            g.map(|mut g| {
                g.iter_mut().for_each(|v| *v *= scale);
                g
            })
        })
    }

    fn gradient_source(&self) -> Option<GradientSource> {
        self.base.gradient_source()
    }

    // g(x,..,x) <= cT + (1-c) x <= x once x >= max(T, M)
    fn diagonal_bound(&self) -> Option<f64> {
        let m = self.base.diagonal_bound()?;
        Some(self.controls.iter().fold(m, |m, ctl| m.max(ctl.t)))
    }

    fn global_bound(&self) -> Option<f64> {
        let a = self.base.global_bound()?;
        Some(self.controls.iter().fold(a, |a, ctl| ctl.phi(a)))
    }

    fn analytic_lipschitz(&self) -> Option<LipschitzPair> {
        let mut pair = self.base.analytic_lipschitz()?;
        for ctl in &self.controls {
            if ctl.c == 0.0 {
                continue;
            }
            if (ctl.t - pair.k).abs() > 1e-12 * (1.0 + pair.k) {
                return None;
            }
            pair.l *= 1.0 - ctl.c;
        }
        Some(pair)
    }
}

/// `g(x) = cT + (1-c) f(x)`.
pub fn apply_control(map: MapModel, ctrl: TargetControl) -> ControlledSystem {
    ControlledSystem::new(map, vec![ctrl])
}

/// `g(x) = (1-c) f(x)`, i.e. a target of zero.
pub fn proportional_feedback(map: MapModel, c: f64) -> Result<ControlledSystem, ControlError> {
    Ok(apply_control(map, TargetControl::new(c, 0.0)?))
}

/// Which unknown of `K = c T + (1-c) f(K,...,K)` the caller pins down.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetPreference {
    FixT(f64),
    FixC(f64),
}

/// Finds a control `(c_K, T_K)` that makes `point` a fixed point of
/// `c_K T_K + (1 - c_K) f`.
///
/// Without a preference: if `f(K) > K` the target is 0 and
/// `c_K = (f(K) - K) / f(K)`; if `f(K) < K` the intensity is 1/2 and
/// `T_K = 2K - f(K)`; if `K` is already fixed the result is `(1/2, K)`.
pub fn solve_target<M: DifferenceMap + ?Sized>(
    map: &M,
    point: f64,
    preference: Option<TargetPreference>,
) -> Result<TargetControl, ControlError> {
    if !(point > 0.0 && point.is_finite()) {
        return Err(ControlError::InvalidPoint(point));
    }
    let fk = map.eval_diagonal(point)?;
    if !fk.is_finite() {
        return Err(ControlError::NonFiniteImage(point));
    }
    let already_fixed = (fk - point).abs() <= 1e-14 * (1.0 + point);

    let control = match preference {
        None if already_fixed => TargetControl::new(0.5, point)?,
        None if fk > point => TargetControl::new((fk - point) / fk, 0.0)?,
        None => TargetControl::new(0.5, 2.0 * point - fk)?,
        Some(TargetPreference::FixT(t0)) => {
            if !(t0 >= 0.0 && t0.is_finite()) {
                return Err(ControlError::InvalidTarget(t0));
            }
            if already_fixed && (t0 - point).abs() <= 1e-14 * (1.0 + point) {
                TargetControl::new(0.5, point)?
            } else if fk == 0.0 && t0 == 0.0 {
                return Err(ControlError::Infeasible(format!(
                    "f vanishes on the diagonal at K = {point} and T = 0 cannot lift it"
                )));
            } else if t0 == fk {
                return Err(ControlError::Infeasible(format!(
                    "T = {t0} equals f(K,...,K), so no intensity moves the fixed point to {point}"
                )));
            } else {
                let c = (point - fk) / (t0 - fk);
                if !(c > 0.0 && c < 1.0) {
                    return Err(ControlError::Infeasible(format!(
                        "T = {t0} requires intensity {c}, outside (0, 1)"
                    )));
                }
                TargetControl::new(c, t0)?
            }
        }
        Some(TargetPreference::FixC(c0)) => {
            if !(c0 > 0.0 && c0 < 1.0) {
                return Err(ControlError::InvalidIntensity(c0));
            }
            let t = (point - (1.0 - c0) * fk) / c0;
            if t < 0.0 {
                return Err(ControlError::Infeasible(format!(
                    "c = {c0} requires negative target {t}"
                )));
            }
            TargetControl::new(c0, t.max(0.0))?
        }
    };
    Ok(control)
}

/// Result of [`targeting_pipeline`].
#[derive(Debug, Clone)]
pub struct TargetingPlan {
    /// Inner control that moves the fixed point to the desired value.
    pub corrective: TargetControl,
    /// Outer control with target equal to the desired value.
    pub stabilizing: TargetControl,
    /// Single control equivalent to the stack.
    pub equivalent: TargetControl,
    pub system: ControlledSystem,
}

/// Makes `point` a fixed point with a corrective control, then wraps it in a
/// stabilizing control `(c2, T = point)`.
pub fn targeting_pipeline(
    map: MapModel,
    point: f64,
    c2: f64,
    preference: Option<TargetPreference>,
) -> Result<TargetingPlan, ControlError> {
    let corrective = solve_target(&map, point, preference)?;
    let stabilizing = TargetControl::new(c2, point)?;
    let system = ControlledSystem::new(map, vec![corrective, stabilizing]);
    Ok(TargetingPlan {
        corrective,
        stabilizing,
        equivalent: compose_controls(stabilizing, corrective),
        system,
    })
}
