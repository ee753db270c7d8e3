//! k-th order maps `u_{n+1} = f(u_n, ..., u_{n-k+1})` and their orbits.
//!
//! Argument order everywhere: `x[0]` (written `x1`) is the most recent state
//! `u_n`, and `x[k-1]` is the oldest, `u_{n-k+1}`. Seeds use the same order.

use std::fmt;
use std::io::{self, Write};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::{ExprAst, ExprError};
use crate::format::fmt_real;

/// Orbit values above this magnitude are treated as a blow-up.
pub const DIVERGENCE_LIMIT: f64 = 1e150;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MapError {
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error("{0}")]
    Custom(String),
    #[error("invalid map parameters: {0}")]
    InvalidParameter(String),
}

/// Where a gradient came from. Recorded in stability reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GradientSource {
    Analytic,
    Dual,
    FiniteDifference,
}

/// A pair `(K, L)` with `|f(x) - K| <= L * max_j |x_j - K|` on the whole orthant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LipschitzPair {
    pub k: f64,
    pub l: f64,
}

/// Anything that can drive a k-th order recursion.
pub trait DifferenceMap: Send + Sync {
    fn order(&self) -> usize;

    fn label(&self) -> String;

    fn eval(&self, x: &[f64]) -> Result<f64, MapError>;

    /// Exact gradient, if this map knows one.
    fn gradient(&self, _x: &[f64]) -> Option<Result<Vec<f64>, MapError>> {
        None
    }

    fn gradient_source(&self) -> Option<GradientSource> {
        None
    }

    /// `M` with `f(x, ..., x) <= x` for every `x >= M`.
    fn diagonal_bound(&self) -> Option<f64> {
        None
    }

    /// `A` with `0 <= f <= A`.
    fn global_bound(&self) -> Option<f64> {
        None
    }

    fn analytic_lipschitz(&self) -> Option<LipschitzPair> {
        None
    }

    /// `f(x, ..., x)`.
    fn eval_diagonal(&self, x: f64) -> Result<f64, MapError> {
        let point = vec![x; self.order()];
        self.eval(&point)
    }
}

type EvalFn = Arc<dyn Fn(&[f64]) -> Result<f64, MapError> + Send + Sync>;
type GradFn = Arc<dyn Fn(&[f64]) -> Result<Vec<f64>, MapError> + Send + Sync>;

#[derive(Clone)]
enum Evaluator {
    Ricker { r: f64 },
    Pielou { r: f64 },
    Exp2,
    Expression(Arc<ExprAst>),
    Custom { eval: EvalFn, grad: Option<GradFn> },
}

/// A k-th order map on the nonnegative orthant with optional analytic metadata.
#[derive(Clone)]
pub struct MapModel {
    order: usize,
    label: String,
    evaluator: Evaluator,
    diagonal_bound: Option<f64>,
    global_bound: Option<f64>,
    analytic_lipschitz: Option<LipschitzPair>,
}

impl fmt::Debug for MapModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MapModel")
            .field("order", &self.order)
            .field("label", &self.label)
            .field("diagonal_bound", &self.diagonal_bound)
            .field("global_bound", &self.global_bound)
            .field("analytic_lipschitz", &self.analytic_lipschitz)
            .finish()
    }
}

/// Delayed Ricker map `x1 * exp(r - xk)`.
pub fn builtin_ricker(r: f64, k: usize) -> Result<MapModel, MapError> {
    if !(r > 0.0 && r.is_finite()) {
        return Err(MapError::InvalidParameter(format!(
            "Ricker growth rate must be positive, got {r}"
        )));
    }
    if k == 0 {
        return Err(MapError::InvalidParameter("order must be at least 1".into()));
    }
    Ok(MapModel {
        order: k,
        label: format!("ricker(r={r},k={k})"),
        evaluator: Evaluator::Ricker { r },
        diagonal_bound: Some(r),
        // x exp(r - x) peaks at x = 1; with a delay the first argument is free
        global_bound: (k == 1).then(|| (r - 1.0).exp()),
        analytic_lipschitz: Some(LipschitzPair { k: 0.0, l: r.exp() }),
    })
}

/// Delayed Pielou map `r * x1 / (1 + xk)`.
pub fn builtin_pielou(r: f64, k: usize) -> Result<MapModel, MapError> {
    if !(r >= 1.0 && r.is_finite()) {
        return Err(MapError::InvalidParameter(format!(
            "Pielou growth rate must be at least 1, got {r}"
        )));
    }
    if k == 0 {
        return Err(MapError::InvalidParameter("order must be at least 1".into()));
    }
    Ok(MapModel {
        order: k,
        label: format!("pielou(r={r},k={k})"),
        evaluator: Evaluator::Pielou { r },
        diagonal_bound: Some(r - 1.0),
        global_bound: (k == 1).then_some(r),
        // |f - K| <= r|x1 - K|/(1 + xk) + (r - 1)|xk - K|/(1 + xk); the bound
        // 2r - 1 is attained at x1 = 2(r - 1), xk = 0
        analytic_lipschitz: Some(LipschitzPair {
            k: r - 1.0,
            l: 2.0 * r - 1.0,
        }),
    })
}

/// Second order map `exp(1 - x1) * exp(1 - x2^2)`.
pub fn builtin_exp2() -> MapModel {
    let e2 = 2.0f64.exp();
    MapModel {
        order: 2,
        label: "exp2".to_string(),
        evaluator: Evaluator::Exp2,
        diagonal_bound: Some(1.0),
        global_bound: Some(e2),
        analytic_lipschitz: Some(LipschitzPair { k: 1.0, l: 2.0 * e2 }),
    }
}

/// Wraps a parsed expression. No analytic metadata is attached.
pub fn from_expression(ast: ExprAst) -> MapModel {
    let order = ast.order();
    MapModel {
        order,
        label: format!("expr({ast})"),
        evaluator: Evaluator::Expression(Arc::new(ast)),
        diagonal_bound: None,
        global_bound: None,
        analytic_lipschitz: None,
    }
}

impl MapModel {
    /// A map given by a closure.
    pub fn custom<F>(order: usize, label: impl Into<String>, eval: F) -> Self
    where
        F: Fn(&[f64]) -> Result<f64, MapError> + Send + Sync + 'static,
    {
        assert!(order > 0, "map order must be positive");
        Self {
            order,
            label: label.into(),
            evaluator: Evaluator::Custom {
                eval: Arc::new(eval),
                grad: None,
            },
            diagonal_bound: None,
            global_bound: None,
            analytic_lipschitz: None,
        }
    }

    /// Attaches an exact gradient to a closure-backed map. No-op for other kinds.
    pub fn with_gradient<G>(mut self, grad_fn: G) -> Self
    where
        G: Fn(&[f64]) -> Result<Vec<f64>, MapError> + Send + Sync + 'static,
    {
        if let Evaluator::Custom { grad, .. } = &mut self.evaluator {
            *grad = Some(Arc::new(grad_fn));
        }
        self
    }

    pub fn with_diagonal_bound(mut self, bound: f64) -> Self {
        self.diagonal_bound = Some(bound);
        self
    }

    pub fn with_global_bound(mut self, bound: f64) -> Self {
        self.global_bound = Some(bound);
        self
    }

    pub fn with_analytic_lipschitz(mut self, pair: LipschitzPair) -> Self {
        self.analytic_lipschitz = Some(pair);
        self
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }
}

impl DifferenceMap for MapModel {
    fn order(&self) -> usize {
        self.order
    }

    fn label(&self) -> String {
        self.label.clone()
    }

    fn eval(&self, x: &[f64]) -> Result<f64, MapError> {
        let k = self.order;
        if x.len() != k {
            return Err(ExprError::Arity {
                expected: k,
                got: x.len(),
            }
            .into());
        }
        match &self.evaluator {
            Evaluator::Ricker { r } => Ok(x[0] * (r - x[k - 1]).exp()),
            Evaluator::Pielou { r } => Ok(r * x[0] / (1.0 + x[k - 1])),
            Evaluator::Exp2 => Ok((1.0 - x[0]).exp() * (1.0 - x[1] * x[1]).exp()),
            Evaluator::Expression(ast) => Ok(ast.eval(x)?),
            Evaluator::Custom { eval, .. } => eval(x),
        }
    }

    fn gradient(&self, x: &[f64]) -> Option<Result<Vec<f64>, MapError>> {
        let k = self.order;
        if x.len() != k {
            return Some(Err(ExprError::Arity {
                expected: k,
                got: x.len(),
            }
            .into()));
        }
        let mut g = vec![0.0; k];
        match &self.evaluator {
            Evaluator::Ricker { r } => {
                let e = (r - x[k - 1]).exp();
                g[0] += e;
                g[k - 1] -= x[0] * e;
            }
            Evaluator::Pielou { r } => {
                let d = 1.0 + x[k - 1];
                g[0] += r / d;
                g[k - 1] -= r * x[0] / (d * d);
            }
            Evaluator::Exp2 => {
                let v = (1.0 - x[0]).exp() * (1.0 - x[1] * x[1]).exp();
                g[0] = -v;
                g[1] = -2.0 * x[1] * v;
            }
            Evaluator::Expression(ast) => {
                return Some(ast.eval_dual(x).map(|d| d.partials).map_err(Into::into))
            }
            Evaluator::Custom { grad, .. } => return grad.as_ref().map(|g| g(x)),
        }
        Some(Ok(g))
    }

    fn gradient_source(&self) -> Option<GradientSource> {
        match &self.evaluator {
            Evaluator::Expression(_) => Some(GradientSource::Dual),
            Evaluator::Custom { grad: None, .. } => None,
            _ => Some(GradientSource::Analytic),
        }
    }

    fn diagonal_bound(&self) -> Option<f64> {
        self.diagonal_bound
    }

    fn global_bound(&self) -> Option<f64> {
        self.global_bound
    }

    fn analytic_lipschitz(&self) -> Option<LipschitzPair> {
        self.analytic_lipschitz
    }
}

/// Gradient of `map` at `x`, falling back to central differences with step `h`
/// when the map has no exact gradient.
pub fn gradient_with_fallback<M: DifferenceMap + ?Sized>(
    map: &M,
    x: &[f64],
    h: f64,
) -> Result<(Vec<f64>, GradientSource), MapError> {
    if let Some(g) = map.gradient(x) {
        let source = map.gradient_source().unwrap_or(GradientSource::Analytic);
        return g.map(|g| (g, source));
    }
    let mut point = x.to_vec();
    let mut g = Vec::with_capacity(x.len());
    for j in 0..x.len() {
        point[j] = x[j] + h;
        let up = map.eval(&point)?;
        point[j] = x[j] - h;
        let down = map.eval(&point)?;
        point[j] = x[j];
        g.push((up - down) / (2.0 * h));
    }
    Ok((g, GradientSource::FiniteDifference))
}

/// The `k` most recent states, newest first.
#[derive(Debug, Clone, PartialEq)]
pub struct OrbitHistory {
    state: Vec<f64>,
    step: u64,
}

impl OrbitHistory {
    /// `seed[0]` is `u_0`, `seed[k-1]` is `u_{1-k}`.
    pub fn new(seed: &[f64]) -> Result<Self, SeedError> {
        if seed.is_empty() {
            return Err(SeedError::Empty);
        }
        if let Some(&bad) = seed.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(SeedError::Invalid(bad));
        }
        Ok(Self {
            state: seed.to_vec(),
            step: 0,
        })
    }

    pub fn state(&self) -> &[f64] {
        &self.state
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn newest(&self) -> f64 {
        self.state[0]
    }

    pub fn push(&mut self, value: f64) {
        self.state.rotate_right(1);
        self.state[0] = value;
        self.step += 1;
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SeedError {
    #[error("seed must not be empty")]
    Empty,
    #[error("seed has {got} values but the map has order {expected}")]
    WrongLength { expected: usize, got: usize },
    #[error("seed values must be nonnegative and finite, got {0}")]
    Invalid(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Orbit {
    pub values: Vec<f64>,
    pub initial: Vec<f64>,
    pub map_label: String,
}

impl Orbit {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Delimited table with header `n,u`, one row per step starting at `n = 1`.
    pub fn write_table<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "n,u")?;
        for (i, u) in self.values.iter().enumerate() {
            writeln!(out, "{},{}", i + 1, fmt_real(*u))?;
        }
        Ok(())
    }

    pub fn to_table(&self) -> String {
        let mut buf = Vec::new();
        self.write_table(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("table is ASCII")
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OrbitErrorKind {
    #[error(transparent)]
    Seed(#[from] SeedError),
    #[error(transparent)]
    Eval(#[from] MapError),
    #[error("orbit diverged (|u| = {value:e} exceeds {DIVERGENCE_LIMIT:e})")]
    Diverged { value: f64 },
    #[error("map produced a negative state {value}")]
    Negative { value: f64 },
}

/// A failed iteration, carrying the orbit computed before the failure.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("iteration stopped at step {step}: {kind}")]
pub struct OrbitError {
    pub step: usize,
    pub kind: OrbitErrorKind,
    pub partial: Orbit,
}

/// Runs `steps` iterations of `map` from `seed`.
pub fn iterate<M: DifferenceMap + ?Sized>(
    map: &M,
    seed: &[f64],
    steps: usize,
) -> Result<Orbit, Box<OrbitError>> {
    let mut orbit = Orbit {
        values: Vec::with_capacity(steps),
        initial: seed.to_vec(),
        map_label: map.label(),
    };
    let fail = |step, kind, partial: &Orbit| {
        Box::new(OrbitError {
            step,
            kind,
            partial: partial.clone(),
        })
    };
    if seed.len() != map.order() {
        let kind = SeedError::WrongLength {
            expected: map.order(),
            got: seed.len(),
        }
        .into();
        return Err(fail(0, kind, &orbit));
    }
    let mut history = OrbitHistory::new(seed).map_err(|e| fail(0, e.into(), &orbit))?;
    for n in 1..=steps {
        let value = map
            .eval(history.state())
            .map_err(|e| fail(n, e.into(), &orbit))?;
        if !value.is_finite() || value.abs() > DIVERGENCE_LIMIT {
            return Err(fail(n, OrbitErrorKind::Diverged { value }, &orbit));
        }
        if value < 0.0 {
            return Err(fail(n, OrbitErrorKind::Negative { value }, &orbit));
        }
        history.push(value);
        orbit.values.push(value);
    }
    Ok(orbit)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse_expr;

    #[test]
    fn ricker_values() {
        let m = builtin_ricker(1.5, 2).unwrap();
        assert_eq!(m.eval(&[1.5, 1.5]).unwrap(), 1.5);
        assert!((m.eval(&[1.0, 0.0]).unwrap() - 4.481_689_070_338_065).abs() < 1e-12);
        let lp = m.analytic_lipschitz().unwrap();
        assert_eq!(lp.k, 0.0);
        assert_eq!(lp.l, 1.5f64.exp());
        assert_eq!(m.diagonal_bound(), Some(1.5));
        assert_eq!(m.global_bound(), None);
        assert!(builtin_ricker(0.0, 2).is_err());
        assert!(builtin_ricker(-1.0, 2).is_err());
    }

    #[test]
    fn ricker_first_order_gradient_merges_terms() {
        let m = builtin_ricker(2.0, 1).unwrap();
        let g = m.gradient(&[0.5]).unwrap().unwrap();
        let exact = (2.0f64 - 0.5).exp() * (1.0 - 0.5);
        assert!((g[0] - exact).abs() < 1e-14);
        assert_eq!(m.global_bound(), Some(1.0f64.exp()));
    }

    #[test]
    fn pielou_values() {
        let m = builtin_pielou(8.0, 3).unwrap();
        assert_eq!(m.eval(&[7.0, 5.0, 7.0]).unwrap(), 7.0);
        assert_eq!(m.analytic_lipschitz(), Some(LipschitzPair { k: 7.0, l: 15.0 }));
        // L = r is too small: this point has ratio exactly 2r - 1
        let x = [14.0, 3.0, 0.0];
        let ratio = (m.eval(&x).unwrap() - 7.0).abs() / 7.0;
        assert_eq!(ratio, 15.0);
        let m1 = builtin_pielou(1.0, 4).unwrap();
        assert_eq!(m1.eval(&[0.0; 4]).unwrap(), 0.0);
        assert_eq!(m1.analytic_lipschitz().unwrap().k, 0.0);
        assert!(builtin_pielou(0.5, 2).is_err());
    }

    #[test]
    fn exp2_values() {
        let m = builtin_exp2();
        assert_eq!(m.eval(&[1.0, 1.0]).unwrap(), 1.0);
        assert!((m.eval(&[0.0, 0.0]).unwrap() - 7.389_056_098_930_65).abs() < 1e-12);
        assert!((m.analytic_lipschitz().unwrap().l - 14.778_112_197_861_3).abs() < 1e-9);
        assert_eq!(m.global_bound(), Some(2.0f64.exp()));
    }

    #[test]
    fn expression_identity_map() {
        let m = from_expression(parse_expr("x1", 1).unwrap());
        for x in [0.0, 0.3, 7.0] {
            assert_eq!(m.eval(&[x]).unwrap(), x);
        }
        assert_eq!(m.gradient_source(), Some(GradientSource::Dual));
        assert_eq!(m.diagonal_bound(), None);
    }

    #[test]
    fn iterate_fixed_seed_is_constant() {
        let m = builtin_ricker(1.5, 2).unwrap();
        let orbit = iterate(&m, &[1.5, 1.5], 10).unwrap();
        assert_eq!(orbit.values, vec![1.5; 10]);
        assert!(iterate(&m, &[0.3, 0.2], 0).unwrap().is_empty());
    }

    #[test]
    fn iterate_uses_newest_first_ordering() {
        // u_{n+1} = x2 just replays the older state
        let m = from_expression(parse_expr("x2", 2).unwrap());
        let orbit = iterate(&m, &[1.0, 2.0], 4).unwrap();
        assert_eq!(orbit.values, vec![2.0, 1.0, 2.0, 1.0]);
    }

    #[test]
    fn iterate_reports_domain_errors_with_step() {
        let m = from_expression(parse_expr("log(x1)", 1).unwrap());
        let err = iterate(&m, &[std::f64::consts::E], 5).unwrap_err();
        // e -> 1 -> 0 -> log(0) fails at the third step
        assert_eq!(err.step, 3);
        assert_eq!(err.partial.values.len(), 2);
        assert!(matches!(err.kind, OrbitErrorKind::Eval(_)));
    }

    #[test]
    fn iterate_detects_blowup() {
        let m = from_expression(parse_expr("x1*x1 + 2", 1).unwrap());
        let err = iterate(&m, &[2.0], 100).unwrap_err();
        assert!(matches!(err.kind, OrbitErrorKind::Diverged { .. }));
        assert!(err.partial.values.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn iterate_rejects_bad_seeds() {
        let m = builtin_exp2();
        assert!(matches!(
            iterate(&m, &[1.0], 3).unwrap_err().kind,
            OrbitErrorKind::Seed(SeedError::WrongLength { .. })
        ));
        assert!(matches!(
            iterate(&m, &[1.0, -1.0], 3).unwrap_err().kind,
            OrbitErrorKind::Seed(SeedError::Invalid(_))
        ));
    }

    #[test]
    fn finite_difference_fallback() {
        let m = MapModel::custom(2, "prod", |x| Ok(x[0] * x[1]));
        let (g, src) = gradient_with_fallback(&m, &[2.0, 3.0], 1e-6).unwrap();
        assert_eq!(src, GradientSource::FiniteDifference);
        assert!((g[0] - 3.0).abs() < 1e-8 && (g[1] - 2.0).abs() < 1e-8);
    }

    #[test]
    fn orbit_table_format() {
        let orbit = Orbit {
            values: vec![1.0, 0.5],
            initial: vec![1.0],
            map_label: "t".into(),
        };
        assert_eq!(
            orbit.to_table(),
            "n,u\n1,1.0000000000000000e0\n2,5.0000000000000000e-1\n"
        );
    }
}
