use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{
    char_poly, find_fixed_points, schur_test, CStarEstimate, CharPoly, StabilityError,
    StabilityVerdict,
};
use crate::dynamics::DifferenceMap;
use crate::format::fmt_real;

/// Linear stability of one fixed point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointAnalysis {
    pub point: f64,
    pub residual: f64,
    pub char_poly: CharPoly,
    pub verdict: StabilityVerdict,
}

/// Serializable summary: fixed points, their verdicts and any `c*` estimates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub map: String,
    pub points: Vec<PointAnalysis>,
    pub estimates: Vec<CStarEstimate>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub flags: Vec<String>,
}

impl StabilityReport {
    pub fn new(map: impl Into<String>) -> Self {
        Self {
            map: map.into(),
            points: Vec::new(),
            estimates: Vec::new(),
            flags: Vec::new(),
        }
    }

    /// Locates the fixed points of `system` and classifies each one.
    pub fn analyze<M: DifferenceMap + ?Sized>(
        system: &M,
        search_bound: Option<f64>,
    ) -> Result<Self, StabilityError> {
        let mut report = Self::new(system.label());
        let fixed = find_fixed_points(system, search_bound)?;
        if fixed.points.is_empty() {
            report.flags.push("no_fixed_point_found".into());
        }
        for p in fixed.points {
            report.points.push(Self::analyze_point(system, p.value)?);
        }
        Ok(report)
    }

    pub fn analyze_point<M: DifferenceMap + ?Sized>(
        system: &M,
        point: f64,
    ) -> Result<PointAnalysis, StabilityError> {
        let residual = (system.eval_diagonal(point)? - point).abs();
        let poly = char_poly(system, point)?;
        let verdict = schur_test(&poly)?;
        Ok(PointAnalysis {
            point,
            residual,
            char_poly: poly,
            verdict,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report is always serializable")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "map: {}", self.map);
        for p in &self.points {
            let _ = writeln!(
                out,
                "fixed point {} (residual {:e})",
                fmt_real(p.point),
                p.residual
            );
            let coeffs: Vec<String> = p
                .char_poly
                .coefficients
                .iter()
                .enumerate()
                .map(|(i, a)| format!("a{}={}", i + 1, fmt_real(*a)))
                .collect();
            let _ = writeln!(out, "  linearization: {}", coeffs.join(" "));
            if let Some(src) = p.char_poly.gradient_source {
                let _ = writeln!(out, "  gradient: {}", serde_plain(&src));
            }
            let _ = write!(
                out,
                "  verdict: {} ({})",
                serde_plain(&p.verdict.outcome),
                serde_plain(&p.verdict.test_used)
            );
            if let Some(m) = p.verdict.max_root_modulus_bound {
                let _ = write!(out, ", max |root| = {}", fmt_real(m));
            }
            out.push('\n');
        }
        if !self.estimates.is_empty() {
            out.push_str("c* estimates:\n");
            for e in &self.estimates {
                let _ = write!(out, "  {:<17} {}", e.method.tag(), fmt_real(e.value));
                if let Some(k) = e.inputs.point {
                    let _ = write!(out, "  K={}", k);
                }
                if let Some(l) = e.inputs.lipschitz {
                    let _ = write!(out, "  L={}", fmt_real(l));
                }
                if let Some(a) = e.inputs.fujiwara_a {
                    let _ = write!(out, "  A={}", fmt_real(a));
                }
                if let Some(g) = &e.inputs.partials {
                    let g: Vec<String> = g.iter().map(|v| fmt_real(*v)).collect();
                    let _ = write!(out, "  partials=[{}]", g.join(", "));
                }
                if !e.flags.is_empty() {
                    let _ = write!(out, "  flags={}", e.flags.join(","));
                }
                out.push('\n');
            }
        }
        for f in &self.flags {
            let _ = writeln!(out, "note: {f}");
        }
        out
    }
}

fn serde_plain<T: Serialize>(value: &T) -> String {
    serde_json::to_value(value)
        .ok()
        .and_then(|v| v.as_str().map(str::to_owned))
        .unwrap_or_default()
}
