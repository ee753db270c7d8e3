//! Characteristic polynomials and Schur stability tests.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::StabilityError;
use crate::dynamics::{gradient_with_fallback, DifferenceMap, GradientSource};

/// `p(x) = x^k - a_1 x^{k-1} - ... - a_k`, where `a_j` is the partial of the
/// controlled map with respect to `x_j` at the fixed point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CharPoly {
    pub coefficients: Vec<f64>,
    pub gradient_source: Option<GradientSource>,
}

impl CharPoly {
    pub fn new(coefficients: Vec<f64>) -> Self {
        assert!(!coefficients.is_empty(), "characteristic polynomial needs degree >= 1");
        Self {
            coefficients,
            gradient_source: None,
        }
    }

    pub fn degree(&self) -> usize {
        self.coefficients.len()
    }

    /// Coefficients of `p` from the constant term up to the leading `1`.
    pub fn ascending(&self) -> Vec<f64> {
        let mut out: Vec<f64> = self.coefficients.iter().rev().map(|a| -a).collect();
        out.push(1.0);
        out
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.coefficients.iter().fold(1.0, |acc, a| acc * x - a)
    }

    pub fn eval_complex(&self, z: Complex64) -> Complex64 {
        self.coefficients
            .iter()
            .fold(Complex64::new(1.0, 0.0), |acc, &a| acc * z - a)
    }

    /// `2 max_i |a_i|^{1/i}`, an upper bound on every root modulus.
    pub fn fujiwara_bound(&self) -> f64 {
        2.0 * self
            .coefficients
            .iter()
            .enumerate()
            .map(|(i, a)| a.abs().powf(1.0 / (i + 1) as f64))
            .fold(0.0, f64::max)
    }
}

/// Linearization of `system` at the diagonal point `(P, ..., P)`.
pub fn char_poly<M: DifferenceMap + ?Sized>(system: &M, point: f64) -> Result<CharPoly, StabilityError> {
    let k = system.order();
    let x = vec![point; k];
    let image = system.eval(&x)?;
    let residual = (image - point).abs();
    if !(residual <= 1e-8 * (1.0 + point.abs())) {
        return Err(StabilityError::NotFixedPoint { point, residual });
    }
    let (grad, source) = gradient_with_fallback(system, &x, 1e-6 * (1.0 + point.abs()))?;
    if let Some(bad) = grad.iter().find(|g| !g.is_finite()) {
        return Err(StabilityError::InvalidArgument(format!(
            "gradient at {point} is not finite ({bad})"
        )));
    }
    Ok(CharPoly {
        coefficients: grad,
        gradient_source: Some(source),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchurOutcome {
    Stable,
    Unstable,
    /// An inequality held with equality (to rounding); classified unstable.
    Boundary,
    Inconclusive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchurTest {
    JuryTable,
    RootOracle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityVerdict {
    pub outcome: SchurOutcome,
    /// Largest root modulus, when roots were computed.
    pub max_root_modulus_bound: Option<f64>,
    pub test_used: SchurTest,
}

impl StabilityVerdict {
    pub fn schur_stable(&self) -> bool {
        self.outcome == SchurOutcome::Stable
    }

    pub fn is_boundary(&self) -> bool {
        self.outcome == SchurOutcome::Boundary
    }

    fn jury(outcome: SchurOutcome) -> Self {
        Self {
            outcome,
            max_root_modulus_bound: None,
            test_used: SchurTest::JuryTable,
        }
    }
}

const BOUNDARY_RTOL: f64 = 1e-12;

/// `lhs > rhs`, strictly, with near-equality reported as a boundary case.
fn strictly_greater(lhs: f64, rhs: f64) -> SchurOutcome {
    let scale = lhs.abs().max(rhs.abs()).max(f64::MIN_POSITIVE);
    if (lhs - rhs).abs() <= BOUNDARY_RTOL * scale {
        SchurOutcome::Boundary
    } else if lhs > rhs {
        SchurOutcome::Stable
    } else {
        SchurOutcome::Unstable
    }
}

/// Second order test: stable iff `|p(0)| < 1`, `p(1) > 0` and `p(-1) > 0`.
pub fn jury_test_k2(poly: &CharPoly) -> Result<StabilityVerdict, StabilityError> {
    if poly.degree() != 2 {
        return Err(StabilityError::WrongDegree {
            expected: 2,
            got: poly.degree(),
        });
    }
    let (a1, a2) = (poly.coefficients[0], poly.coefficients[1]);
    let checks = [
        strictly_greater(1.0, a2.abs()),
        strictly_greater(1.0, a1 + a2),
        strictly_greater(1.0 + a1, a2),
    ];
    Ok(StabilityVerdict::jury(combine(&checks)))
}

fn combine(checks: &[SchurOutcome]) -> SchurOutcome {
    if checks.contains(&SchurOutcome::Unstable) {
        SchurOutcome::Unstable
    } else if checks.contains(&SchurOutcome::Boundary) {
        SchurOutcome::Boundary
    } else {
        SchurOutcome::Stable
    }
}

/// Jury stability table for any degree.
///
/// Checks `p(1) > 0`, `(-1)^n p(-1) > 0`, `|a_0| < a_n`, then reduces rows with
/// `b_j = a_0 a_j - a_n a_{n-j}` and requires `|b_0| > |b_{m-1}|` on every
/// reduced row down to three entries. Rows are rescaled to unit max-norm.
pub fn jury_table(poly: &CharPoly) -> StabilityVerdict {
    let n = poly.degree();
    let mut row = poly.ascending();
    let mut checks = Vec::with_capacity(n + 1);

    checks.push(strictly_greater(poly.eval(1.0), 0.0));
    let sign = if n.is_multiple_of(2) { 1.0 } else { -1.0 };
    checks.push(strictly_greater(sign * poly.eval(-1.0), 0.0));
    checks.push(strictly_greater(row[n], row[0].abs()));
    if checks.contains(&SchurOutcome::Unstable) {
        return StabilityVerdict::jury(SchurOutcome::Unstable);
    }

    while row.len() > 3 {
        let m = row.len() - 1;
        let mut next: Vec<f64> = (0..m)
            .map(|j| row[0] * row[j] - row[m] * row[m - j])
            .collect();
        let scale = next.iter().fold(0.0f64, |s, v| s.max(v.abs()));
        if !(scale > 0.0) || !scale.is_finite() {
            return StabilityVerdict::jury(SchurOutcome::Inconclusive);
        }
        next.iter_mut().for_each(|v| *v /= scale);
        let (first, last) = (next[0].abs(), next[m - 1].abs());
        if first < 1e-14 && last < 1e-14 {
            return StabilityVerdict::jury(SchurOutcome::Inconclusive);
        }
        let check = strictly_greater(first, last);
        if check == SchurOutcome::Unstable {
            return StabilityVerdict::jury(SchurOutcome::Unstable);
        }
        checks.push(check);
        row = next;
    }
    StabilityVerdict::jury(combine(&checks))
}

/// Roots found by [`durand_kerner`].
#[derive(Debug, Clone, PartialEq)]
pub struct Roots {
    pub roots: Vec<Complex64>,
    pub sweeps: usize,
}

impl Roots {
    pub fn max_modulus(&self) -> f64 {
        self.roots.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }
}

const DK_TOLERANCE: f64 = 1e-12;
const DK_MAX_SWEEPS: usize = 500;

/// `8 eps sum |p_j| r^j`: what Horner evaluation at modulus `r` can resolve.
fn rounding_bound(poly: &CharPoly, r: f64) -> f64 {
    let magnitude = poly.coefficients.iter().fold(1.0, |acc, a| acc * r + a.abs());
    8.0 * f64::EPSILON * magnitude
}

/// All complex roots by Weierstrass/Durand-Kerner iteration.
///
/// Trailing zero coefficients are peeled off as exact roots at the origin.
/// Starting points lie on a circle of radius `1 + max |a_j|`. An iterate is
/// settled once its correction is below `1e-12` relative, or once `|p(z)|`
/// is within the rounding error of evaluating `p` (multiple roots never
/// reach the first test).
pub fn durand_kerner(poly: &CharPoly) -> Result<Roots, StabilityError> {
    let mut coeffs = poly.coefficients.clone();
    let mut roots = Vec::with_capacity(coeffs.len());
    while coeffs.last() == Some(&0.0) {
        coeffs.pop();
        roots.push(Complex64::new(0.0, 0.0));
    }
    let n = coeffs.len();
    if n == 0 {
        return Ok(Roots { roots, sweeps: 0 });
    }
    let reduced = CharPoly::new(coeffs);
    let radius = 1.0 + reduced.coefficients.iter().fold(0.0f64, |m, a| m.max(a.abs()));
    let mut z: Vec<Complex64> = (0..n)
        .map(|j| {
            let angle = std::f64::consts::TAU * j as f64 / n as f64 + 0.4;
            Complex64::from_polar(radius, angle)
        })
        .collect();

    for sweep in 1..=DK_MAX_SWEEPS {
        let mut converged = true;
        for i in 0..n {
            let zi = z[i];
            let denom = (0..n)
                .filter(|&j| j != i)
                .fold(Complex64::new(1.0, 0.0), |acc, j| acc * (zi - z[j]));
            let step = if denom.norm() == 0.0 {
                // coincident iterates: nudge apart
                Complex64::new(1e-8 * (1.0 + zi.norm()), 1e-8)
            } else {
                reduced.eval_complex(zi) / denom
            };
            z[i] = zi - step;
            let settled = step.norm() <= DK_TOLERANCE * zi.norm().max(1.0)
                || reduced.eval_complex(z[i]).norm() <= rounding_bound(&reduced, z[i].norm());
            if !settled {
                converged = false;
            }
        }
        if z.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(StabilityError::NonConvergence { sweeps: sweep });
        }
        if converged {
            roots.extend(z);
            return Ok(Roots { roots, sweeps: sweep });
        }
    }
    Err(StabilityError::NonConvergence {
        sweeps: DK_MAX_SWEEPS,
    })
}

/// Stable iff every root has modulus below `1 - 1e-10`.
pub fn root_oracle(poly: &CharPoly) -> Result<StabilityVerdict, StabilityError> {
    let roots = durand_kerner(poly)?;
    let m = roots.max_modulus();
    let outcome = if m < 1.0 - 1e-10 {
        SchurOutcome::Stable
    } else if m <= 1.0 + 1e-10 {
        SchurOutcome::Boundary
    } else {
        SchurOutcome::Unstable
    };
    Ok(StabilityVerdict {
        outcome,
        max_root_modulus_bound: Some(m),
        test_used: SchurTest::RootOracle,
    })
}

/// Jury table, falling back to the root oracle when the table degenerates.
pub fn schur_test(poly: &CharPoly) -> Result<StabilityVerdict, StabilityError> {
    let verdict = jury_table(poly);
    if verdict.outcome == SchurOutcome::Inconclusive {
        root_oracle(poly)
    } else {
        Ok(verdict)
    }
}
