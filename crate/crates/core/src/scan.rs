//! Bifurcation sweeps over the control intensity and convergence checks.

use std::fmt::Write as _;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::control::{ControlError, ControlledSystem};
use crate::dynamics::{DifferenceMap, MapError, OrbitHistory, SeedError, DIVERGENCE_LIMIT};
use crate::format::fmt_real;

/// The top of the c grid, `c = 1`, is replaced by this value.
pub const C_CLAMP: f64 = 1.0 - 1e-9;

#[derive(Debug, Error)]
pub enum ScanError {
    #[error("invalid scan configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Control(#[from] ControlError),
    #[error(transparent)]
    Map(#[from] MapError),
    #[error(transparent)]
    Seed(#[from] SeedError),
    #[error("orbit failed at step {step}: {reason}")]
    Orbit { step: usize, reason: String },
    #[error("cannot write {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanConfig {
    /// Grid `c = i / c_count`, `i = 1..=c_count`.
    pub c_count: usize,
    pub transient: usize,
    pub samples: usize,
    pub seed_rng: u64,
    /// Initial conditions are uniform on `(lo, hi]` in every coordinate.
    pub seed_box: (f64, f64),
    /// Use this initial condition for every row instead of drawing one.
    pub fixed_seed: Option<Vec<f64>>,
}

impl Default for ScanConfig {
    fn default() -> Self {
        Self {
            c_count: 300,
            transient: 3000,
            samples: 50,
            seed_rng: 0,
            seed_box: (0.0, 2.0),
            fixed_seed: None,
        }
    }
}

impl ScanConfig {
    /// `(0, 2 max{T, M, 1}]` for a system whose outermost target is `T` and
    /// whose base map has diagonal bound `M`.
    pub fn default_seed_box(system: &ControlledSystem) -> (f64, f64) {
        let t = system.outermost().map_or(0.0, |c| c.target());
        let m = system.base().diagonal_bound().unwrap_or(0.0);
        (0.0, 2.0 * t.max(m).max(1.0))
    }

    pub fn grid(&self) -> Vec<f64> {
        (1..=self.c_count)
            .map(|i| {
                let c = i as f64 / self.c_count as f64;
                if c >= 1.0 {
                    C_CLAMP
                } else {
                    c
                }
            })
            .collect()
    }

    fn validate(&self) -> Result<(), ScanError> {
        if self.c_count == 0 {
            return Err(ScanError::Config("c_count must be at least 1".into()));
        }
        if self.samples == 0 {
            return Err(ScanError::Config("samples must be at least 1".into()));
        }
        let (lo, hi) = self.seed_box;
        if !(lo >= 0.0 && hi > lo && hi.is_finite()) {
            return Err(ScanError::Config(format!(
                "seed box must satisfy 0 <= lo < hi, got ({lo}, {hi})"
            )));
        }
        Ok(())
    }
}

/// Initial condition for grid row `index`: each row reads its own ChaCha
/// stream of the `seed_rng` key, so draws do not depend on execution order.
pub fn row_seed(seed_rng: u64, index: u64, k: usize, seed_box: (f64, f64)) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed_rng);
    rng.set_stream(index);
    let (lo, hi) = seed_box;
    (0..k)
        .map(|_| hi - (hi - lo) * rng.random::<f64>())
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanRow {
    pub c: f64,
    pub samples: Vec<f64>,
    pub initial: Vec<f64>,
    pub diverged: bool,
}

impl ScanRow {
    pub fn spread(&self) -> f64 {
        let (lo, hi) = self
            .samples
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
        if self.samples.is_empty() {
            0.0
        } else {
            hi - lo
        }
    }

    /// `max |sample - point|`
    pub fn max_deviation(&self, point: f64) -> f64 {
        self.samples
            .iter()
            .fold(0.0, |m, v| f64::max(m, (v - point).abs()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanResult {
    pub label: String,
    pub config: ScanConfig,
    pub rows: Vec<ScanRow>,
}

impl ScanResult {
    /// The row whose intensity is closest to `c`.
    pub fn row_near(&self, c: f64) -> Option<&ScanRow> {
        self.rows
            .iter()
            .min_by(|a, b| (a.c - c).abs().total_cmp(&(b.c - c).abs()))
    }
}

fn run_row(system: &ControlledSystem, c: f64, initial: Vec<f64>, config: &ScanConfig) -> ScanRow {
    let mut samples = Vec::with_capacity(config.samples);
    let mut diverged = false;
    if let Ok(mut history) = OrbitHistory::new(&initial) {
        for n in 0..config.transient + config.samples {
            let value = match system.eval(history.state()) {
                Ok(v) if v.is_finite() && v.abs() <= DIVERGENCE_LIMIT && v >= 0.0 => v,
                _ => {
                    diverged = true;
                    break;
                }
            };
            history.push(value);
            if n >= config.transient {
                samples.push(value);
            }
        }
    } else {
        diverged = true;
    }
    ScanRow {
        c,
        samples,
        initial,
        diverged,
    }
}

/// Sweeps `c` over the configured grid. `builder(c)` returns the system to run
/// at intensity `c`. Rows run in parallel and come back ordered by `c`.
pub fn run_scan<B>(config: &ScanConfig, builder: B) -> Result<ScanResult, ScanError>
where
    B: Fn(f64) -> Result<ControlledSystem, ControlError> + Sync,
{
    config.validate()?;
    let grid = config.grid();
    let label = builder(grid[0])?.base().label();
    let rows = grid
        .par_iter()
        .enumerate()
        .map(|(i, &c)| -> Result<ScanRow, ScanError> {
            let system = builder(c)?;
            let k = system.order();
            let initial = match &config.fixed_seed {
                Some(seed) if seed.len() == k => seed.clone(),
                Some(seed) => {
                    return Err(SeedError::WrongLength {
                        expected: k,
                        got: seed.len(),
                    }
                    .into())
                }
                None => row_seed(config.seed_rng, i as u64, k, config.seed_box),
            };
            Ok(run_row(&system, c, initial, config))
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(ScanResult {
        label,
        config: config.clone(),
        rows,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExportFormat {
    Table,
    ScatterSvg,
}

/// Header `c,sample_index,u`; rows ordered by `(c, sample_index)`.
pub fn write_scan_table<W: Write>(result: &ScanResult, mut out: W) -> io::Result<()> {
    writeln!(out, "c,sample_index,u")?;
    for row in &result.rows {
        for (i, u) in row.samples.iter().enumerate() {
            writeln!(out, "{},{},{}", fmt_real(row.c), i, fmt_real(*u))?;
        }
    }
    Ok(())
}

const SVG_WIDTH: f64 = 900.0;
const SVG_HEIGHT: f64 = 600.0;
const MARGIN_LEFT: f64 = 70.0;
const MARGIN_RIGHT: f64 = 20.0;
const MARGIN_TOP: f64 = 40.0;
const MARGIN_BOTTOM: f64 = 60.0;

fn nice_ceiling(x: f64) -> f64 {
    if !(x > 0.0) {
        return 1.0;
    }
    let mag = 10f64.powf(x.log10().floor());
    for step in [1.0, 2.0, 2.5, 5.0, 10.0] {
        if step * mag >= x {
            return step * mag;
        }
    }
    10.0 * mag
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Scatter plot of every `(c, u)` sample on a fixed 900 x 600 canvas.
pub fn scan_svg(result: &ScanResult) -> String {
    let u_max = result
        .rows
        .iter()
        .flat_map(|r| r.samples.iter().copied())
        .fold(0.0, f64::max);
    let u_top = nice_ceiling(u_max);
    let plot_w = SVG_WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
    let plot_h = SVG_HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;
    let sx = |c: f64| MARGIN_LEFT + c * plot_w;
    let sy = |u: f64| MARGIN_TOP + plot_h * (1.0 - u / u_top);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{SVG_WIDTH}" height="{SVG_HEIGHT}" viewBox="0 0 {SVG_WIDTH} {SVG_HEIGHT}">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="24" font-family="sans-serif" font-size="16" text-anchor="middle">{}</text>"#,
        SVG_WIDTH / 2.0,
        xml_escape(&result.label)
    );
    let (x0, y0, x1, y1) = (sx(0.0), sy(0.0), sx(1.0), sy(u_top));
    let _ = writeln!(
        s,
        r#"<path d="M{x0:.2} {y1:.2} L{x0:.2} {y0:.2} L{x1:.2} {y0:.2}" stroke="black" fill="none"/>"#
    );
    for i in 0..=4 {
        let c = i as f64 / 4.0;
        let x = sx(c);
        let _ = writeln!(
            s,
            r#"<line x1="{x:.2}" y1="{y0:.2}" x2="{x:.2}" y2="{:.2}" stroke="black"/><text x="{x:.2}" y="{:.2}" font-family="sans-serif" font-size="12" text-anchor="middle">{c}</text>"#,
            y0 + 5.0,
            y0 + 20.0
        );
        let u = u_top * i as f64 / 4.0;
        let y = sy(u);
        let _ = writeln!(
            s,
            r#"<line x1="{:.2}" y1="{y:.2}" x2="{x0:.2}" y2="{y:.2}" stroke="black"/><text x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="12" text-anchor="end">{u}</text>"#,
            x0 - 5.0,
            x0 - 8.0,
            y + 4.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="14" text-anchor="middle">c</text>"#,
        MARGIN_LEFT + plot_w / 2.0,
        SVG_HEIGHT - 15.0
    );
    let _ = writeln!(
        s,
        r#"<text x="18" y="{:.2}" font-family="sans-serif" font-size="14" text-anchor="middle" transform="rotate(-90 18 {:.2})">u_n</text>"#,
        MARGIN_TOP + plot_h / 2.0,
        MARGIN_TOP + plot_h / 2.0
    );
    let _ = writeln!(s, r#"<g fill="black">"#);
    for row in &result.rows {
        let x = sx(row.c);
        for &u in &row.samples {
            let _ = writeln!(s, r#"<circle cx="{x:.2}" cy="{:.2}" r="0.8"/>"#, sy(u));
        }
    }
    s.push_str("</g>\n</svg>\n");
    s
}

/// Writes `result` to `path` in the requested format.
pub fn export_scan(result: &ScanResult, path: &Path, format: ExportFormat) -> Result<(), ScanError> {
    let io_err = |source| ScanError::Io {
        path: path.to_path_buf(),
        source,
    };
    let file = File::create(path).map_err(io_err)?;
    let mut out = BufWriter::new(file);
    match format {
        ExportFormat::Table => write_scan_table(result, &mut out).map_err(io_err)?,
        ExportFormat::ScatterSvg => out.write_all(scan_svg(result).as_bytes()).map_err(io_err)?,
    }
    out.flush().map_err(io_err)
}

/// Outcome of checking `|u_n - K| <= theta^floor(n/k) max_{j<=0} |u_j - K|`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceCheck {
    pub theta: f64,
    pub point: f64,
    pub steps: usize,
    /// Steps `n` at which the estimate failed (beyond a `1e-9` slack).
    pub violations: Vec<usize>,
    pub final_distance: f64,
}

impl ConvergenceCheck {
    pub fn holds(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Iterates `system` from `seed` and records every step that breaks the
/// geometric contraction estimate toward `point` with ratio `theta`.
pub fn verify_contraction(
    system: &ControlledSystem,
    point: f64,
    theta: f64,
    seed: &[f64],
    steps: usize,
) -> Result<ConvergenceCheck, ScanError> {
    if !(theta > 0.0 && theta < 1.0) {
        return Err(ScanError::Config(format!("theta must lie in (0, 1), got {theta}")));
    }
    let k = system.order();
    if seed.len() != k {
        return Err(SeedError::WrongLength {
            expected: k,
            got: seed.len(),
        }
        .into());
    }
    let initial = seed.iter().fold(0.0, |m, v| f64::max(m, (v - point).abs()));
    let mut history = OrbitHistory::new(seed)?;
    let mut violations = Vec::new();
    let mut last = seed[0];
    for n in 1..=steps {
        let value = system.eval(history.state())?;
        if !value.is_finite() || value.abs() > DIVERGENCE_LIMIT {
            return Err(ScanError::Orbit {
                step: n,
                reason: format!("diverged to {value}"),
            });
        }
        let bound = theta.powi((n / k) as i32) * initial + 1e-9;
        if (value - point).abs() > bound {
            violations.push(n);
        }
        history.push(value);
        last = value;
    }
    Ok(ConvergenceCheck {
        theta,
        point,
        steps,
        violations,
        final_distance: (last - point).abs(),
    })
}

/// First step after which the orbit stays within `tol` of `point`, or `None`
/// if that does not happen within `max_steps`.
pub fn settling_step<M: DifferenceMap + ?Sized>(
    system: &M,
    seed: &[f64],
    point: f64,
    tol: f64,
    max_steps: usize,
) -> Result<Option<usize>, ScanError> {
    let mut history = OrbitHistory::new(seed)?;
    let mut entered: Option<usize> = None;
    for n in 1..=max_steps {
        let value = system.eval(history.state())?;
        if !value.is_finite() {
            return Ok(None);
        }
        history.push(value);
        if (value - point).abs() <= tol {
            entered.get_or_insert(n);
        } else {
            entered = None;
        }
    }
    Ok(entered)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::control::{apply_control, TargetControl};
    use crate::dynamics::{builtin_exp2, builtin_pielou, builtin_ricker};

    fn exp2_builder(c: f64) -> Result<ControlledSystem, ControlError> {
        Ok(apply_control(builtin_exp2(), TargetControl::new(c, 1.0)?))
    }

    #[test]
    fn grid_clamps_top() {
        let cfg = ScanConfig {
            c_count: 4,
            ..Default::default()
        };
        assert_eq!(cfg.grid(), vec![0.25, 0.5, 0.75, C_CLAMP]);
    }

    #[test]
    fn row_seeds_are_independent_of_order() {
        let a = row_seed(7, 3, 2, (0.0, 2.0));
        let _ = row_seed(7, 2, 2, (0.0, 2.0));
        assert_eq!(a, row_seed(7, 3, 2, (0.0, 2.0)));
        assert_ne!(a, row_seed(7, 4, 2, (0.0, 2.0)));
        assert_ne!(a, row_seed(8, 3, 2, (0.0, 2.0)));
        assert!(a.iter().all(|v| *v > 0.0 && *v <= 2.0));
    }

    #[test]
    fn single_point_from_fixed_seed() {
        let cfg = ScanConfig {
            c_count: 1,
            transient: 0,
            samples: 1,
            fixed_seed: Some(vec![1.0, 1.0]),
            ..Default::default()
        };
        let result = run_scan(&cfg, exp2_builder).unwrap();
        assert_eq!(result.rows.len(), 1);
        assert_eq!(result.rows[0].samples, vec![1.0]);
    }

    #[test]
    fn table_line_count_and_determinism() {
        let cfg = ScanConfig {
            c_count: 2,
            transient: 10,
            samples: 5,
            seed_rng: 3,
            ..Default::default()
        };
        let a = run_scan(&cfg, exp2_builder).unwrap();
        let b = run_scan(&cfg, exp2_builder).unwrap();
        let mut ta = Vec::new();
        let mut tb = Vec::new();
        write_scan_table(&a, &mut ta).unwrap();
        write_scan_table(&b, &mut tb).unwrap();
        assert_eq!(ta, tb);
        let text = String::from_utf8(ta).unwrap();
        assert_eq!(text.lines().count(), 2 * 5 + 1);
        assert!(text.starts_with("c,sample_index,u\n"));
        assert_eq!(scan_svg(&a), scan_svg(&b));
    }

    #[test]
    fn svg_has_canvas_and_dots() {
        let cfg = ScanConfig {
            c_count: 3,
            transient: 5,
            samples: 4,
            ..Default::default()
        };
        let svg = scan_svg(&run_scan(&cfg, exp2_builder).unwrap());
        assert!(svg.contains(r#"width="900" height="600""#));
        assert_eq!(svg.matches("<circle").count(), 12);
        assert!(svg.contains(">u_n</text>"));
    }

    #[test]
    fn divergence_is_marked() {
        let blowup = crate::dynamics::MapModel::custom(1, "square", |x| Ok(x[0] * x[0] + 2.0));
        let cfg = ScanConfig {
            c_count: 2,
            transient: 100,
            samples: 3,
            ..Default::default()
        };
        let result = run_scan(&cfg, |c| {
            Ok(apply_control(blowup.clone(), TargetControl::new(c.min(0.5), 0.0)?))
        })
        .unwrap();
        assert!(result.rows.iter().all(|r| r.diverged));
    }

    #[test]
    fn contraction_holds_for_ricker() {
        let l = 1.5f64.exp();
        let c = 1.0 - 0.5 / l;
        let sys = apply_control(builtin_ricker(1.5, 2).unwrap(), TargetControl::new(c, 0.0).unwrap());
        let check = verify_contraction(&sys, 0.0, 0.5, &[0.7, 0.2], 2000).unwrap();
        assert!(check.holds());
        let at_fixed = verify_contraction(&sys, 0.0, 0.5, &[0.0, 0.0], 100).unwrap();
        assert!(at_fixed.holds());
        assert_eq!(at_fixed.final_distance, 0.0);
    }

    #[test]
    fn settling_step_for_pielou_target() {
        let f = builtin_pielou(8.0, 3).unwrap();
        let sys = apply_control(f, TargetControl::new(0.95, 7.0).unwrap());
        let n = settling_step(&sys, &[1.0, 2.0, 3.0], 7.0, 1e-9, 2000).unwrap();
        assert!(n.is_some());
    }
}
