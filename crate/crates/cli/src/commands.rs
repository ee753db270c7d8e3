use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use hmtoc_core::control::{targeting_pipeline, TargetPreference};
use hmtoc_core::dynamics::OrbitErrorKind;
use hmtoc_core::scan::{export_scan, run_scan, ExportFormat, ScanConfig, ScanError};
use hmtoc_core::stability::{
    cstar_derivative_sum, cstar_fujiwara, cstar_global, cstar_k2_sharp, find_fixed_points,
    lipschitz_from_bounded, lipschitz_grid_lower, minimal_stabilizing_c, StabilityError,
    StabilityReport,
};
use hmtoc_core::{
    builtin_exp2, builtin_pielou, builtin_ricker, fmt_real, iterate, ControlledSystem,
    DifferenceMap, TargetControl,
};

use crate::config::{ConfigFile, Settings};
use crate::mapspec::{build_system, parse_controls, parse_range, parse_reals};
use crate::{
    Common, ComposeArgs, CstarArgs, FixedPointsArgs, LipschitzArgs, NumericFailure, ScanArgs,
    SimulateArgs, TargetArgs,
};

fn numeric(err: impl Into<anyhow::Error>) -> anyhow::Error {
    NumericFailure(err.into()).into()
}

/// Bad input is a usage error; everything else is numeric.
fn stability(err: StabilityError) -> anyhow::Error {
    match err {
        StabilityError::NoSearchBound
        | StabilityError::NotFixedPoint { .. }
        | StabilityError::InvalidArgument(_)
        | StabilityError::Control(_)
        | StabilityError::NoLipschitz { .. }
        | StabilityError::MissingGlobalBound => err.into(),
        _ => numeric(err),
    }
}

fn load_config(path: Option<&Path>) -> Result<Option<ConfigFile>> {
    path.map(ConfigFile::load).transpose()
}

fn path_text(p: Option<PathBuf>) -> Option<String> {
    p.map(|p| p.to_string_lossy().into_owned())
}

fn system_from(s: &Settings, common: &Common) -> Result<ControlledSystem> {
    let map = s.string("map", common.map.clone())?;
    let controls = s.list("control", common.controls.clone())?;
    build_system(map, &controls)
}

fn with_output<F>(path: Option<&str>, write: F) -> Result<()>
where
    F: FnOnce(&mut dyn Write) -> io::Result<()>,
{
    match path {
        Some(p) => {
            let file = File::create(p).with_context(|| format!("cannot create {p}"))?;
            let mut out = BufWriter::new(file);
            write(&mut out).and_then(|_| out.flush()).with_context(|| format!("cannot write {p}"))
        }
        None => {
            let stdout = io::stdout();
            let mut out = stdout.lock();
            write(&mut out).context("cannot write to standard output")
        }
    }
}

fn write_report(path: Option<&str>, report: &StabilityReport) -> Result<()> {
    if let Some(p) = path {
        std::fs::write(p, report.to_json() + "\n").with_context(|| format!("cannot write {p}"))?;
    }
    Ok(())
}

fn require_fixed_point<M: DifferenceMap + ?Sized>(map: &M, point: f64) -> Result<()> {
    let image = map.eval_diagonal(point).map_err(numeric)?;
    let residual = (image - point).abs();
    if !(residual <= 1e-8 * (1.0 + point.abs())) {
        bail!(
            "K = {point} is not a fixed point: f(K,...,K) = {} (residual {residual:e})",
            fmt_real(image)
        );
    }
    Ok(())
}

pub fn simulate(a: SimulateArgs) -> Result<()> {
    let file = load_config(a.common.config.as_deref())?;
    let s = Settings::new(file.as_ref(), "simulate");
    let system = system_from(&s, &a.common)?;
    let seed = s
        .string("seed", a.seed)?
        .ok_or_else(|| anyhow!("no seed given (use --seed x1,...,xk)"))?;
    let seed = parse_reals(&seed, "seed")?;
    if seed.len() != system.order() {
        bail!("seed has {} values but the map has order {}", seed.len(), system.order());
    }
    let steps = s.integer("steps", a.steps)?.unwrap_or(100) as usize;
    let out = s.string("out", path_text(a.out))?;

    match iterate(&system, &seed, steps) {
        Ok(orbit) => with_output(out.as_deref(), |w| orbit.write_table(w)),
        Err(err) => {
            if let OrbitErrorKind::Seed(e) = &err.kind {
                bail!("invalid seed: {e}");
            }
            with_output(out.as_deref(), |w| err.partial.write_table(w))?;
            Err(numeric(*err))
        }
    }
}

pub fn fixed_points(a: FixedPointsArgs) -> Result<()> {
    let file = load_config(a.common.config.as_deref())?;
    let s = Settings::new(file.as_ref(), "fixed-points");
    let system = system_from(&s, &a.common)?;
    let bound = s.real("bound", a.bound)?;
    let report_path = s.string("report", path_text(a.report))?;
    let report = StabilityReport::analyze(&system, bound).map_err(stability)?;
    print!("{}", report.to_text());
    write_report(report_path.as_deref(), &report)
}

pub fn cstar(a: CstarArgs) -> Result<()> {
    let file = load_config(a.common.config.as_deref())?;
    let s = Settings::new(file.as_ref(), "cstar");
    let system = system_from(&s, &a.common)?;
    let point = s.real("point", a.point)?;
    let find = s.flag("find", a.find)?;
    let lipschitz = s.real("lipschitz", a.lipschitz)?;
    let c_samples = s.integer("c-samples", a.c_samples)?.unwrap_or(100) as usize;
    let interval = s.string("interval", a.interval)?.map(|t| parse_range(&t, "interval")).transpose()?;
    let threshold_grid = s.integer("threshold", a.threshold)?;
    let rng_seed = s.integer("rng-seed", a.rng_seed)?.unwrap_or(0);
    let report_path = s.string("report", path_text(a.report))?;

    let points = match (point, find) {
        (Some(_), true) => bail!("give either --point or --find, not both"),
        (Some(k), false) => {
            require_fixed_point(&system, k)?;
            vec![k]
        }
        (None, true) => {
            let found = find_fixed_points(&system, None).map_err(stability)?;
            if found.points.is_empty() {
                return Err(numeric(anyhow!("no fixed point found in [0, {}]", found.search_bound)));
            }
            found.values()
        }
        (None, false) => bail!("no fixed point given (use --point K or --find)"),
    };

    let mut report = StabilityReport::new(system.label());
    for k in points {
        report.points.push(StabilityReport::analyze_point(&system, k).map_err(stability)?);
        if system.order() == 2 {
            report.estimates.push(cstar_k2_sharp(&system, k).map_err(stability)?);
        }
        report.estimates.push(cstar_derivative_sum(&system, k).map_err(stability)?);

        let mut stack = system.controls().to_vec();
        stack.push(TargetControl::new(0.5, k)?);
        let outer = ControlledSystem::new(system.base().clone(), stack);
        let m = system.diagonal_bound().unwrap_or(0.0);
        let range = interval.unwrap_or((0.0, 2.0 * k.max(m).max(1.0)));
        report.estimates.push(cstar_fujiwara(&outer, range, c_samples).map_err(stability)?);

        match cstar_global(&system, k, lipschitz) {
            Ok(e) => report.estimates.push(e),
            Err(StabilityError::NoLipschitz { .. }) if system.global_bound().is_some() && k > 0.0 => {
                let bounded = lipschitz_from_bounded(&system, k, None, rng_seed).map_err(stability)?;
                let mut e = cstar_global(&system, k, Some(bounded.value)).map_err(stability)?;
                e.flags.push("bounded_map_lipschitz".into());
                if bounded.heuristic {
                    e.flags.push("heuristic_local_lipschitz".into());
                }
                report.estimates.push(e);
            }
            Err(StabilityError::NoLipschitz { .. }) => {
                report.flags.push(format!("global_lipschitz: no constant known for K={k}; pass --lipschitz"));
            }
            Err(e) => return Err(stability(e)),
        }

        if let Some(grid) = threshold_grid {
            let scan = minimal_stabilizing_c(|c| outer.with_outer_intensity(c), grid as usize, Some(k))
                .map_err(stability)?;
            report.flags.push(format!("empirical_threshold K={k} c={}", fmt_real(scan.threshold)));
        }
    }
    print!("{}", report.to_text());
    write_report(report_path.as_deref(), &report)
}

pub fn lipschitz(a: LipschitzArgs) -> Result<()> {
    let file = load_config(a.common.config.as_deref())?;
    let s = Settings::new(file.as_ref(), "lipschitz");
    let system = system_from(&s, &a.common)?;
    let k = s
        .real("point", a.point)?
        .ok_or_else(|| anyhow!("no fixed point given (use --point K)"))?;
    let domain_hi = s.real("domain-hi", a.domain_hi)?.unwrap_or(100.0);
    let samples = s.integer("samples", a.samples)?.unwrap_or(100_000) as usize;
    let rng_seed = s.integer("rng-seed", a.rng_seed)?.unwrap_or(0);
    let local_l = s.real("local-l", a.local_l)?;
    require_fixed_point(&system, k)?;

    let lower = lipschitz_grid_lower(&system, k, domain_hi, samples, rng_seed).map_err(stability)?;
    println!("map: {}", system.label());
    println!("sampled_lower: {}", fmt_real(lower));
    match system.analytic_lipschitz().filter(|p| p.k == k) {
        Some(pair) => {
            println!("analytic: {}", fmt_real(pair.l));
            if lower > pair.l + 1e-9 {
                println!("note: the sampled ratio exceeds the analytic constant");
            }
        }
        None => println!("analytic: none for K={k}"),
    }
    if system.global_bound().is_some() && k > 0.0 {
        let b = lipschitz_from_bounded(&system, k, local_l, rng_seed).map_err(stability)?;
        println!(
            "bounded: {}{}",
            fmt_real(b.value),
            if b.heuristic { " (heuristic local constant)" } else { "" }
        );
    }
    Ok(())
}

fn figure_system(figure: u8) -> Result<ControlledSystem> {
    Ok(match figure {
        1 => ControlledSystem::new(builtin_exp2(), vec![TargetControl::new(0.5, 1.0)?]),
        2 => ControlledSystem::new(builtin_ricker(1.5, 2)?, vec![TargetControl::new(0.5, 0.0)?]),
        3 => ControlledSystem::new(
            builtin_pielou(8.0, 3)?,
            vec![TargetControl::new(2.0 / 9.0, 3.0)?, TargetControl::new(0.5, 6.0)?],
        ),
        other => bail!("unknown figure {other} (expected 1, 2 or 3)"),
    })
}

fn scan_error(err: ScanError) -> anyhow::Error {
    match err {
        ScanError::Config(_) | ScanError::Io { .. } | ScanError::Seed(_) | ScanError::Control(_) => err.into(),
        _ => numeric(err),
    }
}

pub fn scan(a: ScanArgs) -> Result<()> {
    let file = load_config(a.common.config.as_deref())?;
    let s = Settings::new(file.as_ref(), "scan");
    let figure = s.integer("figure", a.figure.map(u64::from))?;
    let map = s.string("map", a.common.map.clone())?;
    let controls = s.list("control", a.common.controls.clone())?;
    let target = s.real("target", a.target)?;

    let template = match figure {
        Some(n) => {
            if map.is_some() || !controls.is_empty() || target.is_some() {
                bail!("--figure selects its own map and controls; drop --map/--control/--target");
            }
            figure_system(u8::try_from(n).unwrap_or(0))?
        }
        None => {
            let mut system = build_system(map, &controls)?;
            match (target, system.controls().is_empty()) {
                (Some(_), false) => bail!("--target applies only when no --control is given"),
                (Some(t), true) => system = system.then(TargetControl::new(0.5, t)?),
                (None, _) => {}
            }
            system
        }
    };

    let defaults = ScanConfig::default();
    let seed_box = match s.string("seed-box", a.seed_box)? {
        Some(t) => parse_range(&t, "seed box")?,
        None => ScanConfig::default_seed_box(&template),
    };
    let config = ScanConfig {
        c_count: s.integer("c-count", a.c_count)?.map_or(defaults.c_count, |v| v as usize),
        transient: s.integer("transient", a.transient)?.map_or(defaults.transient, |v| v as usize),
        samples: s.integer("samples", a.samples)?.map_or(defaults.samples, |v| v as usize),
        seed_rng: s.integer("rng-seed", a.rng_seed)?.unwrap_or(defaults.seed_rng),
        seed_box,
        fixed_seed: None,
    };
    let out = s
        .string("out", path_text(a.out))?
        .ok_or_else(|| anyhow!("no table path given (use --out FILE)"))?;
    let svg = s.string("svg", path_text(a.svg))?;
    let threshold = s.flag("threshold", a.threshold)?;

    let builder = |c: f64| template.with_outer_intensity(c);
    let result = run_scan(&config, builder).map_err(scan_error)?;
    export_scan(&result, Path::new(&out), ExportFormat::Table).map_err(scan_error)?;
    if let Some(svg) = &svg {
        export_scan(&result, Path::new(svg), ExportFormat::ScatterSvg).map_err(scan_error)?;
    }
    let diverged = result.rows.iter().filter(|r| r.diverged).count();
    println!("map: {}", result.label);
    println!(
        "rows: {} (c = i/{}), transient {}, samples {}, seed box ({}, {}], rng seed {}",
        result.rows.len(),
        config.c_count,
        config.transient,
        config.samples,
        config.seed_box.0,
        config.seed_box.1,
        config.seed_rng
    );
    println!("diverged rows: {diverged}");
    println!("table: {out}");
    if let Some(svg) = svg {
        println!("scatter: {svg}");
    }

    if threshold {
        let t = template.outermost().map_or(0.0, |c| c.target());
        let inner = template.inner();
        let point = match inner.eval_diagonal(t) {
            Ok(v) if (v - t).abs() <= 1e-8 * (1.0 + t) => Some(t),
            _ => None,
        };
        let scan = minimal_stabilizing_c(builder, config.c_count, point).map_err(stability)?;
        match point {
            Some(p) => println!("threshold (K={p}): {}", fmt_real(scan.threshold)),
            None => println!("threshold (largest fixed point): {}", fmt_real(scan.threshold)),
        }
        for tr in &scan.transitions {
            println!(
                "  transition between c={} and c={}: {}",
                fmt_real(tr.c_lo),
                fmt_real(tr.c_hi),
                if tr.becomes_stable { "stabilizes" } else { "destabilizes" }
            );
        }
    }
    Ok(())
}

pub fn target(a: TargetArgs) -> Result<()> {
    let file = load_config(a.common.config.as_deref())?;
    let s = Settings::new(file.as_ref(), "target");
    let system = system_from(&s, &a.common)?;
    let k = s
        .real("point", a.point)?
        .ok_or_else(|| anyhow!("no point given (use --point K)"))?;
    let preference = match (s.real("fix-t", a.fix_t)?, s.real("fix-c", a.fix_c)?) {
        (Some(_), Some(_)) => bail!("give at most one of --fix-t and --fix-c"),
        (Some(t), None) => Some(TargetPreference::FixT(t)),
        (None, Some(c)) => Some(TargetPreference::FixC(c)),
        (None, None) => None,
    };
    let c2 = s
        .real("c2", a.c2)?
        .ok_or_else(|| anyhow!("no stabilizing intensity given (use --c2 C)"))?;
    let steps = s.integer("steps", a.steps)?.unwrap_or(2000) as usize;
    let seed = match s.string("seed", a.seed)? {
        Some(t) => parse_reals(&t, "seed")?,
        None => vec![k / 2.0; system.order()],
    };
    if seed.len() != system.order() {
        bail!("seed has {} values but the map has order {}", seed.len(), system.order());
    }

    let map = if system.controls().is_empty() {
        system.base().clone()
    } else {
        system.to_map_model()
    };
    let plan = targeting_pipeline(map, k, c2, preference)?;
    println!("map: {}", system.label());
    println!("corrective: {}", plan.corrective);
    println!("stabilizing: {}", plan.stabilizing);
    println!("composed: {}", plan.equivalent);

    let orbit = iterate(&plan.system, &seed, steps).map_err(|e| numeric(*e))?;
    let last = orbit.values.last().copied().unwrap_or(seed[0]);
    let distance = (last - k).abs();
    println!(
        "verification: {} steps from [{}], final u = {}, |u - K| = {:e}, {}",
        steps,
        seed.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(", "),
        fmt_real(last),
        distance,
        if distance <= 1e-6 { "converged" } else { "not converged" }
    );
    Ok(())
}

pub fn compose(a: ComposeArgs) -> Result<()> {
    let file = load_config(a.config.as_deref())?;
    let s = Settings::new(file.as_ref(), "compose");
    let controls = parse_controls(&s.list("control", a.controls)?)?;
    if controls.is_empty() {
        bail!("no controls given (use --control c=C,T=T, repeatable)");
    }
    let composed = controls
        .iter()
        .fold(TargetControl::identity(), |acc, &ctl| hmtoc_core::compose_controls(ctl, acc));
    for (i, c) in controls.iter().enumerate() {
        println!("layer {}: {c}", i + 1);
    }
    println!("composed: {composed}");
    Ok(())
}
