//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Criteria known to be unattainable are listed in `EXPECTED_FAIL` with the
//! reason. They still print FAIL; the run only errors on an unexpected
//! failure, or if a listed criterion starts passing.

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use hmtoc_core::control::{apply_control, compose_controls, solve_target, targeting_pipeline, TargetPreference};
use hmtoc_core::dynamics::{builtin_exp2, builtin_pielou, builtin_ricker, MapModel};
use hmtoc_core::scan::{run_scan, verify_contraction, ScanConfig};
use hmtoc_core::stability::{
    cstar_global, cstar_k2_sharp, durand_kerner, jury_table, lipschitz_grid_lower,
    minimal_stabilizing_c, root_oracle, CharPoly, SchurOutcome,
};
use hmtoc_core::{fmt_real, iterate, ControlError, ControlledSystem, DifferenceMap, TargetControl};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const EXPECTED_FAIL: &[(u8, &str)] = &[
    (
        8,
        "Pielou r=8 with L=r=8 breaks |f(x)-7| <= L max|x_j-7| (x=(14,3,0) gives ratio 15); \
         the smallest valid constant is 2r-1 = 15, which the sampled ratio respects",
    ),
];

struct Outcome {
    id: u8,
    pass: bool,
    summary: String,
}

fn seeds(rng: &mut ChaCha8Rng, k: usize, lo: f64, hi: f64, lo_open: bool) -> Vec<f64> {
    (0..k)
        .map(|_| {
            if lo_open {
                hi - (hi - lo) * rng.random::<f64>()
            } else {
                rng.random_range(lo..=hi)
            }
        })
        .collect()
}

fn elapsed(t: Instant) -> String {
    format!("{:.2}s", t.elapsed().as_secs_f64())
}

fn exp2_family(c: f64) -> Result<ControlledSystem, ControlError> {
    Ok(apply_control(builtin_exp2(), TargetControl::new(c, 1.0)?))
}

fn ricker_family(c: f64) -> Result<ControlledSystem, ControlError> {
    Ok(apply_control(builtin_ricker(1.5, 2).unwrap(), TargetControl::new(c, 0.0)?))
}

fn criterion_1() -> Outcome {
    let t = Instant::now();
    let sharp = cstar_k2_sharp(&builtin_exp2(), 1.0).unwrap().value;
    let scan = minimal_stabilizing_c(exp2_family, 300, Some(1.0)).unwrap();
    let time = t.elapsed();
    let pass = (sharp - 0.5).abs() <= 1e-12 && (scan.threshold - 0.5).abs() <= 1e-3 && time < Duration::from_secs(10);
    Outcome {
        id: 1,
        pass,
        summary: format!(
            "local threshold, exponential map K=1: k2_sharp={} (want 0.5 +/- 1e-12), empirical={} (want 0.5 +/- 1e-3), {}",
            fmt_real(sharp),
            fmt_real(scan.threshold),
            elapsed(t)
        ),
    }
}

fn criterion_2() -> Outcome {
    let t = Instant::now();
    let l = 2.0 * 1f64.exp().powi(2);
    let global = cstar_global(&builtin_exp2(), 1.0, Some(l)).unwrap().value;
    let want = 1.0 - 1.0 / l;
    let sys = exp2_family(0.94).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst_steps = 0;
    let mut failures = 0;
    for _ in 0..100 {
        let x = seeds(&mut rng, 2, 0.0, 4.0, true);
        let orbit = iterate(&sys, &x, 5000).unwrap();
        // settled from the step after the last excursion beyond 1e-8
        match orbit.values.iter().rposition(|u| (u - 1.0).abs() > 1e-8) {
            None => worst_steps = worst_steps.max(1),
            Some(n) if n + 1 < orbit.values.len() => worst_steps = worst_steps.max(n + 2),
            Some(_) => failures += 1,
        }
    }
    let time = t.elapsed();
    let pass = (global - want).abs() <= 1e-9
        && (global - 0.93233).abs() <= 1e-5
        && failures == 0
        && time < Duration::from_secs(30);
    Outcome {
        id: 2,
        pass,
        summary: format!(
            "global threshold, exponential map: c*={} (want 1-1/(2e^2)={}), c=0.94: {}/100 seeds within 1e-8 of 1 (slowest after {} steps), {}",
            fmt_real(global),
            fmt_real(want),
            100 - failures,
            worst_steps,
            elapsed(t)
        ),
    }
}

fn criterion_3() -> Outcome {
    let t = Instant::now();
    let f = builtin_ricker(1.5, 2).unwrap();
    let want = 1.0 - (-1.5f64).exp();
    let sharp = cstar_k2_sharp(&f, 0.0).unwrap().value;
    let global = cstar_global(&f, 0.0, Some(1.5f64.exp())).unwrap().value;
    let config = ScanConfig {
        seed_rng: 0,
        seed_box: ScanConfig::default_seed_box(&ricker_family(0.5).unwrap()),
        ..ScanConfig::default()
    };
    let result = run_scan(&config, ricker_family).unwrap();
    let time = t.elapsed();
    let at80 = result.row_near(0.80).unwrap();
    let at75 = result.row_near(0.75).unwrap();
    let max80 = at80.samples.iter().copied().fold(0.0, f64::max);
    // Spread read as the samples' distance from the eradicated state 0; the
    // max-min range of the row is printed alongside.
    let dev75 = at75.max_deviation(0.0);
    let pass = (sharp - want).abs() <= 1e-9
        && (global - want).abs() <= 1e-9
        && !at80.diverged
        && at80.samples.len() == config.samples
        && max80 < 1e-6
        && dev75 > 0.05
        && time < Duration::from_secs(60);
    Outcome {
        id: 3,
        pass,
        summary: format!(
            "eradication, delayed Ricker r=1.5: k2_sharp={} global={} (want {}), c={}: max sample {:e} (< 1e-6), c={}: max |u-0| {} (> 0.05, max-min {:e}), 300-row sweep {}",
            fmt_real(sharp),
            fmt_real(global),
            fmt_real(want),
            at80.c,
            max80,
            at75.c,
            fmt_real(dev75),
            at75.spread(),
            elapsed(t)
        ),
    }
}

fn criterion_4() -> Outcome {
    let f = builtin_pielou(8.0, 3).unwrap();
    let ctrl = solve_target(&f, 6.0, Some(TargetPreference::FixT(3.0))).unwrap();
    let plan = targeting_pipeline(f, 6.0, 0.9, Some(TargetPreference::FixT(3.0))).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let x = seeds(&mut rng, 3, 0.0, 13.0, true);
        let orbit = iterate(&plan.system, &x, 5000).unwrap();
        worst = worst.max((orbit.values.last().unwrap() - 6.0).abs());
    }
    let pass = (ctrl.intensity() - 2.0 / 9.0).abs() <= 1e-12 && ctrl.target() == 3.0 && worst <= 1e-6;
    Outcome {
        id: 4,
        pass,
        summary: format!(
            "targeting Pielou r=8 k=3 to K=6: c_K={} (want 2/9 +/- 1e-12), T_K={}, c2=0.9: worst |u_5000-6| over 20 seeds {:e}",
            fmt_real(ctrl.intensity()),
            ctrl.target(),
            worst
        ),
    }
}

fn criterion_5() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let (c1, t1) = (rng.random_range(0.0..1.0), rng.random_range(0.0..20.0));
        let (c2, t2) = (rng.random_range(0.0..1.0), rng.random_range(0.0..20.0));
        let outer = TargetControl::new(c1, t1).unwrap();
        let inner = TargetControl::new(c2, t2).unwrap();
        let c3 = c1 + c2 - c1 * c2;
        let t3 = (c1 * t1 + c2 * t2 - c1 * c2 * t2) / c3;
        let lemma = TargetControl::new(c3, t3).unwrap();
        let composed = compose_controls(outer, inner);
        for _ in 0..10 {
            let y = rng.random_range(0.0..50.0);
            let direct = outer.phi(inner.phi(y));
            for candidate in [lemma.phi(y), composed.phi(y)] {
                worst = worst.max((direct - candidate).abs() / direct.abs().max(f64::MIN_POSITIVE));
            }
        }
    }
    Outcome {
        id: 5,
        pass: worst <= 1e-12,
        summary: format!("composition of two controls: 1000 pairs x 10 arguments, worst relative error {worst:e} (<= 1e-12)"),
    }
}

fn contraction_violations(map: &MapModel, point: f64, l: f64, theta: f64, rng_seed: u64) -> (usize, usize) {
    let sys = apply_control(map.clone(), TargetControl::new(1.0 - theta / l, point).unwrap());
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let hi = 2.0 * point + 1.0;
    let mut bad_seeds = 0;
    let mut steps = 0;
    for _ in 0..50 {
        let x = seeds(&mut rng, map.order(), 0.0, hi, false);
        let check = verify_contraction(&sys, point, theta, &x, 2000).unwrap();
        if !check.holds() {
            bad_seeds += 1;
            steps += check.violations.len();
        }
    }
    (bad_seeds, steps)
}

fn criterion_6() -> (Outcome, String) {
    let ricker = builtin_ricker(1.5, 2).unwrap();
    let pielou = builtin_pielou(8.0, 3).unwrap();
    let mut parts = Vec::new();
    let mut pass = true;
    for (name, map, point, l) in [
        ("Ricker K=0 L=e^1.5", &ricker, 0.0, 1.5f64.exp()),
        ("Pielou K=7 L=8", &pielou, 7.0, 8.0),
    ] {
        for theta in [0.25, 0.5, 0.9] {
            let (bad, steps) = contraction_violations(map, point, l, theta, 6);
            pass &= bad == 0;
            parts.push(format!("{name} theta={theta}: {bad}/50 seeds violate ({steps} steps)"));
        }
    }
    let mut info = Vec::new();
    for theta in [0.25, 0.5, 0.9] {
        let (bad, _) = contraction_violations(&pielou, 7.0, 15.0, theta, 6);
        info.push(format!("theta={theta}: {bad}/50"));
    }
    (
        Outcome {
            id: 6,
            pass,
            summary: format!("contraction certificate, 2000 steps: {}", parts.join("; ")),
        },
        format!("info 6: Pielou K=7 with L=2r-1=15, seeds violating: {}", info.join(", ")),
    )
}

fn criterion_7() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (mut compared, mut excluded, mut disagree, mut fujiwara_bad) = (0, 0, 0, 0);
    let mut stable = 0;
    for _ in 0..12_000 {
        let k = rng.random_range(1..=5);
        let a: Vec<f64> = (0..k).map(|_| rng.random_range(-2.0..=2.0)).collect();
        let poly = CharPoly::new(a);
        let roots = durand_kerner(&poly).unwrap();
        let m = roots.max_modulus();
        if roots.roots.iter().any(|z| z.norm() > poly.fujiwara_bound() + 1e-9) {
            fujiwara_bad += 1;
        }
        if (m - 1.0).abs() <= 1e-8 {
            excluded += 1;
            continue;
        }
        compared += 1;
        let jury = jury_table(&poly).outcome;
        if jury == SchurOutcome::Stable {
            stable += 1;
        }
        if jury != root_oracle(&poly).unwrap().outcome {
            disagree += 1;
        }
    }
    // Random coefficients rarely give Schur-stable polynomials, so add draws
    // with prescribed roots inside and near the unit circle.
    let mut near = 0;
    for _ in 0..3_000 {
        let k = rng.random_range(1..=5);
        let roots: Vec<f64> = (0..k).map(|_| rng.random_range(-1.3..1.3)).collect();
        let mut asc = vec![1.0];
        for r in &roots {
            let mut next = vec![0.0; asc.len() + 1];
            for (i, c) in asc.iter().enumerate() {
                next[i] -= r * c;
                next[i + 1] += c;
            }
            asc = next;
        }
        let a: Vec<f64> = (1..=k).map(|j| -asc[k - j]).collect();
        let poly = CharPoly::new(a);
        let m = roots.iter().fold(0.0f64, |m, r| m.max(r.abs()));
        if (m - 1.0).abs() <= 1e-8 {
            excluded += 1;
            continue;
        }
        near += 1;
        compared += 1;
        let jury = jury_table(&poly).outcome;
        if jury == SchurOutcome::Stable {
            stable += 1;
        }
        if jury != root_oracle(&poly).unwrap().outcome {
            disagree += 1;
        }
    }
    Outcome {
        id: 7,
        pass: compared >= 10_000 && disagree == 0 && fujiwara_bad == 0,
        summary: format!(
            "Jury table vs root oracle: {compared} polynomials compared ({near} from real roots, {stable} stable), {excluded} in the 1e-8 boundary band, {disagree} disagreements, {fujiwara_bad} Fujiwara bound violations"
        ),
    }
}

fn criterion_8() -> (Outcome, String) {
    let pielou = builtin_pielou(8.0, 3).unwrap();
    let ricker = builtin_ricker(1.5, 2).unwrap();
    let p = lipschitz_grid_lower(&pielou, 7.0, 100.0, 100_000, 8).unwrap();
    let r = lipschitz_grid_lower(&ricker, 0.0, 100.0, 100_000, 8).unwrap();
    let pass = p <= 8.0 + 1e-9 && r <= 1.5f64.exp() + 1e-9;
    (
        Outcome {
            id: 8,
            pass,
            summary: format!(
                "Lipschitz consistency, 1e5 samples on [0,100]^k: Pielou r=8 K=7 sampled {} vs L=r=8; Ricker r=1.5 K=0 sampled {} vs L=e^1.5={}",
                fmt_real(p),
                fmt_real(r),
                fmt_real(1.5f64.exp())
            ),
        },
        format!(
            "info 8: Pielou sampled {} vs L=2r-1=15: {}; metadata constant of the built-in map is {}",
            fmt_real(p),
            if p <= 15.0 + 1e-9 { "dominated" } else { "exceeded" },
            pielou.analytic_lipschitz().map_or("none".into(), |q| fmt_real(q.l))
        ),
    )
}

fn criterion_9() -> Outcome {
    let bin = env!("CARGO_BIN_EXE_hmtoc");
    let dir = tempfile::tempdir().unwrap();
    let mut parts = Vec::new();
    let mut pass = true;
    for figure in 1..=3 {
        let mut tables = Vec::new();
        for run in 0..2 {
            let out = dir.path().join(format!("fig{figure}_{run}.csv"));
            let svg = dir.path().join(format!("fig{figure}_{run}.svg"));
            let status = Command::new(bin)
                .args(["scan", "--figure", &figure.to_string(), "--rng-seed", "42", "--out"])
                .arg(&out)
                .arg("--svg")
                .arg(&svg)
                .output()
                .unwrap();
            pass &= status.status.success();
            tables.push((read(&out), read(&svg)));
        }
        let same = tables[0] == tables[1] && !tables[0].0.is_empty();
        pass &= same;
        parts.push(format!(
            "figure {figure}: {} ({} lines)",
            if same { "identical" } else { "DIFFERENT" },
            String::from_utf8_lossy(&tables[0].0).lines().count()
        ));
    }
    Outcome {
        id: 9,
        pass,
        summary: format!("determinism of `scan --figure N` run twice with seed 42: {}", parts.join(", ")),
    }
}

fn read(p: &Path) -> Vec<u8> {
    std::fs::read(p).unwrap_or_default()
}

fn main() {
    let (c6, info6) = criterion_6();
    let (c8, info8) = criterion_8();
    let outcomes = vec![
        criterion_1(),
        criterion_2(),
        criterion_3(),
        criterion_4(),
        criterion_5(),
        c6,
        criterion_7(),
        c8,
        criterion_9(),
    ];
    let mut unexpected = Vec::new();
    for o in &outcomes {
        let expected = EXPECTED_FAIL.iter().find(|(id, _)| *id == o.id);
        println!("criterion {} {}: {}", o.id, if o.pass { "PASS" } else { "FAIL" }, o.summary);
        match (o.pass, expected) {
            (false, Some((_, why))) => println!("  known unattainable: {why}"),
            (false, None) => unexpected.push(format!("criterion {} failed", o.id)),
            (true, Some(_)) => unexpected.push(format!("criterion {} passed but is listed as unattainable", o.id)),
            (true, None) => {}
        }
    }
    println!("{info6}");
    println!("{info8}");
    let passed = outcomes.iter().filter(|o| o.pass).count();
    println!(
        "acceptance: {passed}/{} PASS, {} FAIL ({} known unattainable)",
        outcomes.len(),
        outcomes.len() - passed,
        outcomes.len() - passed - unexpected.iter().filter(|u| u.ends_with("failed")).count()
    );
    if !unexpected.is_empty() {
        eprintln!("unexpected outcomes: {}", unexpected.join("; "));
        std::process::exit(1);
    }
}
