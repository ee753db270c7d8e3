use hmtoc_core::control::{apply_control, ControlledSystem};
use hmtoc_core::dynamics::{builtin_exp2, builtin_pielou, builtin_ricker};
use hmtoc_core::scan::{export_scan, run_scan, ExportFormat, ScanConfig, ScanResult};
use hmtoc_core::stability::{char_poly, jury_table, minimal_stabilizing_c, SchurOutcome};
use hmtoc_core::{ControlError, TargetControl};

fn exp2(c: f64) -> Result<ControlledSystem, ControlError> {
    Ok(apply_control(builtin_exp2(), TargetControl::new(c, 1.0)?))
}

fn ricker(c: f64) -> Result<ControlledSystem, ControlError> {
    Ok(apply_control(builtin_ricker(1.5, 2).unwrap(), TargetControl::new(c, 0.0)?))
}

fn pielou_targeted(c: f64) -> Result<ControlledSystem, ControlError> {
    let corrective = TargetControl::new(2.0 / 9.0, 3.0)?;
    Ok(ControlledSystem::new(
        builtin_pielou(8.0, 3).unwrap(),
        vec![corrective, TargetControl::new(c, 6.0)?],
    ))
}

fn scan(builder: fn(f64) -> Result<ControlledSystem, ControlError>, seed_box: (f64, f64)) -> ScanResult {
    let cfg = ScanConfig {
        seed_box,
        seed_rng: 2024,
        ..ScanConfig::default()
    };
    run_scan(&cfg, builder).unwrap()
}

#[test]
fn exponential_sweep_shows_sharp_threshold() {
    let result = scan(exp2, ScanConfig::default_seed_box(&exp2(0.5).unwrap()));
    assert_eq!(result.rows.len(), 300);
    for row in &result.rows {
        assert!(!row.diverged);
        assert!(row.samples.iter().all(|u| u.is_finite() && *u >= 0.0));
        if row.c > 0.51 {
            assert!(row.max_deviation(1.0) < 1e-6, "c={}", row.c);
        }
        if row.c < 0.45 {
            assert!(row.spread() > 0.1, "c={} spread {}", row.c, row.spread());
        }
    }
}

#[test]
fn ricker_sweep_is_eradicated_past_threshold() {
    let result = scan(ricker, ScanConfig::default_seed_box(&ricker(0.5).unwrap()));
    for row in result.rows.iter().filter(|r| r.c >= 0.80) {
        assert!(row.samples.iter().all(|u| *u < 1e-6), "c={}", row.c);
    }
}

// Rows far from the detected threshold settle on the target exactly when the
// Jury table calls the target stable.
#[test]
fn sweeps_agree_with_linear_stability() {
    type Builder = fn(f64) -> Result<ControlledSystem, ControlError>;
    let cases: [(Builder, f64); 3] = [(exp2, 1.0), (ricker, 0.0), (pielou_targeted, 6.0)];
    for (builder, point) in cases {
        let threshold = minimal_stabilizing_c(builder, 200, Some(point)).unwrap().threshold;
        let result = scan(builder, ScanConfig::default_seed_box(&builder(0.5).unwrap()));
        for row in result.rows.iter().filter(|r| (r.c - threshold).abs() > 0.01) {
            let system = builder(row.c).unwrap();
            let stable = jury_table(&char_poly(&system, point).unwrap()).outcome == SchurOutcome::Stable;
            let settled = row.max_deviation(point) <= 1e-6;
            if settled {
                assert!(stable, "c={} settled on unstable {point}", row.c);
            }
            if stable && row.c > threshold {
                assert!(settled, "c={} stable but max deviation {}", row.c, row.max_deviation(point));
            }
        }
    }
}

#[test]
fn exports_are_reproducible() {
    let cfg = ScanConfig {
        c_count: 20,
        transient: 200,
        samples: 10,
        seed_rng: 5,
        seed_box: (0.0, 2.0),
        fixed_seed: None,
    };
    let dir = tempfile::tempdir().unwrap();
    let mut files = Vec::new();
    for i in 0..2 {
        let result = run_scan(&cfg, exp2).unwrap();
        let table = dir.path().join(format!("t{i}.csv"));
        let svg = dir.path().join(format!("s{i}.svg"));
        export_scan(&result, &table, ExportFormat::Table).unwrap();
        export_scan(&result, &svg, ExportFormat::ScatterSvg).unwrap();
        files.push((std::fs::read(table).unwrap(), std::fs::read(svg).unwrap()));
    }
    assert_eq!(files[0], files[1]);
    let text = String::from_utf8(files[0].0.clone()).unwrap();
    assert_eq!(text.lines().count(), 20 * 10 + 1);
    let err = export_scan(
        &run_scan(&cfg, exp2).unwrap(),
        &dir.path().join("missing/out.csv"),
        ExportFormat::Table,
    )
    .unwrap_err();
    assert!(err.to_string().contains("missing/out.csv"));
}
