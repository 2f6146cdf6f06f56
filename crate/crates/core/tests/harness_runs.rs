//! End-to-end runs: determinism, exported traces and their summaries,
//! comparisons and aborts.

use std::fs;
use std::path::Path;

use hydrohybrid::harness::report::summarize;
use hydrohybrid::harness::*;

fn short(controller: ControllerKind, seconds: f64) -> ScenarioConfig {
    ScenarioConfig {
        name: controller.as_str().into(),
        duration: seconds,
        controller,
        ..ScenarioConfig::default()
    }
}

const TRACES: [&str; 7] = [
    "commands.csv",
    "frequency.csv",
    "plant.csv",
    "twin.csv",
    "mpc.csv",
    "split.csv",
    "bands.csv",
];

#[test]
fn seeded_runs_write_identical_files() {
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    for d in &dirs {
        let cfg = ScenarioConfig {
            output_dir: Some(d.path().to_path_buf()),
            ..short(ControllerKind::Mpc, 90.0)
        };
        run_scenario(&cfg).unwrap();
    }
    // summary.json also carries wall-clock statistics and config.toml the
    // output directory; both are excluded.
    for name in TRACES.iter().chain(&["damage_report.csv", "manifest.json"]) {
        let a = fs::read(dirs[0].path().join(name)).unwrap();
        let b = fs::read(dirs[1].path().join(name)).unwrap();
        assert!(!a.is_empty(), "{name} empty");
        assert!(a == b, "{name} differs between runs");
    }
}

fn rows(path: &Path) -> usize {
    fs::read_to_string(path).unwrap().lines().count() - 1
}

#[test]
fn every_trace_has_one_row_per_period() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ScenarioConfig {
        output_dir: Some(dir.path().to_path_buf()),
        ..short(ControllerKind::Mpc, 30.0)
    };
    let out = run_scenario(&cfg).unwrap();
    assert_eq!(out.traces.steps(), 600);
    for name in &TRACES[..6] {
        assert_eq!(rows(&dir.path().join(name)), 600, "{name}");
    }
    assert_eq!(rows(&dir.path().join("bands.csv")), 20 * out.traces.bands.len());
    let manifest: RunManifest = serde_json::from_str(&fs::read_to_string(dir.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest.seed, Some(1));
    assert_eq!(manifest.config_hash, cfg.hash());
    assert_eq!(manifest.steps, 600);
    for f in &manifest.files {
        assert!(dir.path().join(f).exists(), "{f}");
    }
}

#[test]
fn summary_recomputed_from_exported_traces_matches() {
    for controller in [ControllerKind::None, ControllerKind::Mpc, ControllerKind::Lpf] {
        let dir = tempfile::tempdir().unwrap();
        let cfg = ScenarioConfig {
            output_dir: Some(dir.path().to_path_buf()),
            ..short(controller, 120.0)
        };
        let out = run_scenario(&cfg).unwrap();
        let back = RunTraces::read_dir(dir.path(), cfg.control_period(), out.traces.layout).unwrap();
        let again = summarize(&cfg, &out.summary.fingerprint, &back, &out.cycle_ms);
        assert_eq!(again, out.summary, "{}", controller.as_str());
    }
}

#[test]
fn comparison_with_itself_is_unity() {
    let out = run_scenario(&short(ControllerKind::None, 600.0)).unwrap();
    assert!(out.damage.total_damage > 0.0);
    let cmp = compare_report((&out.summary, &out.damage), &[(&out.summary, &out.damage)]).unwrap();
    assert_eq!(cmp.rows[0].rdi, Some(1.0));
    for (e, rdi) in out.damage.elements.iter().zip(&cmp.rows[0].element_rdi) {
        if e.damage > 0.0 {
            assert_eq!(*rdi, Some(1.0));
        }
    }
    let md = cmp.to_markdown();
    assert_eq!(md.lines().count(), 3);
    let mut csv = Vec::new();
    cmp.write_csv(&mut csv).unwrap();
    assert_eq!(String::from_utf8(csv).unwrap().lines().count(), 2);
}

#[test]
fn comparison_refuses_other_frequency_traces() {
    let a = run_scenario(&short(ControllerKind::None, 20.0)).unwrap();
    let mut cfg = short(ControllerKind::None, 20.0);
    if let FrequencySource::Synthetic(s) = &mut cfg.frequency {
        s.seed = 2;
    }
    let b = run_scenario(&cfg).unwrap();
    assert_ne!(a.summary.fingerprint, b.summary.fingerprint);
    let err = compare_report((&a.summary, &a.damage), &[(&b.summary, &b.damage)]).unwrap_err();
    assert!(matches!(err, hydrohybrid::HarnessError::Mismatch(_)));
}

#[test]
fn constant_frequency_without_control_is_flat_and_harmless() {
    let cfg = ScenarioConfig {
        frequency: FrequencySource::Synthetic(SyntheticFrequency {
            volatility: 0.0,
            events: EventSchedule {
                magnitude: 0.0,
                ..EventSchedule::default()
            },
            ..SyntheticFrequency::default()
        }),
        ..short(ControllerKind::None, 60.0)
    };
    let out = run_scenario(&cfg).unwrap();
    let p = &out.traces.plant.p_hpp;
    let spread = p.iter().cloned().fold(f64::MIN, f64::max) - p.iter().cloned().fold(f64::MAX, f64::min);
    assert!(spread < 1e-6 * cfg.power_reference, "spread {spread} W");
    assert!((p[0] - cfg.power_reference).abs() < 1e-3 * cfg.power_reference);
    assert_eq!(out.damage.total_damage, 0.0);
    assert_eq!(out.summary.band.violating_steps, 0);
}

#[test]
fn csv_frequency_source_reproduces_the_synthetic_run() {
    let dir = tempfile::tempdir().unwrap();
    let synthetic = short(ControllerKind::Lpf, 30.0);
    let a = run_scenario(&synthetic).unwrap();
    let path = dir.path().join("f.csv");
    frequency::write_trace(fs::File::create(&path).unwrap(), 0.05, &a.traces.frequency).unwrap();
    let from_file = ScenarioConfig {
        frequency: FrequencySource::Csv { path },
        ..synthetic
    };
    let b = run_scenario(&from_file).unwrap();
    assert_eq!(a.traces.plant.p_hpp, b.traces.plant.p_hpp);
    assert_eq!(a.summary.fingerprint, b.summary.fingerprint);
}

#[test]
fn persistent_fallback_aborts_with_a_bundle() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = ScenarioConfig {
        output_dir: Some(dir.path().to_path_buf()),
        ..short(ControllerKind::Mpc, 30.0)
    };
    // A solver that cannot converge falls back on the first constrained
    // cycle, and no fallback is tolerated.
    cfg.mpc.head_band_fraction = 0.003;
    cfg.mpc.solver.max_iterations = 1;
    cfg.abort.max_consecutive_fallbacks = 0;
    if let FrequencySource::Synthetic(s) = &mut cfg.frequency {
        s.events.first = 1.0;
    }
    let err = run_scenario(&cfg).unwrap_err();
    let hydrohybrid::HarnessError::Aborted { time, reason, bundle } = err else {
        panic!("expected an abort, got {err}");
    };
    assert!(time > 1.0 && time < 30.0, "aborted at {time} s");
    assert!(reason.contains("consecutive"), "{reason}");
    let bundle = Path::new(&bundle);
    assert!(bundle.starts_with(dir.path()));
    assert!(fs::read_to_string(bundle.join("reason.txt")).unwrap().contains("consecutive"));
    assert!(bundle.join("config.toml").exists());
    let kept = rows(&bundle.join("plant.csv"));
    assert!(kept > 0 && kept <= 200, "{kept} rows kept");
}
