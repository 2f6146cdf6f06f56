//! Closed-loop MPC behaviour against the nonlinear plant on the default scenario.

use hydrohybrid::harness::*;
use hydrohybrid::linearize::linear_model_around;
use hydrohybrid::mpc::critical_element;
use hydrohybrid::plant::Plant;

fn scenario() -> (ScenarioConfig, Vec<f64>) {
    let cfg = ScenarioConfig::default();
    let f = cfg.frequency.samples(cfg.steps(), cfg.control_period()).unwrap();
    (cfg, f)
}

/// Largest distance of any head from the centre of its band [m].
fn excursion(out: &RunOutput) -> f64 {
    let n = out.traces.layout.n_elements;
    let mut worst: f64 = 0.0;
    for (k, s) in out.traces.plant.states.iter().enumerate() {
        let b = out.traces.band_at(k);
        for i in 0..n {
            worst = worst.max((s[i] - 0.5 * (b.lower[i] + b.upper[i])).abs());
        }
    }
    worst
}

#[test]
fn knowing_the_future_command_does_not_add_violations() {
    let (cfg, f) = scenario();
    let persistent = run_with_frequency(&cfg, &f).unwrap();
    let replay = run_with_forecast(&cfg, &f, &persistent.traces.y_star).unwrap();
    let (a, b) = (&persistent.summary.band, &replay.summary.band);
    assert!(b.max_violation <= a.max_violation, "{b:?} vs {a:?}");
    assert!(b.violating_steps <= a.violating_steps, "{b:?} vs {a:?}");
}

#[test]
fn narrower_band_never_widens_excursions() {
    let (cfg, f) = scenario();
    let mut previous = f64::INFINITY;
    for fraction in [0.08, 0.06, 0.04] {
        let mut c = cfg.clone();
        c.mpc.head_band_fraction = fraction;
        let e = excursion(&run_with_frequency(&c, &f).unwrap());
        assert!(e <= previous, "band ±{fraction}: excursion {e} m after {previous} m");
        previous = e;
    }
}

#[test]
fn unbounded_band_reproduces_the_uncontrolled_run() {
    let (mut cfg, f) = scenario();
    // Both runs are scored on the default curve.
    cfg.fatigue.endurance_limit = Some(cfg.mpc.stress_band(&cfg.plant) / 2.0);
    let none = run_with_frequency(&ScenarioConfig { controller: ControllerKind::None, ..cfg.clone() }, &f).unwrap();
    cfg.mpc.head_band_fraction = 1e6;
    let mpc = run_with_frequency(&cfg, &f).unwrap();
    assert_eq!(mpc.traces.plant.y, mpc.traces.y_star);
    assert!(mpc.traces.p_bess().iter().all(|p| *p == 0.0));
    assert_eq!(mpc.summary.mpc.as_ref().unwrap().active_steps, 0);
    let cmp = compare_report((&none.summary, &none.damage), &[(&mpc.summary, &mpc.damage)]).unwrap();
    let rdi = cmp.rows[0].rdi.unwrap();
    assert!((rdi - 1.0).abs() < 1e-9, "RDI {rdi}");
}

#[test]
fn critical_element_is_the_most_damaged_one() {
    let (cfg, f) = scenario();
    let none = run_with_frequency(&ScenarioConfig { controller: ControllerKind::None, ..cfg.clone() }, &f).unwrap();
    let plant = Plant::new(cfg.plant.clone(), cfg.n_elements).unwrap();
    let y0 = plant.opening_for_power(cfg.power_reference).unwrap();
    let model = linear_model_around(&plant, y0, cfg.plant.nominal_grid_frequency, cfg.control_period()).unwrap();
    let predicted = critical_element(&model, &cfg.mpc);
    assert_eq!(predicted, cfg.n_elements - 1);
    assert_eq!(none.damage.critical_element, predicted + 1);
}

#[test]
fn battery_share_is_zero_until_constrained_and_signed_by_the_shortfall() {
    let (cfg, f) = scenario();
    let out = run_with_frequency(&cfg, &f).unwrap();
    let p_bess = out.traces.p_bess();
    let records = &out.traces.mpc;
    let first = records.iter().position(|r| r.active || r.fallback).expect("the scenario constrains the MPC");
    assert!(p_bess[..first].iter().all(|p| *p == 0.0));
    for (r, p) in records.iter().zip(&p_bess) {
        // A smaller opening than commanded under-delivers: the battery discharges.
        if r.y_dagger < r.y_star {
            assert!(*p >= 0.0, "t = {}: y† {} < y* {} with P_bess {p}", r.t, r.y_dagger, r.y_star);
        }
        if r.y_dagger > r.y_star {
            assert!(*p <= 0.0, "t = {}: y† {} > y* {} with P_bess {p}", r.t, r.y_dagger, r.y_star);
        }
    }
    // Shadows merge again after each episode, so the split ends exactly.
    let last_active = records.iter().rposition(|r| r.active || r.fallback).unwrap();
    assert!(p_bess[last_active..].iter().any(|p| *p == 0.0));
    assert_eq!(*p_bess.last().unwrap(), 0.0);
}
