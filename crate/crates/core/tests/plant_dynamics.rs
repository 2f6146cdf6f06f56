use std::f64::consts::PI;

mod common;

use common::plant_checks::{crossing_period, joukowsky, plant, step_trace, DT};
use hydrohybrid::plant::{Governor, GovernorConfig, HydraulicState, Simulator};

#[test]
fn step_response_oscillates_at_quarter_wave_period() {
    let p = plant(20);
    let final_head = p.steady_state(0.7, 50.0).unwrap().heads[19];
    let trace = step_trace(&p, 0.8, 0.7, 20.0);
    let dev: Vec<f64> = trace.iter().map(|h| h - final_head).collect();

    // Closing raises the head first.
    assert!(dev[(0.5 / DT) as usize] > 20.0);

    // Crossings of the final level, interpolated, while the swing is still visible.
    let (period, crossings) = crossing_period(&trace, final_head).expect("at least four crossings");
    let expected = 4.0 * 1100.0 / 1100.0;
    assert!(
        (period / expected - 1.0).abs() < 0.10,
        "period {period} s, crossings {crossings:?}"
    );
}

#[test]
fn dominant_frequency_matches_wave_timing() {
    // Independent estimate: peak of the magnitude spectrum of the step response.
    let p = plant(20);
    let final_head = p.steady_state(0.7, 50.0).unwrap().heads[19];
    let trace = step_trace(&p, 0.8, 0.7, 40.0);
    let dev: Vec<f64> = trace.iter().map(|h| h - final_head).collect();
    let power = |f: f64| {
        let (mut re, mut im) = (0.0, 0.0);
        for (k, v) in dev.iter().enumerate() {
            let ph = 2.0 * PI * f * k as f64 * DT;
            re += v * ph.cos();
            im += v * ph.sin();
        }
        re * re + im * im
    };
    // A step response has a 1/f component; weight by f² to look at the resonance.
    let (mut best_f, mut best) = (0.0, 0.0);
    let mut f = 0.05;
    while f < 2.0 {
        let w = power(f) * f * f;
        if w > best {
            best = w;
            best_f = f;
        }
        f += 0.0025;
    }
    assert!((best_f / 0.25 - 1.0).abs() < 0.10, "dominant {best_f} Hz");
}

#[test]
fn instantaneous_closure_respects_joukowsky() {
    for n in [20, 40] {
        let p = plant(n);
        let trace = step_trace(&p, 1.0, 0.0, 2.0);
        let h0 = trace[0];
        let surge = trace.iter().map(|h| h - h0).fold(f64::MIN, f64::max);
        let bound = joukowsky(p.params());
        assert!((bound - 487.13).abs() < 0.05, "{bound}");
        assert!(surge <= 1.05 * bound, "n={n}: surge {surge} vs {bound}");
        // The plateau reaches the Joukowsky level less friction recovery.
        assert!(surge >= 0.95 * bound, "n={n}: surge {surge} vs {bound}");
    }
}

#[test]
fn volume_is_conserved() {
    let p = plant(20);
    let c = p.circuit().capacitance;
    for (from, to) in [(1.0, 0.0), (0.8, 0.7), (0.4, 0.9)] {
        let s0 = p.steady_state(from, 50.0).unwrap();
        let mut sim = Simulator::new(p.clone(), &s0);
        let mut previous = (0.0, 0.0);
        for k in 1..=(10.0 / DT) as usize {
            sim.step(to, 50.0, DT).unwrap();
            let stored: f64 = sim
                .heads()
                .iter()
                .zip(&s0.heads)
                .map(|(h, h0)| c * (h - h0))
                .sum();
            let net = sim.volume_in() - sim.volume_out();
            assert!(
                (stored - net).abs() <= 1e-3 * stored.abs().max(1e-6),
                "{from}->{to} at step {k}: stored {stored} vs net {net}"
            );
            // Every sub-window also balances.
            let window_stored = stored - previous.0;
            let window_net = net - previous.1;
            assert!(
                (window_stored - window_net).abs() <= 1e-3 * window_stored.abs().max(1e-6),
                "window at step {k}"
            );
            previous = (stored, net);
        }
    }
}

#[test]
fn refinement_changes_peak_by_less_than_two_percent() {
    let peak = |n: usize| {
        let p = plant(n);
        let trace = step_trace(&p, 0.8, 0.7, 10.0);
        trace.iter().map(|h| h - trace[0]).fold(f64::MIN, f64::max)
    };
    let coarse = peak(20);
    let fine = peak(40);
    assert!(
        ((fine - coarse) / coarse).abs() < 0.02,
        "peak rise 20 el {coarse} m, 40 el {fine} m"
    );
}

#[test]
fn runs_are_bit_identical() {
    let run = || {
        let p = plant(20);
        let s0 = p.steady_state(0.6, 50.0).unwrap();
        let mut sim = Simulator::new(p, &s0);
        let mut bits = Vec::new();
        for k in 0..2000 {
            let y = 0.6 + 0.2 * (k as f64 * 0.01).sin();
            let f = 50.0 + 0.1 * (k as f64 * 0.003).cos();
            sim.step(y, f, DT).unwrap();
            bits.extend(sim.packed().iter().map(|v| v.to_bits()));
        }
        bits
    };
    assert_eq!(run(), run());
}

#[test]
fn settles_and_power_increases_with_opening() {
    let p = plant(20);
    let start = p.steady_state(1.0, 50.0).unwrap();
    let mut powers = Vec::new();
    let mut dx = vec![0.0; p.layout().dim()];
    for i in 0..=14 {
        let y = 0.3 + 0.05 * i as f64;
        let mut sim = Simulator::new(p.clone(), &start);
        let mut settled = false;
        for _ in 0..(120.0 / DT) as usize {
            sim.step(y, 50.0, DT).unwrap();
            p.derivative(sim.packed(), y, 50.0, &mut dx);
            if dx[..20].iter().all(|d| d.abs() < 1e-6) {
                settled = true;
                break;
            }
        }
        assert!(settled, "y={y} did not settle");
        let state = sim.state();
        powers.push(p.electrical_power(&state, 50.0));
    }
    assert!(powers.windows(2).all(|w| w[1] > w[0]), "{powers:?}");
}

#[test]
fn swing_energy_balance_holds_in_transients() {
    let p = plant(20);
    let j = p.params().generator_inertia;
    let s0 = p.steady_state(0.9, 50.0).unwrap();
    let mut sim = Simulator::new(p.clone(), &s0);
    let mut states: Vec<(HydraulicState, f64, f64)> = Vec::new();
    for k in 0..3000 {
        let y = if k < 500 { 0.9 } else { 0.6 };
        let f = if k < 1500 { 50.0 } else { 49.8 };
        states.push((sim.state(), y, f));
        sim.step(y, f, DT).unwrap();
    }
    states.push((sim.state(), 0.6, 49.8));
    let omega = |s: &HydraulicState| s.rotor_speed * PI / 30.0;
    // Kinetic energy change against the trapezoidal work of P_mech − P_elec,
    // each interval evaluated with the inputs held during that interval.
    let mut work = 0.0;
    let mut total: f64 = 0.0;
    let mut worst: f64 = 0.0;
    let e0 = 0.5 * j * omega(&states[0].0).powi(2);
    for k in 0..states.len() - 1 {
        let (a, y, f) = &states[k];
        let b = &states[k + 1].0;
        let pa = p.mechanical_power(a, *y) - p.electrical_power(a, *f);
        let pb = p.mechanical_power(b, *y) - p.electrical_power(b, *f);
        work += 0.5 * (pa + pb) * DT;
        total += 0.5 * (pa.abs() + pb.abs()) * DT;
        let kinetic = 0.5 * j * omega(b).powi(2) - e0;
        worst = worst.max((kinetic - work).abs());
    }
    assert!(total > 1e6, "transient too small to be meaningful: {total} J");
    assert!(worst < 1e-3 * total, "worst {worst} J against {total} J");
}

#[test]
fn droop_closed_loop_delivers_twenty_three_megawatts() {
    let p = plant(20);
    let reference = 150.0e6;
    let y0 = p.opening_for_power(reference).unwrap();
    let s0 = p.steady_state(y0, 50.0).unwrap();
    let mut sim = Simulator::new(p.clone(), &s0);
    let cfg = GovernorConfig::default();
    let mut gov = Governor::new(cfg, y0).unwrap();
    let control = 0.05;
    let substeps = 13;
    let grid = 49.9;
    let mut power = 0.0;
    for _ in 0..(300.0 / control) as usize {
        let s = sim.state();
        power = p.electrical_power(&s, grid);
        let y = gov.step(s.rotor_speed * PI / 30.0, power, reference, control);
        for _ in 0..substeps {
            sim.step(y, grid, control / substeps as f64).unwrap();
        }
    }
    let expected: f64 = 0.1 / (50.0 * 0.02) * 230.0e6;
    assert!((expected - 23.0e6).abs() < 1.0);
    assert!(
        (power - reference - expected).abs() < 0.01 * expected,
        "increase {} MW",
        (power - reference) / 1e6
    );
}
