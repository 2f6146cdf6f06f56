//! Step experiments on the nonlinear plant and its linear model.

use hydrohybrid::linearize::LinearPlantModel;
use hydrohybrid::plant::{Plant, Simulator};
use hydrohybrid::PlantParameters;

/// Plant integration step [s].
pub const DT: f64 = 0.004;
pub const CONTROL: f64 = 0.05;
pub const SUBSTEPS: usize = 13;

pub fn plant(n: usize) -> Plant {
    Plant::new(PlantParameters::default(), n).unwrap()
}

/// Head of the turbine-adjacent element after switching the opening, sampled every step.
pub fn step_trace(p: &Plant, from: f64, to: f64, seconds: f64) -> Vec<f64> {
    let s0 = p.steady_state(from, 50.0).unwrap();
    let mut sim = Simulator::new(p.clone(), &s0);
    let last = p.layout().n_elements - 1;
    let mut out = vec![s0.heads[last]];
    for _ in 0..(seconds / DT).round() as usize {
        sim.step(to, 50.0, DT).unwrap();
        out.push(sim.heads()[last]);
    }
    out
}

/// a·v/g for the rated flow velocity.
pub fn joukowsky(p: &PlantParameters) -> f64 {
    p.wave_speed * (p.rated_discharge / p.pipe_area()) / p.gravity
}

/// Oscillation period from interpolated crossings of `level`; `None` with
/// fewer than four crossings.
pub fn crossing_period(trace: &[f64], level: f64) -> Option<(f64, Vec<f64>)> {
    let dev: Vec<f64> = trace.iter().map(|h| h - level).collect();
    let mut crossings = Vec::new();
    for k in 1..dev.len() {
        if dev[k - 1].signum() != dev[k].signum() && dev[k - 1].abs().max(dev[k].abs()) > 1e-3 {
            let frac = dev[k - 1] / (dev[k - 1] - dev[k]);
            crossings.push((k as f64 - 1.0 + frac) * DT);
        }
    }
    if crossings.len() < 4 {
        return None;
    }
    let spans = crossings.len() - 1;
    Some((2.0 * (crossings[spans] - crossings[0]) / spans as f64, crossings))
}

/// Largest relative mismatch between stored volume and net inflow over a
/// step from `from` to `to`, checked every plant step for `seconds`.
pub fn volume_balance_error(p: &Plant, from: f64, to: f64, seconds: f64) -> f64 {
    let c = p.circuit().capacitance;
    let s0 = p.steady_state(from, 50.0).unwrap();
    let mut sim = Simulator::new(p.clone(), &s0);
    let mut worst: f64 = 0.0;
    for _ in 0..(seconds / DT) as usize {
        sim.step(to, 50.0, DT).unwrap();
        let stored: f64 = sim.heads().iter().zip(&s0.heads).map(|(h, h0)| c * (h - h0)).sum();
        let net = sim.volume_in() - sim.volume_out();
        worst = worst.max((stored - net).abs() / stored.abs().max(1e-6));
    }
    worst
}

/// Largest head error of the linear prediction over `seconds`, and the
/// largest nonlinear head excursion, across all elements.
pub fn linear_step_error(p: &Plant, model: &LinearPlantModel, y0: f64, dy: f64, seconds: f64) -> (f64, f64) {
    let s0 = p.steady_state(y0, 50.0).unwrap();
    let mut sim = Simulator::new(p.clone(), &s0);
    let mut x = LinearPlantModel::state_vector(&s0);
    let n = p.layout().n_elements;
    let (mut err, mut excursion): (f64, f64) = (0.0, 0.0);
    for _ in 0..(seconds / CONTROL).round() as usize {
        for _ in 0..SUBSTEPS {
            sim.step(y0 + dy, 50.0, CONTROL / SUBSTEPS as f64).unwrap();
        }
        x = model.step(&x, y0 + dy, 50.0);
        for i in 0..n {
            err = err.max((x[i] - sim.heads()[i]).abs());
            excursion = excursion.max((sim.heads()[i] - s0.heads[i]).abs());
        }
    }
    (err, excursion)
}
