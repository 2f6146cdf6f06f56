//! Nonlinear plant: penstock ladder, turbine, and generator on an infinite bus.
//!
//! The ladder has `I` capacitors (element heads `h_i`) and `I + 1` inductor
//! branches. Branch 1 joins the upstream reservoir to `h_1` through half an
//! element; branches 2..I join neighbouring capacitors through a full
//! element; branch `I + 1` is the second half of the last element in series
//! with the turbine passage (`L_t`) and the turbine head source, so its flow is
//! the turbine discharge `Q_t`.
//!
//! The rotor obeys `J·dω/dt = T_t − P_max·sin(δ)/ω − D·(ω − ω_s)` with the
//! load angle advancing at `P_p·ω − 2π·f_grid`.

mod circuit;
mod governor;
mod turbine;

pub use circuit::PenstockCircuit;
pub use governor::{governor_step, Governor, GovernorConfig, GovernorState};
pub use turbine::{TurbineCharacteristic, ValidityBox, CLOSED_OPENING};

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::PlantError;
use crate::ode::Rk4;
use crate::params::PlantParameters;

/// Index map of the packed plant state vector `[h_1..h_I, Q_1..Q_{I+1}, N, δ]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateLayout {
    pub n_elements: usize,
}

impl StateLayout {
    pub fn new(n_elements: usize) -> Self {
        Self { n_elements }
    }

    /// Zero-based element index.
    pub fn head(&self, i: usize) -> usize {
        i
    }

    /// Zero-based branch index, `0..=n_elements`.
    pub fn flow(&self, k: usize) -> usize {
        self.n_elements + k
    }

    pub fn turbine_flow(&self) -> usize {
        self.flow(self.n_elements)
    }

    pub fn speed(&self) -> usize {
        2 * self.n_elements + 1
    }

    pub fn angle(&self) -> usize {
        2 * self.n_elements + 2
    }

    pub fn dim(&self) -> usize {
        2 * self.n_elements + 3
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HydraulicState {
    /// Element heads h_1..h_I [m].
    pub heads: Vec<f64>,
    /// Branch flows Q_1..Q_{I+1} [m³/s]; the last one is the turbine flow.
    pub flows: Vec<f64>,
    /// [rpm]
    pub rotor_speed: f64,
    /// Load angle relative to the grid [electrical rad].
    pub rotor_angle: f64,
}

impl HydraulicState {
    pub fn layout(&self) -> StateLayout {
        StateLayout::new(self.heads.len())
    }

    pub fn turbine_flow(&self) -> f64 {
        *self.flows.last().expect("state has at least one branch")
    }

    pub fn to_vector(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.layout().dim());
        v.extend_from_slice(&self.heads);
        v.extend_from_slice(&self.flows);
        v.push(self.rotor_speed);
        v.push(self.rotor_angle);
        v
    }

    pub fn from_vector(layout: StateLayout, v: &[f64]) -> Self {
        let i = layout.n_elements;
        Self {
            heads: v[..i].to_vec(),
            flows: v[i..2 * i + 1].to_vec(),
            rotor_speed: v[layout.speed()],
            rotor_angle: v[layout.angle()],
        }
    }

    pub fn is_finite(&self) -> bool {
        self.heads.iter().chain(&self.flows).all(|v| v.is_finite())
            && self.rotor_speed.is_finite()
            && self.rotor_angle.is_finite()
    }
}

#[derive(Debug, Clone)]
pub struct Plant {
    params: PlantParameters,
    circuit: PenstockCircuit,
    turbine: TurbineCharacteristic,
    layout: StateLayout,
}

impl Plant {
    pub fn new(params: PlantParameters, n_elements: usize) -> Result<Self, PlantError> {
        let circuit = PenstockCircuit::build(&params, n_elements)?;
        let turbine = TurbineCharacteristic::synthetic(&params);
        Ok(Self {
            params,
            circuit,
            turbine,
            layout: StateLayout::new(n_elements),
        })
    }

    pub fn params(&self) -> &PlantParameters {
        &self.params
    }

    pub fn circuit(&self) -> &PenstockCircuit {
        &self.circuit
    }

    pub fn turbine(&self) -> &TurbineCharacteristic {
        &self.turbine
    }

    pub fn layout(&self) -> StateLayout {
        self.layout
    }

    /// Series inertance of the turbine branch: half an element plus `L_t`.
    pub fn turbine_branch_inductance(&self) -> f64 {
        0.5 * self.circuit.inductance + self.params.turbine_inductance
    }

    /// Right-hand side of the plant ODE for the packed state.
    ///
    /// When `x` is longer than the state dimension, the two trailing slots
    /// receive the inflow `Q_1` and outflow `Q_{I+1}` so that the integrator
    /// also accumulates the exchanged volumes.
    pub fn derivative(&self, x: &[f64], guide_vane: f64, grid_frequency: f64, dx: &mut [f64]) {
        let lay = self.layout;
        let n = lay.n_elements;
        let c = &self.circuit;
        let p = &self.params;
        let l = c.inductance;
        let closed = guide_vane <= CLOSED_OPENING;

        let h = &x[..n];
        let q = &x[n..2 * n + 1];
        let speed = x[lay.speed()];
        let angle = x[lay.angle()];

        let node = |i: usize| c.node_head(h[i], q[i] - q[i + 1]);
        dx[lay.flow(0)] = (p.upstream_head - node(0) - 0.5 * c.head_loss(q[0])) / (0.5 * l);
        for k in 1..n {
            dx[lay.flow(k)] = (node(k - 1) - node(k) - c.head_loss(q[k])) / l;
        }
        let qt = q[n];
        dx[lay.turbine_flow()] = if closed {
            0.0
        } else {
            (node(n - 1)
                - 0.5 * c.head_loss(qt)
                - self.turbine.head(qt, speed, guide_vane)
                - p.downstream_head)
                / self.turbine_branch_inductance()
        };
        for i in 0..n {
            dx[lay.head(i)] = (q[i] - q[i + 1]) / c.capacitance;
        }

        let omega = speed * 2.0 * PI / 60.0;
        let omega_sync = p.synchronous_angular_speed(grid_frequency);
        let t_turbine = self.turbine.torque(qt, speed, guide_vane);
        let t_electric = p.generator.synchronizing_power * angle.sin() / omega
            + p.generator.damping * (omega - omega_sync);
        let domega = (t_turbine - t_electric) / p.generator_inertia;
        dx[lay.speed()] = domega * 60.0 / (2.0 * PI);
        dx[lay.angle()] = p.polar_couples as f64 * omega - 2.0 * PI * grid_frequency;

        if x.len() >= lay.dim() + 2 {
            dx[lay.dim()] = q[0];
            dx[lay.dim() + 1] = q[n];
        }
    }

    /// Turbine torque at the given state and opening [N·m].
    pub fn turbine_torque(&self, state: &HydraulicState, guide_vane: f64) -> f64 {
        self.turbine
            .torque(state.turbine_flow(), state.rotor_speed, guide_vane)
    }

    /// Shaft power delivered by the turbine [W].
    pub fn mechanical_power(&self, state: &HydraulicState, guide_vane: f64) -> f64 {
        self.turbine_torque(state, guide_vane) * state.rotor_speed * 2.0 * PI / 60.0
    }

    /// Air-gap power: power-angle transfer plus damper-winding power [W].
    ///
    /// The swing equation reads `J·ω·dω/dt = P_mech − P_elec` with this
    /// definition. In steady state the damper term vanishes and the result
    /// equals turbine torque times mechanical speed.
    pub fn electrical_power(&self, state: &HydraulicState, grid_frequency: f64) -> f64 {
        let p = &self.params;
        let omega = state.rotor_speed * 2.0 * PI / 60.0;
        let omega_sync = p.synchronous_angular_speed(grid_frequency);
        p.generator.synchronizing_power * state.rotor_angle.sin()
            + p.generator.damping * omega * (omega - omega_sync)
    }

    /// Number of internal RK4 sub-steps needed to keep the turbine branch
    /// stable for the given step.
    fn substeps(&self, x: &[f64], guide_vane: f64, dt: f64) -> usize {
        if guide_vane <= CLOSED_OPENING {
            return 1;
        }
        let qt = x[self.layout.turbine_flow()];
        let stiffness = (self.turbine.head_flow_slope(qt, guide_vane)
            + self.circuit.incremental_resistance(qt))
            / self.turbine_branch_inductance();
        ((stiffness * dt / 2.5).ceil() as usize).clamp(1, 4096)
    }

    fn check_blow_up(&self, x: &[f64], time: f64) -> Result<(), PlantError> {
        let limit = 10.0 * self.params.rated_head;
        for (i, &h) in x[..self.layout.n_elements].iter().enumerate() {
            if !h.is_finite() || h.abs() > limit {
                return Err(PlantError::BlowUp {
                    time,
                    element: i + 1,
                    head: h,
                });
            }
        }
        if x[..self.layout.dim()].iter().any(|v| !v.is_finite()) {
            return Err(PlantError::BlowUp {
                time,
                element: 0,
                head: f64::NAN,
            });
        }
        Ok(())
    }

    /// Advance the packed state (optionally with volume accumulators) by `dt`.
    fn advance(
        &self,
        rk: &mut Rk4,
        x: &mut [f64],
        guide_vane: f64,
        grid_frequency: f64,
        dt: f64,
        time: f64,
    ) -> Result<(), PlantError> {
        if guide_vane <= CLOSED_OPENING {
            x[self.layout.turbine_flow()] = 0.0;
        }
        let n_sub = self.substeps(x, guide_vane, dt);
        let h = dt / n_sub as f64;
        for _ in 0..n_sub {
            rk.step(x, h, |s, d| self.derivative(s, guide_vane, grid_frequency, d));
        }
        self.check_blow_up(x, time + dt)
    }

    /// One fixed RK4 step of the full nonlinear plant.
    pub fn step(
        &self,
        state: &HydraulicState,
        guide_vane: f64,
        grid_frequency: f64,
        dt: f64,
    ) -> Result<HydraulicState, PlantError> {
        let mut x = state.to_vector();
        let mut rk = Rk4::new(x.len());
        self.advance(&mut rk, &mut x, guide_vane, grid_frequency, dt, 0.0)?;
        Ok(HydraulicState::from_vector(self.layout, &x))
    }

    /// Equilibrium for a constant opening, synchronous with `grid_frequency`.
    pub fn steady_state(
        &self,
        guide_vane: f64,
        grid_frequency: f64,
    ) -> Result<HydraulicState, PlantError> {
        let p = &self.params;
        let c = &self.circuit;
        let n = self.layout.n_elements;
        let speed = 60.0 * grid_frequency / p.polar_couples as f64;
        let available = p.upstream_head - p.downstream_head;

        let (flow, angle) = if guide_vane <= CLOSED_OPENING {
            (0.0, 0.0)
        } else {
            let residual = |q: f64| {
                available - n as f64 * c.head_loss(q) - self.turbine.head(q, speed, guide_vane)
            };
            if residual(0.0) <= 0.0 {
                return Err(PlantError::NoSteadyState {
                    guide_vane,
                    reason: "turbine head at zero flow exceeds the gross head".into(),
                });
            }
            let mut lo = 0.0;
            let mut hi = p.rated_discharge;
            while residual(hi) > 0.0 {
                hi *= 2.0;
                if hi > 1e3 * p.rated_discharge {
                    return Err(PlantError::NoSteadyState {
                        guide_vane,
                        reason: "flow bracket diverged".into(),
                    });
                }
            }
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if mid <= lo || mid >= hi {
                    break;
                }
                if residual(mid) > 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            let q = if residual(lo).abs() <= residual(hi).abs() { lo } else { hi };
            let power = self.turbine.torque(q, speed, guide_vane)
                * p.synchronous_angular_speed(grid_frequency);
            let s = power / p.generator.synchronizing_power;
            if s.abs() >= 1.0 {
                return Err(PlantError::NoSteadyState {
                    guide_vane,
                    reason: "turbine power exceeds the synchronizing power".into(),
                });
            }
            (q, s.asin())
        };

        let mut heads = Vec::with_capacity(n);
        let mut h = p.upstream_head - 0.5 * c.head_loss(flow);
        for _ in 0..n {
            heads.push(h);
            h -= c.head_loss(flow);
        }
        Ok(HydraulicState {
            heads,
            flows: vec![flow; n + 1],
            rotor_speed: speed,
            rotor_angle: angle,
        })
    }

    /// Opening whose nominal-frequency steady state produces `power` [W].
    pub fn opening_for_power(&self, power: f64) -> Result<f64, PlantError> {
        let f = self.params.nominal_grid_frequency;
        let power_at = |y: f64| -> Result<f64, PlantError> {
            let s = self.steady_state(y, f)?;
            Ok(self.electrical_power(&s, f))
        };
        let (mut lo, mut hi) = (0.02, 1.0);
        if power < power_at(lo)? || power > power_at(hi)? {
            return Err(PlantError::InvalidParameter {
                name: "power_reference",
                reason: format!("{:.2} MW is outside the reachable range", power / 1e6),
            });
        }
        for _ in 0..100 {
            let mid = 0.5 * (lo + hi);
            if power_at(mid)? < power {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(0.5 * (lo + hi))
    }
}

/// Stateful integrator around a [`Plant`], tracking time and the volumes
/// exchanged through the penstock ends.
#[derive(Debug, Clone)]
pub struct Simulator {
    plant: Plant,
    x: Vec<f64>,
    rk: Rk4,
    time: f64,
}

impl Simulator {
    pub fn new(plant: Plant, initial: &HydraulicState) -> Self {
        let mut x = initial.to_vector();
        x.extend_from_slice(&[0.0, 0.0]);
        let rk = Rk4::new(x.len());
        Self {
            plant,
            x,
            rk,
            time: 0.0,
        }
    }

    pub fn plant(&self) -> &Plant {
        &self.plant
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn state(&self) -> HydraulicState {
        HydraulicState::from_vector(self.plant.layout, &self.x)
    }

    pub fn heads(&self) -> &[f64] {
        &self.x[..self.plant.layout.n_elements]
    }

    /// Packed state without the volume accumulators.
    pub fn packed(&self) -> &[f64] {
        &self.x[..self.plant.layout.dim()]
    }

    /// Cumulative volume admitted from the upstream reservoir [m³].
    pub fn volume_in(&self) -> f64 {
        self.x[self.plant.layout.dim()]
    }

    /// Cumulative volume released through the turbine [m³].
    pub fn volume_out(&self) -> f64 {
        self.x[self.plant.layout.dim() + 1]
    }

    pub fn step(&mut self, guide_vane: f64, grid_frequency: f64, dt: f64) -> Result<(), PlantError> {
        self.plant
            .advance(&mut self.rk, &mut self.x, guide_vane, grid_frequency, dt, self.time)?;
        self.time += dt;
        Ok(())
    }
}
