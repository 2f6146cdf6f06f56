//! Affine discrete-time model of the plant around a steady operating point.
//!
//! Turbine characteristics are replaced by their first-order Taylor
//! expansions from central differences, the penstock friction is frozen at
//! its incremental value, and the generator swing is linearized
//! analytically. The continuous model is discretized with an exact
//! zero-order hold.

mod model;

pub use model::{
    build_linear_model, linear_model_around, ContinuousModel, LinearPlantModel,
    RelinearizationPolicy, GRID_FREQUENCY_INPUT, GUIDE_VANE_INPUT,
};

use serde::{Deserialize, Serialize};

use crate::error::LinearizeError;
use crate::plant::{HydraulicState, Plant, TurbineCharacteristic};

/// Default finite-difference step in per-unit of each variable.
pub const DEFAULT_EPSILON: f64 = 1e-3;

/// Tolerance on |dx/dt| for a state to count as steady.
pub const STEADY_TOLERANCE: f64 = 1e-4;

/// Central difference `(f(x + ε) − f(x − ε)) / 2ε`.
pub fn numeric_partial<F: Fn(f64) -> f64>(f: F, point: f64, epsilon: f64) -> f64 {
    (f(point + epsilon) - f(point - epsilon)) / (2.0 * epsilon)
}

/// Central difference restricted to an interval; fails if `point ± ε` leaves it.
pub fn bounded_partial<F: Fn(f64) -> f64>(
    f: F,
    axis: &'static str,
    point: f64,
    epsilon: f64,
    bounds: (f64, f64),
) -> Result<f64, LinearizeError> {
    if point - epsilon < bounds.0 || point + epsilon > bounds.1 {
        return Err(LinearizeError::OutsideValidityBox {
            axis,
            value: point,
            step: epsilon,
            lo: bounds.0,
            hi: bounds.1,
        });
    }
    Ok(numeric_partial(f, point, epsilon))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatingPoint {
    /// Q_t0 [m³/s]
    pub flow: f64,
    /// N_0 [rpm]
    pub speed: f64,
    /// y_0
    pub guide_vane: f64,
    /// Grid frequency the point is synchronous with [Hz].
    pub grid_frequency: f64,
    pub state: HydraulicState,
}

impl OperatingPoint {
    /// Steady state of the nonlinear plant at a constant opening.
    pub fn steady(plant: &Plant, guide_vane: f64, grid_frequency: f64) -> Result<Self, LinearizeError> {
        let state = plant.steady_state(guide_vane, grid_frequency)?;
        Self::from_state(plant, state, guide_vane, grid_frequency)
    }

    /// Wrap a given state, checking that it is steady within [`STEADY_TOLERANCE`].
    pub fn from_state(
        plant: &Plant,
        state: HydraulicState,
        guide_vane: f64,
        grid_frequency: f64,
    ) -> Result<Self, LinearizeError> {
        let x = state.to_vector();
        let mut dx = vec![0.0; x.len()];
        plant.derivative(&x, guide_vane, grid_frequency, &mut dx);
        if let Some((component, residual)) = dx
            .iter()
            .map(|d| d.abs())
            .enumerate()
            .find(|(_, d)| !(*d < STEADY_TOLERANCE))
        {
            return Err(LinearizeError::NotSteady { component, residual });
        }
        Ok(Self {
            flow: state.turbine_flow(),
            speed: state.rotor_speed,
            guide_vane,
            grid_frequency,
            state,
        })
    }
}

/// Partial derivatives of the head and torque characteristics at an
/// operating point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CharacteristicDerivatives {
    /// ∂H/∂Q [m per m³/s]
    pub head_flow: f64,
    /// ∂H/∂N [m/rpm]
    pub head_speed: f64,
    /// ∂H/∂y [m]
    pub head_guide_vane: f64,
    /// ∂T/∂Q [N·m per m³/s]
    pub torque_flow: f64,
    /// ∂T/∂N [N·m/rpm]
    pub torque_speed: f64,
    /// ∂T/∂y [N·m]
    pub torque_guide_vane: f64,
    /// Per-unit step used.
    pub epsilon: f64,
}

impl CharacteristicDerivatives {
    /// Central differences with per-unit step `epsilon`, cross-checked against
    /// a half step: every derivative must agree within 1%.
    pub fn compute(
        turbine: &TurbineCharacteristic,
        op: &OperatingPoint,
        epsilon: f64,
    ) -> Result<Self, LinearizeError> {
        if !(epsilon > 0.0 && epsilon < 0.1) {
            return Err(LinearizeError::Build(format!(
                "finite-difference step {epsilon} must lie in (0, 0.1)"
            )));
        }
        let full = Self::raw(turbine, op, epsilon)?;
        let half = Self::raw(turbine, op, 0.5 * epsilon)?;
        let pairs = [
            ("dH/dQ", full.head_flow, half.head_flow),
            ("dH/dN", full.head_speed, half.head_speed),
            ("dH/dy", full.head_guide_vane, half.head_guide_vane),
            ("dT/dQ", full.torque_flow, half.torque_flow),
            ("dT/dN", full.torque_speed, half.torque_speed),
            ("dT/dy", full.torque_guide_vane, half.torque_guide_vane),
        ];
        for (name, a, b) in pairs {
            if !a.is_finite() || !b.is_finite() {
                return Err(LinearizeError::Build(format!("{name} is not finite")));
            }
            if (a - b).abs() > 0.01 * a.abs().max(b.abs()) {
                return Err(LinearizeError::Build(format!(
                    "{name} not converged: {a} at ε, {b} at ε/2"
                )));
            }
        }
        Ok(full)
    }

    fn raw(
        turbine: &TurbineCharacteristic,
        op: &OperatingPoint,
        epsilon: f64,
    ) -> Result<Self, LinearizeError> {
        let (q_r, n_r, _) = turbine.rated_point();
        let vb = turbine.validity;
        let (q0, n0, y0) = (op.flow, op.speed, op.guide_vane);
        let eq = epsilon * q_r;
        let en = epsilon * n_r;
        let ey = epsilon;
        Ok(Self {
            head_flow: bounded_partial(|q| turbine.head(q, n0, y0), "flow", q0, eq, vb.flow)?,
            head_speed: bounded_partial(|n| turbine.head(q0, n, y0), "speed", n0, en, vb.speed)?,
            head_guide_vane: bounded_partial(
                |y| turbine.head(q0, n0, y),
                "guide_vane",
                y0,
                ey,
                vb.guide_vane,
            )?,
            torque_flow: bounded_partial(|q| turbine.torque(q, n0, y0), "flow", q0, eq, vb.flow)?,
            torque_speed: bounded_partial(
                |n| turbine.torque(q0, n, y0),
                "speed",
                n0,
                en,
                vb.speed,
            )?,
            torque_guide_vane: bounded_partial(
                |y| turbine.torque(q0, n0, y),
                "guide_vane",
                y0,
                ey,
                vb.guide_vane,
            )?,
            epsilon,
        })
    }
}

/// First-order expansion `v₀ + d_Q·(Q − Q₀) + d_N·(N − N₀) + d_y·(y − y₀)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearCharacteristic {
    pub value: f64,
    pub flow: f64,
    pub speed: f64,
    pub guide_vane: f64,
    pub d_flow: f64,
    pub d_speed: f64,
    pub d_guide_vane: f64,
}

impl LinearCharacteristic {
    pub fn eval(&self, flow: f64, speed: f64, guide_vane: f64) -> f64 {
        self.value
            + self.d_flow * (flow - self.flow)
            + self.d_speed * (speed - self.speed)
            + self.d_guide_vane * (guide_vane - self.guide_vane)
    }
}

/// Affine head map H̃_t around `op`.
pub fn linearize_head(
    turbine: &TurbineCharacteristic,
    op: &OperatingPoint,
    epsilon: f64,
) -> Result<LinearCharacteristic, LinearizeError> {
    let d = CharacteristicDerivatives::compute(turbine, op, epsilon)?;
    Ok(head_map(turbine, op, &d))
}

/// Affine torque map 𝒯 around `op`.
pub fn linearize_torque(
    turbine: &TurbineCharacteristic,
    op: &OperatingPoint,
    epsilon: f64,
) -> Result<LinearCharacteristic, LinearizeError> {
    let d = CharacteristicDerivatives::compute(turbine, op, epsilon)?;
    Ok(torque_map(turbine, op, &d))
}

fn head_map(
    turbine: &TurbineCharacteristic,
    op: &OperatingPoint,
    d: &CharacteristicDerivatives,
) -> LinearCharacteristic {
    LinearCharacteristic {
        value: turbine.head(op.flow, op.speed, op.guide_vane),
        flow: op.flow,
        speed: op.speed,
        guide_vane: op.guide_vane,
        d_flow: d.head_flow,
        d_speed: d.head_speed,
        d_guide_vane: d.head_guide_vane,
    }
}

fn torque_map(
    turbine: &TurbineCharacteristic,
    op: &OperatingPoint,
    d: &CharacteristicDerivatives,
) -> LinearCharacteristic {
    LinearCharacteristic {
        value: turbine.torque(op.flow, op.speed, op.guide_vane),
        flow: op.flow,
        speed: op.speed,
        guide_vane: op.guide_vane,
        d_flow: d.torque_flow,
        d_speed: d.torque_speed,
        d_guide_vane: d.torque_guide_vane,
    }
}
