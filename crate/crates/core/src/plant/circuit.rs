use serde::{Deserialize, Serialize};

use crate::error::PlantError;
use crate::params::PlantParameters;

/// Lumped RLC ladder discretization of the penstock.
///
/// Every element carries the same inertance and storage. The resistance is
/// flow dependent: `R_i(Q) = f·dx·|Q| / (2·g·D·A²)`, so the head loss across
/// a full element is `R_i(Q)·Q`.
///
/// Each capacitance sits in series with a viscoelastic resistance
/// `R_ve = τ_ve / C_i`, so the head seen by the adjacent branches is
/// `h_i + R_ve·(Q_i − Q_{i+1})`. It damps the short-wavelength ladder modes
/// while leaving the fundamental almost untouched.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PenstockCircuit {
    pub n_elements: usize,
    /// [m]
    pub element_length: f64,
    /// L_i = dx / (g·A) [s²/m²]
    pub inductance: f64,
    /// C_i = g·A·dx / a² [m²]
    pub capacitance: f64,
    /// Viscoelastic wall damping in series with each capacitance [s/m²].
    pub viscoelastic_resistance: f64,
    friction_coefficient: f64,
}

impl PenstockCircuit {
    pub fn build(params: &PlantParameters, n_elements: usize) -> Result<Self, PlantError> {
        if n_elements < 2 {
            return Err(PlantError::InvalidParameter {
                name: "n_elements",
                reason: format!("need at least 2 penstock elements, got {n_elements}"),
            });
        }
        params.validate()?;
        let area = params.pipe_area();
        let g = params.gravity;
        let dx = params.penstock_length / n_elements as f64;
        let a = params.wave_speed;
        Ok(Self {
            n_elements,
            element_length: dx,
            inductance: dx / (g * area),
            capacitance: g * area * dx / (a * a),
            viscoelastic_resistance: params.viscoelastic_time_constant * a * a / (g * area * dx),
            friction_coefficient: params.friction_factor * dx
                / (2.0 * g * params.penstock_diameter * area * area),
        })
    }

    /// R_i(Q) for one full element.
    pub fn resistance(&self, flow: f64) -> f64 {
        self.friction_coefficient * flow.abs()
    }

    /// Head loss across one full element, `R_i(Q)·Q`.
    pub fn head_loss(&self, flow: f64) -> f64 {
        self.friction_coefficient * flow.abs() * flow
    }

    /// d(head loss)/dQ for one full element.
    pub fn incremental_resistance(&self, flow: f64) -> f64 {
        2.0 * self.friction_coefficient * flow.abs()
    }

    /// Wave speed implied by the per-element inertance and storage.
    pub fn wave_speed(&self) -> f64 {
        self.element_length / (self.inductance * self.capacitance).sqrt()
    }

    /// Head at node `i` given the capacitor head and the net inflow.
    pub fn node_head(&self, head: f64, net_inflow: f64) -> f64 {
        head + self.viscoelastic_resistance * net_inflow
    }

    pub fn total_capacitance(&self) -> f64 {
        self.capacitance * self.n_elements as f64
    }
}
