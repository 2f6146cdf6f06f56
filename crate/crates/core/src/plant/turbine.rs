//! Analytic surrogate of the Francis turbine characteristics.
//!
//! Head: `H_t = H_r·[α₁·q|q| + α₂·n²]` with unit discharge `q = Q/(y·Q_r)` and
//! per-unit speed `n = N/N_r`.
//!
//! Torque: hydraulic power balance `T_t = ρ·g·Q·H_t·η / ω`. The efficiency
//! hill `η = η_max·exp(−κ_q(q − q_p)² − κ_n(n − 1)²)` is scaled so that the
//! rated point delivers exactly the rated torque. Its ridge sits slightly
//! below unit discharge, which makes torque rise with opening at fixed flow.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::params::{PlantParameters, TurbineSurrogate};

/// Openings at or below this value are treated as a closed valve.
pub const CLOSED_OPENING: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValidityBox {
    pub flow: (f64, f64),
    pub speed: (f64, f64),
    pub guide_vane: (f64, f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TurbineCharacteristic {
    rated_head: f64,
    rated_discharge: f64,
    rated_speed: f64,
    pressure_per_head: f64,
    shape: TurbineSurrogate,
    peak_efficiency: f64,
    pub validity: ValidityBox,
}

impl TurbineCharacteristic {
    pub fn synthetic(params: &PlantParameters) -> Self {
        let shape = params.turbine.clone();
        let rated_efficiency = params.rated_torque * params.rated_angular_speed()
            / (params.pressure_per_head() * params.rated_discharge * params.rated_head);
        let dq = 1.0 - shape.efficiency_peak_unit_flow;
        let peak_efficiency = rated_efficiency * (shape.efficiency_flow_curvature * dq * dq).exp();
        Self {
            rated_head: params.rated_head,
            rated_discharge: params.rated_discharge,
            rated_speed: params.rated_speed,
            pressure_per_head: params.pressure_per_head(),
            shape,
            peak_efficiency,
            validity: ValidityBox {
                flow: (-0.5 * params.rated_discharge, 1.6 * params.rated_discharge),
                speed: (0.5 * params.rated_speed, 1.5 * params.rated_speed),
                guide_vane: (0.02, 1.1),
            },
        }
    }

    fn unit_flow(&self, flow: f64, guide_vane: f64) -> f64 {
        flow / (guide_vane.max(CLOSED_OPENING) * self.rated_discharge)
    }

    /// Turbine head H_t(Q, N, y) [m].
    pub fn head(&self, flow: f64, speed_rpm: f64, guide_vane: f64) -> f64 {
        let q = self.unit_flow(flow, guide_vane);
        let n = speed_rpm / self.rated_speed;
        self.rated_head
            * (self.shape.head_flow_coefficient * q * q.abs()
                + self.shape.head_speed_coefficient * n * n)
    }

    /// ∂H_t/∂Q, used for stiffness estimates.
    pub fn head_flow_slope(&self, flow: f64, guide_vane: f64) -> f64 {
        let q = self.unit_flow(flow, guide_vane);
        2.0 * self.rated_head * self.shape.head_flow_coefficient * q.abs()
            / (guide_vane.max(CLOSED_OPENING) * self.rated_discharge)
    }

    pub fn efficiency(&self, flow: f64, speed_rpm: f64, guide_vane: f64) -> f64 {
        let dq = self.unit_flow(flow, guide_vane) - self.shape.efficiency_peak_unit_flow;
        let dn = speed_rpm / self.rated_speed - 1.0;
        self.peak_efficiency
            * (-self.shape.efficiency_flow_curvature * dq * dq
                - self.shape.efficiency_speed_curvature * dn * dn)
                .exp()
    }

    /// Turbine torque T_t(Q, N, y) [N·m].
    pub fn torque(&self, flow: f64, speed_rpm: f64, guide_vane: f64) -> f64 {
        if guide_vane <= CLOSED_OPENING {
            return 0.0;
        }
        let omega = speed_rpm * 2.0 * PI / 60.0;
        self.pressure_per_head
            * flow
            * self.head(flow, speed_rpm, guide_vane)
            * self.efficiency(flow, speed_rpm, guide_vane)
            / omega
    }

    pub fn rated_point(&self) -> (f64, f64, f64) {
        (self.rated_discharge, self.rated_speed, 1.0)
    }

    pub fn shape(&self) -> &TurbineSurrogate {
        &self.shape
    }
}
