//! Physical plant constants.
//!
//! Defaults describe a 230 MW medium-head plant with a single Francis unit and
//! an open-air 1100 m penstock. Quantities not published for that plant
//! (wall thickness, friction, wall viscoelasticity, turbine inductance,
//! generator data, turbine surrogate shape) carry documented engineering defaults.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::PlantError;

/// Shape coefficients of the analytic turbine surrogate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TurbineSurrogate {
    /// Weight of the discharge term in the head characteristic.
    pub head_flow_coefficient: f64,
    /// Weight of the speed term in the head characteristic.
    pub head_speed_coefficient: f64,
    /// Curvature of the efficiency hill along the unit-discharge axis.
    pub efficiency_flow_curvature: f64,
    /// Unit discharge (flow per opening, per-unit) at peak efficiency.
    pub efficiency_peak_unit_flow: f64,
    /// Curvature of the efficiency hill along the speed axis.
    pub efficiency_speed_curvature: f64,
}

impl Default for TurbineSurrogate {
    fn default() -> Self {
        Self {
            head_flow_coefficient: 0.95,
            head_speed_coefficient: 0.05,
            efficiency_flow_curvature: 15.0,
            efficiency_peak_unit_flow: 0.92,
            efficiency_speed_curvature: 1.0,
        }
    }
}

/// Synchronous machine coupling to the infinite bus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorParams {
    /// Peak of the power-angle curve [W].
    pub synchronizing_power: f64,
    /// Damper-winding torque per unit slip speed [N·m·s].
    pub damping: f64,
}

impl Default for GeneratorParams {
    fn default() -> Self {
        Self {
            synchronizing_power: 460.0e6,
            damping: 6.0e6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlantParameters {
    /// [W]
    pub rated_power: f64,
    /// Net head at rated discharge [m].
    pub rated_head: f64,
    /// [m³/s]
    pub rated_discharge: f64,
    /// [rpm]
    pub rated_speed: f64,
    /// [N·m]
    pub rated_torque: f64,
    /// [m]
    pub penstock_length: f64,
    /// [m]
    pub penstock_diameter: f64,
    /// Pressure wave celerity [m/s].
    pub wave_speed: f64,
    /// [m]
    pub wall_thickness: f64,
    /// Darcy friction factor.
    pub friction_factor: f64,
    /// Retardation time of the viscoelastic wall response [s].
    pub viscoelastic_time_constant: f64,
    /// Upstream reservoir level above the tailwater datum [m].
    pub upstream_head: f64,
    /// [m]
    pub downstream_head: f64,
    /// [kg/m³]
    pub water_density: f64,
    /// [m/s²]
    pub gravity: f64,
    /// Generator, shaft and runner [kg·m²].
    pub generator_inertia: f64,
    pub polar_couples: u32,
    /// [Hz]
    pub nominal_grid_frequency: f64,
    /// Water inertia of the turbine passage [s²/m²].
    pub turbine_inductance: f64,
    pub turbine: TurbineSurrogate,
    pub generator: GeneratorParams,
}

impl Default for PlantParameters {
    fn default() -> Self {
        let mut p = Self {
            rated_power: 230.0e6,
            rated_head: 315.0,
            rated_discharge: 85.3,
            rated_speed: 375.0,
            rated_torque: 5.86e6,
            penstock_length: 1100.0,
            penstock_diameter: 5.0,
            wave_speed: 1100.0,
            wall_thickness: 0.05,
            friction_factor: 0.012,
            viscoelastic_time_constant: 0.02,
            upstream_head: 0.0,
            downstream_head: 0.0,
            water_density: 1000.0,
            gravity: 9.81,
            generator_inertia: 1.044e6,
            polar_couples: 8,
            nominal_grid_frequency: 50.0,
            turbine_inductance: 0.05,
            turbine: TurbineSurrogate::default(),
            generator: GeneratorParams::default(),
        };
        p.upstream_head = p.downstream_head + p.rated_head + p.rated_friction_loss();
        p
    }
}

impl PlantParameters {
    /// Pipe cross-section [m²].
    pub fn pipe_area(&self) -> f64 {
        PI * self.penstock_diameter * self.penstock_diameter / 4.0
    }

    /// Darcy–Weisbach head loss over the whole penstock at rated discharge [m].
    pub fn rated_friction_loss(&self) -> f64 {
        let a = self.pipe_area();
        self.friction_factor * self.penstock_length * self.rated_discharge * self.rated_discharge
            / (2.0 * self.gravity * self.penstock_diameter * a * a)
    }

    /// Mechanical angular speed at rated speed [rad/s].
    pub fn rated_angular_speed(&self) -> f64 {
        self.rated_speed * 2.0 * PI / 60.0
    }

    /// Synchronous mechanical pulsation for a grid frequency [rad/s].
    pub fn synchronous_angular_speed(&self, grid_frequency: f64) -> f64 {
        2.0 * PI * grid_frequency / self.polar_couples as f64
    }

    /// Nominal rotor pulsation ω_o = 2π·f_o / P_p [rad/s].
    pub fn nominal_pulsation(&self) -> f64 {
        self.synchronous_angular_speed(self.nominal_grid_frequency)
    }

    /// Head-to-pressure factor k = g·ρ [Pa/m].
    pub fn pressure_per_head(&self) -> f64 {
        self.gravity * self.water_density
    }

    pub fn validate(&self) -> Result<(), PlantError> {
        let positive = [
            ("rated_power", self.rated_power),
            ("rated_head", self.rated_head),
            ("rated_discharge", self.rated_discharge),
            ("rated_speed", self.rated_speed),
            ("rated_torque", self.rated_torque),
            ("penstock_length", self.penstock_length),
            ("penstock_diameter", self.penstock_diameter),
            ("wave_speed", self.wave_speed),
            ("wall_thickness", self.wall_thickness),
            ("water_density", self.water_density),
            ("gravity", self.gravity),
            ("generator_inertia", self.generator_inertia),
            ("nominal_grid_frequency", self.nominal_grid_frequency),
            ("turbine_inductance", self.turbine_inductance),
            ("generator.synchronizing_power", self.generator.synchronizing_power),
        ];
        for (name, value) in positive {
            if !(value.is_finite() && value > 0.0) {
                return Err(PlantError::InvalidParameter {
                    name,
                    reason: format!("must be finite and strictly positive, got {value}"),
                });
            }
        }
        let non_negative = [
            ("friction_factor", self.friction_factor),
            ("viscoelastic_time_constant", self.viscoelastic_time_constant),
            ("generator.damping", self.generator.damping),
        ];
        for (name, value) in non_negative {
            if !(value.is_finite() && value >= 0.0) {
                return Err(PlantError::InvalidParameter {
                    name,
                    reason: format!("must be finite and non-negative, got {value}"),
                });
            }
        }
        if self.polar_couples < 1 {
            return Err(PlantError::InvalidParameter {
                name: "polar_couples",
                reason: "must be at least 1".into(),
            });
        }
        if self.upstream_head <= self.downstream_head {
            return Err(PlantError::InvalidParameter {
                name: "upstream_head",
                reason: "must lie above the downstream head".into(),
            });
        }
        let shaft_power = self.rated_torque * self.rated_angular_speed();
        if ((shaft_power - self.rated_power) / self.rated_power).abs() > 0.05 {
            return Err(PlantError::InvalidParameter {
                name: "rated_torque",
                reason: format!(
                    "rated torque × rated speed = {:.3} MW disagrees with rated power by more than 5%",
                    shaft_power / 1e6
                ),
            });
        }
        let t = &self.turbine;
        if !(t.head_flow_coefficient > 0.0 && t.head_speed_coefficient >= 0.0) {
            return Err(PlantError::InvalidParameter {
                name: "turbine.head_flow_coefficient",
                reason: "head coefficients must be positive (flow) and non-negative (speed)".into(),
            });
        }
        if ((t.head_flow_coefficient + t.head_speed_coefficient) - 1.0).abs() > 1e-12 {
            return Err(PlantError::InvalidParameter {
                name: "turbine.head_speed_coefficient",
                reason: "head coefficients must sum to one so the rated point is a fixed point".into(),
            });
        }
        if !(t.efficiency_flow_curvature >= 0.0 && t.efficiency_speed_curvature >= 0.0) {
            return Err(PlantError::InvalidParameter {
                name: "turbine.efficiency_flow_curvature",
                reason: "efficiency curvatures must be non-negative".into(),
            });
        }
        Ok(())
    }
}
