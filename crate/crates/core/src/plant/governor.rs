use serde::{Deserialize, Serialize};

use crate::error::PlantError;

/// Speed governor with permanent droop on the measured electrical power.
///
/// Error signal: `e = (ω_0 − ω_r)/ω_0 − R·(P − P_ref)/P_r`, where `P_ref` is
/// the speed-changer setting. The PI(D) law acts on `e` and its integral
/// carries the opening bias, so in steady state `e = 0` and the power moves
/// by `Δω/(ω_0·R)·P_r` away from the reference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GovernorConfig {
    pub droop: f64,
    /// [opening / pu]
    pub proportional_gain: f64,
    /// [opening / (pu · s)]
    pub integral_gain: f64,
    /// [opening · s / pu]; zero gives the plain PI regulator.
    pub derivative_gain: f64,
    /// Maximum opening rate [1/s].
    pub rate_limit: f64,
    pub opening_limits: (f64, f64),
    /// ω_0 [rad/s, mechanical].
    pub nominal_speed: f64,
    /// Power base of the droop [W].
    pub rated_power: f64,
}

impl Default for GovernorConfig {
    fn default() -> Self {
        Self {
            droop: 0.02,
            proportional_gain: DEFAULT_PROPORTIONAL_GAIN,
            integral_gain: DEFAULT_INTEGRAL_GAIN,
            derivative_gain: 0.0,
            rate_limit: 0.1,
            opening_limits: (0.0, 1.0),
            nominal_speed: 2.0 * std::f64::consts::PI * 50.0 / 8.0,
            rated_power: 230.0e6,
        }
    }
}

/// PI gains for the default plant at 2% droop: the power loop settles with a
/// time constant of about 20 s and the proportional kick stays within the
/// rate limiter for frequency steps up to 0.25 Hz.
const DEFAULT_PROPORTIONAL_GAIN: f64 = 10.0;
const DEFAULT_INTEGRAL_GAIN: f64 = 3.0;

impl GovernorConfig {
    pub fn validate(&self) -> Result<(), PlantError> {
        if !(self.droop > 0.0 && self.droop <= 0.1) {
            return Err(PlantError::InvalidParameter {
                name: "governor.droop",
                reason: format!("must lie in (0, 0.1], got {}", self.droop),
            });
        }
        if !(self.rate_limit > 0.0) {
            return Err(PlantError::InvalidParameter {
                name: "governor.rate_limit",
                reason: "must be positive".into(),
            });
        }
        let (lo, hi) = self.opening_limits;
        if !(0.0..=1.0).contains(&lo) || !(0.0..=1.0).contains(&hi) || lo >= hi {
            return Err(PlantError::InvalidParameter {
                name: "governor.opening_limits",
                reason: format!("must satisfy 0 ≤ lo < hi ≤ 1, got ({lo}, {hi})"),
            });
        }
        for (name, v) in [
            ("governor.nominal_speed", self.nominal_speed),
            ("governor.rated_power", self.rated_power),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(PlantError::InvalidParameter {
                    name,
                    reason: "must be positive".into(),
                });
            }
        }
        for (name, g) in [
            ("governor.proportional_gain", self.proportional_gain),
            ("governor.integral_gain", self.integral_gain),
            ("governor.derivative_gain", self.derivative_gain),
        ] {
            if !(g.is_finite() && g >= 0.0) {
                return Err(PlantError::InvalidParameter {
                    name,
                    reason: "gains must be finite and non-negative".into(),
                });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GovernorState {
    /// Integral term; at equilibrium it equals the opening.
    pub integral: f64,
    pub output: f64,
    pub previous_error: f64,
}

impl GovernorState {
    /// Equilibrium at nominal speed with the measured power on the reference.
    pub fn at_equilibrium(opening: f64) -> Self {
        Self {
            integral: opening,
            output: opening,
            previous_error: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Governor {
    pub config: GovernorConfig,
    pub state: GovernorState,
}

impl Governor {
    pub fn new(config: GovernorConfig, opening: f64) -> Result<Self, PlantError> {
        config.validate()?;
        Ok(Self {
            config,
            state: GovernorState::at_equilibrium(opening),
        })
    }

    /// Advance the regulator by `dt` and return the guide-vane set-point y*.
    pub fn step(
        &mut self,
        rotor_speed: f64,
        electrical_power: f64,
        power_reference: f64,
        dt: f64,
    ) -> f64 {
        governor_step(
            &self.config,
            &mut self.state,
            rotor_speed,
            electrical_power,
            power_reference,
            dt,
        )
    }

    pub fn output(&self) -> f64 {
        self.state.output
    }
}

/// One update of the droop + PI(D) regulator with rate limiter and saturation.
///
/// `rotor_speed` is mechanical [rad/s]; powers are in watts.
pub fn governor_step(
    cfg: &GovernorConfig,
    st: &mut GovernorState,
    rotor_speed: f64,
    electrical_power: f64,
    power_reference: f64,
    dt: f64,
) -> f64 {
    let speed_error = (cfg.nominal_speed - rotor_speed) / cfg.nominal_speed;
    let power_error = (electrical_power - power_reference) / cfg.rated_power;
    let error = speed_error - cfg.droop * power_error;
    let (lo, hi) = cfg.opening_limits;
    st.integral = (st.integral + cfg.integral_gain * error * dt).clamp(lo, hi);
    let derivative = if dt > 0.0 {
        cfg.derivative_gain * (error - st.previous_error) / dt
    } else {
        0.0
    };
    st.previous_error = error;
    let command = st.integral + cfg.proportional_gain * error + derivative;
    let max_move = cfg.rate_limit * dt;
    let next = (st.output + (command - st.output).clamp(-max_move, max_move)).clamp(lo, hi);
    st.output = next;
    next
}
