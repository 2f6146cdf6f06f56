//! Battery set-point from the torque gap between the unfiltered and the
//! filtered guide-vane commands.
//!
//! Both commands drive their own copy of the linear plant model from a common
//! initial state; the battery supplies the difference of the two linear
//! torque estimates converted to power at nominal pulsation. The low-pass
//! baseline uses the same estimator with a first-order filtered command.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::SplitError;
use crate::linearize::{LinearCharacteristic, LinearPlantModel};
use crate::params::PlantParameters;
use crate::plant::StateLayout;

/// Linear torque map 𝒯(y, x) and the nominal rotor pulsation ω_o.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TorqueEstimator {
    pub estimator_params: LinearCharacteristic,
    /// ω_o = 2π·f_o / P_p [rad/s]
    pub nominal_pulsation: f64,
    pub layout: StateLayout,
}

impl TorqueEstimator {
    pub fn from_model(model: &LinearPlantModel, params: &PlantParameters) -> Self {
        Self {
            estimator_params: model.torque_map,
            nominal_pulsation: 2.0 * PI * params.nominal_grid_frequency / params.polar_couples as f64,
            layout: model.layout,
        }
    }

    /// 𝒯(y, x) [N·m]
    pub fn torque(&self, guide_vane: f64, state: &[f64]) -> f64 {
        self.estimator_params.eval(
            state[self.layout.turbine_flow()],
            state[self.layout.speed()],
            guide_vane,
        )
    }
}

/// P̂_hpp = 𝒯(y, x)·ω_o [W].
pub fn estimate_power(guide_vane: f64, state: &[f64], est: &TorqueEstimator) -> f64 {
    est.torque(guide_vane, state) * est.nominal_pulsation
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SplitMethod {
    MpcSplit,
    LpfSplit,
}

impl SplitMethod {
    pub fn as_str(&self) -> &'static str {
        match self {
            SplitMethod::MpcSplit => "mpc-split",
            SplitMethod::LpfSplit => "lpf-split",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitResult {
    /// Positive when the battery discharges [W].
    pub p_bess: f64,
    pub p_hpp_hat_star: f64,
    pub p_hpp_hat_dagger: f64,
    pub method: SplitMethod,
}

/// Per-cycle log record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitLogRecord {
    pub t: f64,
    #[serde(rename = "P_bess")]
    pub p_bess: f64,
    #[serde(rename = "P_hpp_hat_star")]
    pub p_hpp_hat_star: f64,
    #[serde(rename = "P_hpp_hat_dagger")]
    pub p_hpp_hat_dagger: f64,
    pub method: SplitMethod,
}

impl SplitLogRecord {
    pub fn new(t: f64, r: &SplitResult) -> Self {
        Self {
            t,
            p_bess: r.p_bess,
            p_hpp_hat_star: r.p_hpp_hat_star,
            p_hpp_hat_dagger: r.p_hpp_hat_dagger,
            method: r.method,
        }
    }
}

/// Per-unit gap between two packed states beyond which the shadow
/// bookkeeping is considered broken.
pub const DESYNC_LIMIT: f64 = 0.5;

/// Largest per-unit difference between two packed states (heads over rated
/// head, flows over rated discharge, speed over rated speed, angle in rad).
pub fn per_unit_gap(a: &[f64], b: &[f64], layout: StateLayout, params: &PlantParameters) -> f64 {
    let n = layout.n_elements;
    let mut gap: f64 = 0.0;
    for i in 0..layout.dim() {
        let scale = if i < n {
            params.rated_head
        } else if i <= 2 * n {
            params.rated_discharge
        } else if i == layout.speed() {
            params.rated_speed
        } else {
            1.0
        };
        gap = gap.max((a[i] - b[i]).abs() / scale);
    }
    gap
}

/// Split for the MPC-filtered command:
/// `P_bess = [𝒯(y*, x*) − 𝒯(y†, x†)]·ω_o`.
pub fn bess_setpoint_mpc(
    y_star: f64,
    y_dagger: f64,
    x_star: &[f64],
    x_dagger: &[f64],
    est: &TorqueEstimator,
    params: &PlantParameters,
) -> Result<SplitResult, SplitError> {
    check_sync(x_star, x_dagger, est.layout, params)?;
    let star = estimate_power(y_star, x_star, est);
    let dagger = estimate_power(y_dagger, x_dagger, est);
    Ok(SplitResult {
        p_bess: star - dagger,
        p_hpp_hat_star: star,
        p_hpp_hat_dagger: dagger,
        method: SplitMethod::MpcSplit,
    })
}

fn check_sync(a: &[f64], b: &[f64], layout: StateLayout, params: &PlantParameters) -> Result<(), SplitError> {
    let dim = layout.dim();
    if a.len() != dim || b.len() != dim {
        return Err(SplitError::Desynchronized(format!(
            "state lengths {} and {}, layout expects {dim}",
            a.len(),
            b.len()
        )));
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(SplitError::Desynchronized("non-finite shadow state".into()));
    }
    let gap = per_unit_gap(a, b, layout, params);
    if gap > DESYNC_LIMIT {
        return Err(SplitError::Desynchronized(format!("per-unit gap {gap:.3} exceeds {DESYNC_LIMIT}")));
    }
    Ok(())
}

/// Propagate a shadow state one control period under `guide_vane`.
pub fn shadow_state_update(
    state: &DVector<f64>,
    guide_vane: f64,
    grid_frequency: f64,
    model: &LinearPlantModel,
) -> DVector<f64> {
    model.step(state, guide_vane, grid_frequency)
}

/// Shadow-state pair and estimator of the MPC split.
#[derive(Debug, Clone)]
pub struct MpcSplitter {
    params: PlantParameters,
    estimator: TorqueEstimator,
    x_star: DVector<f64>,
    x_dagger: DVector<f64>,
    /// Per-unit gap below which, with identical commands, x* is reset to x†
    /// so the split returns to exactly zero.
    pub resync_tolerance: f64,
    synced: bool,
}

/// Default per-unit gap at which the shadow states are merged again.
pub const DEFAULT_RESYNC_TOLERANCE: f64 = 1e-6;

impl MpcSplitter {
    /// Both shadow states start from the same measured state.
    pub fn new(model: &LinearPlantModel, params: &PlantParameters, initial: &[f64]) -> Self {
        let x = DVector::from_column_slice(initial);
        Self {
            params: params.clone(),
            estimator: TorqueEstimator::from_model(model, params),
            x_star: x.clone(),
            x_dagger: x,
            resync_tolerance: DEFAULT_RESYNC_TOLERANCE,
            synced: true,
        }
    }

    /// Adopt the estimator of a new linearization; the shadow states carry over.
    pub fn set_model(&mut self, model: &LinearPlantModel) {
        self.estimator = TorqueEstimator::from_model(model, &self.params);
    }

    pub fn estimator(&self) -> &TorqueEstimator {
        &self.estimator
    }

    pub fn x_star(&self) -> &DVector<f64> {
        &self.x_star
    }

    pub fn x_dagger(&self) -> &DVector<f64> {
        &self.x_dagger
    }

    /// True while x* and x† are identical.
    pub fn synced(&self) -> bool {
        self.synced
    }

    /// Split at the current states, then advance both shadows one period.
    pub fn step(
        &mut self,
        y_star: f64,
        y_dagger: f64,
        grid_frequency: f64,
        model: &LinearPlantModel,
    ) -> Result<SplitResult, SplitError> {
        let r = bess_setpoint_mpc(
            y_star,
            y_dagger,
            self.x_star.as_slice(),
            self.x_dagger.as_slice(),
            &self.estimator,
            &self.params,
        )?;
        self.x_dagger = shadow_state_update(&self.x_dagger, y_dagger, grid_frequency, model);
        if self.synced && y_star == y_dagger {
            self.x_star.copy_from(&self.x_dagger);
        } else {
            self.x_star = shadow_state_update(&self.x_star, y_star, grid_frequency, model);
            self.synced = y_star == y_dagger
                && per_unit_gap(self.x_star.as_slice(), self.x_dagger.as_slice(), model.layout, &self.params)
                    <= self.resync_tolerance;
            if self.synced {
                self.x_star.copy_from(&self.x_dagger);
            }
        }
        Ok(r)
    }
}

/// First-order low-pass filter, exact for inputs held over each sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LowPassFilter {
    /// [Hz]
    pub cutoff: f64,
    pub output: f64,
}

impl LowPassFilter {
    pub fn new(cutoff: f64, initial: f64) -> Result<Self, SplitError> {
        if !(cutoff > 0.0 && cutoff.is_finite()) {
            return Err(SplitError::InvalidCutoff(cutoff));
        }
        Ok(Self { cutoff, output: initial })
    }

    /// Time constant 1/(2π·f_c) [s].
    pub fn time_constant(&self) -> f64 {
        1.0 / (2.0 * PI * self.cutoff)
    }

    pub fn step(&mut self, input: f64, dt: f64) -> f64 {
        let alpha = 1.0 - (-dt / self.time_constant()).exp();
        self.output += alpha * (input - self.output);
        self.output
    }
}

/// Low-pass baseline: the plant receives the filtered command and the
/// battery the estimated power residual.
#[derive(Debug, Clone)]
pub struct LpfSplitter {
    pub filter: LowPassFilter,
    params: PlantParameters,
    estimator: TorqueEstimator,
    x_star: DVector<f64>,
    x_filtered: DVector<f64>,
}

impl LpfSplitter {
    pub fn new(
        cutoff: f64,
        model: &LinearPlantModel,
        params: &PlantParameters,
        initial_state: &[f64],
        initial_opening: f64,
    ) -> Result<Self, SplitError> {
        let x = DVector::from_column_slice(initial_state);
        Ok(Self {
            filter: LowPassFilter::new(cutoff, initial_opening)?,
            params: params.clone(),
            estimator: TorqueEstimator::from_model(model, params),
            x_star: x.clone(),
            x_filtered: x,
        })
    }

    pub fn set_model(&mut self, model: &LinearPlantModel) {
        self.estimator = TorqueEstimator::from_model(model, &self.params);
    }

    /// Filter `y_star`, split at the current states, advance both shadows.
    /// Returns the command for the plant and the split.
    pub fn step(
        &mut self,
        y_star: f64,
        grid_frequency: f64,
        dt: f64,
        model: &LinearPlantModel,
    ) -> Result<(f64, SplitResult), SplitError> {
        let y_filtered = self.filter.step(y_star, dt);
        let r = bess_setpoint_lpf(y_star, y_filtered, &self.x_star, &self.x_filtered, &self.estimator, &self.params)?;
        self.x_star = shadow_state_update(&self.x_star, y_star, grid_frequency, model);
        self.x_filtered = shadow_state_update(&self.x_filtered, y_filtered, grid_frequency, model);
        Ok((y_filtered, r))
    }
}

/// Split for the low-pass baseline, same estimator as the MPC split.
pub fn bess_setpoint_lpf(
    y_star: f64,
    y_filtered: f64,
    x_star: &DVector<f64>,
    x_filtered: &DVector<f64>,
    est: &TorqueEstimator,
    params: &PlantParameters,
) -> Result<SplitResult, SplitError> {
    let mut r = bess_setpoint_mpc(y_star, y_filtered, x_star.as_slice(), x_filtered.as_slice(), est, params)?;
    r.method = SplitMethod::LpfSplit;
    Ok(r)
}
