//! Fatigue-limiting receding-horizon control of the guide vane.
//!
//! The penstock stress band is mapped to per-element head bounds, the linear
//! plant model is condensed over the horizon into affine head predictions in
//! the guide-vane trajectory, and the controller picks the trajectory closest
//! to the governor forecast that keeps every predicted head inside the band.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::MpcError;
use crate::linearize::{LinearPlantModel, GRID_FREQUENCY_INPUT, GUIDE_VANE_INPUT};
use crate::params::PlantParameters;
use crate::qp::{QpProblem, QpSettings, QpSolver, QpStatus};

/// Hoop stress of a thin-walled pipe under head `h`: `σ = h·k·D / 2e` [Pa].
pub fn stress_from_head(head: f64, params: &PlantParameters) -> f64 {
    head * params.pressure_per_head() * params.penstock_diameter / (2.0 * params.wall_thickness)
}

/// Inverse of [`stress_from_head`] [m].
pub fn head_from_stress(stress: f64, params: &PlantParameters) -> f64 {
    stress * 2.0 * params.wall_thickness / (params.pressure_per_head() * params.penstock_diameter)
}

/// Admissible stress band `σ_nom − Δσ̄/2 ≤ σ_i ≤ σ_nom + Δσ̄/2`, with one
/// nominal stress per element.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StressLimits {
    /// σ_nom per element [Pa].
    pub nominal_stress: Vec<f64>,
    /// Δσ̄ [Pa].
    pub band: f64,
}

impl StressLimits {
    /// Band centred on the stresses of the given element heads.
    pub fn around_heads(heads: &[f64], band: f64, params: &PlantParameters) -> Self {
        Self {
            nominal_stress: heads.iter().map(|h| stress_from_head(*h, params)).collect(),
            band,
        }
    }
}

/// Stress band Δσ̄ whose head band is `±fraction` of the rated head [Pa].
pub fn band_for_head_fraction(fraction: f64, params: &PlantParameters) -> f64 {
    stress_from_head(2.0 * fraction * params.rated_head, params)
}

/// Per-element head bounds `(h̲, h̄)` of a stress band.
pub fn head_bounds(limits: &StressLimits, params: &PlantParameters) -> Result<(Vec<f64>, Vec<f64>), MpcError> {
    if !(limits.band > 0.0) {
        return Err(MpcError::Config(format!("stress band {} Pa must be positive", limits.band)));
    }
    let lower = limits
        .nominal_stress
        .iter()
        .map(|s| head_from_stress(s - 0.5 * limits.band, params))
        .collect();
    let upper = limits
        .nominal_stress
        .iter()
        .map(|s| head_from_stress(s + 0.5 * limits.band, params))
        .collect();
    Ok((lower, upper))
}

/// Forecast that holds the current set-point over the horizon (`T + 1` values).
pub fn persistent_forecast(y_now: f64, horizon: usize) -> Vec<f64> {
    vec![y_now; horizon + 1]
}

/// Shortest horizon that holds a full wave round trip `2L/a`.
pub fn minimum_horizon(params: &PlantParameters, control_period: f64) -> usize {
    (2.0 * params.penstock_length / params.wave_speed / control_period - 1e-9).ceil() as usize
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MpcConfig {
    /// Prediction horizon T [steps].
    pub horizon: usize,
    /// [s]
    pub control_period: f64,
    /// Head band half-width as a fraction of rated head, used when
    /// `stress_band` is not set.
    pub head_band_fraction: f64,
    /// Δσ̄ [Pa]; overrides `head_band_fraction`.
    pub stress_band: Option<f64>,
    pub solver: QpSettings,
}

impl Default for MpcConfig {
    fn default() -> Self {
        Self {
            horizon: 80,
            control_period: 0.05,
            head_band_fraction: 0.08,
            stress_band: None,
            solver: QpSettings::default(),
        }
    }
}

impl MpcConfig {
    pub fn validate(&self, params: &PlantParameters) -> Result<(), MpcError> {
        if !(self.control_period > 0.0) {
            return Err(MpcError::Config("control period must be positive".into()));
        }
        let min = minimum_horizon(params, self.control_period);
        if self.horizon < min {
            return Err(MpcError::Config(format!(
                "horizon {} is shorter than a wave round trip ({min} steps)",
                self.horizon
            )));
        }
        if !(self.stress_band(params) > 0.0) {
            return Err(MpcError::Config("stress band must be positive".into()));
        }
        Ok(())
    }

    /// Effective Δσ̄ [Pa].
    pub fn stress_band(&self, params: &PlantParameters) -> f64 {
        self.stress_band
            .unwrap_or_else(|| band_for_head_fraction(self.head_band_fraction, params))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MpcSolution {
    /// y† over the horizon, `T + 1` values.
    pub trajectory: Vec<f64>,
    /// First element, the value to actuate.
    pub applied: f64,
    /// Predicted heads, row `k` for step `k + 1`, one column per element [m].
    pub predicted_heads: DMatrix<f64>,
    pub status: QpStatus,
    /// The solver failed and the previous applied value is held.
    pub fallback: bool,
    pub iterations: usize,
    /// KKT residual of the QP solution (`NaN` on fallback).
    pub kkt_residual: f64,
    /// Smallest distance of any predicted head to its bound [m]; negative on violation.
    pub min_margin: f64,
    pub max_head_pred: f64,
    /// Zero-based element whose prediction touches a bound, if any.
    pub binding_element: Option<usize>,
}

impl MpcSolution {
    /// True when some predicted head lies within `tolerance` of a bound.
    pub fn is_active(&self, tolerance: f64) -> bool {
        self.min_margin <= tolerance
    }
}

/// Per-cycle log record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MpcLogRecord {
    pub t: f64,
    pub y_star: f64,
    pub y_dagger: f64,
    pub status: QpStatus,
    pub fallback: bool,
    pub max_head_pred: f64,
    /// One-based element, like the damage report; empty when nothing binds.
    pub binding_element: Option<usize>,
    /// Some prediction lies within 1e-6 of the band width of a bound.
    pub active: bool,
    pub kkt_residual: f64,
    pub iterations: usize,
}

impl MpcLogRecord {
    pub fn new(t: f64, y_star: f64, sol: &MpcSolution) -> Self {
        Self {
            t,
            y_star,
            y_dagger: sol.applied,
            status: sol.status,
            fallback: sol.fallback,
            max_head_pred: sol.max_head_pred,
            binding_element: sol.binding_element.map(|i| i + 1),
            active: sol.binding_element.is_some(),
            kkt_residual: sol.kkt_residual,
            iterations: sol.iterations,
        }
    }
}

/// Horizon condensation of one linear model.
#[derive(Debug, Clone)]
struct Condensed {
    /// Rows `(step, element)`, columns y₀..y_T: head response to the trajectory.
    response: DMatrix<f64>,
    /// Rows `[response; −response]`; the linear term and the row bounds are
    /// refreshed every cycle.
    problem: QpProblem,
}

impl Condensed {
    fn new(model: &LinearPlantModel, horizon: usize) -> Self {
        let n_el = model.layout.n_elements;
        let steps = horizon + 1;
        // Markov parameters S_h·A^k·b_y
        let mut markov = DMatrix::zeros(n_el, steps);
        let mut v = model.b.column(GUIDE_VANE_INPUT).into_owned();
        for k in 0..steps {
            for i in 0..n_el {
                markov[(i, k)] = v[model.layout.head(i)];
            }
            v = &model.a * v;
        }
        let mut response = DMatrix::zeros(steps * n_el, steps);
        for s in 0..steps {
            for j in 0..=s {
                for i in 0..n_el {
                    response[(s * n_el + i, j)] = markov[(i, s - j)];
                }
            }
        }
        let mut constraints = DMatrix::zeros(2 * steps * n_el, steps);
        constraints.rows_mut(0, steps * n_el).copy_from(&response);
        constraints.rows_mut(steps * n_el, steps * n_el).copy_from(&(-&response));
        let problem = QpProblem {
            hessian: DMatrix::from_diagonal_element(steps, steps, 2.0),
            linear: DVector::zeros(steps),
            lower: DVector::zeros(steps),
            upper: DVector::from_element(steps, 1.0),
            constraint_matrix: constraints,
            constraint_bound: DVector::zeros(2 * steps * n_el),
        };
        Self { response, problem }
    }
}

/// Receding-horizon controller bound to one plant.
#[derive(Debug, Clone)]
pub struct MpcController {
    config: MpcConfig,
    params: PlantParameters,
    model: LinearPlantModel,
    limits: StressLimits,
    lower: Vec<f64>,
    upper: Vec<f64>,
    condensed: Condensed,
    solver: QpSolver,
    last_applied: f64,
    warm: Option<DVector<f64>>,
}

impl MpcController {
    /// Controller whose head band is centred on the model's operating point.
    pub fn new(
        config: MpcConfig,
        params: &PlantParameters,
        model: LinearPlantModel,
        initial_opening: f64,
    ) -> Result<Self, MpcError> {
        config.validate(params)?;
        if (model.dt - config.control_period).abs() > 1e-12 {
            return Err(MpcError::SamplingMismatch {
                model: model.dt,
                control: config.control_period,
            });
        }
        let limits = StressLimits::around_heads(&model.operating_point.state.heads, config.stress_band(params), params);
        let (lower, upper) = head_bounds(&limits, params)?;
        let condensed = Condensed::new(&model, config.horizon);
        Ok(Self {
            solver: QpSolver::new(config.solver.clone()),
            config,
            params: params.clone(),
            model,
            limits,
            lower,
            upper,
            condensed,
            last_applied: initial_opening,
            warm: None,
        })
    }

    /// Swap in a new linearization; the band is re-centred on its operating point.
    pub fn set_model(&mut self, model: LinearPlantModel) -> Result<(), MpcError> {
        if (model.dt - self.config.control_period).abs() > 1e-12 {
            return Err(MpcError::SamplingMismatch {
                model: model.dt,
                control: self.config.control_period,
            });
        }
        self.limits = StressLimits::around_heads(
            &model.operating_point.state.heads,
            self.config.stress_band(&self.params),
            &self.params,
        );
        let (lower, upper) = head_bounds(&self.limits, &self.params)?;
        self.lower = lower;
        self.upper = upper;
        self.condensed = Condensed::new(&model, self.config.horizon);
        self.model = model;
        Ok(())
    }

    pub fn config(&self) -> &MpcConfig {
        &self.config
    }

    pub fn model(&self) -> &LinearPlantModel {
        &self.model
    }

    pub fn limits(&self) -> &StressLimits {
        &self.limits
    }

    /// Head bounds `(h̲, h̄)` per element [m].
    pub fn bounds(&self) -> (&[f64], &[f64]) {
        (&self.lower, &self.upper)
    }

    /// Width of the head band [m].
    pub fn band_width(&self) -> f64 {
        self.upper[0] - self.lower[0]
    }

    pub fn last_applied(&self) -> f64 {
        self.last_applied
    }

    /// Heads over the horizon for zero guide-vane input, rows as in
    /// [`MpcSolution::predicted_heads`], flattened step-major.
    fn free_response(&self, state: &DVector<f64>, grid_frequency: f64) -> DVector<f64> {
        let n_el = self.model.layout.n_elements;
        let steps = self.config.horizon + 1;
        let mut w = self.model.c.clone();
        w.axpy(grid_frequency, &self.model.b.column(GRID_FREQUENCY_INPUT), 1.0);
        let mut x = state.clone();
        let mut out = DVector::zeros(steps * n_el);
        for s in 0..steps {
            x = &self.model.a * &x + &w;
            for i in 0..n_el {
                out[s * n_el + i] = x[self.model.layout.head(i)];
            }
        }
        out
    }

    /// Linear-model head predictions for a given trajectory.
    pub fn predict(&self, state: &[f64], trajectory: &[f64], grid_frequency: f64) -> DMatrix<f64> {
        let x0 = DVector::from_column_slice(state);
        let flat = self.free_response(&x0, grid_frequency) + &self.condensed.response * DVector::from_column_slice(trajectory);
        let n_el = self.model.layout.n_elements;
        DMatrix::from_fn(self.config.horizon + 1, n_el, |s, i| flat[s * n_el + i])
    }

    /// One control cycle with the persistent forecast of `y_star_now`.
    pub fn solve_step(&mut self, state: &[f64], y_star_now: f64, grid_frequency: f64) -> Result<MpcSolution, MpcError> {
        let forecast = persistent_forecast(y_star_now, self.config.horizon);
        self.solve_with_forecast(state, &forecast, grid_frequency)
    }

    /// One control cycle against an explicit forecast of `y*` (`T + 1` values).
    pub fn solve_with_forecast(
        &mut self,
        state: &[f64],
        forecast: &[f64],
        grid_frequency: f64,
    ) -> Result<MpcSolution, MpcError> {
        let steps = self.config.horizon + 1;
        let n_el = self.model.layout.n_elements;
        if state.len() != self.model.dim() {
            return Err(MpcError::Config(format!(
                "state has {} entries, model expects {}",
                state.len(),
                self.model.dim()
            )));
        }
        if forecast.len() != steps {
            return Err(MpcError::Config(format!("forecast has {} values, expected {steps}", forecast.len())));
        }
        if state.iter().any(|v| !v.is_finite()) || !grid_frequency.is_finite() {
            return Err(MpcError::NonFiniteState);
        }
        let x0 = DVector::from_column_slice(state);
        let free = self.free_response(&x0, grid_frequency);
        let rows = steps * n_el;
        let in_band = |flat: &DVector<f64>| {
            (0..steps).all(|s| (0..n_el).all(|i| {
                let h = flat[s * n_el + i];
                h <= self.upper[i] && h >= self.lower[i]
            }))
        };
        // Box-clamped forecast: optimal whenever its predictions stay in band.
        let clamped: Vec<f64> = forecast.iter().map(|y| y.clamp(0.0, 1.0)).collect();
        let candidate = &free + &self.condensed.response * DVector::from_column_slice(&clamped);
        let (trajectory, status, fallback, kkt, iterations) = if in_band(&candidate) {
            (clamped, QpStatus::Optimal, false, 0.0, 0)
        } else {
            let problem = &mut self.condensed.problem;
            for s in 0..steps {
                for i in 0..n_el {
                    let r = s * n_el + i;
                    problem.constraint_bound[r] = self.upper[i] - free[r];
                    problem.constraint_bound[rows + r] = free[r] - self.lower[i];
                }
            }
            for (l, y) in problem.linear.iter_mut().zip(forecast) {
                *l = -2.0 * y;
            }
            let sol = self.solver.solve(problem, self.warm.as_ref())?;
            if sol.status == QpStatus::Optimal {
                let kkt = sol.kkt_residual(problem);
                (sol.z.iter().copied().collect::<Vec<_>>(), sol.status, false, kkt, sol.iterations)
            } else {
                (vec![self.last_applied; steps], sol.status, true, f64::NAN, sol.iterations)
            }
        };
        let flat = &free + &self.condensed.response * DVector::from_column_slice(&trajectory);
        let predicted = DMatrix::from_fn(steps, n_el, |s, i| flat[s * n_el + i]);
        let (mut min_margin, mut binding, mut max_head) = (f64::INFINITY, 0, f64::NEG_INFINITY);
        for s in 0..steps {
            for i in 0..n_el {
                let h = predicted[(s, i)];
                max_head = max_head.max(h);
                let m = (self.upper[i] - h).min(h - self.lower[i]);
                if m < min_margin {
                    min_margin = m;
                    binding = i;
                }
            }
        }
        let active_tolerance = 1e-6 * self.band_width();
        let applied = trajectory[0];
        self.last_applied = applied;
        self.warm = if fallback {
            None
        } else {
            let mut w: Vec<f64> = trajectory[1..].to_vec();
            w.push(*trajectory.last().expect("non-empty horizon"));
            Some(DVector::from_vec(w))
        };
        Ok(MpcSolution {
            applied,
            trajectory,
            predicted_heads: predicted,
            status,
            fallback,
            iterations,
            kkt_residual: kkt,
            min_margin,
            max_head_pred: max_head,
            binding_element: (min_margin <= active_tolerance).then_some(binding),
        })
    }
}

/// Element with the largest linear head excursion after a unit guide-vane
/// step, simulated over the horizon. Zero-based.
pub fn critical_element(model: &LinearPlantModel, config: &MpcConfig) -> usize {
    let n_el = model.layout.n_elements;
    let b = model.b.column(GUIDE_VANE_INPUT).into_owned();
    let mut dx = DVector::zeros(model.dim());
    let mut peak = vec![0.0_f64; n_el];
    for _ in 0..=config.horizon {
        dx = &model.a * dx + &b;
        for (i, p) in peak.iter_mut().enumerate() {
            *p = p.max(dx[model.layout.head(i)].abs());
        }
    }
    peak.iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .unwrap_or(0)
}
