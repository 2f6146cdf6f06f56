use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::PathBuf;

use super::frequency::FrequencySource;
use crate::error::HarnessError;
use crate::fatigue::SnCurve;
use crate::linearize::RelinearizationPolicy;
use crate::mpc::MpcConfig;
use crate::params::PlantParameters;
use crate::plant::GovernorConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ControllerKind {
    None,
    Mpc,
    Lpf,
}

impl ControllerKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ControllerKind::None => "none",
            ControllerKind::Mpc => "mpc",
            ControllerKind::Lpf => "lpf",
        }
    }
}

impl std::str::FromStr for ControllerKind {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "none" => Ok(ControllerKind::None),
            "mpc" => Ok(ControllerKind::Mpc),
            "lpf" => Ok(ControllerKind::Lpf),
            other => Err(HarnessError::Config(format!("unknown controller '{other}' (none, mpc, lpf)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LpfConfig {
    /// [Hz]
    pub cutoff: f64,
}

impl Default for LpfConfig {
    fn default() -> Self {
        Self { cutoff: 1.46 }
    }
}

/// S-N curve settings; the endurance limit defaults to half the MPC stress band.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FatigueConfig {
    /// Reference stress amplitude [Pa].
    pub reference_stress: f64,
    pub exponent: f64,
    pub reference_cycles: f64,
    /// Amplitude [Pa]; omitted means half the stress band.
    pub endurance_limit: Option<f64>,
}

impl Default for FatigueConfig {
    fn default() -> Self {
        let sn = SnCurve::default();
        Self {
            reference_stress: sn.reference_stress,
            exponent: sn.exponent,
            reference_cycles: sn.reference_cycles,
            endurance_limit: None,
        }
    }
}

impl FatigueConfig {
    pub fn curve(&self, stress_band: f64) -> SnCurve {
        SnCurve {
            reference_stress: self.reference_stress,
            exponent: self.exponent,
            reference_cycles: self.reference_cycles,
            endurance_limit: self.endurance_limit.unwrap_or(stress_band / 2.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AbortPolicy {
    /// Consecutive MPC fallbacks tolerated before the run is aborted.
    pub max_consecutive_fallbacks: usize,
    /// Length of trace kept in the diagnostic bundle [s].
    pub diagnostic_window: f64,
}

impl Default for AbortPolicy {
    fn default() -> Self {
        Self {
            max_consecutive_fallbacks: 40,
            diagnostic_window: 10.0,
        }
    }
}

/// One closed-loop scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    /// [s]
    pub duration: f64,
    pub controller: ControllerKind,
    pub n_elements: usize,
    /// RK4 steps per control period.
    pub substeps: usize,
    /// Speed-changer setting [W]; the run starts from the matching steady state.
    pub power_reference: f64,
    /// Simulate the uncontrolled twin as tracking reference.
    pub twin: bool,
    pub output_dir: Option<PathBuf>,
    pub relinearization: RelinearizationPolicy,
    pub plant: PlantParameters,
    pub governor: GovernorConfig,
    pub mpc: MpcConfig,
    pub lpf: LpfConfig,
    pub fatigue: FatigueConfig,
    pub frequency: FrequencySource,
    pub abort: AbortPolicy,
    /// Traces are kept in memory until the run ends; longer runs are refused [MiB].
    pub max_trace_memory_mb: f64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            name: "default".into(),
            duration: 600.0,
            controller: ControllerKind::Mpc,
            n_elements: 20,
            substeps: 13,
            power_reference: 150.0e6,
            twin: true,
            output_dir: None,
            relinearization: RelinearizationPolicy::default(),
            plant: PlantParameters::default(),
            governor: GovernorConfig::default(),
            mpc: MpcConfig::default(),
            lpf: LpfConfig::default(),
            fatigue: FatigueConfig::default(),
            frequency: FrequencySource::default(),
            abort: AbortPolicy::default(),
            max_trace_memory_mb: 4096.0,
        }
    }
}

/// Largest RK4 step accepted for the plant [s].
pub const MAX_PLANT_STEP: f64 = 0.004;

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self, HarnessError> {
        let cfg: Self = toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("configuration serializes")
    }

    pub fn control_period(&self) -> f64 {
        self.mpc.control_period
    }

    /// Number of control cycles; the duration must be a whole number of periods.
    pub fn steps(&self) -> usize {
        (self.duration / self.control_period()).round() as usize
    }

    /// Rough size of the in-memory traces of a run [MiB].
    pub fn trace_memory_mb(&self) -> f64 {
        // Packed state plus time, opening and power per plant trace, with the
        // vector header; command, frequency, MPC and split records besides.
        let dim = 2 * self.n_elements + 3;
        let plant = ((dim + 3) * 8 + 24) as f64;
        let per_step = plant * (1.0 + self.twin as u8 as f64) + 160.0;
        self.steps() as f64 * per_step / (1024.0 * 1024.0)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::Config(m));
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            return bad(format!("duration must be positive, got {}", self.duration));
        }
        let dt = self.control_period();
        let k = self.duration / dt;
        if (k - k.round()).abs() > 1e-6 * k.max(1.0) {
            return bad(format!("duration {} s is not a multiple of the control period {dt} s", self.duration));
        }
        if self.n_elements < 2 {
            return bad("n_elements must be at least 2".into());
        }
        if self.substeps == 0 || dt / self.substeps as f64 > MAX_PLANT_STEP + 1e-12 {
            return bad(format!(
                "{} substeps of a {dt} s period exceed the {} ms plant step",
                self.substeps,
                MAX_PLANT_STEP * 1e3
            ));
        }
        if !(self.lpf.cutoff > 0.0) {
            return bad(format!("lpf.cutoff must be positive, got {}", self.lpf.cutoff));
        }
        if self.trace_memory_mb() > self.max_trace_memory_mb {
            return bad(format!(
                "traces need about {:.0} MiB, above max_trace_memory_mb = {}",
                self.trace_memory_mb(),
                self.max_trace_memory_mb
            ));
        }
        self.plant.validate()?;
        self.governor.validate()?;
        self.mpc.validate(&self.plant)?;
        self.fatigue.curve(self.mpc.stress_band(&self.plant)).validate()?;
        self.frequency.validate()?;
        Ok(())
    }

    /// SHA-256 of the canonical TOML form, ignoring where outputs go.
    pub fn hash(&self) -> String {
        let canonical = Self {
            output_dir: None,
            ..self.clone()
        };
        hex::encode(Sha256::digest(canonical.to_toml().as_bytes()))
    }

    /// Fields that must agree for two runs to be comparable.
    pub fn comparison_key(&self) -> String {
        #[derive(Serialize)]
        struct Key<'a> {
            duration: f64,
            n_elements: usize,
            substeps: usize,
            control_period: f64,
            power_reference: f64,
            plant: &'a PlantParameters,
            governor: &'a GovernorConfig,
        }
        toml::to_string(&Key {
            duration: self.duration,
            n_elements: self.n_elements,
            substeps: self.substeps,
            control_period: self.control_period(),
            power_reference: self.power_reference,
            plant: &self.plant,
            governor: &self.governor,
        })
        .expect("key serializes")
    }
}
