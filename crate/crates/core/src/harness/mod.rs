//! Scenario configuration, closed-loop runs and reporting.

pub mod config;
pub mod frequency;
pub mod report;
pub mod run;

pub use config::{AbortPolicy, ControllerKind, FatigueConfig, LpfConfig, ScenarioConfig};
pub use frequency::{synthesize_frequency, EventSchedule, FrequencySource, SyntheticFrequency};
pub use report::{compare_report, correlation, Comparison, RunSummary};
pub use run::{fingerprint, load_run, run_scenario, run_with_forecast, run_with_frequency, write_outputs, RunManifest, RunOutput, RunTraces};
