use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlantError {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("simulation blew up at t = {time:.3} s: head in element {element} reached {head:.1} m")]
    BlowUp { time: f64, element: usize, head: f64 },

    #[error("no steady state for guide vane {guide_vane}: {reason}")]
    NoSteadyState { guide_vane: f64, reason: String },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinearizeError {
    #[error("finite difference on `{axis}` leaves the characteristic validity box ({value} ± {step} outside [{lo}, {hi}])")]
    OutsideValidityBox {
        axis: &'static str,
        value: f64,
        step: f64,
        lo: f64,
        hi: f64,
    },

    #[error("operating point is not a steady state: |dx/dt| = {residual:.3e} in state component {component}")]
    NotSteady { component: usize, residual: f64 },

    #[error("model build failed: {0}")]
    Build(String),

    #[error(transparent)]
    Plant(#[from] PlantError),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QpError {
    #[error("malformed QP: {0}")]
    Malformed(String),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MpcError {
    #[error("invalid MPC configuration: {0}")]
    Config(String),

    #[error("model sampling time {model} s differs from the control period {control} s")]
    SamplingMismatch { model: f64, control: f64 },

    #[error("state estimate is not finite")]
    NonFiniteState,

    #[error("no usable QP solution for {0} consecutive cycles")]
    PersistentFallback(usize),

    #[error(transparent)]
    Qp(#[from] QpError),

    #[error(transparent)]
    Linearize(#[from] LinearizeError),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SplitError {
    #[error("shadow state desynchronized: {0}")]
    Desynchronized(String),

    #[error("invalid filter cut-off {0} Hz")]
    InvalidCutoff(f64),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FatigueError {
    #[error("relative damage index undefined: base-case damage is zero")]
    UndefinedRdi,

    #[error("invalid stress series: {0}")]
    InvalidSeries(String),

    #[error("invalid S-N curve: {0}")]
    InvalidCurve(String),
}

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("frequency trace error: {0}")]
    Trace(String),

    #[error("run aborted at t = {time:.3} s: {reason} (diagnostics in {bundle})")]
    Aborted {
        time: f64,
        reason: String,
        bundle: String,
    },

    #[error("comparison refused: {0}")]
    Mismatch(String),

    #[error(transparent)]
    Plant(#[from] PlantError),

    #[error(transparent)]
    Linearize(#[from] LinearizeError),

    #[error(transparent)]
    Mpc(#[from] MpcError),

    #[error(transparent)]
    Split(#[from] SplitError),

    #[error(transparent)]
    Fatigue(#[from] FatigueError),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
