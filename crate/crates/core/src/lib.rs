//! Simulation and control toolkit for a battery-hybridized medium-head
//! hydropower plant.

pub mod error;
pub mod fatigue;
pub mod harness;
pub mod linearize;
pub mod mpc;
pub mod ode;
pub mod params;
pub mod plant;
pub mod qp;
pub mod splitting;

pub use error::*;
pub use params::PlantParameters;
