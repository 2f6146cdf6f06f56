#![allow(dead_code)]

pub mod plant_checks;
pub mod qp_oracle;
pub mod rainflow_ref;
