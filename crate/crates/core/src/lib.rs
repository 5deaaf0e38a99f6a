//! Continuous-time open quantum walks on `Z^d`.

pub mod catalog;
pub mod config;
pub mod ensemble;
pub mod harness;
pub mod limits;
pub mod linalg;
pub mod master;
pub mod model;
pub mod spectral;
pub mod trajectory;
