//! Design-automation toolkit for deterministic lateral displacement (DLD)
//! pillar arrays.
//!
//! The pipeline runs end to end on a desk machine: solve the unit-cell flow,
//! trace finite-size particles with specular pillar contact, bracket the
//! critical diameter, sweep a configuration grid into a labeled dataset,
//! train surrogate networks on it, and drive an NSGA-III optimizer that
//! turns separation requirements into a device recipe.

pub mod automation;
pub mod cli;
pub mod critical;
pub mod dataset;
pub mod error;
pub mod flow;
pub mod geometry;
pub mod gridfile;
pub mod optimizer;
pub mod svg;
pub mod surrogate;
pub mod tracer;
pub mod walls;

pub use error::{Error, Result};
