//! Exact simulation of distributed linear-optical protocols built from
//! single photons spread uniformly over many modes.

pub mod adaptive;
pub mod error;
pub mod fock;
pub mod io;
pub mod linear_optics;
pub mod measurement;
pub mod permanent;
pub mod protocols;
pub mod random;
pub mod resource_states;
pub mod sequential;

pub use error::{Error, Result};
pub use fock::{Occupation, SparseState};
