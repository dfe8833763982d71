//! Multi-party protocols on the resource states.

pub mod bleeding;
pub mod chsh;
pub mod faux;
pub mod povm;
