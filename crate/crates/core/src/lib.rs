//! Riemannian trust-region fitting of Gaussian mixture models.

pub mod derivatives;
pub mod em;
pub mod error;
pub mod experiments;
pub mod model;
pub mod report;
pub mod rtr;
pub mod spd;

pub use error::{Error, Result};
