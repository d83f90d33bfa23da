pub mod analysis;
pub mod beam;
pub mod error;
pub mod integrator;
pub mod modal;
pub mod ocp;
pub mod oracles;

pub use error::{Error, Result};
pub use nalgebra;
