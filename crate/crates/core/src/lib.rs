pub mod amenable;
pub mod error;
pub mod finite_geometry;
pub mod gaussian;
pub mod glue;
pub mod mazur;
pub mod metric;
pub mod moduli;
pub mod report;
pub mod rng;

pub use error::{Error, Result};
