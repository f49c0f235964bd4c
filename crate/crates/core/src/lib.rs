pub mod cell_problems;
pub mod coarse_solvers;
pub mod effective;
pub mod error;
pub mod experiments;
pub mod fine_solvers;
pub mod grid;
pub mod linalg;
pub mod media;

pub use error::{Error, ErrorCategory, Result, Stage, StageExt};
