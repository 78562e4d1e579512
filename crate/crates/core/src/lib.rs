pub mod diagnostics;
pub mod error;
pub mod experiment;
pub mod geometry;
pub mod grid;
pub mod mcmc;
pub mod observation;
pub mod priors;
pub mod random_fields;
pub mod solver;

pub use error::{Error, Result};
pub use grid::{CellField, Grid, NodeField};
