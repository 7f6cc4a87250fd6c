pub mod algebra;
pub mod error;
pub mod expansion;
pub mod gibbs;
pub mod lattice;
pub mod model;

pub use error::{Error, Result};
