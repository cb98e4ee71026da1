pub mod cli;
pub mod error;
pub mod eval;
pub mod exact;
pub mod grid;
pub mod inversion;
mod roots;
pub mod saddle;
pub mod series;
pub mod special;

pub use error::{Error, Result};
