pub mod bifurcation;
pub mod decision;
pub mod error;
pub mod flood_fill;
pub mod ml;
pub mod phantom;
pub mod volume;

pub use error::{Error, Result};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
