pub mod dg;
pub mod energy;
pub mod flows;
pub mod error;
pub mod lifting;
pub mod mesh;
pub mod metric;
pub mod solver;

pub use error::{LdgError, Result};
