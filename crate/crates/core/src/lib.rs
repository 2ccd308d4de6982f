pub mod audit;
pub mod error;
pub mod formulations;
pub mod io;
pub mod ipm;
pub mod linalg;
pub mod lp;
pub mod model;
pub mod pipeline;
pub mod star;

pub use error::{Error, Result};
