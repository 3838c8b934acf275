pub mod corpus;
pub mod error;
pub mod models;
pub mod nn;
pub mod pipeline;
pub mod synthetic;

pub use error::{Error, Result};
