pub mod aiem;
pub mod cisprep;
pub mod cli;
pub mod dynamics;
pub mod error;
pub mod fixtures;
pub mod linalg;
pub mod mcvqe;
pub mod model;
pub mod oracle;
pub mod pipeline;
pub mod response;
pub mod sim;

pub use error::{Error, Result};
