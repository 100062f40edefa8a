pub mod cli;
pub mod curriculum;
pub mod datasets;
pub mod encoder;
pub mod error;
pub mod evalkit;
pub mod io;
pub mod numcore;
pub mod objectives;
pub mod textproc;

pub use error::{Error, Result};
