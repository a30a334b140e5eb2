pub mod config;
pub mod curation;
pub mod encoder_stack;
pub mod error;
pub mod evaluation;
pub mod interpret;
pub mod language_model;
pub mod model;
pub mod numerics;
pub mod slide_io;
pub mod training;

pub use error::{Error, Result};
