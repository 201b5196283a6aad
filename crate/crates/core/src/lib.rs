pub mod checkpoint;
pub mod commands;
pub mod config;
pub mod datagen;
pub mod error;
pub mod examples;
pub mod guidance;
pub mod io;
pub mod losses;
pub mod matte;
pub mod metrics;
pub mod nn;
pub mod prn;
pub mod trainer;

pub use error::{MatteError, Result};
