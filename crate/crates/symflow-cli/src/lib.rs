//! Experiment harness for the `symflow` library: JSON-configured runs,
//! shipped presets, CSV/JSON trajectory output, and summary documents.

pub mod config;
pub mod output;
pub mod presets;
pub mod runner;
