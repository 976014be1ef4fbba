//! Scenario configuration, presets, the run loop, and file formats for the
//! interfem simulator.

pub mod config;
pub mod io;
pub mod presets;
pub mod runner;
