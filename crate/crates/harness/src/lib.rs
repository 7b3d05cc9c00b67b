//! Experiment harness for the `lowbound` command: TOML grids, parallel
//! sweeps, exact instance files, CSV reports and plot data.

pub mod check;
pub mod cli;
pub mod config;
pub mod experiment;
pub mod hexfloat;
pub mod instance_file;
pub mod report;
