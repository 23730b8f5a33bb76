//! Files, plots and the experiment driver around `codev-core`.

pub mod charts;
pub mod checkpoint;
pub mod frames;
pub mod manifest;
pub mod metrics;
pub mod run;
pub mod trace;
