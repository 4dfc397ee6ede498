//! Library side of the experiment runner, split out so integration tests can
//! drive the pipeline without going through the binary.

pub mod config;
pub mod plotdata;
pub mod runner;
