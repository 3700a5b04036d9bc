//! File formats, Monte Carlo validation, batch experiments and the command
//! line for `adoptmatch-core`.

pub mod cli;
pub mod harness;
pub mod io;
pub mod montecarlo;

pub use adoptmatch_core as core;
