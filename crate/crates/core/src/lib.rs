//! Equilibrium computation for two adoption search technologies.
//!
//! Children and prospective families are described by types. In every time
//! step one child type becomes active and is searched for a family, either by
//! the families themselves (family-driven search, [`Regime::Fs`]) or by the
//! child's caseworker walking families in decreasing order of value
//! (caseworker-driven search, [`Regime::Cs`]). Agents announce interest in
//! counterpart types; a pair with mutual interest is investigated, costs are
//! paid and the match succeeds with probability `p`.
//!
//! The crate is organised bottom-up:
//!
//! - [`model`]: instances, strategy profiles and matching correspondences.
//! - [`utilities`]: exact expected utilities and welfare aggregates.
//! - [`strategies`]: threshold-induced profiles and best responses.
//! - [`equilibrium`]: the monotone threshold maps and extremal equilibria.
//! - [`analysis`]: Pareto comparisons, popularity, and the induced marriage
//!   market.
//! - [`gen`]: seeded random instances and the named hand-built instances.
//!
//! Everything here is pure computation over `alloc` collections; file formats,
//! simulation and the command line live in the `adoptmatch` crate.

#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod analysis;
pub mod equilibrium;
mod error;
pub mod gen;
mod matrix;
pub mod model;
pub mod strategies;
pub mod utilities;

pub use error::Error;
pub use matrix::Matrix;
pub use model::{Agent, Instance, MatchingCorrespondence, Params, Regime, StrategyProfile};
