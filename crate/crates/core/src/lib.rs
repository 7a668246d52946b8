//! Age-of-Information analysis and decentralized offloading equilibria for
//! edge computing with priority-preemptive task classes.
//!
//! * [`shs`]: generic stochastic-hybrid-system solver for finite chains with
//!   linear age resets.
//! * [`models`]: the red and yellow/green chains, power and cost models.
//! * [`mfg`]: mean-field equilibrium solver and finite-population
//!   exploitability.
//! * [`des`]: discrete-event simulator of the full system, used as an
//!   independent oracle.

pub mod des;
pub mod error;
pub mod mfg;
pub mod models;
pub mod shs;

pub use error::{Error, Result};
