//! Stackelberg mean field equilibria of discrete-time leader/follower games.
//!
//! The solver works in the common-agent formulation: at each public state
//! `(pi, z)` (belief on the leader's type, distribution of follower types) it
//! finds prescriptions for both sides by a per-state fixed point, sweeping
//! backward over stages or iterating to a stationary solution. The forward
//! pass unrolls the resulting generator into equilibrium trajectories.

pub mod cli;
pub mod config;
pub mod dynamics;
pub mod error;
pub mod export;
pub mod games;
pub mod oracle;
pub mod grid;
pub mod solver;
pub mod special_case;
pub mod spec;
pub mod stage;

pub use error::{Error, Result};
