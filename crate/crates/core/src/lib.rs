//! Fault-mode-aware contact scheduling for fleets of intermittently
//! reachable assets.
//!
//! Each asset carries a belief over discrete fault modes with
//! elapsed-time-dependent transitions. A receding-horizon planner samples
//! mode scenarios from those beliefs and solves a binary program that trades
//! expected acquisitions against expected entropy reduction.

pub mod baselines;
pub mod belief;
pub mod config;
pub mod dist;
pub mod error;
pub mod fault;
pub mod geometry;
pub mod harness;
pub mod milp;
pub mod observation;
pub mod scenario;
pub mod seeds;
pub mod sim;

pub use error::{Error, Result};
