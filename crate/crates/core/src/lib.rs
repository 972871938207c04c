//! End-to-end delay approximation for packet-switched networks.

pub mod analysis;
pub mod approx;
pub mod commands;
pub mod dessim;
pub mod netmodel;
pub mod phasetype;
pub mod rng;
pub mod scenario;
pub mod topogen;
