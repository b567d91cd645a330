//! Relative multiplexing (RMUX) toolkit.
//!
//! Synchronising heralded photons only relative to each other, rather than to
//! a global clock bin, cuts the active switching a linear-optical machine
//! needs. This crate quantifies that:
//!
//! * [`streams`]: seeded heralded-source photon streams.
//! * [`delay_network`]: binary-delay switch networks, routing and clashes.
//! * [`matching`]: two-stream synchronisation as bipartite assignment.
//! * [`mux_analytics`]: closed-form standard-MUX resource accounting.
//! * [`mux_sim`]: Monte Carlo for stream matching and Bell-state generation.
//! * [`percolation`]: diamond-lattice percolation under photon loss.
//! * [`experiments`]: reproducible experiment recipes writing CSV reports.

pub mod delay_network;
pub mod error;
pub mod experiments;
pub mod matching;
pub mod mux_analytics;
pub mod mux_sim;
pub mod percolation;
pub mod rng;
pub mod streams;
pub mod union_find;

pub use error::{Error, Result};
