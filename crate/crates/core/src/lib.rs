//! Branching random walks among Bernoulli hard traps on `Z^d`.
//!
//! The crate is organised bottom-up:
//!
//! * [`lattice`] generates and serialises quenched trap environments on a
//!   finite box `[-L, L]^d`.
//! * [`percolation`] labels vacant clusters, computes chemical distances and
//!   occupied clusters.
//! * [`clearings`] finds trap-free Euclidean balls and runs the clearing scans.
//! * [`walk`] holds the exact single-walk oracles (survival among traps,
//!   confinement in balls, spectral rates and model constants).
//! * [`brw`] is the Monte Carlo engine for the killed and the free branching
//!   random walk.
//! * [`genealogy`] covers the pair-ancestry law and the second-moment
//!   machinery for confined particle counts.
//! * [`experiments`] wires everything into reproducible studies and the
//!   verification battery.

pub mod brw;
pub mod clearings;
pub mod error;
pub mod experiments;
pub mod genealogy;
pub mod lattice;
pub mod percolation;
pub mod rng;
pub mod stats;
pub mod walk;

pub use error::{Error, Result};
pub use lattice::{BoxGeometry, LatticeConfig, Site, TrapField};
