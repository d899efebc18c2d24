//! Uplink link-level simulator for cell-free massive MIMO.
//!
//! The library models a network of distributed multi-antenna APs serving
//! single-antenna UEs over spatially correlated Rayleigh fading and evaluates
//! the achievable uplink spectral efficiency under four AP-cooperation
//! levels, from fully centralized MMSE processing at the CPU down to
//! autonomous small cells, next to a cellular massive MIMO baseline. It also
//! accounts for the fronthaul signaling each level requires.
//!
//! Modules follow the processing chain:
//!
//! - [`geometry`]: wrap-around deployments and pilot assignment
//! - [`propagation`]: pathloss, correlated shadowing, spatial correlation
//! - [`estimation`]: channel sampling, despreading, MMSE/LS estimation
//! - [`combining`]: MR / local-MMSE / centralized-MMSE receive combining and
//!   statistics-based decoding weights
//! - [`se`]: spectral-efficiency evaluation per cooperation level, plus
//!   successive interference cancellation at the central unit
//! - [`cellular`]: the cellular baseline with multi-cell MMSE combining
//! - [`fronthaul`]: exact signaling-load accounting
//! - [`harness`]: the two-pass Monte-Carlo driver with deterministic seeding
//!   and CDF aggregation

pub mod cellular;
pub mod combining;
pub mod error;
pub mod estimation;
pub mod fronthaul;
pub mod geometry;
pub mod harness;
pub mod linalg;
pub mod propagation;
pub mod se;

pub use error::{Error, Result};
