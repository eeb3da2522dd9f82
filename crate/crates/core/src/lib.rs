//! Distances between eigenstates of free-fermion chains.
//!
//! The core is [`gaussian`], which computes fidelities and Bures distances of
//! fermionic Gaussian states directly from their `2ℓ x 2ℓ` correlation
//! matrices. [`dense`] is a brute-force density-matrix oracle used to check it.
//! [`ising`] and [`xxz`] produce eigenstates of the transverse-field Ising and
//! XXZ chains, [`ensemble`] samples random pure Gaussian states, and
//! [`experiments`] runs the averaged-distance sweeps.

pub mod dense;
pub mod ensemble;
pub mod error;
pub mod experiments;
pub mod gaussian;
pub mod ising;
pub mod xxz;

pub use error::{Error, Result};
