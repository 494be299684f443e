//! Discrete-query simulation of scattering-based NAND-tree evaluation.
//!
//! The continuous-time algorithm evolves a wave packet under
//! `H_O + H_D`, where `H_O` is the input-dependent oracle Hamiltonian and
//! `H_D` the adjacency of a runway-plus-tree graph. This crate converts
//! that evolution into the conventional query model: `e^{-iH_O t}` is
//! realized exactly with two bit-flip oracle calls, and the sum is split
//! with high-order Suzuki product formulas whose oracle calls are counted
//! in a [`gadget::QueryLedger`].

pub mod cli;
pub mod error;
pub mod fit;
pub mod formula;
pub mod gadget;
pub mod graph;
pub mod nand;
pub mod record;
pub mod runner;
pub mod state;

pub use error::{NandError, Result};
