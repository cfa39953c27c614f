//! Quantum circuit design search (QCDS) laboratory.
//!
//! Trains parameterized quantum circuits for multi-label classification on a
//! dense statevector backend and searches the discrete design space with
//! random search + successive halving, policy-gradient controllers (classical
//! and hybrid quantum) and Gaussian-process Bayesian optimization.

pub mod circuit;
pub mod data;
pub mod design;
pub mod error;
pub mod grad;
pub mod qsim;
pub mod report;
pub mod search_bo;
pub mod search_random;
pub mod search_rl;
pub mod similarity;
pub mod trainer;

pub use error::{Error, Result};
