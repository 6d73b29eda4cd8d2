//! Training binary neural networks by projecting stochastic gradients
//! onto spin vectors with QUBO solvers.
//!
//! The crate provides the projection optimizer and its baselines
//! ([`optim`]), the binary map between output gradients and spin
//! vectors ([`binmap`]), local and remote QUBO solvers ([`qubo`],
//! [`remote`]), small binary networks with hand-written gradients
//! ([`net`]), the experiment datasets ([`data`]), analysis tools for
//! gradient direction and annealing spectra ([`diagnostics`]), and the
//! config-driven experiment runner ([`config`], [`experiment`]).

pub mod binmap;
pub mod config;
pub mod data;
pub mod diagnostics;
pub mod error;
pub mod experiment;
pub mod net;
pub mod optim;
pub mod qubo;
pub mod remote;

pub use error::{Error, Result};
