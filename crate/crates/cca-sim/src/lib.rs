//! Deterministic simulator of a congested clique of k machines, some of them
//! Byzantine, reading an n-bit input from a trusted cloud.

pub mod adversary;
pub mod alg;
pub mod committees;
pub mod config;
pub mod engine;
pub mod error;
pub mod expanders;
pub mod harness;
pub mod hash;
pub mod input;
pub mod payload;
pub mod rng;
pub mod runner;

pub use error::{Result, SimError};
