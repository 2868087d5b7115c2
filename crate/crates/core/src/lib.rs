//! Simulation of the order-finding part of Shor's algorithm with matrix
//! product states.

pub mod matlin;
pub mod mps;
pub mod circuit;
pub mod blocks;
pub mod oracle;
