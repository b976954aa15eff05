//! Nabla calculus on time scales, simulation of a neutral-type competitive
//! neural network with leakage and mixed delays, and the arithmetic that
//! certifies existence and exponential stability of its almost periodic
//! solution.

// `!(a < b)` is used deliberately so that NaN lands on the failing side
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analyzer;
pub mod cli;
pub mod coeffs;
pub mod conditions;
pub mod kv;
pub mod network;
pub mod simulator;
pub mod timescale;

pub use coeffs::{BoundPair, CoeffExpr, SamplingGrid};
pub use conditions::{BoundSet, Certificate, H3Report};
pub use network::{Activation, ActivationKind, CoeffKey, HistorySpec, NetworkSpec};
pub use simulator::{simulate, SimOptions, Trajectory};
pub use timescale::{Piece, TimeScale};
