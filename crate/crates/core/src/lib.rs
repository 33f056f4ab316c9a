//! Problem definitions and heuristic-driven solvers for five combinatorial
//! optimization problems (TSP, CVRP, OP, MKP, BPP).
//!
//! The solvers here consume *heuristic values* produced elsewhere (typically
//! by generated code) and turn them into solutions:
//!
//! * [`aco`] samples solutions biased by a heuristic matrix and pheromone.
//! * [`gls`] runs guided local search where a penalty indicator picks the
//!   edges to penalize.
//! * [`constructive`] builds tours with a pluggable next-node selector.
//!
//! With the default `parallel` feature, batch work (ants within an ACO
//! iteration, instances within an evaluation) runs on the rayon pool. Without
//! it everything runs sequentially and produces identical results.

pub mod aco;
pub mod constructive;
pub mod error;
pub mod gls;
pub mod landscape;
pub mod matrix;
pub mod par;
pub mod problem;
pub mod rng;

pub use error::{Error, Result};
pub use matrix::Matrix;
pub use problem::{
    Direction, Instance, Payload, ProblemKind, Solution, TspInstance, ValidityReport, Violation,
};
