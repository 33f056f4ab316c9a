//! Reflective evolution of heuristic code: prompt rendering, LLM access,
//! fitness evaluation and the evolutionary loop.

pub mod catalog;
pub mod engine;
pub mod error;
pub mod gateway;
pub mod harness;
pub mod prompts;
pub mod walk;

pub use catalog::{task, Mode, SolverKind, TaskSpec};
pub use error::{EvoError, Result};
