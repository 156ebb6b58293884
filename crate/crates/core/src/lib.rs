//! Robust pole assignment for descriptor systems `E x' = A x + B u` by
//! proportional-plus-derivative state feedback `u = F x - G x'`.
//!
//! The closed-loop pencil `(A + BF, E + BG)` is driven to a generalized real
//! Schur form `X^-1 (A + BF) P = S`, `X^-1 (E + BG) P = T` block by block,
//! choosing each new column to keep the off-diagonal mass of `S` and `T`
//! small. See [`assign::run_pipeline`] for the entry point.

pub mod assign;
pub mod bench;
pub mod linalg;
pub mod metrics;
pub mod problem;
pub mod report;

pub use nalgebra;
pub use num_complex::Complex64;

pub use assign::{run_pipeline, AssignError, AssignOptions, Order, Solution};
pub use metrics::{verify_feedback, verify_solution, Report};
pub use problem::{parse_problem, validate_problem, PolePair, Problem};
