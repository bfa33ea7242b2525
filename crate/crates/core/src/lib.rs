//! Pin-fin heat-sink shape optimisation on a pseudo-3D conjugate heat
//! transfer model.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod calibration;
pub mod cmaes;
pub mod geometry;
pub mod grid;
pub mod math;
pub mod objective;
pub mod runner;
pub mod solver;

pub use grid::{CellKind, CellMask, StructuredGrid};
pub use math::{Rect, Vec2};
