//! Numerical laboratory for the link between infinity-harmonic functions and
//! the inverse mean curvature flow in the plane.
//!
//! The pipeline approximates an infinity-harmonic `u` by p-harmonic
//! functions `u_p`, builds the conjugate stream functions `v_p`, maps them to
//! `w_p = log(v_p) / (1 - p)` and checks that the limit is a weak solution of
//! `div(grad w / |grad w|) = |grad w|`.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod error;
pub mod experiments;
pub mod field_io;
pub mod grid;
pub mod linalg;
pub mod report;
pub mod conjugate;
pub mod corpus;
pub mod solver;
pub mod streamlines;
pub mod verifier;

pub use error::{Error, Result};
pub use grid::{CellMask, Grid2D, Point, ScalarField, TestFunction, VectorField};
