//! Convex integration for very weak solutions of the Lagrangian mean curvature
//! equation `cos(theta) lap v + sin(theta) (det D^2 v - 1) = 0` on planar domains.

pub mod classical;
pub mod corrugation;
pub mod decompose;
pub mod deficit;
pub mod elliptic;
pub mod error;
pub mod expr;
pub mod field;
pub mod mollifier;
pub mod verify;

pub use error::{Error, Result};
pub use field::{Grid, ScalarField, SymMatrixField, VectorField};
