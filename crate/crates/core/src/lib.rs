//! Contour-driven posing of a modal-reduced tetrahedral FEM model.
//!
//! A tongue-like tetrahedral mesh is reduced to a handful of vibration modes,
//! a database of constraint-driven poses is generated offline, and each 2D
//! midsagittal target contour is matched against the database by a
//! mean-sum-of-distances objective.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod contour;
pub mod error;
pub mod fem;
pub mod fixture;
pub mod mesh;
pub mod modal;
pub mod retrieval;
pub mod shape_db;

pub use contour::{Contour2D, ScoringConfig, Vec2};
pub use error::{Error, Result};
pub use fem::{assemble, FemSystem, MaterialParams};
pub use mesh::{load_mesh, midsagittal_path, MidsagittalPath, TetMesh, Vec3};
pub use modal::{reconstruct, solve_constrained_pose, solve_modes, step_modal, ModalBasis, ModalState};
pub use retrieval::{best_match, track_sequence, MatchResult, Matcher};
pub use shape_db::{generate_database, GenConfig, ShapeDatabase, ShapeRecord};
