//! Lipschitz perturbations of maps on finite metric spaces.
//!
//! The crate builds, on finite point clouds and distance matrices, small
//! Lipschitz perturbations that collapse the Hausdorff content of
//! unrectifiable-type sets, and measures the lower bounds that rectifiable
//! sets force on any such perturbation.
//!
//! Module map:
//! - [`normgeom`]: normed spaces, operator norms and adapted bases.
//! - [`metric`]: finite metric spaces, neighbourhood graphs, curve
//!   fragments, epsilon nets and the Kuratowski embedding.
//! - [`content`]: Hausdorff content estimates by ball covers and grid counts.
//! - [`tangent`]: cones, direction profiles and weak tangent field fitting.
//! - [`perturb`]: scalar and vector perturbations, gluing and the full
//!   flattening pipeline.
//! - [`converse`]: degree coverage and content lower bounds.
//! - [`corpus`]: deterministic test-set generators.

pub mod content;
pub mod converse;
pub mod corpus;
mod error;
pub mod metric;
pub mod normgeom;
pub mod par;
pub mod perturb;
mod points;
pub mod rng;
pub mod tangent;

pub use error::{Error, Result};
pub use points::PointCloud;

/// Version string embedded in every report.
pub const VERSION: &str = concat!("lipflat ", env!("CARGO_PKG_VERSION"));
