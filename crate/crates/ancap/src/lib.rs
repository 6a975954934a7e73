//! Analytic capacity of compact planar sets.
//!
//! This crate computes the analytic capacity of a compact set `E` in the
//! plane, i.e. the derivative at infinity of the Ahlfors map of the
//! complement domain. The solver discretizes a modified Kerzman-Stein
//! boundary integral equation for a Szego-kernel density with the Nystrom
//! method on equidistant nodes, applies the resulting operator matrix-free
//! with a quadtree-accelerated Cauchy sum, and solves the linear system
//! with full-memory GMRES. The capacity is the trapezoidal integral of the
//! real part of the density against the boundary speed.
//!
//! Supported geometries:
//!
//! - unions of smooth Jordan curves (circles, ellipses, custom curves),
//! - piecewise-smooth curves with corners (polygons), handled by a graded
//!   reparametrization that removes the corner singularity of the density,
//! - unions of rectilinear slits, handled by first constructing an
//!   ellipse-bounded preimage domain with a conformal-mapping iteration and
//!   then running the Jordan-curve solver on the preimage.
//!
//! The `reference` module provides the closed-form capacities (disk,
//! square, segment, unions of real intervals, two symmetric disks) used to
//! validate the solver, and `experiments` drives the reproducible table,
//! sweep and random-trial studies exposed by the `ancap` CLI.

pub mod discretize;
pub mod error;
pub mod experiments;
pub mod fastsum;
pub mod geometry;
pub mod krylov;
pub mod reference;
pub mod slitmap;
pub mod szego;

pub use error::{Error, Result};
pub use fastsum::{FastSumMode, FastSumOptions};
pub use geometry::{BoundaryCurve, CompactSetSpec, Orientation, SlitSet};
pub use szego::{CapacityOptions, CapacityResult};

/// Library version string.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
