//! Distributed radar point-cloud processing: a simulator for comparing
//! cooperative (raw point exchange) and federated (Gaussian-mixture
//! parameter exchange) multi-radar target tracking.
//!
//! The pipeline per update period is
//! `scene -> sensor::observe -> sensor::preprocess -> sidelink -> fusion`,
//! orchestrated by [`harness::run_experiment`].

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod fusion;
pub mod harness;
pub mod mixture;
pub mod scene;
pub mod sensor;
pub mod sidelink;

pub use error::{Error, Result};

/// Ground-plane coordinates, meters.
pub type Point2 = nalgebra::Point2<f64>;

/// Points live in 3D, meters.
pub type Point3 = nalgebra::Point3<f64>;
