//! Generative capsule models for 2D point constellations.
//!
//! A scene is a set of unlabelled 2D points produced by posing geometric
//! templates (squares, triangles) with random similarity transforms. This
//! crate provides the building blocks to generate such scenes and to infer
//! which template, at which pose, explains which points:
//!
//! - [`geometry`]: templates, part predictor matrices and pose algebra;
//! - [`scene`]: the randomized scene generator and its normalization;
//! - [`sinkhorn`]: Sinkhorn-Knopp projection onto doubly stochastic matrices;
//! - [`vi`]: mean-field variational inference with either a mixture or a
//!   doubly-stochastic assignment prior, annealed observation precision and
//!   random restarts;
//! - [`ransac`]: exhaustive basis-pair pose solving with subset matching;
//! - [`metrics`]: partition-comparison metrics (VI, ARI, segmentation and
//!   scene accuracy) with missing-point handling.
//!
//! The crate is `no_std` (with `alloc`); everything IO-related lives in the
//! companion CLI crate.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod geometry;
pub mod metrics;
pub mod ransac;
pub mod scene;
pub mod sinkhorn;
pub mod vi;

pub use geometry::{Part, PartPredictor, Pose, PoseParams, Template, TemplateLibrary};
pub use metrics::{LabeledPartition, Prediction};
pub use scene::{GenConfig, Scene};
