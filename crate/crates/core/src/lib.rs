//! Metric depth from a monocular prediction and sparse radar.
//!
//! The pipeline aligns a scaleless monocular prediction to projected radar
//! depth ([`align`]), propagates radar depth to nearby pixels through
//! per-point confidence maps ([`quasidense`]), and refines the per-pixel scale
//! with a small learned residual ([`refine`]). [`geometry`] prepares LiDAR
//! supervision, [`metrics`] scores results and [`synth`] generates
//! deterministic test scenes.
//!
//! The crate is `no_std` and only needs `alloc`.
#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod align;
pub mod camera;
pub mod error;
pub mod geometry;
pub mod map;
pub mod metrics;
pub mod quasidense;
pub mod refine;
pub mod rng;
pub mod sum;
pub mod synth;

pub use camera::{Attribute, CameraIntrinsics, PointCloud, Pose};
pub use error::{Error, Result};
pub use map::{FloatMap, MapKind, Mask, EPS_DEPTH};
