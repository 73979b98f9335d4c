//! Motion detection for a translating camera from dense optical flow.
//!
//! The pipeline is: intensity [`raster::Frame`]s go through the polynomial
//! expansion flow engine ([`flow`]), the resulting [`flow::FlowField`] is turned
//! into a per-pixel ratio of horizontal to vertical image motion
//! ([`looming::looming_transform`]), the focus of expansion is fitted
//! ([`looming::estimate_foe`]) and pixels whose motion is not radial about it
//! are segmented ([`looming::detect_moving`]).
//!
//! [`scene`] renders a textured fronto-parallel board seen from a translating
//! pinhole camera together with its exact flow, which is what the tests use as
//! ground truth.

// `!(x > y)` is used on purpose so that NaN fails the check.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod cli;
pub mod error;
pub mod flow;
pub mod formats;
pub mod imu_sync;
pub mod looming;
pub mod par;
pub mod raster;
pub mod scene;

pub use error::{Error, Result};
