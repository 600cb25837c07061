//! Basic scene flow for a rectified stereo camera.
//!
//! Disparity is estimated at two time steps by semi-global matching
//! ([`stereo`]), optical flow between the left views by coarse-to-fine
//! patch matching ([`flow`]), and the two are joined per pixel into scene
//! flow ([`combine`]). [`pipeline::run_sceneflow`] runs all stages;
//! [`kitti`] reads and writes the benchmark's 16-bit PNG layouts and
//! [`eval`] scores results against ground truth.
//!
//! ```
//! use sceneflow::flow::FlowParams;
//! use sceneflow::pipeline::run_sceneflow;
//! use sceneflow::stereo::SgmParams;
//! use sceneflow::synthetic;
//!
//! let q = synthetic::quadruple(64, 32, 4, (0, 0), 1);
//! let sgm = SgmParams { max_disparity: 12, ..Default::default() };
//! let flow = FlowParams { pyramid_levels: 2, ..Default::default() };
//! let r = run_sceneflow(&q, &sgm, &flow)?;
//! assert!(r.scene_flow.valid_count() > 0);
//! # Ok::<(), sceneflow::Error>(())
//! ```

// Parameter checks are written `!(x > 0.0)` on purpose so NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod combine;
pub mod error;
pub mod eval;
pub mod flow;
pub mod keyvalue;
pub mod kitti;
pub mod pipeline;
pub mod raster;
pub mod reconstruct;
pub mod stereo;
pub mod synthetic;
pub mod viz;

pub use error::{Error, Result};
