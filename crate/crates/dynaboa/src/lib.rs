//! Online bilevel test-time adaptation for streaming articulated-skeleton
//! reconstruction, at desk scale.
//!
//! A small regression model maps noisy 2D keypoint observations to skeleton
//! shape, pose and camera parameters. As an out-of-distribution target stream
//! arrives frame by frame, the model weights are updated online. The crate
//! implements the full family of update schemes compared in the ablation
//! harness, single-level and bilevel, up to `DynaBOA`: a bilevel step guided
//! by source exemplars retrieved through spherical k-means clustering, a mean
//! teacher, and a feature-distance-triggered dynamic refinement loop.
//!
//! Module map:
//! - [`autodiff`]: tape-based reverse-mode differentiation over `f64`.
//! - [`kinematics`]: skeleton topology, forward kinematics, projection.
//! - [`model`]: the differentiable observation-to-parameters regressor.
//! - [`losses`]: reprojection/prior, motion, teacher and exemplar losses.
//! - [`stream`]: synthetic source/target stream generation and pretraining.
//! - [`retrieval`]: source bank, spherical k-means, exemplar retrieval.
//! - [`adaptation`]: the online update schemes and the per-frame driver.
//! - [`metrics`]: MPJPE, PA-MPJPE, PVE, PCK/AUC, ambiguity scatter.
//! - [`config`], [`harness`], [`cache`]: run configuration, the five CLI
//!   commands, and the binary cache format shared by all artifacts.

pub mod adaptation;
pub mod autodiff;
pub mod cache;
pub mod config;
pub mod error;
pub mod harness;
pub mod kinematics;
pub mod losses;
pub mod metrics;
pub mod model;
pub mod retrieval;
pub mod stream;

pub use error::{Error, Result};
