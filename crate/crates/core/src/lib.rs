//! Reflectance transformation imaging with two ordinary smartphones.
//!
//! The pipeline turns a static and a moving video (pre-extracted frames plus
//! audio) into a compact relightable model:
//!
//! 1. [`sync`] aligns the recordings through their audio tracks.
//! 2. [`marker`] finds the fiducial in every frame, [`pose`] turns the moving
//!    camera's view into a light direction.
//! 3. [`mlic`] rectifies the static frames into a multi-light image collection.
//! 4. [`pca`] compresses each pixel's intensity vector, [`neural`] trains the
//!    per-pixel decoder, [`relight`] packages and evaluates the model.
//! 5. [`eval`] scores relit images (PSNR, SSIM) against held-out lights and a
//!    polynomial texture map baseline; [`synth`] produces ground-truth data.

pub mod cli;
pub mod color;
pub mod error;
pub mod eval;
pub mod geometry;
pub mod marker;
pub mod mlic;
pub mod neural;
pub mod pca;
pub mod pipeline;
pub mod pose;
pub mod raster;
pub mod relight;
pub mod sync;
pub mod synth;

pub use error::{Result, RtiError};
pub use geometry::{CameraIntrinsics, LightDirection, Point2};
pub use raster::{ImagePlane, RgbImage};
