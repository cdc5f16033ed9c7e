//! Continuous-scan microscopy pipeline: motion-blur forward model, synthetic
//! slide scanning, whole-slide stitching from unsynchronized video, tissue
//! core extraction, a baseline classifier and repeat-scan confidence triage.
//!
//! Stages, in pipeline order:
//!
//! 1. [`imaging`] – rasters, the box motion-blur operator, raw containers.
//! 2. [`synthscan`] – synthetic slides, serpentine trajectories, frame rendering.
//! 3. [`stitcher`] – motion labelling, square-wave repair, mosaic composition.
//! 4. [`coreprep`] – white balance, core segmentation, grid labels, patch stacks.
//! 5. [`classify`] – features, baseline model, prediction import/export.
//! 6. [`triage`] – repeat aggregation, thresholds, sweeps, confusion, ROC.

pub mod classify;
pub mod coreprep;
pub mod error;
pub mod imaging;
pub mod stitcher;
pub mod synthscan;
pub mod triage;

pub use error::{Error, Result};
pub use imaging::{BlurSpec, Direction, FrameManifest, FrameSequence, FrameSource, GrayRaster, Raster};
