use std::path::Path;

use rayon::prelude::*;

use super::slide::SlideTruth;
use super::trajectory::{Phase, StageTrajectory};
use crate::error::{Error, Result};
use crate::imaging::{
    blur_raster_px, box_center_offset, Direction, FrameManifest, FrameSequence, Raster,
    SequenceWriter,
};

/// How far (px) a frame may reach past the slide edge into the
/// replicate-extended border.
pub const EDGE_MARGIN_PX: f64 = 1.0;

/// Renders frames as crops of the slide pre-blurred in the frame's scan
/// direction, taken at the mid-exposure stage position. Paused and jumping
/// frames are crops of the unblurred slide.
pub struct FrameRenderer<'a> {
    slide: &'a Raster,
    traj: &'a StageTrajectory,
    blurred_plus: Raster,
    blurred_minus: Raster,
    blur_px: usize,
}

impl<'a> FrameRenderer<'a> {
    pub fn new(truth: &'a SlideTruth, traj: &'a StageTrajectory) -> Result<Self> {
        let slide = &truth.image;
        let cfg = &traj.config;
        if (slide.scale() - cfg.scale_um_per_px).abs() > 1e-9 * cfg.scale_um_per_px {
            return Err(Error::Render {
                frame: 0,
                message: format!(
                    "slide scale {} µm/px differs from camera scale {} µm/px",
                    slide.scale(),
                    cfg.scale_um_per_px
                ),
            });
        }
        let blur_px = (cfg.blur_um() / cfg.scale_um_per_px).round() as usize;
        Ok(FrameRenderer {
            slide,
            traj,
            blurred_plus: blur_raster_px(slide, blur_px, Direction::PlusX),
            blurred_minus: blur_raster_px(slide, blur_px, Direction::MinusX),
            blur_px,
        })
    }

    pub fn blur_px(&self) -> usize {
        self.blur_px
    }

    pub fn manifest(&self) -> FrameManifest {
        let cfg = &self.traj.config;
        FrameManifest {
            frame_count: self.traj.len(),
            width: cfg.frame_width_px,
            height: cfg.frame_height_px,
            frame_period_s: 1.0 / cfg.frame_rate_hz,
            exposure_s: cfg.exposure_s,
            scale_um_per_px: cfg.scale_um_per_px,
            trajectory: None,
        }
    }

    pub fn render(&self, index: usize) -> Result<Raster> {
        let sample = self.traj.samples.get(index).ok_or_else(|| Error::Render {
            frame: index,
            message: "frame index beyond trajectory".into(),
        })?;
        let cfg = &self.traj.config;
        let (fw, fh) = (cfg.frame_width_px, cfg.frame_height_px);
        let x = sample.x_um / cfg.scale_um_per_px;
        let y = sample.y_um / cfg.scale_um_per_px;
        let (max_x, max_y) = (
            (self.slide.width() - fw) as f64 + EDGE_MARGIN_PX,
            (self.slide.height() as f64 - fh as f64) + EDGE_MARGIN_PX,
        );
        if self.slide.width() < fw
            || x < -EDGE_MARGIN_PX
            || y < -EDGE_MARGIN_PX
            || x > max_x
            || y > max_y
        {
            return Err(Error::Render {
                frame: index,
                message: format!(
                    "field at ({x:.1}, {y:.1}) px leaves the {}x{} slide",
                    self.slide.width(),
                    self.slide.height()
                ),
            });
        }
        let frame = match (sample.phase, sample.direction) {
            (Phase::Scanning, Some(dir)) if self.blur_px > 1 => {
                let source = match dir {
                    Direction::PlusX => &self.blurred_plus,
                    Direction::MinusX => &self.blurred_minus,
                };
                // the box of a blurred pixel is centred at x + offset
                let offset = box_center_offset(self.blur_px, dir);
                source.crop_bilinear(x - offset, y, fw, fh)
            }
            _ => self.slide.crop_bilinear(x, y, fw, fh),
        };
        Ok(frame)
    }
}

/// Render every frame of `traj` into memory.
pub fn render_frames(truth: &SlideTruth, traj: &StageTrajectory) -> Result<FrameSequence> {
    let renderer = FrameRenderer::new(truth, traj)?;
    let frames = (0..traj.len())
        .into_par_iter()
        .map(|i| renderer.render(i))
        .collect::<Result<Vec<_>>>()?;
    FrameSequence::new(renderer.manifest(), frames)
}

/// Render straight to a sequence directory without holding all frames,
/// together with the ground-truth trajectory as `trajectory.csv`.
pub fn render_to_dir(
    truth: &SlideTruth,
    traj: &StageTrajectory,
    dir: impl AsRef<Path>,
) -> Result<FrameManifest> {
    let dir = dir.as_ref();
    let renderer = FrameRenderer::new(truth, traj)?;
    let mut manifest = renderer.manifest();
    manifest.trajectory = Some("trajectory.csv".into());
    let mut writer = SequenceWriter::create(dir, manifest.clone())?;
    const BATCH: usize = 16;
    for start in (0..traj.len()).step_by(BATCH) {
        let end = (start + BATCH).min(traj.len());
        let batch = (start..end)
            .into_par_iter()
            .map(|i| renderer.render(i))
            .collect::<Result<Vec<_>>>()?;
        for f in &batch {
            writer.push(f)?;
        }
    }
    writer.finish()?;
    traj.write_csv(dir.join("trajectory.csv"))?;
    Ok(manifest)
}
