//! Ground-truth slides, serpentine stage trajectories and the motion-blurred
//! video a continuous scan would record.

mod render;
mod slide;
mod trajectory;

pub use render::{render_frames, render_to_dir, FrameRenderer, EDGE_MARGIN_PX};
pub use slide::{
    default_appearance, synth_slide, write_label_map_csv, ClassAppearance, CoreTruth, SlideSpec,
    SlideTruth, DEFAULT_BACKGROUND, STAIN_BROWN, TISSUE_BASE,
};
pub use trajectory::{
    plan_trajectory, Phase, ScanConfig, ScanSummary, StageSample, StageTrajectory,
    DEFAULT_ROW_OVERLAP, MAX_ROW_OVERLAP,
};
