//! Raster types, the motion-blur forward operator, and the raw containers
//! every other stage reads and writes.

mod blur;
mod raster;
mod sequence;

pub use blur::{blur_raster, blur_raster_px, blur_width, box_center_offset, box_taps, BlurSpec, BlurWidth};
pub use raster::{effective_scale, luma_milli, round_u8, to_gray, Direction, GrayRaster, Raster};
pub use sequence::{
    read_manifest, read_raster, read_sequence, write_raster, write_sequence, FrameManifest,
    FrameSequence, FrameSource, RasterHeader, SequenceReader, SequenceWriter, FRAMES_FILE,
    MANIFEST_FILE,
};
