//! From a stitched mosaic to labelled, grid-addressed cores and their
//! classification patch stacks.

mod balance;
mod grid;
mod io;
mod segment;
mod stack;

pub use balance::{find_background, white_balance, BackgroundBlock, BalanceMode, BalanceParams};
pub use grid::{
    assign_labels, core_id, fit_grid, CoreRecord, GridAssignment, GridConflict, LabelMap,
    LabelReport,
};
pub use io::{read_cores, write_cores, CoreEntry};
pub use segment::{otsu_level, segment_cores, CoreBox, SegmentParams};
pub use stack::{build_stack, pad_replicate, resample_bilinear, PatchStack, StackHeader, PATCH_COUNT, PATCH_SIZE};
