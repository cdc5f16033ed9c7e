//! Motion blur forward model: a scene translated along x during the exposure
//! integrates to the rest image convolved with a rect of width `speed × T`.
//! The rect is discretized to a normalized box of `round(speed × T / scale)`
//! taps with replicate-edge extension.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::raster::{Direction, Raster};

/// Stage motion during one exposure.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlurSpec {
    /// µm/s
    pub stage_speed: f64,
    /// seconds
    pub exposure: f64,
    pub direction: Direction,
}

/// Blur extent in both physical and sample units.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BlurWidth {
    pub um: f64,
    pub px: usize,
}

impl BlurSpec {
    pub fn new(stage_speed: f64, exposure: f64, direction: Direction) -> Self {
        BlurSpec {
            stage_speed,
            exposure,
            direction,
        }
    }

    /// A stationary exposure.
    pub fn still() -> Self {
        BlurSpec::new(0.0, 0.0, Direction::PlusX)
    }

    pub fn width_um(&self) -> f64 {
        (self.stage_speed * self.exposure).abs()
    }

    pub fn width_px(&self, scale: f64) -> usize {
        (self.width_um() / scale).round() as usize
    }
}

pub fn blur_width(spec: &BlurSpec, scale: f64) -> BlurWidth {
    BlurWidth {
        um: spec.width_um(),
        px: spec.width_px(scale),
    }
}

/// Tap offsets `first..first + width` of the discrete box. Odd widths are
/// centred; even widths lean left for `+x` and right for `-x`.
pub fn box_taps(width: usize, direction: Direction) -> (i64, usize) {
    let w = width.max(1) as i64;
    let left = w / 2;
    let right = w - 1 - left;
    match direction {
        Direction::PlusX => (-left, w as usize),
        Direction::MinusX => (-right, w as usize),
    }
}

/// Centre of mass of [`box_taps`] in pixels (0 or ±0.5).
pub fn box_center_offset(width: usize, direction: Direction) -> f64 {
    let (first, n) = box_taps(width, direction);
    first as f64 + (n as f64 - 1.0) / 2.0
}

/// Convolve every channel along x with the box of `spec`, at the raster's scale.
pub fn blur_raster(img: &Raster, spec: &BlurSpec) -> Raster {
    blur_raster_px(img, spec.width_px(img.scale()), spec.direction)
}

/// Box blur of `width` taps along x. Widths 0 and 1 return the input.
pub fn blur_raster_px(img: &Raster, width: usize, direction: Direction) -> Raster {
    if width <= 1 {
        return img.clone();
    }
    let (first, n) = box_taps(width, direction);
    let w = img.width();
    let stride = w * 3;
    let mut out = vec![0u8; img.data().len()];
    out.par_chunks_mut(stride)
        .zip(img.data().par_chunks(stride))
        .for_each_init(
            || vec![0u32; w + n + 1],
            |prefix, (dst, src)| {
                for c in 0..3 {
                    blur_line(src, c, w, first, n, prefix, dst);
                }
            },
        );
    Raster::new(w, img.height(), img.scale(), out).expect("dimensions preserved")
}

/// One channel of one row. `prefix[i]` holds the sum of the replicate-extended
/// samples at positions `first .. first + i`.
fn blur_line(
    src: &[u8],
    channel: usize,
    w: usize,
    first: i64,
    n: usize,
    prefix: &mut [u32],
    dst: &mut [u8],
) {
    let last = w as i64 - 1;
    let sample = |pos: i64| src[pos.clamp(0, last) as usize * 3 + channel] as u32;
    prefix[0] = 0;
    for i in 0..w + n - 1 {
        prefix[i + 1] = prefix[i] + sample(first + i as i64);
    }
    let half = n as u32 / 2;
    for x in 0..w {
        let sum = prefix[x + n] - prefix[x];
        dst[x * 3 + channel] = ((sum + half) / n as u32) as u8;
    }
}
