use serde::{Deserialize, Serialize};

use crate::coreprep::PatchStack;
use crate::imaging::Raster;

/// Channels at or above this read as white (background / glass).
pub const WHITE_LEVEL: u8 = 240;
const TILES: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub brown_fraction: f64,
    pub mean_saturation: f64,
    /// Standard deviation of the per-tile brown fraction over an 8×8 tile
    /// grid, divided by its maximum possible value 0.5.
    pub heterogeneity: f64,
}

impl FeatureVector {
    pub fn as_array(&self) -> [f64; 3] {
        [self.brown_fraction, self.mean_saturation, self.heterogeneity]
    }
}

/// DAB-like brown: red over green over blue, a clear red–blue gap, and not
/// near-white.
#[inline]
pub fn is_brown(p: [u8; 3]) -> bool {
    let [r, g, b] = p;
    r > g && g > b && (r - b) as f64 / 255.0 > 0.15 && r.max(g).max(b) < WHITE_LEVEL
}

/// Fraction of brown pixels in an image.
pub fn brown_fraction(img: &Raster) -> f64 {
    let n = img.width() * img.height();
    let brown = img
        .data()
        .chunks_exact(3)
        .filter(|p| is_brown([p[0], p[1], p[2]]))
        .count();
    brown as f64 / n as f64
}

/// Features of one image (the baseline uses patch 0 of a stack).
pub fn image_features(img: &Raster) -> FeatureVector {
    let (w, h) = (img.width(), img.height());
    let mut brown = 0usize;
    let (mut sat, mut colored) = (0.0f64, 0usize);
    let mut tile_brown = [[0usize; TILES]; TILES];
    let mut tile_count = [[0usize; TILES]; TILES];
    for y in 0..h {
        let ty = y * TILES / h;
        for (x, p) in img.row(y).chunks_exact(3).enumerate() {
            let tx = x * TILES / w;
            let px = [p[0], p[1], p[2]];
            let hi = p[0].max(p[1]).max(p[2]);
            let lo = p[0].min(p[1]).min(p[2]);
            if hi < WHITE_LEVEL {
                colored += 1;
                if hi > 0 {
                    sat += (hi - lo) as f64 / hi as f64;
                }
            }
            tile_count[ty][tx] += 1;
            if is_brown(px) {
                brown += 1;
                tile_brown[ty][tx] += 1;
            }
        }
    }
    let fractions: Vec<f64> = (0..TILES * TILES)
        .filter_map(|i| {
            let (ty, tx) = (i / TILES, i % TILES);
            (tile_count[ty][tx] > 0).then(|| tile_brown[ty][tx] as f64 / tile_count[ty][tx] as f64)
        })
        .collect();
    let mean = fractions.iter().sum::<f64>() / fractions.len() as f64;
    let var = fractions.iter().map(|f| (f - mean).powi(2)).sum::<f64>() / fractions.len() as f64;
    FeatureVector {
        brown_fraction: brown as f64 / (w * h) as f64,
        mean_saturation: if colored > 0 { sat / colored as f64 } else { 0.0 },
        heterogeneity: (var.sqrt() / 0.5).min(1.0),
    }
}

pub fn extract_features(stack: &PatchStack) -> FeatureVector {
    image_features(&stack.patches[0])
}
