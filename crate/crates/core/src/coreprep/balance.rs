use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::{round_u8, to_gray, Raster};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BalanceMode {
    /// Add `255 - b_c` to channel `c`.
    Additive,
    /// Scale channel `c` by `255 / b_c`.
    Multiplicative,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BalanceParams {
    pub block: usize,
    pub stride: usize,
    /// Largest gray variance for a block to count as background.
    pub max_variance: f64,
    pub mode: BalanceMode,
}

impl Default for BalanceParams {
    fn default() -> Self {
        BalanceParams {
            block: 64,
            stride: 32,
            max_variance: 16.0,
            mode: BalanceMode::Additive,
        }
    }
}

/// The background reference found by [`find_background`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BackgroundBlock {
    pub x: usize,
    pub y: usize,
    pub size: usize,
    /// Per-channel median of the block.
    pub level: [u8; 3],
}

fn block_origins(len: usize, block: usize, stride: usize) -> Vec<usize> {
    if len <= block {
        return vec![0];
    }
    let mut v: Vec<usize> = (0..=len - block).step_by(stride).collect();
    if *v.last().unwrap() != len - block {
        v.push(len - block);
    }
    v
}

fn median(hist: &[u32; 256], count: u32) -> u8 {
    let half = count.div_ceil(2);
    let mut acc = 0;
    for (v, &n) in hist.iter().enumerate() {
        acc += n;
        if acc >= half {
            return v as u8;
        }
    }
    255
}

/// Brightest low-variance block: among blocks whose gray variance is at most
/// `max_variance`, the one with the largest sum of channel medians (first in
/// scan order on ties).
pub fn find_background(img: &Raster, params: &BalanceParams) -> Result<BackgroundBlock> {
    if params.block == 0 || params.stride == 0 {
        return Err(Error::param("balance block and stride must be positive"));
    }
    let (w, h) = (img.width(), img.height());
    let size = params.block.min(w).min(h);
    let gray = to_gray(img);
    // integral images of gray and gray²
    let iw = w + 1;
    let mut s1 = vec![0u64; iw * (h + 1)];
    let mut s2 = vec![0u64; iw * (h + 1)];
    for y in 0..h {
        let (mut r1, mut r2) = (0u64, 0u64);
        for x in 0..w {
            let g = gray.get(x, y) as u64;
            r1 += g;
            r2 += g * g;
            s1[(y + 1) * iw + x + 1] = s1[y * iw + x + 1] + r1;
            s2[(y + 1) * iw + x + 1] = s2[y * iw + x + 1] + r2;
        }
    }
    let rect = |s: &[u64], x: usize, y: usize| {
        s[(y + size) * iw + x + size] + s[y * iw + x] - s[y * iw + x + size] - s[(y + size) * iw + x]
    };
    let n = (size * size) as f64;
    let xs = block_origins(w, size, params.stride);
    let ys = block_origins(h, size, params.stride);
    let candidates: Vec<(usize, usize)> = ys
        .iter()
        .flat_map(|&y| xs.iter().map(move |&x| (x, y)))
        .filter(|&(x, y)| {
            let m = rect(&s1, x, y) as f64 / n;
            rect(&s2, x, y) as f64 / n - m * m <= params.max_variance
        })
        .collect();
    let scored: Vec<(usize, [u8; 3])> = candidates
        .par_iter()
        .enumerate()
        .map(|(i, &(x, y))| {
            let mut hist = [[0u32; 256]; 3];
            for yy in y..y + size {
                for p in img.row(yy)[3 * x..3 * (x + size)].chunks_exact(3) {
                    for c in 0..3 {
                        hist[c][p[c] as usize] += 1;
                    }
                }
            }
            let count = (size * size) as u32;
            (i, [median(&hist[0], count), median(&hist[1], count), median(&hist[2], count)])
        })
        .collect();
    let best = scored
        .iter()
        .max_by_key(|(i, l)| (l.iter().map(|&v| v as u32).sum::<u32>(), std::cmp::Reverse(*i)))
        .ok_or_else(|| {
            Error::Balance(format!(
                "no {size}x{size} block has gray variance <= {}; raise the variance threshold",
                params.max_variance
            ))
        })?;
    let (x, y) = candidates[best.0];
    Ok(BackgroundBlock {
        x,
        y,
        size,
        level: best.1,
    })
}

/// Map the background reference to white.
///
/// The reference level is the per-channel median of the brightest flat
/// block, so a balanced image has a reference at exactly 255 and balancing
/// it again changes nothing.
pub fn white_balance(img: &Raster, params: &BalanceParams) -> Result<Raster> {
    let bg = find_background(img, params)?;
    let lut: [[u8; 256]; 3] = std::array::from_fn(|c| {
        let b = bg.level[c] as f64;
        std::array::from_fn(|v| match params.mode {
            BalanceMode::Additive => round_u8(v as f64 + 255.0 - b),
            BalanceMode::Multiplicative if b > 0.0 => round_u8(v as f64 * 255.0 / b),
            BalanceMode::Multiplicative => v as u8,
        })
    });
    let mut out = img.clone();
    out.data_mut().par_chunks_mut(3 * 1024).for_each(|chunk| {
        for p in chunk.chunks_exact_mut(3) {
            for c in 0..3 {
                p[c] = lut[c][p[c] as usize];
            }
        }
    });
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params() -> BalanceParams {
        BalanceParams::default()
    }

    fn slide_with_core(bg: [u8; 3], core: [u8; 3]) -> Raster {
        Raster::from_fn(256, 192, 1.0, |x, y| {
            let (dx, dy) = (x as f64 - 100.0, y as f64 - 90.0);
            if dx * dx + dy * dy < 50.0 * 50.0 {
                core
            } else {
                bg
            }
        })
        .unwrap()
    }

    #[test]
    fn white_background_unchanged() {
        let img = slide_with_core([255, 255, 255], [170, 120, 90]);
        assert_eq!(white_balance(&img, &params()).unwrap(), img);
    }

    #[test]
    fn uniform_gray_becomes_white() {
        let img = Raster::filled(100, 80, 1.0, [200, 200, 200]).unwrap();
        let out = white_balance(&img, &params()).unwrap();
        assert!(out.data().iter().all(|&v| v == 255));
    }

    #[test]
    fn synthetic_background_offsets() {
        let img = slide_with_core([245, 243, 240], [180, 165, 200]);
        let out = white_balance(&img, &params()).unwrap();
        assert_eq!(out.pixel(0, 0), [255, 255, 255]);
        assert_eq!(out.pixel(100, 90), [190, 177, 215]);
    }

    #[test]
    fn multiplicative_mode() {
        let img = slide_with_core([250, 200, 100], [125, 100, 50]);
        let p = BalanceParams {
            mode: BalanceMode::Multiplicative,
            ..params()
        };
        let out = white_balance(&img, &p).unwrap();
        assert_eq!(out.pixel(0, 0), [255, 255, 255]);
        assert_eq!(out.pixel(100, 90), [128, 128, 128]);
    }

    #[test]
    fn textured_image_has_no_background() {
        let img = Raster::from_fn(128, 128, 1.0, |x, y| {
            let v = if (x / 2 + y / 2) % 2 == 0 { 20 } else { 230 };
            [v, v, v]
        })
        .unwrap();
        assert!(matches!(white_balance(&img, &params()), Err(Error::Balance(_))));
    }

    #[test]
    fn idempotent_with_noisy_background() {
        let img = Raster::from_fn(300, 200, 1.0, |x, y| {
            let n = ((x * 7 + y * 13) % 5) as u8;
            if (x as i64 - 150).pow(2) + (y as i64 - 100).pow(2) < 60 * 60 {
                [170 + n, 130, 100]
            } else {
                [240 + n, 238 + n, 233 + n]
            }
        })
        .unwrap();
        for mode in [BalanceMode::Additive, BalanceMode::Multiplicative] {
            let p = BalanceParams { mode, ..params() };
            let once = white_balance(&img, &p).unwrap();
            assert_eq!(white_balance(&once, &p).unwrap(), once);
        }
    }

    #[test]
    fn tie_breaks_to_first_block() {
        let img = Raster::filled(128, 64, 1.0, [250, 250, 250]).unwrap();
        let bg = find_background(&img, &params()).unwrap();
        assert_eq!((bg.x, bg.y), (0, 0));
    }

    #[test]
    fn origins_cover_the_far_edge() {
        assert_eq!(block_origins(100, 64, 32), vec![0, 32, 36]);
        assert_eq!(block_origins(40, 64, 32), vec![0]);
        assert_eq!(block_origins(128, 64, 32), vec![0, 32, 64]);
    }
}
