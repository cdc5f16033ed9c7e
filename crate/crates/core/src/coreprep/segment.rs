use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::{to_gray, GrayRaster, Raster};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SegmentParams {
    /// Expected core diameter in mosaic pixels.
    pub core_diameter_px: f64,
    /// Smallest kept component, as a fraction of the expected core area.
    pub min_area_fraction: f64,
}

impl Default for SegmentParams {
    fn default() -> Self {
        SegmentParams {
            core_diameter_px: 300.0 / 0.56,
            min_area_fraction: 0.25,
        }
    }
}

/// Bounding box of a tissue component; `x1`, `y1` are exclusive.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoreBox {
    pub x0: usize,
    pub y0: usize,
    pub x1: usize,
    pub y1: usize,
    pub area: u64,
    /// Pixel-coordinate sums over the component (centroid = sum / area).
    pub sum_x: u64,
    pub sum_y: u64,
}

impl CoreBox {
    pub fn width(&self) -> usize {
        self.x1 - self.x0
    }

    pub fn height(&self) -> usize {
        self.y1 - self.y0
    }

    /// Centroid of the component's pixel centres.
    pub fn centroid(&self) -> (f64, f64) {
        (
            self.sum_x as f64 / self.area as f64 + 0.5,
            self.sum_y as f64 / self.area as f64 + 0.5,
        )
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.x0 as f64 && x < self.x1 as f64 && y >= self.y0 as f64 && y < self.y1 as f64
    }

    /// The same box moved by `(dx, dy)` pixels.
    pub fn translated(&self, dx: usize, dy: usize) -> CoreBox {
        CoreBox {
            x0: self.x0 + dx,
            y0: self.y0 + dy,
            x1: self.x1 + dx,
            y1: self.y1 + dy,
            area: self.area,
            sum_x: self.sum_x + dx as u64 * self.area,
            sum_y: self.sum_y + dy as u64 * self.area,
        }
    }
}

/// Otsu's threshold: the level `t` maximizing between-class variance when
/// the classes are `<= t` and `> t`.
pub fn otsu_level(gray: &GrayRaster) -> u8 {
    let mut hist = [0u64; 256];
    for &v in gray.data() {
        hist[v as usize] += 1;
    }
    let total: u64 = hist.iter().sum();
    let sum_all: u64 = hist.iter().enumerate().map(|(v, &n)| v as u64 * n).sum();
    let (mut w0, mut sum0) = (0u64, 0u64);
    let mut best = (0u8, -1.0f64);
    for t in 0..256usize {
        w0 += hist[t];
        sum0 += t as u64 * hist[t];
        let w1 = total - w0;
        if w0 == 0 || w1 == 0 {
            continue;
        }
        let m0 = sum0 as f64 / w0 as f64;
        let m1 = (sum_all - sum0) as f64 / w1 as f64;
        let between = w0 as f64 * w1 as f64 * (m0 - m1) * (m0 - m1);
        if between > best.1 {
            best = (t as u8, between);
        }
    }
    if best.1 < 0.0 {
        // a single gray level: everything falls in the lower class
        gray.data().first().copied().unwrap_or(0)
    } else {
        best.0
    }
}

/// Box-blur a binary mask with a `(2r+1)²` window and keep pixels whose
/// local tissue fraction is at least one half. Out-of-image samples are
/// excluded from the average.
fn smooth_mask(mask: &[bool], w: usize, h: usize, r: usize) -> Vec<bool> {
    let iw = w + 1;
    let mut s = vec![0u32; iw * (h + 1)];
    for y in 0..h {
        let mut row = 0u32;
        for x in 0..w {
            row += mask[y * w + x] as u32;
            s[(y + 1) * iw + x + 1] = s[y * iw + x + 1] + row;
        }
    }
    (0..w * h)
        .map(|i| {
            let (x, y) = (i % w, i / w);
            let (x0, y0) = (x.saturating_sub(r), y.saturating_sub(r));
            let (x1, y1) = ((x + r + 1).min(w), (y + r + 1).min(h));
            let on = s[y1 * iw + x1] + s[y0 * iw + x0] - s[y0 * iw + x1] - s[y1 * iw + x0];
            let n = ((x1 - x0) * (y1 - y0)) as u32;
            2 * on >= n
        })
        .collect()
}

struct Component {
    bbox: CoreBox,
    touches_border: bool,
}

fn components(mask: &[bool], w: usize, h: usize) -> Vec<Component> {
    let mut seen = vec![false; w * h];
    let mut out = Vec::new();
    let mut stack = Vec::new();
    for start in 0..w * h {
        if !mask[start] || seen[start] {
            continue;
        }
        seen[start] = true;
        stack.push(start);
        let (sx, sy) = (start % w, start / w);
        let mut b = CoreBox {
            x0: sx,
            y0: sy,
            x1: sx + 1,
            y1: sy + 1,
            area: 0,
            sum_x: 0,
            sum_y: 0,
        };
        let mut touches = false;
        while let Some(i) = stack.pop() {
            let (x, y) = (i % w, i / w);
            b.x0 = b.x0.min(x);
            b.y0 = b.y0.min(y);
            b.x1 = b.x1.max(x + 1);
            b.y1 = b.y1.max(y + 1);
            b.area += 1;
            b.sum_x += x as u64;
            b.sum_y += y as u64;
            touches |= x == 0 || y == 0 || x + 1 == w || y + 1 == h;
            for dy in -1i64..=1 {
                for dx in -1i64..=1 {
                    let (nx, ny) = (x as i64 + dx, y as i64 + dy);
                    if nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64 {
                        continue;
                    }
                    let j = ny as usize * w + nx as usize;
                    if mask[j] && !seen[j] {
                        seen[j] = true;
                        stack.push(j);
                    }
                }
            }
        }
        out.push(Component {
            bbox: b,
            touches_border: touches,
        });
    }
    out
}

/// Find tissue cores: Otsu threshold (tissue darker than background), mask
/// smoothing, border clearing and an area filter. Boxes come back in scan
/// order of their first pixel.
pub fn segment_cores(balanced: &Raster, params: &SegmentParams) -> Result<Vec<CoreBox>> {
    if !(params.core_diameter_px > 0.0) {
        return Err(Error::param("core diameter must be positive"));
    }
    let gray = to_gray(balanced);
    let level = otsu_level(&gray);
    let (w, h) = (gray.width(), gray.height());
    let mask: Vec<bool> = gray.data().iter().map(|&v| v <= level).collect();
    let r = (params.core_diameter_px / 20.0).ceil() as usize;
    let mask = smooth_mask(&mask, w, h, r);
    let min_area =
        params.min_area_fraction * std::f64::consts::PI * (params.core_diameter_px / 2.0).powi(2);
    let all = components(&mask, w, h);
    let found = all.len();
    let boxes: Vec<CoreBox> = all
        .into_iter()
        .filter(|c| !c.touches_border && c.bbox.area as f64 >= min_area)
        .map(|c| c.bbox)
        .collect();
    if boxes.is_empty() {
        return Err(Error::Segmentation {
            otsu_level: level,
            message: format!(
                "{found} components, none inside the border with area >= {min_area:.0} px"
            ),
        });
    }
    Ok(boxes)
}
