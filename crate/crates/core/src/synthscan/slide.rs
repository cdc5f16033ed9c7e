//! Synthetic stained tissue-microarray slides with known layout and scores.
//!
//! Each core is a disk of counterstained tissue carrying brown stain blobs.
//! Higher scores get more brown area and more clustered blobs. The background
//! is near-white glass with a faint low-frequency mottle so that frames over
//! empty glass are not perfectly featureless.

use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::{round_u8, Raster};

/// Counterstained tissue without stain.
pub const TISSUE_BASE: [f64; 3] = [180.0, 165.0, 200.0];
/// Fully stained (brown) tissue.
pub const STAIN_BROWN: [f64; 3] = [175.0, 120.0, 70.0];
pub const DEFAULT_BACKGROUND: [u8; 3] = [245, 243, 240];

/// Largest raster the generator will allocate, in pixels.
const MAX_PIXELS: f64 = 4.0e8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassAppearance {
    /// Fraction of the core area that should read as brown.
    pub brown_fraction: f64,
    /// Inclusive bounds on the number of blobs.
    pub blob_count: (usize, usize),
    /// Blob radius bounds in µm.
    pub blob_radius_um: (f64, f64),
    /// Spread of blob centres around their cluster centre, as a fraction of
    /// the core radius. Small values give patchy, heterogeneous staining.
    pub cluster_spread: f64,
}

pub fn default_appearance() -> [ClassAppearance; 4] {
    [
        ClassAppearance {
            brown_fraction: 0.03,
            blob_count: (3, 400),
            blob_radius_um: (1.5, 3.0),
            cluster_spread: 1.0,
        },
        ClassAppearance {
            brown_fraction: 0.13,
            blob_count: (6, 600),
            blob_radius_um: (2.5, 5.0),
            cluster_spread: 0.8,
        },
        ClassAppearance {
            brown_fraction: 0.27,
            blob_count: (8, 800),
            blob_radius_um: (4.0, 9.0),
            cluster_spread: 0.5,
        },
        ClassAppearance {
            brown_fraction: 0.45,
            blob_count: (8, 1000),
            blob_radius_um: (6.0, 14.0),
            cluster_spread: 0.35,
        },
    ]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SlideSpec {
    pub grid_rows: usize,
    pub grid_cols: usize,
    pub core_diameter_um: f64,
    pub core_pitch_um: f64,
    pub margin_um: f64,
    pub scale_um_per_px: f64,
    /// Fixed slide extent (width, height) in µm; the grid is centred in it.
    /// When absent the extent is the grid plus `margin_um` on every side.
    #[serde(default)]
    pub extent_um: Option<(f64, f64)>,
    /// Row-major scores, `None` for an empty cell.
    pub cells: Vec<Option<u8>>,
    pub appearance: [ClassAppearance; 4],
    pub background: [u8; 3],
    /// Peak amplitude of the background mottle in gray levels.
    pub background_texture: f64,
    pub seed: u64,
}

impl SlideSpec {
    /// Default-appearance slide with the given grid and scores.
    pub fn new(grid_rows: usize, grid_cols: usize, cells: Vec<Option<u8>>) -> Self {
        SlideSpec {
            grid_rows,
            grid_cols,
            core_diameter_um: 300.0,
            core_pitch_um: 420.0,
            margin_um: 150.0,
            scale_um_per_px: 0.56,
            extent_um: None,
            cells,
            appearance: default_appearance(),
            background: DEFAULT_BACKGROUND,
            background_texture: 3.0,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.grid_rows == 0 || self.grid_cols == 0 {
            return Err(Error::param("grid must have at least one row and column"));
        }
        if self.cells.len() != self.grid_rows * self.grid_cols {
            return Err(Error::param(format!(
                "{} cell assignments for a {}x{} grid",
                self.cells.len(),
                self.grid_rows,
                self.grid_cols
            )));
        }
        if !(self.core_diameter_um > 0.0 && self.core_pitch_um > self.core_diameter_um) {
            return Err(Error::param(format!(
                "need pitch > diameter > 0, got pitch {} diameter {}",
                self.core_pitch_um, self.core_diameter_um
            )));
        }
        if !(self.scale_um_per_px > 0.0) || self.margin_um < 0.0 {
            return Err(Error::param("scale must be > 0 and margin >= 0"));
        }
        if let Some(s) = self.cells.iter().flatten().find(|&&s| s > 3) {
            return Err(Error::param(format!("score {s} outside 0..=3")));
        }
        if self
            .appearance
            .windows(2)
            .any(|w| w[1].brown_fraction <= w[0].brown_fraction)
        {
            return Err(Error::param("brown fractions must strictly increase with score"));
        }
        for a in &self.appearance {
            if !(0.0..1.0).contains(&a.brown_fraction)
                || a.blob_count.0 > a.blob_count.1
                || !(a.blob_radius_um.0 > 0.0 && a.blob_radius_um.0 <= a.blob_radius_um.1)
                || !(a.cluster_spread > 0.0)
            {
                return Err(Error::param(format!("invalid class appearance {a:?}")));
            }
        }
        Ok(())
    }

    pub fn grid_extent_um(&self) -> (f64, f64) {
        (
            (self.grid_cols - 1) as f64 * self.core_pitch_um + self.core_diameter_um,
            (self.grid_rows - 1) as f64 * self.core_pitch_um + self.core_diameter_um,
        )
    }

    pub fn extent(&self) -> (f64, f64) {
        let (gw, gh) = self.grid_extent_um();
        self.extent_um
            .unwrap_or((gw + 2.0 * self.margin_um, gh + 2.0 * self.margin_um))
    }

    pub fn cell(&self, row: usize, col: usize) -> Option<u8> {
        self.cells[row * self.grid_cols + col]
    }

    /// Centre of the core at (row, col) in µm.
    pub fn core_center_um(&self, row: usize, col: usize) -> (f64, f64) {
        let (w, h) = self.extent();
        let (gw, gh) = self.grid_extent_um();
        let r = self.core_diameter_um / 2.0;
        (
            (w - gw) / 2.0 + r + col as f64 * self.core_pitch_um,
            (h - gh) / 2.0 + r + row as f64 * self.core_pitch_um,
        )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoreTruth {
    pub row: usize,
    pub col: usize,
    pub center_x_um: f64,
    pub center_y_um: f64,
    pub diameter_um: f64,
    pub score: u8,
}

#[derive(Clone, Debug)]
pub struct SlideTruth {
    pub image: Raster,
    pub layout: Vec<CoreTruth>,
    pub background: [u8; 3],
    pub grid_rows: usize,
    pub grid_cols: usize,
}

impl SlideTruth {
    pub fn write_layout_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = csv::Writer::from_writer(std::io::BufWriter::new(file));
        for core in &self.layout {
            w.serialize(core).map_err(|e| Error::io(path, e.into()))?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    }
}

/// Smooth lattice noise in [-1, 1] with the given cell size in pixels.
struct ValueNoise {
    cell: f64,
    cols: usize,
    values: Vec<f32>,
}

impl ValueNoise {
    fn new(width: usize, height: usize, cell: f64, rng: &mut ChaCha8Rng) -> Self {
        let cell = cell.max(1.0);
        let cols = (width as f64 / cell).ceil() as usize + 2;
        let rows = (height as f64 / cell).ceil() as usize + 2;
        let values = (0..cols * rows).map(|_| rng.gen_range(-1.0f32..=1.0)).collect();
        ValueNoise { cell, cols, values }
    }

    fn at(&self, x: f64, y: f64) -> f32 {
        let gx = x / self.cell;
        let gy = y / self.cell;
        let (ix, iy) = (gx.floor() as usize, gy.floor() as usize);
        let fade = |t: f64| (t * t * (3.0 - 2.0 * t)) as f32;
        let (tx, ty) = (fade(gx - ix as f64), fade(gy - iy as f64));
        let v = |cx: usize, cy: usize| self.values[cy * self.cols + cx];
        let top = v(ix, iy) * (1.0 - tx) + v(ix + 1, iy) * tx;
        let bottom = v(ix, iy + 1) * (1.0 - tx) + v(ix + 1, iy + 1) * tx;
        top * (1.0 - ty) + bottom * ty
    }
}

struct Blob {
    x: f64,
    y: f64,
    r: f64,
}

#[inline]
fn blob_weight(d: f64, r: f64) -> f64 {
    // full inside 0.75 r, fading to zero at 1.25 r
    let t = ((1.25 * r - d) / (0.5 * r)).clamp(0.0, 1.0);
    t * t * (3.0 - 2.0 * t)
}

/// Stain density over the core's bounding box, grown blob by blob until the
/// brown-reading area reaches the class target.
fn stain_density(
    appearance: &ClassAppearance,
    radius_px: f64,
    scale: f64,
    rng: &mut ChaCha8Rng,
) -> (usize, Vec<f32>) {
    let side = (2.0 * radius_px).ceil() as usize + 3;
    let c = side as f64 / 2.0;
    let mut density = vec![0f32; side * side];
    let inside: Vec<bool> = (0..side * side)
        .map(|i| {
            let (x, y) = ((i % side) as f64 + 0.5 - c, (i / side) as f64 + 0.5 - c);
            (x * x + y * y).sqrt() <= radius_px - 1.0
        })
        .collect();
    let disk_area = inside.iter().filter(|&&b| b).count().max(1);
    let target = (appearance.brown_fraction * disk_area as f64).round() as usize;
    // a pixel reads brown once the stain density passes roughly one half
    const BROWN_LEVEL: f32 = 0.5;
    let mut brown = 0usize;

    let clusters: Vec<(f64, f64)> = (0..3)
        .map(|_| {
            let a = rng.gen_range(0.0..std::f64::consts::TAU);
            let d = radius_px * 0.55 * rng.gen_range(0.0f64..1.0).sqrt();
            (c + d * a.cos(), c + d * a.sin())
        })
        .collect();

    let (min_blobs, max_blobs) = appearance.blob_count;
    let mut placed = 0usize;
    while placed < max_blobs && (placed < min_blobs || brown < target) {
        let (cx, cy) = clusters[rng.gen_range(0..clusters.len())];
        let spread = appearance.cluster_spread * radius_px;
        let blob = Blob {
            x: cx + spread * gaussian(rng),
            y: cy + spread * gaussian(rng),
            r: rng.gen_range(appearance.blob_radius_um.0..=appearance.blob_radius_um.1) / scale,
        };
        let reach = 1.25 * blob.r + 1.0;
        let x0 = (blob.x - reach).floor().max(0.0) as usize;
        let y0 = (blob.y - reach).floor().max(0.0) as usize;
        let x1 = ((blob.x + reach).ceil() as usize).min(side);
        let y1 = ((blob.y + reach).ceil() as usize).min(side);
        for y in y0..y1 {
            for x in x0..x1 {
                let (dx, dy) = (x as f64 + 0.5 - blob.x, y as f64 + 0.5 - blob.y);
                let wgt = blob_weight((dx * dx + dy * dy).sqrt(), blob.r) as f32;
                if wgt <= 0.0 {
                    continue;
                }
                let i = y * side + x;
                let before = density[i];
                let after = (before + wgt).min(1.0);
                density[i] = after;
                if inside[i] && before < BROWN_LEVEL && after >= BROWN_LEVEL {
                    brown += 1;
                }
            }
        }
        placed += 1;
    }
    (side, density)
}

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    // Box-Muller
    let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
    let u2: f64 = rng.gen_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Separable [1 4 6 4 1]/16 smoothing, standing in for the optical PSF.
fn smooth(buf: &mut [f32], width: usize, height: usize) {
    const K: [f32; 5] = [1.0 / 16.0, 4.0 / 16.0, 6.0 / 16.0, 4.0 / 16.0, 1.0 / 16.0];
    let mut tmp = vec![0f32; buf.len()];
    for y in 0..height {
        let row = &buf[y * width * 3..(y + 1) * width * 3];
        let out = &mut tmp[y * width * 3..(y + 1) * width * 3];
        for x in 0..width {
            for c in 0..3 {
                let mut acc = 0.0;
                for (k, w) in K.iter().enumerate() {
                    let sx = (x as i64 + k as i64 - 2).clamp(0, width as i64 - 1) as usize;
                    acc += w * row[sx * 3 + c];
                }
                out[x * 3 + c] = acc;
            }
        }
    }
    for y in 0..height {
        for x in 0..width {
            for c in 0..3 {
                let mut acc = 0.0;
                for (k, w) in K.iter().enumerate() {
                    let sy = (y as i64 + k as i64 - 2).clamp(0, height as i64 - 1) as usize;
                    acc += w * tmp[(sy * width + x) * 3 + c];
                }
                buf[(y * width + x) * 3 + c] = acc;
            }
        }
    }
}

/// Generate the slide image and its ground-truth layout. Deterministic in
/// `spec.seed`.
pub fn synth_slide(spec: &SlideSpec) -> Result<SlideTruth> {
    spec.validate()?;
    let (ew, eh) = spec.extent();
    let (gw, gh) = spec.grid_extent_um();
    if gw > ew + 1e-9 || gh > eh + 1e-9 {
        return Err(Error::param(format!(
            "{}x{} grid needs {gw:.0}x{gh:.0} µm, slide extent is {ew:.0}x{eh:.0} µm",
            spec.grid_rows, spec.grid_cols
        )));
    }
    let scale = spec.scale_um_per_px;
    let width = (ew / scale).round() as usize;
    let height = (eh / scale).round() as usize;
    if (width as f64) * (height as f64) > MAX_PIXELS {
        return Err(Error::param(format!(
            "slide of {width}x{height} px exceeds the {MAX_PIXELS:.0} px budget"
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mottle = ValueNoise::new(width, height, 60.0 / scale, &mut rng);
    let grain = ValueNoise::new(width, height, 8.0 / scale, &mut rng);

    let bg = spec.background.map(|v| v as f32);
    let amp = spec.background_texture as f32;
    let mut buf = vec![0f32; width * height * 3];
    for y in 0..height {
        for x in 0..width {
            let m = amp * mottle.at(x as f64, y as f64);
            let i = (y * width + x) * 3;
            for c in 0..3 {
                buf[i + c] = bg[c] + m;
            }
        }
    }

    let radius_px = spec.core_diameter_um / 2.0 / scale;
    let mut layout = Vec::new();
    for row in 0..spec.grid_rows {
        for col in 0..spec.grid_cols {
            let Some(score) = spec.cell(row, col) else {
                continue;
            };
            let (cx_um, cy_um) = spec.core_center_um(row, col);
            layout.push(CoreTruth {
                row,
                col,
                center_x_um: cx_um,
                center_y_um: cy_um,
                diameter_um: spec.core_diameter_um,
                score,
            });
            let mut core_rng =
                ChaCha8Rng::seed_from_u64(spec.seed ^ ((row as u64) << 32 | col as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
            let (side, density) =
                stain_density(&spec.appearance[score as usize], radius_px, scale, &mut core_rng);
            let (cx, cy) = (cx_um / scale, cy_um / scale);
            let ox = (cx - side as f64 / 2.0).round() as i64;
            let oy = (cy - side as f64 / 2.0).round() as i64;
            for j in 0..side {
                for i in 0..side {
                    let (x, y) = (ox + i as i64, oy + j as i64);
                    if x < 0 || y < 0 || x >= width as i64 || y >= height as i64 {
                        continue;
                    }
                    let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
                    let dist = ((px - cx).powi(2) + (py - cy).powi(2)).sqrt();
                    let alpha = (radius_px - dist + 0.5).clamp(0.0, 1.0) as f32;
                    if alpha <= 0.0 {
                        continue;
                    }
                    let d = density[j * side + i];
                    let tex = 6.0 * grain.at(x as f64, y as f64);
                    let k = (y as usize * width + x as usize) * 3;
                    for c in 0..3 {
                        let tissue = TISSUE_BASE[c] as f32 * (1.0 - d) + STAIN_BROWN[c] as f32 * d + tex;
                        buf[k + c] = buf[k + c] * (1.0 - alpha) + tissue * alpha;
                    }
                }
            }
        }
    }

    smooth(&mut buf, width, height);
    let data = buf.iter().map(|&v| round_u8(v as f64)).collect();
    Ok(SlideTruth {
        image: Raster::new(width, height, scale, data)?,
        layout,
        background: spec.background,
        grid_rows: spec.grid_rows,
        grid_cols: spec.grid_cols,
    })
}

/// Write the layout of `truth` as the `row,col,score` label map.
pub fn write_label_map_csv(truth: &SlideTruth, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = Vec::new();
    writeln!(out, "row,col,score").expect("vec write");
    for c in &truth.layout {
        writeln!(out, "{},{},{}", c.row, c.col, c.score).expect("vec write");
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}
