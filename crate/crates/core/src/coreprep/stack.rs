use std::io::{Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::grid::CoreRecord;
use crate::error::{Error, Result};
use crate::imaging::Raster;

pub const PATCH_SIZE: usize = 512;
pub const PATCH_COUNT: usize = 5;
const PATCH_BYTES: usize = PATCH_SIZE * PATCH_SIZE * 3;

/// Five 512×512 RGB patches: the whole core resampled, then four random
/// full-resolution crops.
#[derive(Clone, Debug, PartialEq)]
pub struct PatchStack {
    pub core_id: String,
    pub repeat: usize,
    pub crop_seed: u64,
    /// Top-left corner of each random crop in the padded core image.
    pub crop_offsets: [(usize, usize); 4],
    pub patches: Vec<Raster>,
}

/// Sidecar written next to a stack's raw bytes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StackHeader {
    pub core_id: String,
    pub repeat: usize,
    pub crop_seed: u64,
    pub crop_offsets: [(usize, usize); 4],
    pub patches: usize,
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    /// Scale of the random crops (the mosaic scale).
    pub scale_um_per_px: f64,
    /// Scale of the whole-core downsample in patch 0.
    pub downsample_scale_um_per_px: f64,
}

/// Bilinear resample to `w`×`h`, aligning pixel centres.
pub fn resample_bilinear(img: &Raster, w: usize, h: usize) -> Raster {
    let sx = img.width() as f64 / w as f64;
    let sy = img.height() as f64 / h as f64;
    let (iw, ih) = (img.width() as i64, img.height() as i64);
    let mut data = Vec::with_capacity(w * h * 3);
    for y in 0..h {
        let fy = ((y as f64 + 0.5) * sy - 0.5).clamp(0.0, (ih - 1) as f64);
        let y0 = fy.floor() as i64;
        let y1 = (y0 + 1).min(ih - 1);
        let ty = fy - y0 as f64;
        for x in 0..w {
            let fx = ((x as f64 + 0.5) * sx - 0.5).clamp(0.0, (iw - 1) as f64);
            let x0 = fx.floor() as i64;
            let x1 = (x0 + 1).min(iw - 1);
            let tx = fx - x0 as f64;
            let (a, b) = (img.pixel(x0 as usize, y0 as usize), img.pixel(x1 as usize, y0 as usize));
            let (c, d) = (img.pixel(x0 as usize, y1 as usize), img.pixel(x1 as usize, y1 as usize));
            for ch in 0..3 {
                let top = a[ch] as f64 * (1.0 - tx) + b[ch] as f64 * tx;
                let bot = c[ch] as f64 * (1.0 - tx) + d[ch] as f64 * tx;
                data.push(crate::imaging::round_u8(top * (1.0 - ty) + bot * ty));
            }
        }
    }
    Raster::new(w, h, img.scale() * sx.max(sy), data).expect("sized buffer")
}

/// Centre `img` on a canvas of at least `min`×`min`, extending edges by
/// replication.
pub fn pad_replicate(img: &Raster, min: usize) -> Raster {
    let (w, h) = (img.width().max(min), img.height().max(min));
    if (w, h) == (img.width(), img.height()) {
        return img.clone();
    }
    let left = ((w - img.width()) / 2) as i64;
    let top = ((h - img.height()) / 2) as i64;
    let (iw, ih) = (img.width() as i64, img.height() as i64);
    Raster::from_fn(w, h, img.scale(), |x, y| {
        let sx = (x as i64 - left).clamp(0, iw - 1) as usize;
        let sy = (y as i64 - top).clamp(0, ih - 1) as usize;
        img.pixel(sx, sy)
    })
    .expect("sized buffer")
}

/// Build the classification stack of one core. Crops are reproducible for a
/// given `crop_seed`.
pub fn build_stack(core: &CoreRecord, crop_seed: u64) -> PatchStack {
    let img = &core.image;
    let mut patches = Vec::with_capacity(PATCH_COUNT);
    patches.push(resample_bilinear(img, PATCH_SIZE, PATCH_SIZE));
    let padded = pad_replicate(img, PATCH_SIZE);
    let mut rng = ChaCha8Rng::seed_from_u64(crop_seed);
    let mut crop_offsets = [(0, 0); 4];
    for slot in crop_offsets.iter_mut() {
        let x = rng.gen_range(0..=padded.width() - PATCH_SIZE);
        let y = rng.gen_range(0..=padded.height() - PATCH_SIZE);
        *slot = (x, y);
        patches.push(padded.crop(x, y, PATCH_SIZE, PATCH_SIZE).expect("crop inside padding"));
    }
    PatchStack {
        core_id: core.id.clone(),
        repeat: core.repeat,
        crop_seed,
        crop_offsets,
        patches,
    }
}

impl PatchStack {
    fn header(&self) -> StackHeader {
        StackHeader {
            core_id: self.core_id.clone(),
            repeat: self.repeat,
            crop_seed: self.crop_seed,
            crop_offsets: self.crop_offsets,
            patches: PATCH_COUNT,
            width: PATCH_SIZE,
            height: PATCH_SIZE,
            channels: 3,
            scale_um_per_px: self.patches[1].scale(),
            downsample_scale_um_per_px: self.patches[0].scale(),
        }
    }

    /// Write `<path>` (raw 5×512×512×3 bytes) and `<path>.json`.
    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut f = std::io::BufWriter::new(std::fs::File::create(path).map_err(|e| Error::io(path, e))?);
        for p in &self.patches {
            f.write_all(p.data()).map_err(|e| Error::io(path, e))?;
        }
        f.flush().map_err(|e| Error::io(path, e))?;
        let side = sidecar(path);
        let json = serde_json::to_vec_pretty(&self.header()).expect("header serializes");
        std::fs::write(&side, json).map_err(|e| Error::io(&side, e))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<PatchStack> {
        let path = path.as_ref();
        let side = sidecar(path);
        let text = std::fs::read(&side).map_err(|e| Error::io(&side, e))?;
        let h: StackHeader = serde_json::from_slice(&text)
            .map_err(|e| Error::format(&side, 0, e.to_string()))?;
        if (h.patches, h.width, h.height, h.channels) != (PATCH_COUNT, PATCH_SIZE, PATCH_SIZE, 3) {
            return Err(Error::format(&side, 0, "stack must be 5x512x512x3"));
        }
        let mut bytes = Vec::with_capacity(PATCH_COUNT * PATCH_BYTES);
        std::fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(|e| Error::io(path, e))?;
        if bytes.len() != PATCH_COUNT * PATCH_BYTES {
            return Err(Error::format(
                path,
                bytes.len().min(PATCH_COUNT * PATCH_BYTES) as u64,
                format!("expected {} bytes, found {}", PATCH_COUNT * PATCH_BYTES, bytes.len()),
            ));
        }
        let patches = bytes
            .chunks_exact(PATCH_BYTES)
            .enumerate()
            .map(|(i, c)| {
                let scale = if i == 0 { h.downsample_scale_um_per_px } else { h.scale_um_per_px };
                Raster::new(PATCH_SIZE, PATCH_SIZE, scale, c.to_vec())
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(PatchStack {
            core_id: h.core_id,
            repeat: h.repeat,
            crop_seed: h.crop_seed,
            crop_offsets: h.crop_offsets,
            patches,
        })
    }
}

fn sidecar(path: &Path) -> std::path::PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    s.into()
}
