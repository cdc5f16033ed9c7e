use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Sign of the stage motion along the scan axis.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Direction {
    #[serde(rename = "+x")]
    PlusX,
    #[serde(rename = "-x")]
    MinusX,
}

impl Direction {
    pub fn sign(self) -> f64 {
        match self {
            Direction::PlusX => 1.0,
            Direction::MinusX => -1.0,
        }
    }

    pub fn flipped(self) -> Self {
        match self {
            Direction::PlusX => Direction::MinusX,
            Direction::MinusX => Direction::PlusX,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Direction::PlusX => "+x",
            Direction::MinusX => "-x",
        }
    }
}

impl std::str::FromStr for Direction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "+x" | "x" | "plus-x" | "forward" => Ok(Direction::PlusX),
            "-x" | "minus-x" | "backward" => Ok(Direction::MinusX),
            other => Err(Error::param(format!("unknown direction {other:?}"))),
        }
    }
}

impl std::fmt::Display for Direction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

fn check_dims(width: usize, height: usize, scale: f64) -> Result<()> {
    if width == 0 || height == 0 {
        return Err(Error::param(format!(
            "raster dimensions must be positive, got {width}x{height}"
        )));
    }
    if !(scale.is_finite() && scale > 0.0) {
        return Err(Error::param(format!("raster scale must be > 0, got {scale}")));
    }
    Ok(())
}

/// An 8-bit RGB image, row-major and channel-interleaved, with the physical
/// sample spacing in µm per pixel.
#[derive(Clone, Debug, PartialEq)]
pub struct Raster {
    width: usize,
    height: usize,
    scale: f64,
    data: Vec<u8>,
}

impl Raster {
    pub const CHANNELS: usize = 3;

    pub fn new(width: usize, height: usize, scale: f64, data: Vec<u8>) -> Result<Self> {
        check_dims(width, height, scale)?;
        let expected = width * height * Self::CHANNELS;
        if data.len() != expected {
            return Err(Error::param(format!(
                "raster data has {} bytes, expected {expected} for {width}x{height}x3",
                data.len()
            )));
        }
        Ok(Raster {
            width,
            height,
            scale,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, scale: f64, rgb: [u8; 3]) -> Result<Self> {
        check_dims(width, height, scale)?;
        let data = rgb.repeat(width * height);
        Ok(Raster {
            width,
            height,
            scale,
            data,
        })
    }

    pub fn from_fn(
        width: usize,
        height: usize,
        scale: f64,
        mut f: impl FnMut(usize, usize) -> [u8; 3],
    ) -> Result<Self> {
        check_dims(width, height, scale)?;
        let mut data = Vec::with_capacity(width * height * 3);
        for y in 0..height {
            for x in 0..width {
                data.extend_from_slice(&f(x, y));
            }
        }
        Ok(Raster {
            width,
            height,
            scale,
            data,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [u8] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<u8> {
        self.data
    }

    pub fn row(&self, y: usize) -> &[u8] {
        let stride = self.width * 3;
        &self.data[y * stride..(y + 1) * stride]
    }

    #[inline]
    pub fn pixel(&self, x: usize, y: usize) -> [u8; 3] {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    #[inline]
    pub fn set_pixel(&mut self, x: usize, y: usize, rgb: [u8; 3]) {
        let i = (y * self.width + x) * 3;
        self.data[i..i + 3].copy_from_slice(&rgb);
    }

    /// Width and height in µm.
    pub fn extent_um(&self) -> (f64, f64) {
        (self.width as f64 * self.scale, self.height as f64 * self.scale)
    }

    /// Integer-aligned crop; the rectangle must lie inside the raster.
    pub fn crop(&self, x: usize, y: usize, width: usize, height: usize) -> Result<Raster> {
        if width == 0 || height == 0 || x + width > self.width || y + height > self.height {
            return Err(Error::param(format!(
                "crop {width}x{height}+{x}+{y} outside {}x{} raster",
                self.width, self.height
            )));
        }
        let mut data = Vec::with_capacity(width * height * 3);
        for row in y..y + height {
            let start = (row * self.width + x) * 3;
            data.extend_from_slice(&self.data[start..start + width * 3]);
        }
        Raster::new(width, height, self.scale, data)
    }

    /// Crop at a fractional top-left position using bilinear interpolation
    /// and replicate-edge extension. Integer positions reproduce [`Raster::crop`].
    pub fn crop_bilinear(&self, x: f64, y: f64, width: usize, height: usize) -> Raster {
        let x0 = x.floor();
        let y0 = y.floor();
        let fx = (x - x0) as f32;
        let fy = (y - y0) as f32;
        let (x0, y0) = (x0 as i64, y0 as i64);
        let clamp_x = |v: i64| v.clamp(0, self.width as i64 - 1) as usize;
        let clamp_y = |v: i64| v.clamp(0, self.height as i64 - 1) as usize;
        let cols: Vec<(usize, usize)> = (0..width as i64)
            .map(|u| (clamp_x(x0 + u), clamp_x(x0 + u + 1)))
            .collect();
        let mut data = vec![0u8; width * height * 3];
        let mut row_buf = vec![0f32; width * 3];
        for (v, out_row) in data.chunks_exact_mut(width * 3).enumerate() {
            let ra = self.row(clamp_y(y0 + v as i64));
            let rb = self.row(clamp_y(y0 + v as i64 + 1));
            for (u, &(ca, cb)) in cols.iter().enumerate() {
                for c in 0..3 {
                    let top = ra[ca * 3 + c] as f32 * (1.0 - fx) + ra[cb * 3 + c] as f32 * fx;
                    let bottom = rb[ca * 3 + c] as f32 * (1.0 - fx) + rb[cb * 3 + c] as f32 * fx;
                    row_buf[u * 3 + c] = top * (1.0 - fy) + bottom * fy;
                }
            }
            for (o, &val) in out_row.iter_mut().zip(row_buf.iter()) {
                *o = round_u8(val as f64);
            }
        }
        Raster {
            width,
            height,
            scale: self.scale,
            data,
        }
    }

    /// Left-right mirror image.
    pub fn mirror_x(&self) -> Raster {
        let mut out = self.clone();
        for y in 0..self.height {
            for x in 0..self.width {
                out.set_pixel(self.width - 1 - x, y, self.pixel(x, y));
            }
        }
        out
    }
}

/// Round-half-up to the nearest 8-bit level, clamping to [0, 255].
#[inline]
pub fn round_u8(v: f64) -> u8 {
    (v + 0.5).floor().clamp(0.0, 255.0) as u8
}

/// Single-channel 8-bit image.
#[derive(Clone, Debug, PartialEq)]
pub struct GrayRaster {
    width: usize,
    height: usize,
    scale: f64,
    data: Vec<u8>,
}

impl GrayRaster {
    pub fn new(width: usize, height: usize, scale: f64, data: Vec<u8>) -> Result<Self> {
        check_dims(width, height, scale)?;
        if data.len() != width * height {
            return Err(Error::param(format!(
                "gray raster data has {} bytes, expected {}",
                data.len(),
                width * height
            )));
        }
        Ok(GrayRaster {
            width,
            height,
            scale,
            data,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.data[y * self.width + x]
    }
}

/// Rec.601 luminance scaled by 1000, exact in integers.
#[inline]
pub fn luma_milli(r: u8, g: u8, b: u8) -> u32 {
    299 * r as u32 + 587 * g as u32 + 114 * b as u32
}

/// Rec.601 grayscale conversion, rounded to nearest.
pub fn to_gray(img: &Raster) -> GrayRaster {
    let data = img
        .data()
        .chunks_exact(3)
        .map(|p| ((luma_milli(p[0], p[1], p[2]) + 500) / 1000) as u8)
        .collect();
    GrayRaster {
        width: img.width(),
        height: img.height(),
        scale: img.scale(),
        data,
    }
}

/// µm per pixel at the sample plane for a sensor pixel pitch behind a given
/// magnification.
pub fn effective_scale(sensor_pixel_um: f64, magnification: f64) -> Result<f64> {
    if !(sensor_pixel_um > 0.0 && sensor_pixel_um.is_finite()) {
        return Err(Error::param(format!(
            "sensor pixel size must be > 0, got {sensor_pixel_um}"
        )));
    }
    if !(magnification > 0.0 && magnification.is_finite()) {
        return Err(Error::param(format!(
            "magnification must be > 0, got {magnification}"
        )));
    }
    Ok(sensor_pixel_um / magnification)
}
