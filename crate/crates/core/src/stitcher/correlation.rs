use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::{luma_milli, FrameSource, Raster};

/// Pearson correlation between consecutive grayscale frames.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrelationSeries {
    /// `values[i]` correlates frame `i` with frame `i + stride`.
    pub values: Vec<f64>,
    pub stride: usize,
}

impl CorrelationSeries {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Fixed-point luma (×1000) of the central 80% of a frame.
#[derive(Clone, Debug)]
pub struct CentralLuma {
    values: Vec<u32>,
}

impl CentralLuma {
    pub fn of(frame: &Raster) -> Self {
        let (w, h) = (frame.width(), frame.height());
        let (x0, x1) = central_span(w);
        let (y0, y1) = central_span(h);
        let mut values = Vec::with_capacity((x1 - x0) * (y1 - y0));
        for y in y0..y1 {
            let row = &frame.row(y)[3 * x0..3 * x1];
            values.extend(row.chunks_exact(3).map(|p| luma_milli(p[0], p[1], p[2])));
        }
        CentralLuma { values }
    }
}

/// Central 80% of `[0, n)`, never empty.
fn central_span(n: usize) -> (usize, usize) {
    let margin = n / 10;
    (margin, n - margin)
}

/// Exact Pearson correlation of two equally sized luma windows. Two constant
/// windows correlate at 1.0; a constant window against a varying one at 0.0.
pub fn pearson(a: &CentralLuma, b: &CentralLuma) -> f64 {
    assert_eq!(a.values.len(), b.values.len(), "luma windows differ in size");
    let n = a.values.len() as u64;
    let (mut sa, mut sb, mut saa, mut sbb, mut sab) = (0u64, 0u64, 0u64, 0u64, 0u64);
    for (&x, &y) in a.values.iter().zip(&b.values) {
        let (x, y) = (x as u64, y as u64);
        sa += x;
        sb += y;
        saa += x * x;
        sbb += y * y;
        sab += x * y;
    }
    let n = n as i128;
    let var_a = n * saa as i128 - (sa as i128) * (sa as i128);
    let var_b = n * sbb as i128 - (sb as i128) * (sb as i128);
    let cov = n * sab as i128 - (sa as i128) * (sb as i128);
    match (var_a == 0, var_b == 0) {
        (true, true) => 1.0,
        (true, false) | (false, true) => 0.0,
        _ => (cov as f64 / (var_a as f64 * var_b as f64).sqrt()).clamp(-1.0, 1.0),
    }
}

/// Correlation of every frame with the frame `stride` positions later.
pub fn correlation_series<S: FrameSource + ?Sized>(
    source: &S,
    stride: usize,
) -> Result<CorrelationSeries> {
    let n = source.frame_count();
    if n < 2 {
        return Err(Error::param(format!(
            "correlation needs at least 2 frames, sequence has {n}"
        )));
    }
    if stride == 0 || stride >= n {
        return Err(Error::param(format!(
            "stride {stride} invalid for {n} frames"
        )));
    }
    let pairs = n - stride;
    // chunks bound memory to a window of luma buffers per worker
    const CHUNK: usize = 32;
    let chunks: Vec<Vec<f64>> = (0..pairs.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            let start = c * CHUNK;
            let end = (start + CHUNK).min(pairs);
            let lumas = (start..end + stride)
                .map(|i| source.frame(i).map(|f| CentralLuma::of(&f)))
                .collect::<Result<Vec<_>>>()?;
            Ok((0..end - start)
                .map(|k| pearson(&lumas[k], &lumas[k + stride]))
                .collect())
        })
        .collect::<Result<_>>()?;
    Ok(CorrelationSeries {
        values: chunks.concat(),
        stride,
    })
}
