use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::segments::ScanLineSegment;
use crate::error::{Error, Result};
use crate::imaging::{luma_milli, round_u8, Direction, FrameSource, Raster};

/// Placement inputs that come from the scan configuration rather than from
/// the frames.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComposeParams {
    /// Stage travel between consecutive frames (µm).
    pub step_um: f64,
    /// Vertical distance between scan lines (µm).
    pub row_pitch_um: f64,
    /// Adjust each step by frame-to-frame registration within ±10%.
    pub refine: bool,
}

/// Where one scan line's frames landed on the mosaic.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinePlacement {
    pub segment: ScanLineSegment,
    /// Top edge of the line on the mosaic (px).
    pub y_px: i64,
    /// Registered offset of the first moving frame from the leading pause.
    pub start_shift_px: f64,
    /// Registered offset of the trailing pause from the last moving frame.
    pub end_shift_px: f64,
    /// Left edge of every frame in the segment, in mosaic pixels.
    pub x_px: Vec<i64>,
    /// Unrounded left edges before the canvas origin shift.
    pub x_exact: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StitchedSlide {
    pub mosaic: Raster,
    pub lines: Vec<LinePlacement>,
}

impl StitchedSlide {
    pub fn scale(&self) -> f64 {
        self.mosaic.scale()
    }
}

const BANDS: usize = 8;
/// Minimum normalized correlation for a registration to be trusted.
const MIN_NCC: f64 = 0.8;
/// Refined steps within this distance of dead reckoning are ignored (px).
const REFINE_DEADBAND_PX: f64 = 1.0;

/// Column means of luma over horizontal bands of a frame.
#[derive(Clone, Debug)]
struct Profile {
    width: usize,
    bands: Vec<Vec<f64>>,
}

impl Profile {
    fn of(frame: &Raster) -> Self {
        let (w, h) = (frame.width(), frame.height());
        let bands = (0..BANDS)
            .filter_map(|b| {
                let (y0, y1) = (b * h / BANDS, (b + 1) * h / BANDS);
                if y1 <= y0 {
                    return None;
                }
                let mut col = vec![0.0; w];
                for y in y0..y1 {
                    for (x, p) in frame.row(y).chunks_exact(3).enumerate() {
                        col[x] += luma_milli(p[0], p[1], p[2]) as f64;
                    }
                }
                col.iter_mut().for_each(|v| *v /= 1000.0 * (y1 - y0) as f64);
                Some(col)
            })
            .collect();
        Profile { width: w, bands }
    }

    /// Centred box average of `n` taps with replicate edges. Even widths use
    /// half-weight end taps so the kernel stays symmetric.
    fn box_blurred(&self, n: usize) -> Profile {
        if n <= 1 {
            return self.clone();
        }
        let w = self.width as i64;
        let half = (n / 2) as i64;
        let bands = self
            .bands
            .iter()
            .map(|col| {
                let at = |i: i64| col[i.clamp(0, w - 1) as usize];
                (0..w)
                    .map(|x| {
                        let mut s: f64 = (-half + 1..half).map(|k| at(x + k)).sum();
                        if n % 2 == 1 {
                            s += at(x - half) + at(x + half);
                        } else {
                            s += 0.5 * (at(x - half) + at(x + half));
                        }
                        s / n as f64
                    })
                    .collect()
            })
            .collect();
        Profile {
            width: self.width,
            bands,
        }
    }
}

/// Normalized correlation of `target(u)` with `reference(u + shift)` over
/// the columns where both exist.
fn ncc_at(reference: &Profile, target: &Profile, shift: i64) -> Option<f64> {
    let w = reference.width as i64;
    let lo = 0.max(-shift);
    let hi = w.min(w - shift);
    if hi - lo < 8 {
        return None;
    }
    let (mut sa, mut sb, mut saa, mut sbb, mut sab, mut n) = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
    for (r, t) in reference.bands.iter().zip(&target.bands) {
        for u in lo..hi {
            let a = t[u as usize];
            let b = r[(u + shift) as usize];
            sa += a;
            sb += b;
            saa += a * a;
            sbb += b * b;
            sab += a * b;
            n += 1.0;
        }
    }
    let va = saa - sa * sa / n;
    let vb = sbb - sb * sb / n;
    // flat profiles carry no position information
    if va <= 1e-9 * n || vb <= 1e-9 * n {
        return None;
    }
    Some((sab - sa * sb / n) / (va * vb).sqrt())
}

/// Best `d` in `[lo, hi]` such that `target(u) ≈ reference(u + sign·d)`,
/// refined to subpixel precision by a parabola through the peak.
fn register(reference: &Profile, target: &Profile, sign: f64, lo: f64, hi: f64) -> Option<(f64, f64)> {
    let (lo_i, hi_i) = (lo.floor().max(0.0) as i64, hi.ceil() as i64);
    let scores: Vec<(i64, Option<f64>)> = (lo_i..=hi_i)
        .map(|d| (d, ncc_at(reference, target, sign as i64 * d)))
        .collect();
    let mut peak: Option<(usize, f64)> = None;
    for (i, (_, s)) in scores.iter().enumerate() {
        if let Some(s) = *s {
            if peak.map_or(true, |(_, b)| s > b) {
                peak = Some((i, s));
            }
        }
    }
    let (peak, best) = peak?;
    let d = scores[peak].0;
    let mut offset = 0.0;
    if peak > 0 && peak + 1 < scores.len() {
        if let (Some(l), Some(r)) = (scores[peak - 1].1, scores[peak + 1].1) {
            let denom = l - 2.0 * best + r;
            if denom < 0.0 {
                offset = (0.5 * (l - r) / denom).clamp(-0.5, 0.5);
            }
        }
    }
    Some((d as f64 + offset, best))
}

/// Compose the mosaic from the moving frames of each segment.
///
/// Frames are placed by dead reckoning from a per-line anchor: the last
/// paused frame before the line is registered against the first moving
/// frame (after blurring the paused frame to match), which fixes the unknown
/// camera phase. The next line starts where the trailing pause of the
/// previous one sits.
pub fn compose<S: FrameSource + ?Sized>(
    source: &S,
    segments: &[ScanLineSegment],
    params: &ComposeParams,
) -> Result<StitchedSlide> {
    let m = source.manifest();
    let (fw, fh) = (m.width, m.height);
    let scale = m.scale_um_per_px;
    if segments.is_empty() {
        return Err(Error::Compose("no scan lines to compose".into()));
    }
    if !(params.step_um > 0.0) || !(params.row_pitch_um > 0.0) {
        return Err(Error::param("step and row pitch must be positive"));
    }
    let step_px = params.step_um / scale;
    if step_px >= fw as f64 {
        let speed = params.step_um / m.frame_period_s;
        let min_rate = speed / (fw as f64 * scale);
        return Err(Error::Compose(format!(
            "frames advance {step_px:.1} px on a {fw} px wide field and never overlap; \
             need more than {min_rate:.2} frames/s at {speed:.0} µm/s"
        )));
    }
    for s in segments {
        if s.last >= source.frame_count() || s.first > s.last {
            return Err(Error::Compose(format!(
                "segment {} spans frames {}..={} outside the {}-frame sequence",
                s.line,
                s.first,
                s.last,
                source.frame_count()
            )));
        }
    }
    let speed = params.step_um / m.frame_period_s;
    let blur_px = (speed * m.exposure_s / scale).round() as usize;

    // anchor shifts, measured independently per line
    let shifts: Vec<(Option<f64>, Option<f64>)> = segments
        .par_iter()
        .map(|s| anchor_shifts(source, s, step_px, blur_px))
        .collect::<Result<_>>()?;
    let fallback = |pick: fn(&(Option<f64>, Option<f64>)) -> Option<f64>, dir: Direction| {
        let mut v: Vec<f64> = segments
            .iter()
            .zip(&shifts)
            .filter(|(s, _)| s.direction == dir)
            .filter_map(|(_, sh)| pick(sh))
            .collect();
        v.sort_by(|a, b| a.total_cmp(b));
        if v.is_empty() {
            0.5 * step_px
        } else {
            v[v.len() / 2]
        }
    };

    // per-line steps, refined or dead-reckoned
    let steps: Vec<Vec<f64>> = segments
        .par_iter()
        .map(|s| line_steps(source, s, step_px, params.refine))
        .collect::<Result<_>>()?;

    let mut lines = Vec::with_capacity(segments.len());
    let mut x_anchor = 0.0;
    for ((seg, sh), st) in segments.iter().zip(&shifts).zip(&steps) {
        let sign = seg.direction.sign();
        let start = sh.0.unwrap_or_else(|| fallback(|s| s.0, seg.direction));
        let end = sh.1.unwrap_or_else(|| fallback(|s| s.1, seg.direction));
        if sh.0.is_none() || sh.1.is_none() {
            log::warn!("line {}: anchor registration fell back to the median shift", seg.line);
        }
        let mut x = x_anchor + sign * start;
        let mut xs = Vec::with_capacity(seg.len());
        xs.push(x);
        for d in st {
            x += sign * d;
            xs.push(x);
        }
        x_anchor = x + sign * end;
        lines.push(LinePlacement {
            segment: *seg,
            y_px: (seg.row as f64 * params.row_pitch_um / scale).round() as i64,
            start_shift_px: start,
            end_shift_px: end,
            x_px: Vec::new(),
            x_exact: xs,
        });
    }

    let (min_x, max_x) = lines
        .iter()
        .flat_map(|l| l.x_exact.iter().copied())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| (lo.min(x), hi.max(x)));
    // round about the centre of the span so a mirrored scan rounds the same way
    let span = (max_x - min_x).round();
    let centre = 0.5 * (min_x + max_x);
    for l in &mut lines {
        l.x_px = l.x_exact.iter().map(|x| (x - centre + 0.5 * span).round() as i64).collect();
    }
    let width = lines.iter().flat_map(|l| l.x_px.iter()).max().copied().unwrap_or(0) as usize + fw;
    let height = lines.iter().map(|l| l.y_px).max().unwrap_or(0) as usize + fh;

    let strips: Vec<Strip> = lines
        .par_iter()
        .map(|l| build_strip(source, l, width))
        .collect::<Result<_>>()?;
    let mosaic = blend_strips(&strips, width, height, fh, scale)?;
    Ok(StitchedSlide { mosaic, lines })
}

fn anchor_shifts<S: FrameSource + ?Sized>(
    source: &S,
    seg: &ScanLineSegment,
    step_px: f64,
    blur_px: usize,
) -> Result<(Option<f64>, Option<f64>)> {
    let sign = seg.direction.sign();
    let search = |anchor: usize, moving: usize, sign: f64| -> Result<Option<f64>> {
        let reference = Profile::of(&source.frame(anchor)?).box_blurred(blur_px);
        let target = Profile::of(&source.frame(moving)?);
        Ok(register(&reference, &target, sign, 0.0, step_px.ceil())
            .filter(|&(_, score)| score >= MIN_NCC)
            .map(|(d, _)| d.clamp(0.0, step_px)))
    };
    let start = if seg.first > 0 {
        search(seg.first - 1, seg.first, sign)?
    } else {
        None
    };
    let end = if seg.last + 1 < source.frame_count() {
        search(seg.last + 1, seg.last, -sign)?
    } else {
        None
    };
    Ok((start, end))
}

fn line_steps<S: FrameSource + ?Sized>(
    source: &S,
    seg: &ScanLineSegment,
    step_px: f64,
    refine: bool,
) -> Result<Vec<f64>> {
    let n = seg.len();
    if !refine || n < 2 {
        return Ok(vec![step_px; n.saturating_sub(1)]);
    }
    let profiles = (seg.first..=seg.last)
        .map(|i| source.frame(i).map(|f| Profile::of(&f)))
        .collect::<Result<Vec<_>>>()?;
    let sign = seg.direction.sign();
    Ok(profiles
        .windows(2)
        .map(|w| {
            match register(&w[0], &w[1], sign, 0.9 * step_px, 1.1 * step_px) {
                Some((d, score))
                    if score >= MIN_NCC && (d - step_px).abs() > REFINE_DEADBAND_PX =>
                {
                    d.clamp(0.9 * step_px, 1.1 * step_px)
                }
                _ => step_px,
            }
        })
        .collect())
}

/// One scan line blended horizontally, full mosaic width.
struct Strip {
    y: i64,
    data: Vec<u8>,
    covered: Vec<bool>,
}

fn tent(i: usize, n: usize) -> f32 {
    (i + 1).min(n - i) as f32
}

fn build_strip<S: FrameSource + ?Sized>(source: &S, line: &LinePlacement, width: usize) -> Result<Strip> {
    let m = source.manifest();
    let (fw, fh) = (m.width, m.height);
    let mut acc = vec![0f32; width * fh * 3];
    let mut weight = vec![0f32; width];
    for (k, &x0) in line.x_px.iter().enumerate() {
        let frame = source.frame(line.segment.first + k)?;
        let x0 = x0 as usize;
        for u in 0..fw {
            weight[x0 + u] += tent(u, fw);
        }
        for v in 0..fh {
            let src = frame.row(v);
            let dst = &mut acc[(v * width + x0) * 3..(v * width + x0 + fw) * 3];
            for u in 0..fw {
                let w = tent(u, fw);
                for c in 0..3 {
                    dst[3 * u + c] += w * src[3 * u + c] as f32;
                }
            }
        }
    }
    let mut data = vec![0u8; width * fh * 3];
    for v in 0..fh {
        for x in 0..width {
            if weight[x] > 0.0 {
                for c in 0..3 {
                    let i = (v * width + x) * 3 + c;
                    data[i] = round_u8((acc[i] / weight[x]) as f64);
                }
            }
        }
    }
    Ok(Strip {
        y: line.y_px,
        data,
        covered: weight.iter().map(|&w| w > 0.0).collect(),
    })
}

/// Feather the strips vertically and fill uncovered pixels from the nearest
/// covered pixel in the same row.
fn blend_strips(strips: &[Strip], width: usize, height: usize, fh: usize, scale: f64) -> Result<Raster> {
    let mut out = vec![255u8; width * height * 3];
    out.par_chunks_mut(width * 3).enumerate().for_each(|(y, row)| {
        let y = y as i64;
        let mut covered = vec![false; width];
        let active: Vec<(&Strip, f32)> = strips
            .iter()
            .filter(|s| y >= s.y && y < s.y + fh as i64)
            .map(|s| (s, tent((y - s.y) as usize, fh)))
            .collect();
        for (x, cov) in covered.iter_mut().enumerate() {
            let (mut acc, mut wsum) = ([0f32; 3], 0f32);
            for (s, w) in &active {
                if s.covered[x] {
                    let i = ((y - s.y) as usize * width + x) * 3;
                    for c in 0..3 {
                        acc[c] += w * s.data[i + c] as f32;
                    }
                    wsum += w;
                }
            }
            if wsum > 0.0 {
                for c in 0..3 {
                    row[3 * x + c] = round_u8((acc[c] / wsum) as f64);
                }
                *cov = true;
            }
        }
        fill_row_gaps(row, &covered);
    });
    Raster::new(width, height, scale, out)
}

fn fill_row_gaps(row: &mut [u8], covered: &[bool]) {
    let Some(first) = covered.iter().position(|&c| c) else {
        return;
    };
    let last = covered.iter().rposition(|&c| c).expect("some pixel covered");
    let copy = |row: &mut [u8], src: usize, dst: usize| row.copy_within(3 * src..3 * src + 3, 3 * dst);
    for x in 0..first {
        copy(row, first, x);
    }
    for x in last + 1..covered.len() {
        copy(row, last, x);
    }
    // interior gaps take the nearer edge, averaging both at the midpoint
    let mut x = first;
    while x < last {
        if covered[x] {
            x += 1;
            continue;
        }
        let (l, mut r) = (x - 1, x);
        while !covered[r] {
            r += 1;
        }
        for g in x..r {
            match (g - l).cmp(&(r - g)) {
                std::cmp::Ordering::Less => copy(row, l, g),
                std::cmp::Ordering::Greater => copy(row, r, g),
                std::cmp::Ordering::Equal => {
                    for c in 0..3 {
                        row[3 * g + c] = (row[3 * l + c] as u16 + row[3 * r + c] as u16).div_ceil(2) as u8;
                    }
                }
            }
        }
        x = r;
    }
}
