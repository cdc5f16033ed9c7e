//! On-disk containers.
//!
//! A frame sequence is a directory holding `manifest.json` and `frames.bin`
//! (concatenated raw RGB8 frames, row-major, interleaved, no padding). A single
//! raster is a raw RGB8 file with a JSON sidecar of the same stem.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::os::unix::fs::FileExt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::raster::Raster;
use crate::error::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const FRAMES_FILE: &str = "frames.bin";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrameManifest {
    pub frame_count: usize,
    pub width: usize,
    pub height: usize,
    pub frame_period_s: f64,
    pub exposure_s: f64,
    pub scale_um_per_px: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trajectory: Option<String>,
}

impl FrameManifest {
    pub fn frame_bytes(&self) -> usize {
        self.width * self.height * 3
    }

    pub fn frame_rate(&self) -> f64 {
        1.0 / self.frame_period_s
    }

    pub fn validate(&self) -> std::result::Result<(), String> {
        if self.frame_count == 0 {
            return Err("frame_count must be >= 1".into());
        }
        if self.width == 0 || self.height == 0 {
            return Err(format!("frame size {}x{} must be positive", self.width, self.height));
        }
        if !(self.frame_period_s > 0.0 && self.frame_period_s.is_finite()) {
            return Err(format!("frame_period_s must be > 0, got {}", self.frame_period_s));
        }
        if !(self.exposure_s >= 0.0 && self.exposure_s <= self.frame_period_s) {
            return Err(format!(
                "exposure_s {} must lie in [0, frame_period_s = {}]",
                self.exposure_s, self.frame_period_s
            ));
        }
        if !(self.scale_um_per_px > 0.0 && self.scale_um_per_px.is_finite()) {
            return Err(format!("scale_um_per_px must be > 0, got {}", self.scale_um_per_px));
        }
        Ok(())
    }
}

/// Random access to the frames of a sequence, in memory or on disk.
pub trait FrameSource: Sync {
    fn manifest(&self) -> &FrameManifest;
    fn frame(&self, index: usize) -> Result<Raster>;

    fn frame_count(&self) -> usize {
        self.manifest().frame_count
    }
}

/// A fully materialized frame sequence.
#[derive(Clone, Debug, PartialEq)]
pub struct FrameSequence {
    pub manifest: FrameManifest,
    pub frames: Vec<Raster>,
}

impl FrameSequence {
    pub fn new(manifest: FrameManifest, frames: Vec<Raster>) -> Result<Self> {
        manifest.validate().map_err(Error::Parameter)?;
        if manifest.frame_count != frames.len() {
            return Err(Error::param(format!(
                "manifest declares {} frames but {} were supplied",
                manifest.frame_count,
                frames.len()
            )));
        }
        for (i, f) in frames.iter().enumerate() {
            if f.width() != manifest.width || f.height() != manifest.height {
                return Err(Error::param(format!(
                    "frame {i} is {}x{}, manifest says {}x{}",
                    f.width(),
                    f.height(),
                    manifest.width,
                    manifest.height
                )));
            }
        }
        Ok(FrameSequence { manifest, frames })
    }
}

impl FrameSource for FrameSequence {
    fn manifest(&self) -> &FrameManifest {
        &self.manifest
    }

    fn frame(&self, index: usize) -> Result<Raster> {
        self.frames
            .get(index)
            .cloned()
            .ok_or_else(|| Error::param(format!("frame {index} out of range")))
    }
}

/// Streams frames into a sequence directory; [`SequenceWriter::finish`]
/// checks that the declared frame count was honored.
pub struct SequenceWriter {
    dir: PathBuf,
    manifest: FrameManifest,
    out: BufWriter<File>,
    written: usize,
}

impl SequenceWriter {
    pub fn create(dir: impl AsRef<Path>, manifest: FrameManifest) -> Result<Self> {
        let dir = dir.as_ref().to_path_buf();
        let manifest_path = dir.join(MANIFEST_FILE);
        manifest
            .validate()
            .map_err(|m| Error::format(&manifest_path, 0, m))?;
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        fs::write(&manifest_path, text).map_err(|e| Error::io(&manifest_path, e))?;
        let frames_path = dir.join(FRAMES_FILE);
        let file = File::create(&frames_path).map_err(|e| Error::io(&frames_path, e))?;
        Ok(SequenceWriter {
            dir,
            manifest,
            out: BufWriter::with_capacity(1 << 20, file),
            written: 0,
        })
    }

    pub fn push(&mut self, frame: &Raster) -> Result<()> {
        let path = self.dir.join(FRAMES_FILE);
        let offset = (self.written * self.manifest.frame_bytes()) as u64;
        if self.written >= self.manifest.frame_count {
            return Err(Error::format(
                path,
                offset,
                format!("more frames than the declared {}", self.manifest.frame_count),
            ));
        }
        if frame.width() != self.manifest.width || frame.height() != self.manifest.height {
            return Err(Error::format(
                path,
                offset,
                format!(
                    "frame {} is {}x{}, manifest says {}x{}",
                    self.written,
                    frame.width(),
                    frame.height(),
                    self.manifest.width,
                    self.manifest.height
                ),
            ));
        }
        self.out.write_all(frame.data()).map_err(|e| Error::io(&path, e))?;
        self.written += 1;
        Ok(())
    }

    pub fn finish(mut self) -> Result<PathBuf> {
        let path = self.dir.join(FRAMES_FILE);
        self.out.flush().map_err(|e| Error::io(&path, e))?;
        if self.written != self.manifest.frame_count {
            return Err(Error::format(
                path,
                (self.written * self.manifest.frame_bytes()) as u64,
                format!(
                    "wrote {} frames, manifest declares {}",
                    self.written, self.manifest.frame_count
                ),
            ));
        }
        Ok(self.dir)
    }
}

pub fn write_sequence<'a>(
    dir: impl AsRef<Path>,
    manifest: &FrameManifest,
    frames: impl IntoIterator<Item = &'a Raster>,
) -> Result<()> {
    let mut w = SequenceWriter::create(dir, manifest.clone())?;
    for f in frames {
        w.push(f)?;
    }
    w.finish().map(|_| ())
}

/// File-backed [`FrameSource`]; frames are read on demand with positioned reads.
pub struct SequenceReader {
    manifest: FrameManifest,
    frames_path: PathBuf,
    file: File,
}

impl SequenceReader {
    pub fn open(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let manifest = read_manifest(&dir.join(MANIFEST_FILE))?;
        let frames_path = dir.join(FRAMES_FILE);
        let file = File::open(&frames_path).map_err(|e| Error::io(&frames_path, e))?;
        let len = file
            .metadata()
            .map_err(|e| Error::io(&frames_path, e))?
            .len();
        let expected = (manifest.frame_count * manifest.frame_bytes()) as u64;
        if len < expected {
            let complete = len / manifest.frame_bytes() as u64;
            return Err(Error::format(
                &frames_path,
                len,
                format!(
                    "truncated frame data: {len} bytes hold {complete} complete frames, manifest declares {} ({expected} bytes)",
                    manifest.frame_count
                ),
            ));
        }
        if len > expected {
            return Err(Error::format(
                &frames_path,
                expected,
                format!("{} trailing bytes beyond the declared frames", len - expected),
            ));
        }
        Ok(SequenceReader {
            manifest,
            frames_path,
            file,
        })
    }

    pub fn read_all(&self) -> Result<FrameSequence> {
        let frames = (0..self.manifest.frame_count)
            .map(|i| self.frame(i))
            .collect::<Result<Vec<_>>>()?;
        FrameSequence::new(self.manifest.clone(), frames)
    }
}

impl FrameSource for SequenceReader {
    fn manifest(&self) -> &FrameManifest {
        &self.manifest
    }

    fn frame(&self, index: usize) -> Result<Raster> {
        if index >= self.manifest.frame_count {
            return Err(Error::param(format!("frame {index} out of range")));
        }
        let n = self.manifest.frame_bytes();
        let offset = (index * n) as u64;
        let mut buf = vec![0u8; n];
        self.file
            .read_exact_at(&mut buf, offset)
            .map_err(|e| Error::format(&self.frames_path, offset, format!("reading frame {index}: {e}")))?;
        Raster::new(
            self.manifest.width,
            self.manifest.height,
            self.manifest.scale_um_per_px,
            buf,
        )
    }
}

pub fn read_sequence(dir: impl AsRef<Path>) -> Result<FrameSequence> {
    SequenceReader::open(dir)?.read_all()
}

fn json_offset(text: &str, err: &serde_json::Error) -> u64 {
    let mut offset = 0usize;
    for (i, line) in text.split_inclusive('\n').enumerate() {
        if i + 1 == err.line() {
            return (offset + err.column().saturating_sub(1).min(line.len())) as u64;
        }
        offset += line.len();
    }
    offset as u64
}

pub fn read_manifest(path: &Path) -> Result<FrameManifest> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let manifest: FrameManifest = serde_json::from_str(&text)
        .map_err(|e| Error::format(path, json_offset(&text, &e), format!("malformed manifest: {e}")))?;
    manifest
        .validate()
        .map_err(|m| Error::format(path, 0, m))?;
    Ok(manifest)
}

/// Sidecar header of a single raw raster.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RasterHeader {
    pub width: usize,
    pub height: usize,
    pub scale_um_per_px: f64,
}

fn sidecar(path: &Path) -> PathBuf {
    path.with_extension("json")
}

/// Write `img` to `path` (raw RGB8) plus `path.with_extension("json")`.
pub fn write_raster(path: impl AsRef<Path>, img: &Raster) -> Result<()> {
    let path = path.as_ref();
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let header = RasterHeader {
        width: img.width(),
        height: img.height(),
        scale_um_per_px: img.scale(),
    };
    let hp = sidecar(path);
    fs::write(&hp, serde_json::to_string_pretty(&header).expect("header serializes"))
        .map_err(|e| Error::io(&hp, e))?;
    fs::write(path, img.data()).map_err(|e| Error::io(path, e))
}

pub fn read_raster(path: impl AsRef<Path>) -> Result<Raster> {
    let path = path.as_ref();
    let hp = sidecar(path);
    let text = fs::read_to_string(&hp).map_err(|e| Error::io(&hp, e))?;
    let header: RasterHeader = serde_json::from_str(&text)
        .map_err(|e| Error::format(&hp, json_offset(&text, &e), format!("malformed raster header: {e}")))?;
    let data = fs::read(path).map_err(|e| Error::io(path, e))?;
    let expected = header.width * header.height * 3;
    if data.len() != expected {
        return Err(Error::format(
            path,
            data.len().min(expected) as u64,
            format!("raster holds {} bytes, header implies {expected}", data.len()),
        ));
    }
    Raster::new(header.width, header.height, header.scale_um_per_px, data)
        .map_err(|e| Error::format(&hp, 0, e.to_string()))
}
