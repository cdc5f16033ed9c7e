use std::path::Path;

use serde::{Deserialize, Serialize};

use super::grid::CoreRecord;
use super::segment::CoreBox;
use crate::error::{Error, Result};
use crate::imaging::{read_raster, write_raster};

pub const CORES_FILE: &str = "cores.json";

/// One line of `cores.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoreEntry {
    pub id: String,
    pub slide_id: String,
    pub row: usize,
    pub col: usize,
    pub bbox: CoreBox,
    pub label: Option<u8>,
    pub repeat: usize,
    /// Raster file, relative to the directory holding `cores.json`.
    pub image: String,
}

/// Write each core image as a raw raster plus `cores.json` into `dir`.
pub fn write_cores(dir: impl AsRef<Path>, records: &[CoreRecord]) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut entries = Vec::with_capacity(records.len());
    for r in records {
        let name = format!("{}_rep{}.raw", r.id, r.repeat);
        write_raster(dir.join(&name), &r.image)?;
        entries.push(CoreEntry {
            id: r.id.clone(),
            slide_id: r.slide_id.clone(),
            row: r.row,
            col: r.col,
            bbox: r.bbox,
            label: r.label,
            repeat: r.repeat,
            image: name,
        });
    }
    let path = dir.join(CORES_FILE);
    let json = serde_json::to_vec_pretty(&entries).expect("entries serialize");
    std::fs::write(&path, json).map_err(|e| Error::io(&path, e))
}

pub fn read_cores(dir: impl AsRef<Path>) -> Result<Vec<CoreRecord>> {
    let dir = dir.as_ref();
    let path = dir.join(CORES_FILE);
    let text = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
    let entries: Vec<CoreEntry> =
        serde_json::from_slice(&text).map_err(|e| Error::format(&path, 0, e.to_string()))?;
    entries
        .into_iter()
        .map(|e| {
            Ok(CoreRecord {
                image: read_raster(dir.join(&e.image))?,
                id: e.id,
                slide_id: e.slide_id,
                row: e.row,
                col: e.col,
                bbox: e.bbox,
                label: e.label,
                repeat: e.repeat,
            })
        })
        .collect()
}
