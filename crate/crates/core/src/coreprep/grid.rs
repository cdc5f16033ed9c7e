use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::segment::CoreBox;
use crate::error::{Error, Result};
use crate::imaging::Raster;

/// Boxes assigned to the cells of an equal-cell lattice over the union
/// rectangle of all boxes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridAssignment {
    pub rows: usize,
    pub cols: usize,
    /// Union rectangle `(x0, y0, x1, y1)`, exclusive upper bounds.
    pub bounds: (usize, usize, usize, usize),
    /// Row-major, `rows * cols` entries.
    pub cells: Vec<Option<CoreBox>>,
    /// Boxes dropped because a larger box claimed the same cell.
    pub conflicts: Vec<GridConflict>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridConflict {
    pub row: usize,
    pub col: usize,
    pub kept: CoreBox,
    pub dropped: CoreBox,
}

impl GridAssignment {
    pub fn cell(&self, row: usize, col: usize) -> Option<&CoreBox> {
        self.cells[row * self.cols + col].as_ref()
    }

    pub fn filled(&self) -> impl Iterator<Item = (usize, usize, &CoreBox)> {
        self.cells
            .iter()
            .enumerate()
            .filter_map(|(i, c)| c.as_ref().map(|b| (i / self.cols, i % self.cols, b)))
    }
}

/// Cell index of `sum / area` inside `[lo, lo + span)` split into `n` cells,
/// in exact integer arithmetic.
fn cell_index(sum: u64, area: u64, lo: usize, span: usize, n: usize) -> usize {
    // centroid of pixel centres is sum/area + 1/2
    let num = (2 * sum as i128 + area as i128 - 2 * lo as i128 * area as i128) * n as i128;
    let den = 2 * span as i128 * area as i128;
    (num.div_euclid(den)).clamp(0, n as i128 - 1) as usize
}

/// Assign each box to the lattice cell containing its centroid. When two
/// boxes share a cell the larger one (by area, then earlier) is kept.
pub fn fit_grid(boxes: &[CoreBox], rows: usize, cols: usize) -> Result<GridAssignment> {
    if rows == 0 || cols == 0 {
        return Err(Error::param(format!("grid {rows}x{cols} must be at least 1x1")));
    }
    if boxes.is_empty() {
        return Err(Error::param("no boxes to place on the grid"));
    }
    let x0 = boxes.iter().map(|b| b.x0).min().unwrap();
    let y0 = boxes.iter().map(|b| b.y0).min().unwrap();
    let x1 = boxes.iter().map(|b| b.x1).max().unwrap();
    let y1 = boxes.iter().map(|b| b.y1).max().unwrap();
    let mut cells: Vec<Option<CoreBox>> = vec![None; rows * cols];
    let mut conflicts = Vec::new();
    for b in boxes {
        let c = cell_index(b.sum_x, b.area, x0, x1 - x0, cols);
        let r = cell_index(b.sum_y, b.area, y0, y1 - y0, rows);
        let slot = &mut cells[r * cols + c];
        match slot {
            None => *slot = Some(*b),
            Some(existing) => {
                let (kept, dropped) = if b.area > existing.area {
                    (*b, *existing)
                } else {
                    (*existing, *b)
                };
                log::warn!("grid cell ({r}, {c}) holds two boxes; keeping the larger");
                *slot = Some(kept);
                conflicts.push(GridConflict {
                    row: r,
                    col: c,
                    kept,
                    dropped,
                });
            }
        }
    }
    Ok(GridAssignment {
        rows,
        cols,
        bounds: (x0, y0, x1, y1),
        cells,
        conflicts,
    })
}

/// Expected HER2 score per grid cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabelMap {
    pub rows: usize,
    pub cols: usize,
    pub scores: BTreeMap<(usize, usize), u8>,
}

impl LabelMap {
    pub fn new(rows: usize, cols: usize) -> Self {
        LabelMap {
            rows,
            cols,
            scores: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, row: usize, col: usize, score: u8) -> Result<()> {
        if score > 3 {
            return Err(Error::Labeling(format!("score {score} at ({row}, {col}) is not 0..=3")));
        }
        if row >= self.rows || col >= self.cols {
            return Err(Error::Labeling(format!(
                "cell ({row}, {col}) lies outside the {}x{} grid",
                self.rows, self.cols
            )));
        }
        if self.scores.insert((row, col), score).is_some() {
            return Err(Error::Labeling(format!("duplicate entry for cell ({row}, {col})")));
        }
        Ok(())
    }

    pub fn get(&self, row: usize, col: usize) -> Option<u8> {
        self.scores.get(&(row, col)).copied()
    }

    /// Read a CSV with at least `row`, `col` and `score` columns (other
    /// columns, such as a full slide layout, are ignored).
    pub fn read_csv(path: impl AsRef<Path>, rows: usize, cols: usize) -> Result<Self> {
        let path = path.as_ref();
        let mut rdr = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
        let headers = rdr.headers().map_err(|e| csv_error(path, e))?.clone();
        let find = |name: &str| {
            headers.iter().position(|h| h.trim() == name).ok_or_else(|| {
                Error::Labeling(format!("{}: missing column `{name}`", path.display()))
            })
        };
        let (ir, ic, is) = (find("row")?, find("col")?, find("score")?);
        let mut map = LabelMap::new(rows, cols);
        for (n, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| csv_error(path, e))?;
            let field = |i: usize| -> Result<usize> {
                rec.get(i).unwrap_or("").trim().parse().map_err(|_| {
                    Error::Labeling(format!("{}: bad value on data row {}", path.display(), n + 1))
                })
            };
            let score = field(is)?;
            map.insert(field(ir)?, field(ic)?, score.min(255) as u8)
                .map_err(|e| Error::Labeling(format!("{}: data row {}: {e}", path.display(), n + 1)))?;
        }
        Ok(map)
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut out = String::from("row,col,score\n");
        for ((r, c), s) in &self.scores {
            out.push_str(&format!("{r},{c},{s}\n"));
        }
        std::fs::write(path, out).map_err(|e| Error::io(path, e))
    }
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    Error::Labeling(format!("{}: {e}", path.display()))
}

/// A segmented, grid-addressed core cut from the mosaic.
#[derive(Clone, Debug, PartialEq)]
pub struct CoreRecord {
    pub id: String,
    pub slide_id: String,
    pub row: usize,
    pub col: usize,
    pub bbox: CoreBox,
    pub image: Raster,
    /// HER2 score, `None` when the label map has no entry.
    pub label: Option<u8>,
    pub repeat: usize,
}

/// Specimen identity shared by every repeat scan of a core.
pub fn core_id(slide_id: &str, row: usize, col: usize) -> String {
    format!("{slide_id}-r{row}c{col}")
}

/// Outcome bookkeeping of [`assign_labels`].
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LabelReport {
    /// Filled cells without a map entry.
    pub unlabeled: Vec<(usize, usize)>,
    /// Map entries whose cell holds no core.
    pub missing: Vec<(usize, usize)>,
}

/// Turn filled cells into labelled core records cropped from `mosaic`.
pub fn assign_labels(
    grid: &GridAssignment,
    map: &LabelMap,
    mosaic: &Raster,
    slide_id: &str,
    repeat: usize,
) -> Result<(Vec<CoreRecord>, LabelReport)> {
    if grid.rows != map.rows || grid.cols != map.cols {
        return Err(Error::Labeling(format!(
            "grid is {}x{} but the label map is {}x{}",
            grid.rows, grid.cols, map.rows, map.cols
        )));
    }
    if repeat > 2 {
        return Err(Error::Labeling(format!("repeat index {repeat} exceeds 2")));
    }
    let mut report = LabelReport::default();
    let mut records = Vec::new();
    for (row, col, b) in grid.filled() {
        let label = map.get(row, col);
        if label.is_none() {
            log::warn!("{slide_id}: core at ({row}, {col}) has no label");
            report.unlabeled.push((row, col));
        }
        records.push(CoreRecord {
            id: core_id(slide_id, row, col),
            slide_id: slide_id.to_string(),
            row,
            col,
            bbox: *b,
            image: mosaic.crop(b.x0, b.y0, b.width(), b.height())?,
            label,
            repeat,
        });
    }
    for &(row, col) in map.scores.keys() {
        if grid.cell(row, col).is_none() {
            log::warn!("{slide_id}: no core found at labelled cell ({row}, {col})");
            report.missing.push((row, col));
        }
    }
    Ok((records, report))
}
