//! Signed-attribution confusion tally of one saliency map against its mosaic.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mosaic::{CellPos, MosaicSpec};
use crate::saliency::SaliencyMap;

#[derive(Debug, Error, PartialEq)]
pub enum ConfusionError {
    #[error("{field} mismatch: map has `{map}`, mosaic has `{spec}`")]
    IdMismatch {
        field: &'static str,
        map: String,
        spec: String,
    },
    #[error("map is {width}x{height}; expected a square raster with an even side")]
    DimensionMismatch { width: usize, height: usize },
    #[error("pixel ({row}, {col}) outside a {size}x{size} mosaic")]
    OutOfRange { row: usize, col: usize, size: usize },
    #[error("invalid mosaic: {0}")]
    InvalidSpec(String),
}

/// Attribution mass split by sign and by quadrant class.
///
/// Every entry is a sum of magnitudes, so all four are nonnegative.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ConfusionTally {
    /// Positive attribution on target-class cells.
    #[serde(rename = "tp")]
    pub true_pos: f64,
    /// Positive attribution on other cells.
    #[serde(rename = "fp")]
    pub false_pos: f64,
    /// Negative attribution on target-class cells (magnitude).
    #[serde(rename = "fn")]
    pub false_neg: f64,
    /// Negative attribution on other cells (magnitude).
    #[serde(rename = "tn")]
    pub true_neg: f64,
}

impl ConfusionTally {
    pub fn new(true_pos: f64, false_pos: f64, false_neg: f64, true_neg: f64) -> Self {
        ConfusionTally {
            true_pos,
            false_pos,
            false_neg,
            true_neg,
        }
    }

    pub fn total(&self) -> f64 {
        self.true_pos + self.false_pos + self.false_neg + self.true_neg
    }

    pub fn scaled(&self, factor: f64) -> Self {
        ConfusionTally::new(
            self.true_pos * factor,
            self.false_pos * factor,
            self.false_neg * factor,
            self.true_neg * factor,
        )
    }
}

/// Neumaier-compensated accumulator.
#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct CompensatedSum {
    sum: f64,
    compensation: f64,
}

impl CompensatedSum {
    pub(crate) fn add(&mut self, value: f64) {
        let t = self.sum + value;
        if self.sum.abs() >= value.abs() {
            self.compensation += (self.sum - t) + value;
        } else {
            self.compensation += (value - t) + self.sum;
        }
        self.sum = t;
    }

    pub(crate) fn value(&self) -> f64 {
        self.sum + self.compensation
    }
}

/// Class label of the cell containing raster pixel `(row, col)` of a mosaic
/// with side `mosaic_pixels`. Quadrants are half-open, so row/col
/// `mosaic_pixels / 2` belongs to the lower/right cells.
pub fn quadrant_class(spec: &MosaicSpec, row: usize, col: usize, mosaic_pixels: usize) -> Result<&str, ConfusionError> {
    if row >= mosaic_pixels || col >= mosaic_pixels {
        return Err(ConfusionError::OutOfRange {
            row,
            col,
            size: mosaic_pixels,
        });
    }
    let pos = CellPos::from_pixel(row as u32, col as u32, (mosaic_pixels / 2) as u32);
    spec.class_at(pos)
        .ok_or_else(|| ConfusionError::InvalidSpec(format!("no cell at {pos}")))
}

/// Splits a map's attribution into `(tp, fp, fn, tn)` masses.
///
/// Positive values count towards tp/fp and negative magnitudes towards fn/tn
/// depending on whether the pixel lies in a target-class cell. Zeros count
/// nowhere.
pub fn tally_confusion(map: &SaliencyMap, spec: &MosaicSpec) -> Result<ConfusionTally, ConfusionError> {
    if map.mosaic_id != spec.mosaic_id {
        return Err(ConfusionError::IdMismatch {
            field: "mosaic_id",
            map: map.mosaic_id.clone(),
            spec: spec.mosaic_id.clone(),
        });
    }
    if map.target_class != spec.target_class {
        return Err(ConfusionError::IdMismatch {
            field: "target_class",
            map: map.target_class.clone(),
            spec: spec.target_class.clone(),
        });
    }
    let (width, height) = (map.width(), map.height());
    if width != height || width == 0 || width % 2 != 0 {
        return Err(ConfusionError::DimensionMismatch { width, height });
    }
    spec.validate().map_err(|e| ConfusionError::InvalidSpec(e.to_string()))?;

    let half = width / 2;
    let mut sums = [CompensatedSum::default(); 4];
    for row in 0..height {
        let y = u8::from(row < half);
        let left_target = spec.is_target(CellPos { x: 0, y });
        let right_target = spec.is_target(CellPos { x: 1, y });
        for (col, &value) in map.row(row).iter().enumerate() {
            let on_target = if col < half { left_target } else { right_target };
            // tp, fp, fn, tn
            let slot = match (value > 0.0, value < 0.0, on_target) {
                (true, _, true) => 0,
                (true, _, false) => 1,
                (_, true, true) => 2,
                (_, true, false) => 3,
                _ => continue,
            };
            sums[slot].add(value.abs());
        }
    }
    Ok(ConfusionTally::new(
        sums[0].value(),
        sums[1].value(),
        sums[2].value(),
        sums[3].value(),
    ))
}
