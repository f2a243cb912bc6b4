//! Image sequences (captured or procedurally generated) to training records.
//!
//! The per-frame pipeline is threshold → morphology → sub-pixel tracing →
//! spline fit → gradient extraction; tracked sequences are then windowed
//! into normalized training samples. A procedural generator stands in for a
//! physical capture rig and emits exact ground truth alongside the frames.

mod image;
mod trace;
mod track;

pub mod dataset;
pub mod pipeline;
pub mod synth;

#[cfg(test)]
mod tests;

pub use dataset::{build_dataset, read_dataset, write_dataset, DatasetHeader, TrainingSample};
pub use image::{
    binarize, morph_open_close, otsu_threshold, read_pgm16, read_pgm8, sobel_at, write_pgm16,
    write_pgm8, Mask,
};
pub use trace::trace_contours;
pub use track::{track, TrackEvent};

use crate::geometry::{Contour, GeometryError, Point, CONTROL_POINTS};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataPrepError {
    #[error("image has fewer than two distinct intensities")]
    UniformImage,
    #[error("sample point ({0}, {1}) is outside the frame interior")]
    OutOfBounds(f64, f64),
    #[error("ambiguous contour topology at frame {frame}: {detail}")]
    AmbiguousTopology { frame: usize, detail: String },
    #[error("invalid generator parameters: {0}")]
    InvalidParams(String),
    #[error("invalid frame: {0}")]
    InvalidFrame(String),
    #[error("invalid dataset: {0}")]
    InvalidDataset(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One grayscale video frame.
#[derive(Clone, Debug, PartialEq)]
pub struct Frame {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
    pub timestamp: usize,
}

impl Frame {
    pub fn new(
        width: usize,
        height: usize,
        pixels: Vec<u8>,
        timestamp: usize,
    ) -> Result<Self, DataPrepError> {
        if width < 16 || height < 16 {
            return Err(DataPrepError::InvalidFrame(format!(
                "frame must be at least 16x16, got {width}x{height}"
            )));
        }
        if pixels.len() != width * height {
            return Err(DataPrepError::InvalidFrame(format!(
                "pixel count {} does not match {width}x{height}",
                pixels.len()
            )));
        }
        Ok(Frame {
            width,
            height,
            pixels,
            timestamp,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn get(&self, col: usize, row: usize) -> u8 {
        self.pixels[row * self.width + col]
    }

    /// Pixels per scene unit under the square-scene mapping.
    pub fn scene_scale(&self) -> f64 {
        self.width.max(self.height) as f64
    }

    /// Scene coordinates (y-up) of a pixel center.
    pub fn pixel_to_scene(&self, col: f64, row: f64) -> Point {
        let m = self.scene_scale();
        Point::new((col + 0.5) / m, (self.height as f64 - row - 0.5) / m)
    }

    /// Fractional pixel position (col, row) of a scene point.
    pub fn scene_to_pixel(&self, p: Point) -> (f64, f64) {
        let m = self.scene_scale();
        (p.x * m - 0.5, self.height as f64 - 0.5 - p.y * m)
    }
}

/// Non-negative color-gradient magnitudes along the inward normals at the 52
/// control points, in intensity units per scene unit.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct GradientProfile {
    mags: Vec<f64>,
}

impl GradientProfile {
    pub fn new(mags: Vec<f64>) -> Result<Self, DataPrepError> {
        if mags.len() != CONTROL_POINTS {
            return Err(DataPrepError::InvalidDataset(format!(
                "gradient profile needs {CONTROL_POINTS} magnitudes, got {}",
                mags.len()
            )));
        }
        if mags.iter().any(|m| !m.is_finite() || *m < 0.0) {
            return Err(DataPrepError::InvalidDataset(
                "gradient magnitudes must be finite and non-negative".into(),
            ));
        }
        Ok(GradientProfile { mags })
    }

    pub fn zeros() -> Self {
        GradientProfile {
            mags: vec![0.0; CONTROL_POINTS],
        }
    }

    pub fn mags(&self) -> &[f64] {
        &self.mags
    }

    /// Magnitude at a fractional control-point index, linearly interpolated.
    pub fn interpolate(&self, index_position: f64) -> f64 {
        let n = CONTROL_POINTS as f64;
        let t = index_position.rem_euclid(n);
        let i = t.floor() as usize % CONTROL_POINTS;
        let frac = t - t.floor();
        let j = (i + 1) % CONTROL_POINTS;
        self.mags[i] * (1.0 - frac) + self.mags[j] * frac
    }

    pub fn scaled(&self, factor: f64) -> Result<Self, DataPrepError> {
        GradientProfile::new(self.mags.iter().map(|m| m * factor).collect())
    }
}

/// Gradient magnitudes projected onto the inward normals at every control
/// point of `contour`, clamped at zero and converted to scene units.
pub fn extract_gradient_profile(
    frame: &Frame,
    contour: &Contour,
) -> Result<GradientProfile, DataPrepError> {
    let normals = contour.inward_normals()?;
    let scale = frame.scene_scale();
    let mut mags = Vec::with_capacity(CONTROL_POINTS);
    for (i, n) in normals.iter().enumerate() {
        let p = contour.point_at(i as f64);
        let g = sobel_at(frame, p)?;
        mags.push((g.dot(*n) * scale).max(0.0));
    }
    GradientProfile::new(mags)
}

/// How a tracked contour sequence terminated.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminalEvent {
    Ends,
    LeavesView,
    Merged,
    Split,
}

/// One frame of a tracked sequence.
#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
pub struct SequenceFrame {
    pub contour: Contour,
    pub gradient: GradientProfile,
    pub center: Point,
}

/// A contour tracked over consecutive frames until a terminal event.
#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
pub struct TrackedSequence {
    pub id: usize,
    /// Global frame index of this sequence's first entry.
    #[serde(default)]
    pub start_frame: usize,
    pub frames: Vec<SequenceFrame>,
    pub terminal_event: TerminalEvent,
    /// Index (within `frames`) of the final pre-split frame; set exactly when
    /// `terminal_event == Split`.
    pub split_frame: Option<usize>,
}

impl TrackedSequence {
    pub fn validate(&self) -> Result<(), DataPrepError> {
        if self.frames.is_empty() {
            return Err(DataPrepError::InvalidDataset(format!(
                "sequence {} has no frames",
                self.id
            )));
        }
        if (self.terminal_event == TerminalEvent::Split) != self.split_frame.is_some() {
            return Err(DataPrepError::InvalidDataset(format!(
                "sequence {}: split_frame must be set iff terminal_event is split",
                self.id
            )));
        }
        for f in &self.frames {
            if !(0.0..=1.0).contains(&f.center.x) || !(0.0..=1.0).contains(&f.center.y) {
                return Err(DataPrepError::InvalidDataset(format!(
                    "sequence {}: center outside unit domain",
                    self.id
                )));
            }
        }
        Ok(())
    }
}
