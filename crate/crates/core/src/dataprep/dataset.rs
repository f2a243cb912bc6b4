//! Window extraction and the `nd-dataset v1` JSON-lines format.
//!
//! Feature layout per step: `[x0..x51, y0..y51, cx, cy]` (106 values).
//! Contour coordinates are offsets from the centroid of the window's last
//! input step; the center feature is each step's centroid displacement from
//! the window's first step. The target uses the same references for step
//! K+1. Gradient targets stay in raw scene units.

use super::{DataPrepError, TerminalEvent, TrackedSequence};
use crate::geometry::CONTROL_POINTS;
use std::io::{BufRead, Write};

pub const DATASET_FORMAT: &str = "nd-dataset v1";
pub const NORMALIZATION: &str = "coords:last-input-centroid;center:displacement-from-first-step";

/// Per-step feature width: 104 coordinates plus the 2-vector center.
pub const STEP_FEATURES: usize = 2 * CONTROL_POINTS + 2;

#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
pub struct TrainingSample {
    pub seq_id: usize,
    pub t0: usize,
    pub inputs: Vec<Vec<f64>>,
    pub target: Vec<f64>,
    pub grad_target: Vec<f64>,
    pub breakage: bool,
}

#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
pub struct DatasetHeader {
    pub format: String,
    pub k: usize,
    pub normalization: String,
}

/// Sliding-window extraction: K input steps, step K+1 as target. Sequences
/// shorter than K+1 are skipped; the skip count is returned for reporting.
pub fn build_dataset(
    sequences: &[TrackedSequence],
    k: usize,
) -> Result<(Vec<TrainingSample>, usize), DataPrepError> {
    assert!(k >= 1);
    let mut samples = Vec::new();
    let mut skipped = 0usize;
    for seq in sequences {
        seq.validate()?;
        if seq.frames.len() < k + 1 {
            skipped += 1;
            continue;
        }
        for t0 in 0..=(seq.frames.len() - k - 1) {
            samples.push(window_sample(seq, t0, k)?);
        }
    }
    Ok((samples, skipped))
}

fn window_sample(
    seq: &TrackedSequence,
    t0: usize,
    k: usize,
) -> Result<TrainingSample, DataPrepError> {
    let c_ref = seq.frames[t0 + k - 1].center;
    let c_first = seq.frames[t0].center;
    let step_features = |t: usize| -> Vec<f64> {
        let f = &seq.frames[t];
        let mut v = Vec::with_capacity(STEP_FEATURES);
        for p in f.contour.control_points() {
            v.push(p.x - c_ref.x);
        }
        for p in f.contour.control_points() {
            v.push(p.y - c_ref.y);
        }
        v.push(f.center.x - c_first.x);
        v.push(f.center.y - c_first.y);
        v
    };
    let inputs: Vec<Vec<f64>> = (t0..t0 + k).map(step_features).collect();
    let target = step_features(t0 + k);
    let grad_target = seq.frames[t0 + k].gradient.mags().to_vec();
    let breakage =
        seq.terminal_event == TerminalEvent::Split && seq.split_frame == Some(t0 + k);
    let sample = TrainingSample {
        seq_id: seq.id,
        t0,
        inputs,
        target,
        grad_target,
        breakage,
    };
    validate_sample(&sample, k)?;
    Ok(sample)
}

fn validate_sample(s: &TrainingSample, k: usize) -> Result<(), DataPrepError> {
    if s.inputs.len() != k {
        return Err(DataPrepError::InvalidDataset(format!(
            "sample has {} input steps, expected {k}",
            s.inputs.len()
        )));
    }
    for step in s.inputs.iter().chain(std::iter::once(&s.target)) {
        if step.len() != STEP_FEATURES {
            return Err(DataPrepError::InvalidDataset(format!(
                "step has {} features, expected {STEP_FEATURES}",
                step.len()
            )));
        }
        for &v in step {
            if !v.is_finite() || !(-1.0..=1.0).contains(&v) {
                return Err(DataPrepError::InvalidDataset(format!(
                    "coordinate feature {v} outside [-1, 1]"
                )));
            }
        }
    }
    if s.grad_target.len() != CONTROL_POINTS {
        return Err(DataPrepError::InvalidDataset(format!(
            "gradient target has {} values, expected {CONTROL_POINTS}",
            s.grad_target.len()
        )));
    }
    if s.grad_target.iter().any(|g| !g.is_finite() || *g < 0.0) {
        return Err(DataPrepError::InvalidDataset(
            "gradient target must be finite and non-negative".into(),
        ));
    }
    Ok(())
}

/// Write header line plus one JSON record per line.
pub fn write_dataset<W: Write>(
    w: &mut W,
    k: usize,
    samples: &[TrainingSample],
) -> Result<(), DataPrepError> {
    let header = DatasetHeader {
        format: DATASET_FORMAT.into(),
        k,
        normalization: NORMALIZATION.into(),
    };
    writeln!(w, "{}", serde_json::to_string(&header).unwrap())?;
    for s in samples {
        writeln!(w, "{}", serde_json::to_string(s).unwrap())?;
    }
    Ok(())
}

/// Read and fully validate a dataset file.
pub fn read_dataset<R: BufRead>(r: &mut R) -> Result<(DatasetHeader, Vec<TrainingSample>), DataPrepError> {
    let mut lines = r.lines();
    let header_line = lines
        .next()
        .ok_or_else(|| DataPrepError::InvalidDataset("empty dataset file".into()))??;
    let header: DatasetHeader = serde_json::from_str(&header_line)
        .map_err(|e| DataPrepError::InvalidDataset(format!("bad header: {e}")))?;
    if header.format != DATASET_FORMAT {
        return Err(DataPrepError::InvalidDataset(format!(
            "expected format '{DATASET_FORMAT}', got '{}'",
            header.format
        )));
    }
    let mut samples = Vec::new();
    for line in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let sample: TrainingSample = serde_json::from_str(&line)
            .map_err(|e| DataPrepError::InvalidDataset(format!("bad record: {e}")))?;
        validate_sample(&sample, header.k)?;
        samples.push(sample);
    }
    Ok((header, samples))
}
