//! dropflow: a learned simulator for small liquid drops on inclined solids.
//!
//! A drop is represented solely by its contact front: a closed cubic B-spline
//! with 52 control points plus per-point color-gradient magnitudes along the
//! inward normals. The pipeline has five stages:
//!
//! * [`geometry`] — the spline contour type and every geometric query
//!   (fitting, sampling, normals, areas, overlap, arc length).
//! * [`dataprep`] — image sequences (real or procedurally generated) to
//!   training records: thresholding, tracing, tracking, gradient extraction.
//! * [`neural`] — a small dense/LSTM sequence-learning framework with BPTT,
//!   SGD+Nesterov and Adam, dropout, and near-miss undersampling; builders
//!   for the three prediction subnets (contour, gradient, breakage).
//! * [`reconstruct`] — biharmonic recovery of the interior color field from
//!   contour + gradient boundary data, height conversion with explicit
//!   volume tracking, smoothing, and triangle-mesh export.
//! * [`simulate`] — the time-stepping engine: per-drop prediction, cold-start
//!   initialization, split/merge topology handling, incline scaling, and
//!   scene orchestration.
//!
//! Everything is deterministic under a fixed seed: identical runs produce
//! byte-identical datasets, models, meshes, and logs.
//!
//! Coordinate convention: scene coordinates are y-up in `[0,1]` units; image
//! row `r` of a `w`×`h` frame maps to `y = (h - r - 0.5) / max(w, h)` and
//! column `c` to `x = (c + 0.5) / max(w, h)`.

pub mod dataprep;
pub mod geometry;
pub mod neural;
pub mod reconstruct;
pub mod rng;
pub mod simulate;

pub use geometry::{Contour, GeometryError, Point, SplitConfig, CONTROL_POINTS, DENSE_SAMPLES};
