//! Time-stepping engine: per-drop prediction through the three subnets,
//! cold-start initialization with database gradient lookup, neck splitting,
//! overlap merging, incline scaling, and scene orchestration.

mod topology;

pub mod scene;

#[cfg(test)]
mod tests;

pub use scene::{Scene, SceneConfig, Terrain, TerrainField};
pub use topology::{find_split_pair, merge_drops, split_drop};

use crate::dataprep::{DataPrepError, GradientProfile, SequenceFrame, TrackedSequence};
use crate::geometry::{Contour, GeometryError, Point, CONTROL_POINTS};
use crate::neural::{Model, NetKind, NeuralError};
use crate::reconstruct::ReconstructError;
use std::collections::VecDeque;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SimulateError {
    #[error("initialization database is empty")]
    EmptyDatabase,
    #[error("incline angle {0} degrees does not drive flow")]
    DegenerateIncline(f64),
    #[error("non-finite prediction for drop {drop}")]
    NonFinitePrediction { drop: usize },
    #[error("no control-point pair satisfies the split constraint")]
    NoValidPair,
    #[error("split would create a child below 1% of the parent area")]
    DegenerateChild,
    #[error("contours do not overlap")]
    NoOverlap,
    #[error("overlap outline is ambiguous; merge deferred")]
    StitchFailure,
    #[error("invalid scene: {0}")]
    InvalidScene(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Neural(#[from] NeuralError),
    #[error(transparent)]
    DataPrep(#[from] DataPrepError),
    #[error(transparent)]
    Reconstruct(#[from] ReconstructError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// The three trained subnets a scene runs on.
#[derive(Clone, Debug)]
pub struct ModelSet {
    pub contour: Model,
    pub gradient: Model,
    pub breakage: Model,
}

impl ModelSet {
    pub fn new(contour: Model, gradient: Model, breakage: Model) -> Result<Self, SimulateError> {
        for (m, want) in [
            (&contour, NetKind::Contour),
            (&gradient, NetKind::Gradient),
            (&breakage, NetKind::Breakage),
        ] {
            if m.net != want {
                return Err(SimulateError::InvalidScene(format!(
                    "expected a {} model, got {}",
                    want.as_str(),
                    m.net.as_str()
                )));
            }
        }
        Ok(ModelSet {
            contour,
            gradient,
            breakage,
        })
    }
}

/// Per-drop simulation state: a K-deep history of (contour, gradient,
/// center) plus the explicitly tracked volume.
#[derive(Clone, Debug)]
pub struct DropState {
    pub id: usize,
    history: VecDeque<SequenceFrame>,
    pub volume: f64,
    pub alive: bool,
}

impl DropState {
    pub fn k(&self) -> usize {
        self.history.len()
    }

    pub fn newest(&self) -> &SequenceFrame {
        self.history.back().expect("history is never empty")
    }

    pub fn history(&self) -> impl Iterator<Item = &SequenceFrame> {
        self.history.iter()
    }

    fn push(&mut self, frame: SequenceFrame) {
        self.history.pop_front();
        self.history.push_back(frame);
    }

    pub(crate) fn from_frames(
        id: usize,
        frames: VecDeque<SequenceFrame>,
        volume: f64,
    ) -> DropState {
        DropState {
            id,
            history: frames,
            volume,
            alive: true,
        }
    }
}

/// Representative (contour, gradient) pairs used to bootstrap gradient
/// histories for new drops. Entries are deduplicated by normalized contour
/// distance below 1e-3.
#[derive(Clone, Debug, Default, serde::Serialize, serde::Deserialize)]
pub struct InitDatabase {
    entries: Vec<DbEntry>,
}

#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
struct DbEntry {
    contour: Contour,
    gradient: GradientProfile,
    #[serde(skip)]
    normalized: Vec<f64>,
}

pub const INITDB_FORMAT: &str = "nd-initdb v1";

impl InitDatabase {
    pub fn new() -> Self {
        InitDatabase::default()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn insert(&mut self, contour: Contour, gradient: GradientProfile) {
        let normalized = normalize_for_lookup(&contour);
        let duplicate = self.entries.iter().any(|e| {
            l2_distance(&e.normalized, &normalized) < 1e-3
        });
        if !duplicate {
            self.entries.push(DbEntry {
                contour,
                gradient,
                normalized,
            });
        }
    }

    pub fn from_sequences(sequences: &[TrackedSequence]) -> Self {
        let mut db = InitDatabase::new();
        for seq in sequences {
            for frame in &seq.frames {
                db.insert(frame.contour.clone(), frame.gradient.clone());
            }
        }
        db
    }

    /// Index, gradient, and distance of the nearest entry by scale-normalized
    /// mean-centered control points; ties go to the lowest index.
    pub fn lookup(&self, contour: &Contour) -> Result<(usize, &GradientProfile, f64), SimulateError> {
        if self.entries.is_empty() {
            return Err(SimulateError::EmptyDatabase);
        }
        let query = normalize_for_lookup(contour);
        let mut best = (0usize, f64::MAX);
        for (i, e) in self.entries.iter().enumerate() {
            let d = l2_distance(&e.normalized, &query);
            if d < best.1 {
                best = (i, d);
            }
        }
        Ok((best.0, &self.entries[best.0].gradient, best.1))
    }

    pub fn to_json(&self) -> String {
        let entries: Vec<serde_json::Value> = self
            .entries
            .iter()
            .map(|e| {
                serde_json::json!({
                    "contour": e.contour.control_points().iter().map(|p| vec![p.x, p.y]).collect::<Vec<_>>(),
                    "gradient": e.gradient.mags(),
                })
            })
            .collect();
        serde_json::to_string(&serde_json::json!({
            "format": INITDB_FORMAT,
            "entries": entries,
        }))
        .unwrap()
    }

    pub fn from_json(text: &str) -> Result<Self, SimulateError> {
        let root: serde_json::Value = serde_json::from_str(text)
            .map_err(|e| SimulateError::InvalidScene(format!("bad init database: {e}")))?;
        if root.get("format").and_then(|v| v.as_str()) != Some(INITDB_FORMAT) {
            return Err(SimulateError::InvalidScene(
                "init database format mismatch".into(),
            ));
        }
        let mut db = InitDatabase::new();
        let entries = root
            .get("entries")
            .and_then(|v| v.as_array())
            .ok_or_else(|| SimulateError::InvalidScene("init database lacks entries".into()))?;
        for e in entries {
            let pts: Vec<Point> = e
                .get("contour")
                .and_then(|v| v.as_array())
                .ok_or_else(|| SimulateError::InvalidScene("entry lacks contour".into()))?
                .iter()
                .map(|p| {
                    let x = p.get(0).and_then(|v| v.as_f64());
                    let y = p.get(1).and_then(|v| v.as_f64());
                    match (x, y) {
                        (Some(x), Some(y)) => Ok(Point::new(x, y)),
                        _ => Err(SimulateError::InvalidScene("bad contour point".into())),
                    }
                })
                .collect::<Result<_, _>>()?;
            let mags: Vec<f64> = e
                .get("gradient")
                .and_then(|v| v.as_array())
                .ok_or_else(|| SimulateError::InvalidScene("entry lacks gradient".into()))?
                .iter()
                .map(|v| v.as_f64().unwrap_or(f64::NAN))
                .collect();
            db.insert(Contour::new(pts)?, GradientProfile::new(mags)?);
        }
        Ok(db)
    }
}

/// Mean-centered, RMS-radius-normalized control coordinates for lookup.
fn normalize_for_lookup(contour: &Contour) -> Vec<f64> {
    let c = contour.control_centroid();
    let mut coords: Vec<f64> = Vec::with_capacity(2 * CONTROL_POINTS);
    let mut rms = 0.0;
    for p in contour.control_points() {
        let d = *p - c;
        rms += d.dot(d);
        coords.push(d.x);
        coords.push(d.y);
    }
    let rms = (rms / CONTROL_POINTS as f64).sqrt();
    if rms > 0.0 {
        coords.iter_mut().for_each(|v| *v /= rms);
    }
    coords
}

fn l2_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Cold start: replicate the contour K times, borrowing the gradient profile
/// of the database entry with the most similar contour shape.
pub fn init_drop(
    id: usize,
    contour: Contour,
    volume: f64,
    db: &InitDatabase,
    k: usize,
) -> Result<DropState, SimulateError> {
    assert!(k >= 1);
    let (_, gradient, _) = db.lookup(&contour)?;
    let frame = SequenceFrame {
        center: contour.centroid(),
        gradient: gradient.clone(),
        contour,
    };
    Ok(DropState::from_frames(
        id,
        std::iter::repeat(frame).take(k).collect(),
        volume,
    ))
}

/// Incline size factor `s = sin(theta)^(1/3)`.
pub fn incline_scale(theta_deg: f64) -> Result<f64, SimulateError> {
    if !(theta_deg > 0.0 && theta_deg <= 90.0) {
        return Err(SimulateError::DegenerateIncline(theta_deg));
    }
    Ok(theta_deg.to_radians().sin().cbrt())
}

/// Networks were trained at the capture incline; scale relative to it.
pub const TRAINING_INCLINE_DEG: f64 = 30.0;

fn relative_incline_scale(theta_deg: f64) -> Result<f64, SimulateError> {
    Ok(incline_scale(theta_deg)? / incline_scale(TRAINING_INCLINE_DEG).unwrap())
}

/// One prediction step for a drop: scale history into the training frame,
/// run the contour and gradient subnets, unscale, canonicalize, and push the
/// new frame into the history.
pub fn step_drop(
    state: &mut DropState,
    models: &ModelSet,
    theta_avg_deg: f64,
) -> Result<(), SimulateError> {
    let s_rel = relative_incline_scale(theta_avg_deg)?;
    let k = state.k();

    // Scale each history entry about its own center; centers (and hence the
    // motion signal) are unchanged.
    let mut scaled: Vec<SequenceFrame> = Vec::with_capacity(k);
    for f in state.history() {
        let contour = if s_rel == 1.0 {
            f.contour.clone()
        } else {
            f.contour.scaled_about(f.center, s_rel)?
        };
        let gradient = f.gradient.scaled(s_rel)?;
        scaled.push(SequenceFrame {
            contour,
            gradient,
            center: f.center,
        });
    }

    let c_ref = scaled[k - 1].center;
    let c_first = scaled[0].center;
    let mut xs_branch = Vec::with_capacity(k);
    let mut ys_branch = Vec::with_capacity(k);
    let mut center_branch = Vec::with_capacity(k);
    let mut grad_branch = Vec::with_capacity(k);
    let g_scale = models.gradient.io_scale;
    for f in &scaled {
        let pts = f.contour.control_points();
        xs_branch.push(pts.iter().map(|p| p.x - c_ref.x).collect::<Vec<f64>>());
        ys_branch.push(pts.iter().map(|p| p.y - c_ref.y).collect::<Vec<f64>>());
        center_branch.push(vec![f.center.x - c_first.x, f.center.y - c_first.y]);
        grad_branch.push(f.gradient.mags().iter().map(|m| m * g_scale).collect());
    }

    let contour_out = models
        .contour
        .forward(&[xs_branch, ys_branch, center_branch])?;
    let gradient_out = models.gradient.forward(&[grad_branch])?;
    if contour_out.iter().chain(&gradient_out).any(|v| !v.is_finite()) {
        return Err(SimulateError::NonFinitePrediction { drop: state.id });
    }

    let predicted: Vec<Point> = (0..CONTROL_POINTS)
        .map(|i| {
            Point::new(
                contour_out[i] + c_ref.x,
                contour_out[CONTROL_POINTS + i] + c_ref.y,
            )
        })
        .collect();
    let scaled_contour = Contour::new(predicted)?;

    // Back out of the incline frame about the predicted shape's own center.
    let contour = if s_rel == 1.0 {
        scaled_contour
    } else {
        let c = scaled_contour.centroid();
        scaled_contour.scaled_about(c, 1.0 / s_rel)?
    };
    let gradient = GradientProfile::new(
        gradient_out
            .iter()
            .map(|v| (v / g_scale / s_rel).max(0.0))
            .collect(),
    )?;
    let center = contour.centroid();
    state.push(SequenceFrame {
        contour,
        gradient,
        center,
    });
    Ok(())
}

/// Breakage decision on the newest contour: sigmoid output strictly above
/// one half. Features are the mean-centered control coordinates times the
/// model's stored feature scale.
pub fn predict_breakage(state: &DropState, breakage: &Model) -> Result<bool, SimulateError> {
    let contour = &state.newest().contour;
    let c = contour.control_centroid();
    let scale = breakage.io_scale;
    let mut features = Vec::with_capacity(2 * CONTROL_POINTS);
    for p in contour.control_points() {
        features.push((p.x - c.x) * scale);
    }
    for p in contour.control_points() {
        features.push((p.y - c.y) * scale);
    }
    let out = breakage.forward(&[vec![features]])?;
    Ok(out[0] > 0.5)
}
