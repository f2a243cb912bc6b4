//! Closed B-spline contact-front contours and the geometric queries the
//! pipeline needs.
//!
//! A [`Contour`] is a uniform periodic cubic B-spline with exactly
//! [`CONTROL_POINTS`] control points in canonical form: clockwise under the
//! y-up convention, with control point 0 the topmost (maximum-y) one. Dense
//! queries (area, containment, overlap, arc length) operate on a fixed
//! [`DENSE_SAMPLES`]-point polyline evaluated from the spline.

mod query;
mod spline;

pub mod io;
pub mod shapes;


use thiserror::Error;

pub use spline::fit_spline;

/// Number of control points per contact-front contour.
pub const CONTROL_POINTS: usize = 52;

/// Dense polyline resolution used by every sampled query.
pub const DENSE_SAMPLES: usize = 256;

#[derive(Debug, Error, PartialEq)]
pub enum GeometryError {
    #[error("contour requires {CONTROL_POINTS} control points, got {0}")]
    InvalidControlCount(usize),
    #[error("need at least {CONTROL_POINTS} samples to fit, got {0}")]
    InsufficientSamples(usize),
    #[error("sample loop encloses no area")]
    DegenerateLoop,
    #[error("dense polyline self-intersects")]
    SelfIntersecting,
    #[error("curve tangent vanishes at control point {0}")]
    DegenerateTangent(usize),
    #[error("non-finite coordinate")]
    NonFinite,
    #[error("split threshold delta must lie in [-1, 1), got {0}")]
    InvalidDelta(f64),
    #[error("split min_separation must lie in [2, 25], got {0}")]
    InvalidSeparation(usize),
}

/// 2D point / vector in scene units.
#[derive(Clone, Copy, Debug, Default, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn dot(self, o: Point) -> f64 {
        self.x * o.x + self.y * o.y
    }

    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn dist(self, o: Point) -> f64 {
        (self - o).norm()
    }

    pub fn scale(self, s: f64) -> Point {
        Point::new(self.x * s, self.y * s)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl std::ops::Add for Point {
    type Output = Point;
    fn add(self, o: Point) -> Point {
        Point::new(self.x + o.x, self.y + o.y)
    }
}

impl std::ops::Sub for Point {
    type Output = Point;
    fn sub(self, o: Point) -> Point {
        Point::new(self.x - o.x, self.y - o.y)
    }
}

/// Closed uniform periodic cubic B-spline contour in canonical form.
///
/// Canonical means: dense samples run clockwise (negative signed area, y-up)
/// and control point 0 has maximal y (ties: minimal x, then lowest index).
/// Construction enforces the point count and canonical form; simplicity of
/// the dense polyline is checked by [`Contour::validate_simple`] and by the
/// queries that require it, and reported as [`GeometryError::SelfIntersecting`].
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Contour {
    ctrl: Vec<Point>,
}

impl Contour {
    /// Build a contour from raw control points, canonicalizing them.
    pub fn new(ctrl: Vec<Point>) -> Result<Self, GeometryError> {
        if ctrl.len() != CONTROL_POINTS {
            return Err(GeometryError::InvalidControlCount(ctrl.len()));
        }
        if ctrl.iter().any(|p| !p.is_finite()) {
            return Err(GeometryError::NonFinite);
        }
        Ok(Contour {
            ctrl: canonical_order(ctrl),
        })
    }

    pub fn control_points(&self) -> &[Point] {
        &self.ctrl
    }

    /// Curve point at parameter `t` (periodic over `[0, CONTROL_POINTS)`).
    pub fn point_at(&self, t: f64) -> Point {
        spline::eval(&self.ctrl, t, 0)
    }

    /// First derivative with respect to the spline parameter.
    pub fn derivative_at(&self, t: f64) -> Point {
        spline::eval(&self.ctrl, t, 1)
    }

    /// `n` points uniformly spaced in parameter, clockwise from control
    /// point 0's parameter location.
    pub fn sample(&self, n: usize) -> Vec<Point> {
        assert!(n >= 3, "need at least 3 samples");
        let step = CONTROL_POINTS as f64 / n as f64;
        (0..n).map(|k| self.point_at(k as f64 * step)).collect()
    }

    /// The fixed dense polyline every sampled query runs on.
    pub fn dense_samples(&self) -> Vec<Point> {
        self.sample(DENSE_SAMPLES)
    }

    /// Mean of the dense samples; the per-frame "center" tracked by the
    /// prediction networks.
    pub fn centroid(&self) -> Point {
        let pts = self.dense_samples();
        let mut c = Point::default();
        for p in &pts {
            c = c + *p;
        }
        c.scale(1.0 / pts.len() as f64)
    }

    /// Mean of the control points; used for mean-centering classifier input.
    pub fn control_centroid(&self) -> Point {
        let mut c = Point::default();
        for p in &self.ctrl {
            c = c + *p;
        }
        c.scale(1.0 / CONTROL_POINTS as f64)
    }

    /// Translate and uniformly scale about a fixed point.
    pub fn scaled_about(&self, center: Point, factor: f64) -> Result<Contour, GeometryError> {
        Contour::new(
            self.ctrl
                .iter()
                .map(|p| center + (*p - center).scale(factor))
                .collect(),
        )
    }

    pub fn translated(&self, d: Point) -> Result<Contour, GeometryError> {
        Contour::new(self.ctrl.iter().map(|p| *p + d).collect())
    }
}

/// Canonicalize raw control points: clockwise orientation, topmost first.
pub fn canonicalize(ctrl: Vec<Point>) -> Result<Contour, GeometryError> {
    Contour::new(ctrl)
}

fn canonical_order(mut ctrl: Vec<Point>) -> Vec<Point> {
    // Orientation from the densely sampled curve, not the control polygon.
    let area = query::signed_area(&spline::sample_raw(&ctrl, DENSE_SAMPLES));
    if area > 0.0 {
        ctrl.reverse();
    }
    let mut start = 0usize;
    for (i, p) in ctrl.iter().enumerate() {
        let best = ctrl[start];
        if p.y > best.y || (p.y == best.y && p.x < best.x) {
            start = i;
        }
    }
    ctrl.rotate_left(start);
    ctrl
}

/// Parameters for the neck-finding split optimization.
///
/// `delta` bounds the dot product of the two candidate normals (they must be
/// nearly opposite); `min_separation` culls pairs that are close together in
/// control-point index.
#[derive(Clone, Copy, Debug, serde::Serialize, serde::Deserialize)]
pub struct SplitConfig {
    delta: f64,
    min_separation: usize,
}

impl SplitConfig {
    pub fn new(delta: f64, min_separation: usize) -> Result<Self, GeometryError> {
        if !(-1.0..1.0).contains(&delta) {
            return Err(GeometryError::InvalidDelta(delta));
        }
        if !(2..=25).contains(&min_separation) {
            return Err(GeometryError::InvalidSeparation(min_separation));
        }
        Ok(SplitConfig {
            delta,
            min_separation,
        })
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn min_separation(&self) -> usize {
        self.min_separation
    }
}

impl Default for SplitConfig {
    /// Normals more than 120° apart, at least 6 indices along the front.
    fn default() -> Self {
        SplitConfig {
            delta: -0.5,
            min_separation: 6,
        }
    }
}
