//! Sampled geometric queries: area, containment, overlap, arc length,
//! normals, simplicity.

use super::{Contour, GeometryError, Point, CONTROL_POINTS};

/// Shoelace signed area of a closed polyline (positive = counter-clockwise
/// under the y-up convention).
pub(super) fn signed_area(pts: &[Point]) -> f64 {
    let mut a = 0.0;
    for k in 0..pts.len() {
        let p = pts[k];
        let q = pts[(k + 1) % pts.len()];
        a += p.x * q.y - q.x * p.y;
    }
    a / 2.0
}

impl Contour {
    /// Signed shoelace area of the dense polyline (negative for the
    /// canonical clockwise orientation), with no simplicity check. For
    /// diagnostics; use [`Contour::enclosed_area`] for validated queries.
    pub fn signed_sample_area(&self) -> f64 {
        signed_area(&self.dense_samples())
    }

    /// Positive enclosed area of the dense polyline.
    pub fn enclosed_area(&self) -> Result<f64, GeometryError> {
        let pts = self.dense_samples();
        let a = signed_area(&pts).abs();
        if a < 1e-12 {
            return Err(GeometryError::DegenerateLoop);
        }
        self.validate_simple()?;
        Ok(a)
    }

    /// Check that the dense polyline does not self-intersect.
    pub fn validate_simple(&self) -> Result<(), GeometryError> {
        let pts = self.dense_samples();
        let n = pts.len();
        for i in 0..n {
            let a = pts[i];
            let b = pts[(i + 1) % n];
            for j in i + 2..n {
                // Skip the shared-endpoint neighbors (wrapping pair included).
                if i == 0 && j == n - 1 {
                    continue;
                }
                let c = pts[j];
                let d = pts[(j + 1) % n];
                if segments_cross(a, b, c, d) {
                    return Err(GeometryError::SelfIntersecting);
                }
            }
        }
        Ok(())
    }

    /// Unit normals at the 52 control-point parameter locations, pointing
    /// into the enclosed region.
    pub fn inward_normals(&self) -> Result<Vec<Point>, GeometryError> {
        let mut out = Vec::with_capacity(CONTROL_POINTS);
        for i in 0..CONTROL_POINTS {
            let d = self.derivative_at(i as f64);
            let len = d.norm();
            if len < 1e-12 {
                return Err(GeometryError::DegenerateTangent(i));
            }
            // Clockwise orientation puts the interior on the right of travel.
            out.push(Point::new(d.y / len, -d.x / len));
        }
        Ok(out)
    }

    /// Shorter-way arc length along the dense polyline between the parameter
    /// locations of control points `i` and `j`.
    pub fn arc_length_between(&self, i: usize, j: usize) -> f64 {
        assert!(i < CONTROL_POINTS && j < CONTROL_POINTS);
        if i == j {
            return 0.0;
        }
        let pts = self.dense_samples();
        let n = pts.len();
        let mut cum = vec![0.0; n + 1];
        for k in 0..n {
            cum[k + 1] = cum[k] + pts[k].dist(pts[(k + 1) % n]);
        }
        let total = cum[n];
        let at = |ci: usize| -> f64 {
            let f = ci as f64 * n as f64 / CONTROL_POINTS as f64;
            let k = f.floor() as usize;
            let frac = f - k as f64;
            let seg = cum[(k + 1).min(n)] - cum[k.min(n)];
            cum[k.min(n)] + frac * seg
        };
        let (si, sj) = (at(i), at(j));
        let fwd = (si.max(sj) - si.min(sj)).abs();
        fwd.min(total - fwd)
    }

    /// Even-odd containment against the dense polyline; points within 1e-9
    /// of the boundary count as inside.
    pub fn contains(&self, p: Point) -> bool {
        let pts = self.dense_samples();
        point_in_polyline(&pts, p)
    }

    /// For each contour, the dense-sample indices that fall inside the other.
    pub fn overlap_samples(&self, other: &Contour) -> (Vec<usize>, Vec<usize>) {
        let a = self.dense_samples();
        let b = other.dense_samples();
        let a_in_b: Vec<usize> = (0..a.len()).filter(|&k| point_in_polyline(&b, a[k])).collect();
        let b_in_a: Vec<usize> = (0..b.len()).filter(|&k| point_in_polyline(&a, b[k])).collect();
        (a_in_b, b_in_a)
    }
}

pub(crate) fn point_in_polyline(pts: &[Point], p: Point) -> bool {
    let n = pts.len();
    for k in 0..n {
        if dist_to_segment(p, pts[k], pts[(k + 1) % n]) <= 1e-9 {
            return true;
        }
    }
    let mut inside = false;
    for k in 0..n {
        let a = pts[k];
        let b = pts[(k + 1) % n];
        if (a.y > p.y) != (b.y > p.y) {
            let x = a.x + (p.y - a.y) / (b.y - a.y) * (b.x - a.x);
            if x > p.x {
                inside = !inside;
            }
        }
    }
    inside
}

pub(crate) fn dist_to_segment(p: Point, a: Point, b: Point) -> f64 {
    let ab = b - a;
    let len2 = ab.dot(ab);
    if len2 == 0.0 {
        return p.dist(a);
    }
    let t = ((p - a).dot(ab) / len2).clamp(0.0, 1.0);
    p.dist(a + ab.scale(t))
}

fn orient(a: Point, b: Point, c: Point) -> f64 {
    (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x)
}

/// Proper crossing test for non-adjacent segments, including collinear overlap.
fn segments_cross(a: Point, b: Point, c: Point, d: Point) -> bool {
    let d1 = orient(c, d, a);
    let d2 = orient(c, d, b);
    let d3 = orient(a, b, c);
    let d4 = orient(a, b, d);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
        && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
    {
        return true;
    }
    // Collinear overlap counts as a violation of simplicity.
    let eps = 1e-15;
    if d1.abs() < eps && d2.abs() < eps && d3.abs() < eps && d4.abs() < eps {
        let (lo1, hi1) = minmax(project_1d(a, b, a), project_1d(a, b, b));
        let (lo2, hi2) = minmax(project_1d(a, b, c), project_1d(a, b, d));
        return hi1 > lo2 + eps && hi2 > lo1 + eps;
    }
    false
}

fn project_1d(a: Point, b: Point, p: Point) -> f64 {
    (p - a).dot(b - a)
}

fn minmax(a: f64, b: f64) -> (f64, f64) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}
