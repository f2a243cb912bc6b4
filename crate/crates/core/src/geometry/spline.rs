//! Uniform periodic cubic B-spline evaluation and least-squares fitting.

use super::{query, Contour, GeometryError, Point, CONTROL_POINTS};

/// Cubic B-spline basis weights (order 0..=2 derivatives) on one span.
fn basis(u: f64, order: usize) -> [f64; 4] {
    match order {
        0 => {
            let v = 1.0 - u;
            [
                v * v * v / 6.0,
                (3.0 * u * u * u - 6.0 * u * u + 4.0) / 6.0,
                (-3.0 * u * u * u + 3.0 * u * u + 3.0 * u + 1.0) / 6.0,
                u * u * u / 6.0,
            ]
        }
        1 => {
            let v = 1.0 - u;
            [
                -v * v / 2.0,
                (3.0 * u * u - 4.0 * u) / 2.0,
                (-3.0 * u * u + 2.0 * u + 1.0) / 2.0,
                u * u / 2.0,
            ]
        }
        2 => [1.0 - u, 3.0 * u - 2.0, 1.0 - 3.0 * u, u],
        _ => panic!("derivative order {order} not supported"),
    }
}

/// Evaluate the periodic spline (or a derivative) at parameter `t`.
pub(super) fn eval(ctrl: &[Point], t: f64, order: usize) -> Point {
    let n = ctrl.len() as f64;
    let t = t.rem_euclid(n);
    let seg = t.floor() as usize % ctrl.len();
    let u = t - t.floor();
    let w = basis(u, order);
    let n = ctrl.len();
    let idx = [(seg + n - 1) % n, seg, (seg + 1) % n, (seg + 2) % n];
    let mut p = Point::default();
    for k in 0..4 {
        p = p + ctrl[idx[k]].scale(w[k]);
    }
    p
}

/// Dense samples of a raw (not yet canonical) control polygon.
pub(super) fn sample_raw(ctrl: &[Point], count: usize) -> Vec<Point> {
    let step = ctrl.len() as f64 / count as f64;
    (0..count).map(|k| eval(ctrl, k as f64 * step, 0)).collect()
}

/// Least-squares fit of a canonical 52-point periodic cubic B-spline to an
/// ordered closed polyline, returning the contour and the RMS fit residual.
///
/// Parameters are assigned by cumulative chord length, then corrected by
/// projecting each sample onto the current fit and solving again until the
/// control points stop moving. Exact consecutive duplicates (including a
/// repeated closing point) are dropped.
pub fn fit_spline(samples: &[Point]) -> Result<(Contour, f64), GeometryError> {
    let mut pts: Vec<Point> = Vec::with_capacity(samples.len());
    for &p in samples {
        if !p.is_finite() {
            return Err(GeometryError::NonFinite);
        }
        if pts.last().is_some_and(|q| q.dist(p) == 0.0) {
            continue;
        }
        pts.push(p);
    }
    if pts.len() > 1 && pts[0].dist(pts[pts.len() - 1]) == 0.0 {
        pts.pop();
    }
    if pts.len() < CONTROL_POINTS {
        return Err(GeometryError::InsufficientSamples(pts.len()));
    }
    if query::signed_area(&pts).abs() < 1e-12 {
        return Err(GeometryError::DegenerateLoop);
    }

    // Two parameterization candidates: uniform-in-parameter (exact when the
    // input is a contour's own sample() output) and chord length followed by
    // foot-point correction passes (better for unevenly spaced traces).
    let m = pts.len();
    let uniform: Vec<f64> = (0..m)
        .map(|k| CONTROL_POINTS as f64 * k as f64 / m as f64)
        .collect();
    let uniform_fit = fit_with_params(&pts, uniform)?;

    let mut params = chord_length_params(&pts);
    let mut ctrl = solve_least_squares(&pts, &params)?;
    for _ in 0..4 {
        let corrected: Vec<f64> = pts
            .iter()
            .zip(&params)
            .map(|(p, &t0)| project(&ctrl, *p, t0))
            .collect();
        let next = solve_least_squares(&pts, &corrected)?;
        let moved = ctrl
            .iter()
            .zip(&next)
            .map(|(a, b)| a.dist(*b))
            .fold(0.0, f64::max);
        ctrl = next;
        params = corrected;
        if moved < 1e-13 {
            break;
        }
    }
    let chord_fit = (rms_residual(&ctrl, &pts, &params), ctrl);

    let (rms, ctrl) = if uniform_fit.0 <= chord_fit.0 {
        uniform_fit
    } else {
        chord_fit
    };
    Ok((Contour::new(ctrl)?, rms))
}

fn fit_with_params(pts: &[Point], params: Vec<f64>) -> Result<(f64, Vec<Point>), GeometryError> {
    let ctrl = solve_least_squares(pts, &params)?;
    Ok((rms_residual(&ctrl, pts, &params), ctrl))
}

fn rms_residual(ctrl: &[Point], pts: &[Point], params: &[f64]) -> f64 {
    let mut sq = 0.0;
    for (p, &t) in pts.iter().zip(params) {
        sq += eval(ctrl, t, 0).dist(*p).powi(2);
    }
    (sq / pts.len() as f64).sqrt()
}

fn chord_length_params(pts: &[Point]) -> Vec<f64> {
    let m = pts.len();
    let mut cum = vec![0.0; m];
    for k in 1..m {
        cum[k] = cum[k - 1] + pts[k - 1].dist(pts[k]);
    }
    let total = cum[m - 1] + pts[m - 1].dist(pts[0]);
    cum.iter()
        .map(|&s| CONTROL_POINTS as f64 * s / total)
        .collect()
}

/// Nearest parameter on the spline to `p`; coarse scan seeded at `t0`,
/// then Newton on the foot-point condition.
fn project(ctrl: &[Point], p: Point, t0: f64) -> f64 {
    let n = ctrl.len() as f64;
    // Coarse scan limited to a window around the chord-length guess keeps the
    // projection from jumping branches on near-touching lobes.
    let mut best_t = t0;
    let mut best_d = eval(ctrl, t0, 0).dist(p);
    let span = 2.0;
    let steps = 32;
    for k in 0..=steps {
        let t = t0 - span + 2.0 * span * k as f64 / steps as f64;
        let d = eval(ctrl, t, 0).dist(p);
        if d < best_d {
            best_d = d;
            best_t = t;
        }
    }
    let mut t = best_t;
    for _ in 0..12 {
        let c = eval(ctrl, t, 0);
        let d1 = eval(ctrl, t, 1);
        let d2 = eval(ctrl, t, 2);
        let r = c - p;
        let f = r.dot(d1);
        let fp = d1.dot(d1) + r.dot(d2);
        if fp.abs() < 1e-18 {
            break;
        }
        let step = f / fp;
        t -= step;
        if step.abs() < 1e-13 {
            break;
        }
    }
    t.rem_euclid(n)
}

/// Normal-equations solve of the periodic fit; x and y share the matrix.
fn solve_least_squares(pts: &[Point], params: &[f64]) -> Result<Vec<Point>, GeometryError> {
    let n = CONTROL_POINTS;
    let mut ata = vec![0.0; n * n];
    let mut atx = vec![0.0; n];
    let mut aty = vec![0.0; n];
    for (p, &t) in pts.iter().zip(params) {
        let t = t.rem_euclid(n as f64);
        let seg = t.floor() as usize % n;
        let w = basis(t - t.floor(), 0);
        let idx = [(seg + n - 1) % n, seg, (seg + 1) % n, (seg + 2) % n];
        for a in 0..4 {
            atx[idx[a]] += w[a] * p.x;
            aty[idx[a]] += w[a] * p.y;
            for b in 0..4 {
                ata[idx[a] * n + idx[b]] += w[a] * w[b];
            }
        }
    }
    let chol = cholesky(&mut ata, n).ok_or(GeometryError::InsufficientSamples(pts.len()))?;
    let xs = chol_solve(&chol, n, &atx);
    let ys = chol_solve(&chol, n, &aty);
    Ok(xs
        .into_iter()
        .zip(ys)
        .map(|(x, y)| Point::new(x, y))
        .collect())
}

/// In-place dense Cholesky; returns the lower factor or None if not SPD.
fn cholesky(a: &mut [f64], n: usize) -> Option<Vec<f64>> {
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if s <= 1e-14 {
                    return None;
                }
                l[i * n + i] = s.sqrt();
            } else {
                l[i * n + j] = s / l[j * n + j];
            }
        }
    }
    Some(l)
}

fn chol_solve(l: &[f64], n: usize, b: &[f64]) -> Vec<f64> {
    let mut y = vec![0.0; n];
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= l[i * n + k] * y[k];
        }
        y[i] = s / l[i * n + i];
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let mut s = y[i];
        for k in i + 1..n {
            s -= l[k * n + i] * x[k];
        }
        x[i] = s / l[i * n + i];
    }
    x
}
