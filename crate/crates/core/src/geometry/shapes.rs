//! Parametric outline generators and polyline helpers.

use super::Point;

/// Uniform arc-length resampling of a closed polyline.
pub fn resample_closed(pts: &[Point], n: usize) -> Vec<Point> {
    let m = pts.len();
    let mut cum = vec![0.0; m + 1];
    for k in 0..m {
        cum[k + 1] = cum[k] + pts[k].dist(pts[(k + 1) % m]);
    }
    let total = cum[m];
    if total <= 0.0 {
        return pts.to_vec();
    }
    let mut out = Vec::with_capacity(n);
    let mut seg = 0usize;
    for k in 0..n {
        let s = total * k as f64 / n as f64;
        while seg + 1 < m && cum[seg + 1] < s {
            seg += 1;
        }
        let span = cum[seg + 1] - cum[seg];
        let frac = if span > 0.0 { (s - cum[seg]) / span } else { 0.0 };
        let a = pts[seg];
        let b = pts[(seg + 1) % m];
        out.push(a + (b - a).scale(frac));
    }
    out
}

/// `n` points on a circle, clockwise from the top (y-up convention).
pub fn circle_outline(center: Point, radius: f64, n: usize) -> Vec<Point> {
    (0..n)
        .map(|k| {
            let theta = std::f64::consts::FRAC_PI_2 - 2.0 * std::f64::consts::PI * k as f64 / n as f64;
            Point::new(center.x + radius * theta.cos(), center.y + radius * theta.sin())
        })
        .collect()
}

/// Two-lobed outline with a thin neck: lobes of radius `lobe_r` centered at
/// `center ± (half_gap, 0)`, bridged by a band of half-width `neck_w`.
/// Returned clockwise; suitable input for `fit_spline`.
pub fn dumbbell_outline(center: Point, lobe_r: f64, half_gap: f64, neck_w: f64, n: usize) -> Vec<Point> {
    let half = |x: f64| -> f64 {
        let l = lobe_half_height(x, -half_gap, lobe_r);
        let r = lobe_half_height(x, half_gap, lobe_r);
        let neck = if x.abs() <= half_gap { neck_w } else { 0.0 };
        l.max(r).max(neck)
    };
    let x_min = -half_gap - lobe_r;
    let x_max = half_gap + lobe_r;
    let m = n / 2;
    let mut pts = Vec::with_capacity(2 * m);
    // Top edge left-to-right, then bottom edge right-to-left: clockwise.
    for k in 0..m {
        let x = x_min + (x_max - x_min) * (k as f64 + 0.5) / m as f64;
        pts.push(Point::new(center.x + x, center.y + half(x)));
    }
    for k in 0..m {
        let x = x_max - (x_max - x_min) * (k as f64 + 0.5) / m as f64;
        pts.push(Point::new(center.x + x, center.y - half(x)));
    }
    pts
}

fn lobe_half_height(x: f64, cx: f64, r: f64) -> f64 {
    let d = x - cx;
    if d.abs() >= r {
        0.0
    } else {
        (r * r - d * d).sqrt()
    }
}

/// Smooth star-shaped outline: a circle with seeded radial Fourier wobble.
/// Used for randomized property tests; always simple for small amplitude.
pub fn wobbly_outline(
    center: Point,
    radius: f64,
    amplitude: f64,
    harmonics: &[(f64, f64)],
    n: usize,
) -> Vec<Point> {
    (0..n)
        .map(|k| {
            let theta = std::f64::consts::FRAC_PI_2 - 2.0 * std::f64::consts::PI * k as f64 / n as f64;
            let mut r = radius;
            for (h, (a, phase)) in harmonics.iter().enumerate() {
                r += amplitude * a * ((h as f64 + 2.0) * theta + phase).sin();
            }
            Point::new(center.x + r * theta.cos(), center.y + r * theta.sin())
        })
        .collect()
}
