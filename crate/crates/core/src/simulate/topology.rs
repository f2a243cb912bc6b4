//! Topological events: neck splitting and overlap merging.

use super::{DropState, SimulateError};
use crate::dataprep::{GradientProfile, SequenceFrame};
use crate::geometry::shapes::resample_closed;
use crate::geometry::{fit_spline, Contour, Point, SplitConfig, CONTROL_POINTS, DENSE_SAMPLES};

/// Neck location: the control-point pair minimizing Euclidean distance minus
/// curvilinear distance, over pairs with nearly opposite normals
/// (`n_i · n_j < delta`) at least `min_separation` indices apart. Exhaustive
/// over all pairs; ties take the lexicographically smallest `(i, j)`.
pub fn find_split_pair(
    contour: &Contour,
    cfg: &SplitConfig,
) -> Result<(usize, usize), SimulateError> {
    let normals = contour.inward_normals()?;
    let pts = contour.control_points();
    let mut best: Option<((usize, usize), f64)> = None;
    for i in 0..CONTROL_POINTS {
        for j in i + 1..CONTROL_POINTS {
            let gap = (j - i).min(CONTROL_POINTS - (j - i));
            if gap < cfg.min_separation() {
                continue;
            }
            if normals[i].dot(normals[j]) >= cfg.delta() {
                continue;
            }
            let cost = pts[i].dist(pts[j]) - contour.arc_length_between(i, j);
            if best.is_none_or(|(_, c)| cost < c) {
                best = Some(((i, j), cost));
            }
        }
    }
    best.map(|(pair, _)| pair).ok_or(SimulateError::NoValidPair)
}

/// Cut a drop along the chord between control points `pair`, rewriting all K
/// history entries so both children carry full histories. Volume divides in
/// proportion to the children's newest-step areas.
pub fn split_drop(
    state: &DropState,
    pair: (usize, usize),
    child_ids: (usize, usize),
) -> Result<(DropState, DropState), SimulateError> {
    let k = state.k();
    let mut frames_a = std::collections::VecDeque::with_capacity(k);
    let mut frames_b = std::collections::VecDeque::with_capacity(k);
    for f in state.history() {
        let (fa, fb) = cut_frame(f, pair)?;
        frames_a.push_back(fa);
        frames_b.push_back(fb);
    }

    let area_a = frames_a.back().unwrap().contour.enclosed_area()?;
    let area_b = frames_b.back().unwrap().contour.enclosed_area()?;
    let parent_area = state.newest().contour.enclosed_area()?;
    if area_a < 0.01 * parent_area || area_b < 0.01 * parent_area {
        return Err(SimulateError::DegenerateChild);
    }
    let vol_a = state.volume * area_a / (area_a + area_b);
    let vol_b = state.volume - vol_a;
    Ok((
        DropState::from_frames(child_ids.0, frames_a, vol_a),
        DropState::from_frames(child_ids.1, frames_b, vol_b),
    ))
}

/// Split one history frame at the chord between the parameter locations of
/// control points `(i, j)`; each piece is closed with the chord, refit, and
/// given gradients interpolated from the parent profile by arc position.
fn cut_frame(
    frame: &SequenceFrame,
    (i, j): (usize, usize),
) -> Result<(SequenceFrame, SequenceFrame), SimulateError> {
    let contour = &frame.contour;
    let dense = contour.dense_samples();
    let p_i = contour.point_at(i as f64);
    let p_j = contour.point_at(j as f64);
    let f_i = i as f64 * DENSE_SAMPLES as f64 / CONTROL_POINTS as f64;
    let f_j = j as f64 * DENSE_SAMPLES as f64 / CONTROL_POINTS as f64;

    let collect_arc = |from: f64, to: f64| -> Vec<Point> {
        // Dense samples strictly inside the sample-index arc (from, to),
        // walking forward with wraparound.
        let to = if to > from { to } else { to + DENSE_SAMPLES as f64 };
        let mut pts = Vec::new();
        let mut k = from.floor() + 1.0;
        while k < to {
            pts.push(dense[k as usize % DENSE_SAMPLES]);
            k += 1.0;
        }
        pts
    };

    let mut piece_a = vec![p_i];
    piece_a.extend(collect_arc(f_i, f_j));
    piece_a.push(p_j);
    let mut piece_b = vec![p_j];
    piece_b.extend(collect_arc(f_j, f_i));
    piece_b.push(p_i);

    let make_child = |piece: Vec<Point>| -> Result<SequenceFrame, SimulateError> {
        let samples = resample_closed(&piece, DENSE_SAMPLES);
        let (child, _) = fit_spline(&samples)?;
        let gradient = interpolate_gradient(&child, &dense, frame.gradient.mags())?;
        Ok(SequenceFrame {
            center: child.centroid(),
            contour: child,
            gradient,
        })
    };
    Ok((make_child(piece_a)?, make_child(piece_b)?))
}

/// Gradient at each new control point: parent profile interpolated at the
/// arc position of the nearest parent dense sample.
fn interpolate_gradient(
    child: &Contour,
    parent_dense: &[Point],
    parent_mags: &[f64],
) -> Result<GradientProfile, SimulateError> {
    let parent_profile = GradientProfile::new(parent_mags.to_vec())?;
    let mags = (0..CONTROL_POINTS)
        .map(|ci| {
            let p = child.point_at(ci as f64);
            let mut best = (f64::MAX, 0usize);
            for (k, q) in parent_dense.iter().enumerate() {
                let d = q.dist(p);
                if d < best.0 {
                    best = (d, k);
                }
            }
            let arc_pos = best.1 as f64 * CONTROL_POINTS as f64 / parent_dense.len() as f64;
            parent_profile.interpolate(arc_pos)
        })
        .collect();
    Ok(GradientProfile::new(mags)?)
}

/// Merge two overlapping drops: keep each contour's dense samples that lie
/// outside the other, stitch them in clockwise order, refit, and cold start
/// the result with the summed volume.
pub fn merge_drops(
    a: &DropState,
    b: &DropState,
    new_id: usize,
    k: usize,
) -> Result<DropState, SimulateError> {
    let ca = &a.newest().contour;
    let cb = &b.newest().contour;
    let (a_in_b, b_in_a) = ca.overlap_samples(cb);
    if a_in_b.is_empty() && b_in_a.is_empty() {
        return Err(SimulateError::NoOverlap);
    }

    let dense_a = ca.dense_samples();
    let dense_b = cb.dense_samples();
    let union: Vec<(Point, u8, usize)>;
    if a_in_b.len() == DENSE_SAMPLES {
        // a is swallowed by b.
        union = dense_b.iter().enumerate().map(|(k, &p)| (p, 1, k)).collect();
    } else if b_in_a.len() == DENSE_SAMPLES {
        union = dense_a.iter().enumerate().map(|(k, &p)| (p, 0, k)).collect();
    } else {
        let run_a = contiguous_outside_run(&a_in_b)?;
        let run_b = contiguous_outside_run(&b_in_a)?;
        let mut u: Vec<(Point, u8, usize)> = Vec::with_capacity(run_a.len() + run_b.len());
        u.extend(run_a.iter().map(|&k| (dense_a[k], 0u8, k)));
        u.extend(run_b.iter().map(|&k| (dense_b[k], 1u8, k)));
        union = u;
    }
    if union.len() < CONTROL_POINTS {
        return Err(SimulateError::StitchFailure);
    }

    let outline: Vec<Point> = union.iter().map(|&(p, _, _)| p).collect();
    let samples = resample_closed(&outline, DENSE_SAMPLES);
    let (merged, _) = fit_spline(&samples)?;
    merged.validate_simple()?;

    // Gradient at each new control point from the nearest surviving parent
    // sample's profile.
    let profiles = [a.newest().gradient.clone(), b.newest().gradient.clone()];
    let mags: Vec<f64> = (0..CONTROL_POINTS)
        .map(|ci| {
            let p = merged.point_at(ci as f64);
            let mut best = (f64::MAX, 0u8, 0usize);
            for &(q, parent, idx) in &union {
                let d = q.dist(p);
                if d < best.0 {
                    best = (d, parent, idx);
                }
            }
            let arc_pos = best.2 as f64 * CONTROL_POINTS as f64 / DENSE_SAMPLES as f64;
            profiles[best.1 as usize].interpolate(arc_pos)
        })
        .collect();
    let gradient = GradientProfile::new(mags)?;

    let frame = SequenceFrame {
        center: merged.centroid(),
        contour: merged,
        gradient,
    };
    Ok(DropState::from_frames(
        new_id,
        std::iter::repeat(frame).take(k).collect(),
        a.volume + b.volume,
    ))
}

/// The sample indices outside the other contour must form exactly one
/// contiguous cyclic run; return them rotated into run order.
fn contiguous_outside_run(inside: &[usize]) -> Result<Vec<usize>, SimulateError> {
    let mut is_inside = [false; DENSE_SAMPLES];
    for &k in inside {
        is_inside[k] = true;
    }
    // Count inside->outside transitions around the loop.
    let mut transitions = 0;
    let mut run_start = None;
    for k in 0..DENSE_SAMPLES {
        let prev = is_inside[(k + DENSE_SAMPLES - 1) % DENSE_SAMPLES];
        if prev && !is_inside[k] {
            transitions += 1;
            run_start = Some(k);
        }
    }
    if transitions != 1 {
        return Err(SimulateError::StitchFailure);
    }
    let start = run_start.unwrap();
    let mut run = Vec::new();
    let mut k = start;
    while !is_inside[k] {
        run.push(k);
        k = (k + 1) % DENSE_SAMPLES;
        if k == start {
            break;
        }
    }
    Ok(run)
}
