//! Frame-to-frame contour association by dense-sample overlap.

use super::DataPrepError;
use crate::geometry::Contour;

/// Minimum dense samples of one contour inside the other to count as overlap.
const OVERLAP_SAMPLES: usize = 8;

/// Association events between contours of consecutive frames.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum TrackEvent {
    /// Previous contour `from` became current contour `to`.
    Continue { from: usize, to: usize },
    /// Two previous contours merged into one current contour.
    Merge { from: (usize, usize), to: usize },
    /// One previous contour split into two current contours.
    Split { from: usize, to: (usize, usize) },
    /// Current contour with no previous match.
    New { to: usize },
    /// Previous contour with no current match (ends or leaves the view).
    End { from: usize },
}

/// Classify what happened between two consecutive frames.
///
/// Overlap is measured by dense-sample containment counts; a previous contour
/// overlapping exactly one unclaimed current contour continues, two onto one
/// merge, one onto two split. Any three-way interaction is rejected as
/// ambiguous, reported with the frame index of the *current* frame.
pub fn track(
    prev: &[Contour],
    cur: &[Contour],
    frame: usize,
) -> Result<Vec<TrackEvent>, DataPrepError> {
    let mut overlaps = vec![Vec::new(); prev.len()];
    let mut rev: Vec<Vec<usize>> = vec![Vec::new(); cur.len()];
    for (i, p) in prev.iter().enumerate() {
        for (j, c) in cur.iter().enumerate() {
            let (a_in_b, b_in_a) = p.overlap_samples(c);
            if a_in_b.len().max(b_in_a.len()) >= OVERLAP_SAMPLES {
                overlaps[i].push(j);
                rev[j].push(i);
            }
        }
    }

    for (i, js) in overlaps.iter().enumerate() {
        if js.len() > 2 {
            return Err(DataPrepError::AmbiguousTopology {
                frame,
                detail: format!("contour {i} overlaps {} next-frame contours", js.len()),
            });
        }
    }
    for (j, is) in rev.iter().enumerate() {
        if is.len() > 2 {
            return Err(DataPrepError::AmbiguousTopology {
                frame,
                detail: format!("{} contours overlap next-frame contour {j}", is.len()),
            });
        }
    }

    let mut events = Vec::new();
    let mut prev_done = vec![false; prev.len()];
    let mut cur_done = vec![false; cur.len()];

    // Splits: one previous onto two current, both exclusive.
    for i in 0..prev.len() {
        if overlaps[i].len() == 2 {
            let (j, k) = (overlaps[i][0], overlaps[i][1]);
            if rev[j] != [i] || rev[k] != [i] {
                return Err(DataPrepError::AmbiguousTopology {
                    frame,
                    detail: format!("split of contour {i} entangled with another event"),
                });
            }
            events.push(TrackEvent::Split { from: i, to: (j, k) });
            prev_done[i] = true;
            cur_done[j] = true;
            cur_done[k] = true;
        }
    }
    // Merges: two previous onto one current, both exclusive.
    for j in 0..cur.len() {
        if rev[j].len() == 2 {
            let (i, k) = (rev[j][0], rev[j][1]);
            if overlaps[i] != [j] || overlaps[k] != [j] {
                return Err(DataPrepError::AmbiguousTopology {
                    frame,
                    detail: format!("merge into contour {j} entangled with another event"),
                });
            }
            events.push(TrackEvent::Merge { from: (i, k), to: j });
            prev_done[i] = true;
            prev_done[k] = true;
            cur_done[j] = true;
        }
    }
    // Continuations.
    for i in 0..prev.len() {
        if prev_done[i] || overlaps[i].len() != 1 {
            continue;
        }
        let j = overlaps[i][0];
        if cur_done[j] {
            continue;
        }
        if rev[j] == [i] {
            events.push(TrackEvent::Continue { from: i, to: j });
            prev_done[i] = true;
            cur_done[j] = true;
        }
    }
    for i in 0..prev.len() {
        if !prev_done[i] {
            events.push(TrackEvent::End { from: i });
        }
    }
    for j in 0..cur.len() {
        if !cur_done[j] {
            events.push(TrackEvent::New { to: j });
        }
    }
    Ok(events)
}
