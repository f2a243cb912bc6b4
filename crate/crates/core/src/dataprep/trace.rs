//! Sub-pixel contour tracing: connected components, hole filling, one box
//! smoothing pass, and marching squares at the 0.5 level.

use super::image::Mask;
use crate::geometry::Point;
use std::collections::BTreeMap;

const MIN_COMPONENT_AREA: usize = 16;

/// One closed sample loop per foreground component (outer boundary only),
/// ordered along the boundary, in scene coordinates. Components smaller than
/// 16 pixels are discarded. Loops are sorted by topmost point.
pub fn trace_contours(mask: &Mask) -> Vec<Vec<Point>> {
    let scale = mask.width.max(mask.height) as f64;
    let to_scene = |(x, y): (f64, f64)| {
        Point::new((x + 0.5) / scale, (mask.height as f64 - y - 0.5) / scale)
    };
    let mut loops = Vec::new();
    for comp in components(mask) {
        if comp.count() < MIN_COMPONENT_AREA {
            continue;
        }
        let solid = fill_holes(&comp);
        let field = box_smooth(&solid);
        let mut comp_loops = marching_squares(&field, mask.width, mask.height);
        if comp_loops.is_empty() {
            continue;
        }
        // The filled component has a single outer boundary; if smoothing
        // fragments it, keep the longest loop.
        comp_loops.sort_by(|a, b| b.len().cmp(&a.len()));
        let px_loop = comp_loops.swap_remove(0);
        if px_loop.len() < 8 {
            continue;
        }
        loops.push(px_loop.into_iter().map(to_scene).collect::<Vec<Point>>());
    }
    loops.sort_by(|a, b| {
        let ta = topmost(a);
        let tb = topmost(b);
        tb.y.partial_cmp(&ta.y)
            .unwrap()
            .then(ta.x.partial_cmp(&tb.x).unwrap())
    });
    loops
}

fn topmost(pts: &[Point]) -> Point {
    let mut best = pts[0];
    for p in pts {
        if p.y > best.y || (p.y == best.y && p.x < best.x) {
            best = *p;
        }
    }
    best
}

/// 8-connected foreground components, each returned as its own mask.
fn components(mask: &Mask) -> Vec<Mask> {
    let (w, h) = (mask.width, mask.height);
    let mut seen = vec![false; w * h];
    let mut out = Vec::new();
    for row in 0..h {
        for col in 0..w {
            if !mask.get(col, row) || seen[row * w + col] {
                continue;
            }
            let mut comp = Mask::new(w, h);
            let mut stack = vec![(col, row)];
            seen[row * w + col] = true;
            while let Some((c, r)) = stack.pop() {
                comp.set(c, r, true);
                for dr in -1isize..=1 {
                    for dc in -1isize..=1 {
                        let nc = c as isize + dc;
                        let nr = r as isize + dr;
                        if nc < 0 || nr < 0 || nc as usize >= w || nr as usize >= h {
                            continue;
                        }
                        let (nc, nr) = (nc as usize, nr as usize);
                        if mask.get(nc, nr) && !seen[nr * w + nc] {
                            seen[nr * w + nc] = true;
                            stack.push((nc, nr));
                        }
                    }
                }
            }
            out.push(comp);
        }
    }
    out
}

/// Fill interior holes: background not reachable from the border becomes
/// foreground, leaving only the outer boundary.
fn fill_holes(mask: &Mask) -> Mask {
    let (w, h) = (mask.width, mask.height);
    let mut outside = vec![false; w * h];
    let mut stack = Vec::new();
    for col in 0..w {
        for row in [0, h - 1] {
            if !mask.get(col, row) && !outside[row * w + col] {
                outside[row * w + col] = true;
                stack.push((col, row));
            }
        }
    }
    for row in 0..h {
        for col in [0, w - 1] {
            if !mask.get(col, row) && !outside[row * w + col] {
                outside[row * w + col] = true;
                stack.push((col, row));
            }
        }
    }
    while let Some((c, r)) = stack.pop() {
        for (dc, dr) in [(1isize, 0isize), (-1, 0), (0, 1), (0, -1)] {
            let nc = c as isize + dc;
            let nr = r as isize + dr;
            if nc < 0 || nr < 0 || nc as usize >= w || nr as usize >= h {
                continue;
            }
            let (nc, nr) = (nc as usize, nr as usize);
            if !mask.get(nc, nr) && !outside[nr * w + nc] {
                outside[nr * w + nc] = true;
                stack.push((nc, nr));
            }
        }
    }
    let mut filled = Mask::new(w, h);
    for row in 0..h {
        for col in 0..w {
            filled.set(col, row, mask.get(col, row) || !outside[row * w + col]);
        }
    }
    filled
}

/// One 3x3 box-average pass over the 0/1 indicator, giving the smoothed
/// intensity the crossings are interpolated on. Outside the image is 0.
fn box_smooth(mask: &Mask) -> Vec<f64> {
    let (w, h) = (mask.width, mask.height);
    let mut out = vec![0.0; w * h];
    for row in 0..h {
        for col in 0..w {
            let mut sum = 0.0;
            for dr in -1isize..=1 {
                for dc in -1isize..=1 {
                    let nc = col as isize + dc;
                    let nr = row as isize + dr;
                    if nc >= 0 && nr >= 0 && (nc as usize) < w && (nr as usize) < h {
                        sum += mask.get(nc as usize, nr as usize) as u8 as f64;
                    }
                }
            }
            out[row * w + col] = sum / 9.0;
        }
    }
    out
}

const ISO: f64 = 0.5;

/// Edge of the node grid; `horizontal` edges join (c,r)-(c+1,r).
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
struct EdgeId {
    r: i32,
    c: i32,
    horizontal: bool,
}

/// March the 0.5 iso-contour of a smoothed field sampled at pixel centers,
/// returning closed loops of sub-pixel (col, row) positions. The field is
/// padded with zeros so boundary loops close.
fn marching_squares(field: &[f64], w: usize, h: usize) -> Vec<Vec<(f64, f64)>> {
    let value = |c: i32, r: i32| -> f64 {
        if c < 0 || r < 0 || c >= w as i32 || r >= h as i32 {
            0.0
        } else {
            field[r as usize * w + c as usize]
        }
    };
    let inside = |v: f64| v >= ISO;
    let crossing = |c: i32, r: i32, horizontal: bool| -> (f64, f64) {
        let (va, vb) = if horizontal {
            (value(c, r), value(c + 1, r))
        } else {
            (value(c, r), value(c, r + 1))
        };
        let t = (ISO - va) / (vb - va);
        if horizontal {
            (c as f64 + t, r as f64)
        } else {
            (c as f64, r as f64 + t)
        }
    };

    // Directed segments keyed by entry edge: entry -> exit within one cell,
    // oriented so the inside region is on the left of travel (image coords).
    let mut segments: BTreeMap<EdgeId, EdgeId> = BTreeMap::new();
    for r in -1..h as i32 {
        for c in -1..w as i32 {
            let tl = value(c, r);
            let tr = value(c + 1, r);
            let br = value(c + 1, r + 1);
            let bl = value(c, r + 1);
            let top = EdgeId { r, c, horizontal: true };
            let bottom = EdgeId { r: r + 1, c, horizontal: true };
            let left = EdgeId { r, c, horizontal: false };
            let right = EdgeId { r, c: c + 1, horizontal: false };

            let case = (inside(tl) as u8) << 3
                | (inside(tr) as u8) << 2
                | (inside(br) as u8) << 1
                | inside(bl) as u8;
            let pairs: &[(EdgeId, EdgeId)] = match case {
                0 | 15 => &[],
                8 => &[(left, top)],
                4 => &[(top, right)],
                2 => &[(right, bottom)],
                1 => &[(bottom, left)],
                12 => &[(left, right)],
                3 => &[(right, left)],
                9 => &[(bottom, top)],
                6 => &[(top, bottom)],
                14 => &[(left, bottom)],
                13 => &[(bottom, right)],
                11 => &[(right, top)],
                7 => &[(top, left)],
                // Saddles: the center average picks which corners connect.
                5 => {
                    if inside((tl + tr + br + bl) / 4.0) {
                        &[(top, left), (bottom, right)]
                    } else {
                        &[(top, right), (bottom, left)]
                    }
                }
                10 => {
                    if inside((tl + tr + br + bl) / 4.0) {
                        &[(right, top), (left, bottom)]
                    } else {
                        &[(left, top), (right, bottom)]
                    }
                }
                _ => unreachable!(),
            };
            for &(a, b) in pairs {
                segments.insert(a, b);
            }
        }
    }

    // Chain segments into loops; BTreeMap iteration keeps this deterministic.
    let mut loops = Vec::new();
    let mut visited: std::collections::BTreeSet<EdgeId> = std::collections::BTreeSet::new();
    let starts: Vec<EdgeId> = segments.keys().copied().collect();
    for start in starts {
        if visited.contains(&start) {
            continue;
        }
        let mut pts = Vec::new();
        let mut cur = start;
        loop {
            visited.insert(cur);
            pts.push(crossing(cur.c, cur.r, cur.horizontal));
            let Some(&next) = segments.get(&cur) else {
                break;
            };
            cur = next;
            if cur == start {
                loops.push(pts);
                break;
            }
        }
    }
    loops
}

