use super::synth::{synth_generate, SynthParams};
use super::*;
use crate::geometry::shapes::resample_closed;
use crate::geometry::{fit_spline, shapes::circle_outline, Point};
use crate::rng::Rng;

fn flat_frame(w: usize, h: usize, v: u8) -> Frame {
    Frame::new(w, h, vec![v; w * h], 0).unwrap()
}

fn frame_from_fn(w: usize, h: usize, f: impl Fn(usize, usize) -> u8) -> Frame {
    let mut px = Vec::with_capacity(w * h);
    for row in 0..h {
        for col in 0..w {
            px.push(f(col, row));
        }
    }
    Frame::new(w, h, px, 0).unwrap()
}

/// Exhaustive Otsu oracle: recompute both class statistics from the raw
/// pixels for every candidate threshold.
fn otsu_oracle(frame: &Frame) -> u8 {
    let mut best_t = 0u8;
    let mut best = f64::NEG_INFINITY;
    for t in 0..255u16 {
        let (mut n0, mut n1, mut s0, mut s1) = (0f64, 0f64, 0f64, 0f64);
        for &p in frame.pixels() {
            if (p as u16) <= t {
                n0 += 1.0;
                s0 += p as f64;
            } else {
                n1 += 1.0;
                s1 += p as f64;
            }
        }
        if n0 == 0.0 || n1 == 0.0 {
            continue;
        }
        let total = n0 + n1;
        let diff = s0 / n0 - s1 / n1;
        let var = n0 * n1 * diff * diff / (total * total);
        if var > best {
            best = var;
            best_t = t as u8;
        }
    }
    best_t
}

#[test]
fn otsu_bimodal_matches_oracle() {
    let frame = frame_from_fn(32, 32, |col, _| if col < 16 { 10 } else { 200 });
    let t = otsu_threshold(&frame).unwrap();
    assert_eq!(t, otsu_oracle(&frame));
    assert_eq!(t, 10);
}

#[test]
fn otsu_uniform_image_rejected() {
    assert!(matches!(
        otsu_threshold(&flat_frame(16, 16, 99)),
        Err(DataPrepError::UniformImage)
    ));
}

#[test]
fn otsu_matches_oracle_on_random_images() {
    let mut rng = Rng::seed_from(2024);
    for _ in 0..50 {
        let frame = frame_from_fn(64, 64, |_, _| 0).clone();
        let px: Vec<u8> = (0..64 * 64).map(|_| rng.below(256) as u8).collect();
        let frame = Frame::new(frame.width(), frame.height(), px, 0).unwrap();
        assert_eq!(otsu_threshold(&frame).unwrap(), otsu_oracle(&frame));
    }
}

#[test]
fn morph_radius_zero_is_identity() {
    let mut m = Mask::new(20, 20);
    m.set(5, 5, true);
    m.set(10, 12, true);
    assert_eq!(morph_open_close(&m, 0), m);
}

#[test]
fn morph_opening_removes_isolated_pixel() {
    let mut m = Mask::new(20, 20);
    m.set(10, 10, true);
    assert_eq!(morph_open_close(&m, 1).count(), 0);
}

#[test]
fn morph_closing_fills_small_hole() {
    let mut m = Mask::new(24, 24);
    for row in 2..22 {
        for col in 2..22 {
            m.set(col, row, true);
        }
    }
    m.set(12, 12, false);
    let out = morph_open_close(&m, 1);
    assert!(out.get(12, 12), "hole should be closed");
}

#[test]
fn trace_circle_area_matches_analytic() {
    let (w, h, r_px) = (128usize, 128usize, 30.0f64);
    let mut m = Mask::new(w, h);
    for row in 0..h {
        for col in 0..w {
            let dx = col as f64 - 63.5;
            let dy = row as f64 - 63.5;
            m.set(col, row, dx * dx + dy * dy <= r_px * r_px);
        }
    }
    let loops = trace_contours(&m);
    assert_eq!(loops.len(), 1);
    let (contour, _) = fit_spline(&resample_closed(&loops[0], 256)).unwrap();
    let area = contour.enclosed_area().unwrap();
    let want = std::f64::consts::PI * (r_px / 128.0) * (r_px / 128.0);
    assert!(
        (area - want).abs() / want < 0.02,
        "area {area} vs analytic {want}"
    );
}

#[test]
fn trace_empty_mask_gives_no_loops() {
    assert!(trace_contours(&Mask::new(32, 32)).is_empty());
}

#[test]
fn trace_two_blobs_sorted_by_topmost() {
    let mut m = Mask::new(64, 64);
    // Lower-left blob first in scan order; the higher one must sort first.
    for row in 40..52 {
        for col in 6..18 {
            m.set(col, row, true);
        }
    }
    for row in 8..20 {
        for col in 40..52 {
            m.set(col, row, true);
        }
    }
    let loops = trace_contours(&m);
    assert_eq!(loops.len(), 2);
    let top_y = |pts: &[Point]| pts.iter().map(|p| p.y).fold(f64::MIN, f64::max);
    assert!(top_y(&loops[0]) > top_y(&loops[1]));
}

#[test]
fn sobel_on_column_ramp() {
    let frame = frame_from_fn(32, 32, |col, _| col as u8);
    let g = sobel_at(&frame, frame.pixel_to_scene(15.0, 15.0)).unwrap();
    assert!((g.x - 1.0).abs() < 1e-6 && g.y.abs() < 1e-6, "{g:?}");
}

#[test]
fn sobel_on_constant_image_is_zero() {
    let frame = flat_frame(32, 32, 120);
    let g = sobel_at(&frame, frame.pixel_to_scene(16.0, 16.0)).unwrap();
    assert_eq!((g.x, g.y), (0.0, 0.0));
}

#[test]
fn sobel_on_scene_y_ramp() {
    // Intensity grows with scene y (i.e. shrinks with image row).
    let frame = frame_from_fn(64, 64, |_, row| (63 - row) as u8);
    let g = sobel_at(&frame, frame.pixel_to_scene(31.0, 31.0)).unwrap();
    assert!(g.x.abs() < 1e-6 && (g.y - 1.0).abs() < 1e-6, "{g:?}");
}

#[test]
fn sobel_out_of_bounds_is_reported() {
    let frame = flat_frame(32, 32, 0);
    assert!(matches!(
        sobel_at(&frame, Point::new(0.0, 0.5)),
        Err(DataPrepError::OutOfBounds(..))
    ));
}

#[test]
fn gradient_profile_on_cone_is_uniform() {
    // Cone intensity peaked at the center: slope A/R per pixel everywhere.
    let (w, h) = (128usize, 128usize);
    let (a, r_px) = (200.0f64, 40.0f64);
    let frame = frame_from_fn(w, h, |col, row| {
        let dx = col as f64 - 63.5;
        let dy = row as f64 - 63.5;
        let d = (dx * dx + dy * dy).sqrt();
        (a * (1.0 - d / r_px).max(0.0)).round() as u8
    });
    let center = frame.pixel_to_scene(63.5, 63.5);
    let (contour, _) = fit_spline(&circle_outline(center, 0.5 * r_px / 128.0, 256)).unwrap();
    let profile = extract_gradient_profile(&frame, &contour).unwrap();
    let mean: f64 = profile.mags().iter().sum::<f64>() / 52.0;
    let analytic = a / r_px * 128.0;
    assert!(
        (mean - analytic).abs() / analytic < 0.08,
        "mean {mean} vs analytic {analytic}"
    );
    let var: f64 = profile
        .mags()
        .iter()
        .map(|m| (m - mean) * (m - mean))
        .sum::<f64>()
        / 52.0;
    let cv = var.sqrt() / mean;
    assert!(cv < 0.10, "coefficient of variation {cv}");
}

#[test]
fn gradient_profile_constant_frame_is_zero() {
    let frame = flat_frame(128, 128, 90);
    let (contour, _) =
        fit_spline(&circle_outline(Point::new(0.5, 0.5), 0.2, 256)).unwrap();
    let profile = extract_gradient_profile(&frame, &contour).unwrap();
    assert!(profile.mags().iter().all(|&m| m == 0.0));
}

#[test]
fn gradient_profile_outward_gradient_clamps_to_zero() {
    // Bright outside, dark inside: gradient points outward, projection < 0.
    let (w, h) = (128usize, 128usize);
    let frame = frame_from_fn(w, h, |col, row| {
        let dx = col as f64 - 63.5;
        let dy = row as f64 - 63.5;
        let d = (dx * dx + dy * dy).sqrt();
        (200.0 * (d / 64.0).min(1.0)) as u8
    });
    let center = frame.pixel_to_scene(63.5, 63.5);
    let (contour, _) = fit_spline(&circle_outline(center, 0.15, 256)).unwrap();
    let profile = extract_gradient_profile(&frame, &contour).unwrap();
    assert!(profile.mags().iter().all(|&m| m == 0.0));
}

fn circle_contour_at(c: Point, r: f64) -> crate::geometry::Contour {
    fit_spline(&circle_outline(c, r, 256)).unwrap().0
}

#[test]
fn track_same_contour_continues() {
    let c = circle_contour_at(Point::new(0.5, 0.5), 0.1);
    let events = track(&[c.clone()], &[c], 1).unwrap();
    assert_eq!(events, vec![TrackEvent::Continue { from: 0, to: 0 }]);
}

#[test]
fn track_two_onto_one_merges() {
    let a = circle_contour_at(Point::new(0.42, 0.5), 0.08);
    let b = circle_contour_at(Point::new(0.58, 0.5), 0.08);
    let merged = circle_contour_at(Point::new(0.5, 0.5), 0.14);
    let events = track(&[a, b], &[merged], 1).unwrap();
    assert_eq!(
        events,
        vec![TrackEvent::Merge {
            from: (0, 1),
            to: 0
        }]
    );
}

#[test]
fn track_one_onto_two_splits() {
    let parent = circle_contour_at(Point::new(0.5, 0.5), 0.14);
    let a = circle_contour_at(Point::new(0.42, 0.5), 0.08);
    let b = circle_contour_at(Point::new(0.58, 0.5), 0.08);
    let events = track(&[parent], &[a, b], 7).unwrap();
    assert_eq!(events, vec![TrackEvent::Split { from: 0, to: (0, 1) }]);
}

#[test]
fn track_three_way_is_ambiguous() {
    let big = circle_contour_at(Point::new(0.5, 0.5), 0.2);
    let a = circle_contour_at(Point::new(0.40, 0.5), 0.05);
    let b = circle_contour_at(Point::new(0.52, 0.5), 0.05);
    let c = circle_contour_at(Point::new(0.62, 0.5), 0.05);
    let err = track(&[big], &[a, b, c], 3).unwrap_err();
    match err {
        DataPrepError::AmbiguousTopology { frame, .. } => assert_eq!(frame, 3),
        other => panic!("unexpected error {other:?}"),
    }
}

fn constant_sequence(id: usize, len: usize, split_at_end: bool) -> TrackedSequence {
    let contour = circle_contour_at(Point::new(0.5, 0.6), 0.1);
    let frame = SequenceFrame {
        center: contour.centroid(),
        gradient: GradientProfile::zeros(),
        contour,
    };
    TrackedSequence {
        id,
        start_frame: 0,
        frames: vec![frame; len],
        terminal_event: if split_at_end {
            TerminalEvent::Split
        } else {
            TerminalEvent::Ends
        },
        split_frame: split_at_end.then(|| len - 1),
    }
}

#[test]
fn dataset_window_counts() {
    let k = 5;
    let (samples, skipped) = build_dataset(&[constant_sequence(0, k + 1, false)], k).unwrap();
    assert_eq!(samples.len(), 1);
    assert_eq!(skipped, 0);

    let (samples, _) = build_dataset(&[constant_sequence(0, 12, false)], k).unwrap();
    assert_eq!(samples.len(), 12 - k);

    let (samples, skipped) = build_dataset(&[constant_sequence(0, k, false)], k).unwrap();
    assert!(samples.is_empty());
    assert_eq!(skipped, 1);
}

#[test]
fn dataset_breakage_labels_only_final_window() {
    let k = 4;
    let (samples, _) = build_dataset(&[constant_sequence(3, 10, true)], k).unwrap();
    assert_eq!(samples.len(), 6);
    for (i, s) in samples.iter().enumerate() {
        assert_eq!(s.breakage, i == samples.len() - 1, "window {i}");
    }
}

#[test]
fn dataset_round_trips_through_jsonl() {
    let (samples, _) = build_dataset(&[constant_sequence(0, 8, true)], 3).unwrap();
    let mut buf = Vec::new();
    write_dataset(&mut buf, 3, &samples).unwrap();
    let (header, back) = read_dataset(&mut std::io::BufReader::new(&buf[..])).unwrap();
    assert_eq!(header.k, 3);
    assert_eq!(back.len(), samples.len());
    assert_eq!(back[2].inputs, samples[2].inputs);
    assert_eq!(back[2].breakage, samples[2].breakage);
}

#[test]
fn dataset_rejects_bad_header() {
    let data = b"{\"format\":\"nd-dataset v9\",\"k\":3,\"normalization\":\"x\"}\n";
    assert!(read_dataset(&mut std::io::BufReader::new(&data[..])).is_err());
}

fn tiny_params() -> SynthParams {
    SynthParams {
        n_sequences: 1,
        frames: 12,
        width: 128,
        height: 128,
        drops: 1,
        size_range: (0.06, 0.08),
        ..Default::default()
    }
}

#[test]
fn synth_is_deterministic() {
    let params = tiny_params();
    let a = synth_generate(&params, 11).unwrap();
    let b = synth_generate(&params, 11).unwrap();
    assert_eq!(a.len(), b.len());
    for (sa, sb) in a.iter().zip(&b) {
        assert_eq!(sa.frames.len(), sb.frames.len());
        for (fa, fb) in sa.frames.iter().zip(&sb.frames) {
            assert_eq!(fa.pixels(), fb.pixels());
        }
        assert_eq!(
            serde_json::to_string(&sa.truth).unwrap(),
            serde_json::to_string(&sb.truth).unwrap()
        );
    }
}

#[test]
fn synth_larger_drop_descends_faster() {
    // Two drops, areas A and 4A (radius ratio 2), released side by side.
    let params = SynthParams {
        n_sequences: 1,
        frames: 10,
        drops: 2,
        size_range: (0.04, 0.081),
        noise_amplitude: 0.0,
        ..Default::default()
    };
    let seqs = synth_generate(&params, 5).unwrap();
    let truth = &seqs[0].truth;
    assert!(truth.len() >= 2);
    let (big, small) = if truth[0].frames[0].contour.enclosed_area().unwrap()
        > truth[1].frames[0].contour.enclosed_area().unwrap()
    {
        (&truth[0], &truth[1])
    } else {
        (&truth[1], &truth[0])
    };
    let drop_per_step = |s: &TrackedSequence| -> Vec<f64> {
        s.frames
            .windows(2)
            .map(|w| w[0].center.y - w[1].center.y)
            .collect()
    };
    let big_steps = drop_per_step(big);
    let small_steps = drop_per_step(small);
    for (b, s) in big_steps.iter().zip(&small_steps) {
        assert!(b > s, "larger drop must descend strictly faster: {b} vs {s}");
    }
}

#[test]
fn synth_split_labeled_at_threshold_crossing() {
    let params = SynthParams {
        n_sequences: 1,
        frames: 32,
        drops: 1,
        size_range: (0.075, 0.08),
        tail_elongation_rate: 0.02,
        split_elongation_threshold: 0.5,
        ..Default::default()
    };
    let seqs = synth_generate(&params, 3).unwrap();
    let splits: Vec<&TrackedSequence> = seqs[0]
        .truth
        .iter()
        .filter(|s| s.terminal_event == TerminalEvent::Split)
        .collect();
    assert_eq!(splits.len(), 1, "exactly one split event");
    let split = splits[0];
    assert_eq!(split.split_frame, Some(split.frames.len() - 1));
    // Oracle: replay the accelerating elongation recurrence.
    let mut e = 0.0f64;
    let mut frames = 1usize;
    while e < 0.5 {
        let progress = e / 0.5;
        e += 0.02 * (1.0 + 2.0 * progress * progress);
        if e < 0.5 {
            frames += 1;
        }
    }
    assert_eq!(split.frames.len(), frames);
}

#[test]
fn extracted_split_frames_match_truth() {
    // Generator sequences with guaranteed splits; the pixel pipeline must
    // recover the split events within one frame on at least 90% of them.
    let params = SynthParams {
        n_sequences: 2,
        frames: 40,
        drops: 1,
        size_range: (0.07, 0.08),
        tail_elongation_rate: 0.022,
        split_elongation_threshold: 0.5,
        noise_amplitude: 4.0,
        ..Default::default()
    };
    let seqs = synth_generate(&params, 29).unwrap();
    let mut truth_splits = Vec::new();
    let mut got_splits = Vec::new();
    for seq in &seqs {
        for t in &seq.truth {
            if t.terminal_event == TerminalEvent::Split {
                truth_splits.push(t.start_frame + t.split_frame.unwrap());
            }
        }
        let (extracted, _) = pipeline::extract_sequences(&seq.frames).unwrap();
        for t in &extracted {
            if t.terminal_event == TerminalEvent::Split {
                got_splits.push(t.start_frame + t.split_frame.unwrap());
            }
        }
    }
    assert!(!truth_splits.is_empty(), "generator produced no splits");
    let matched = truth_splits
        .iter()
        .filter(|&&tf| got_splits.iter().any(|&gf| gf.abs_diff(tf) <= 1))
        .count();
    let agreement = matched as f64 / truth_splits.len() as f64;
    assert!(
        agreement >= 0.9,
        "split agreement {agreement} (truth {truth_splits:?}, got {got_splits:?})"
    );
}

#[test]
fn trace_fit_rasterize_iou_round_trip() {
    // Blob pixels -> traced loop -> spline -> rasterized mask must overlap
    // the source mask with IoU >= 0.95 for blobs of radius >= 20 px.
    use crate::reconstruct::{CellClass, GridSpec, ReconstructionProblem};
    for &r_px in &[20.0f64, 30.0, 44.0] {
        let (w, h) = (128usize, 128usize);
        let mut mask = Mask::new(w, h);
        for row in 0..h {
            for col in 0..w {
                let dx = col as f64 - 63.5;
                let dy = row as f64 - 63.5;
                mask.set(col, row, dx * dx + dy * dy <= r_px * r_px);
            }
        }
        let loops = trace_contours(&mask);
        assert_eq!(loops.len(), 1);
        let (contour, _) = fit_spline(&resample_closed(&loops[0], 256)).unwrap();
        // Rasterize on the pixel grid itself.
        let grid = GridSpec::new(w, h, 1.0 / w as f64, Point::new(0.0, 0.0)).unwrap();
        let problem = ReconstructionProblem::rasterize(&contour, &GradientProfile::zeros(), grid)
            .unwrap();
        let mut inter = 0usize;
        let mut union = 0usize;
        for row in 0..h {
            for col in 0..w {
                let src = mask.get(col, row);
                // Grid j runs bottom-up while mask rows run top-down.
                let got = problem.cells[grid.index(col, h - 1 - row)] != CellClass::Exterior;
                if src && got {
                    inter += 1;
                }
                if src || got {
                    union += 1;
                }
            }
        }
        let iou = inter as f64 / union as f64;
        assert!(iou >= 0.95, "IoU {iou} at radius {r_px}px");
    }
}

#[test]
fn track_is_symmetric_under_relabeling() {
    let a = circle_contour_at(Point::new(0.3, 0.5), 0.08);
    let b = circle_contour_at(Point::new(0.62, 0.52), 0.09);
    let c = circle_contour_at(Point::new(0.3, 0.48), 0.08);
    let d = circle_contour_at(Point::new(0.63, 0.5), 0.09);
    let base = track(&[a.clone(), b.clone()], &[c.clone(), d.clone()], 1).unwrap();
    let swapped = track(&[b, a], &[d, c], 1).unwrap();
    // Relabel the swapped events back into the base frame's indices.
    let relabel = |e: &TrackEvent| match *e {
        TrackEvent::Continue { from, to } => TrackEvent::Continue { from: 1 - from, to: 1 - to },
        TrackEvent::New { to } => TrackEvent::New { to: 1 - to },
        TrackEvent::End { from } => TrackEvent::End { from: 1 - from },
        TrackEvent::Merge { from, to } => TrackEvent::Merge {
            from: (1 - from.1, 1 - from.0),
            to: 1 - to,
        },
        TrackEvent::Split { from, to } => TrackEvent::Split {
            from: 1 - from,
            to: (1 - to.1, 1 - to.0),
        },
    };
    let mut mapped: Vec<TrackEvent> = swapped.iter().map(relabel).collect();
    let key = |e: &TrackEvent| format!("{e:?}");
    let mut base_sorted = base.clone();
    base_sorted.sort_by_key(key);
    mapped.sort_by_key(key);
    assert_eq!(base_sorted, mapped);
}

#[test]
fn synth_pipeline_extraction_roundtrip() {
    let params = SynthParams {
        n_sequences: 1,
        frames: 8,
        drops: 2,
        noise_amplitude: 4.0,
        ..Default::default()
    };
    let seqs = synth_generate(&params, 21).unwrap();
    let (extracted, stats) = pipeline::extract_sequences(&seqs[0].frames).unwrap();
    assert_eq!(stats.frames, 8);
    assert_eq!(extracted.len(), seqs[0].truth.len());
    // Contours recovered from pixels should sit close to the ground truth.
    let truth0 = &seqs[0].truth[0].frames[0];
    let got0 = extracted
        .iter()
        .flat_map(|s| s.frames.first())
        .min_by(|a, b| {
            a.center
                .dist(truth0.center)
                .partial_cmp(&b.center.dist(truth0.center))
                .unwrap()
        })
        .unwrap();
    assert!(got0.center.dist(truth0.center) < 0.01);
}
