//! Frames to tracked sequences: the full extraction pipeline.

use super::{
    binarize, extract_gradient_profile, morph_open_close, otsu_threshold, trace_contours, track,
    DataPrepError, Frame, SequenceFrame, TerminalEvent, TrackEvent, TrackedSequence,
};
use crate::geometry::shapes::resample_closed;
use crate::geometry::{fit_spline, Contour};

/// Morphology disc radius applied before tracing.
pub const MORPH_RADIUS: usize = 1;

/// Dense resampling applied to traced loops before spline fitting.
const FIT_SAMPLES: usize = 256;

/// Counters reported by the extraction run.
#[derive(Clone, Copy, Debug, Default)]
pub struct ExtractionStats {
    pub frames: usize,
    pub sequences: usize,
    pub splits: usize,
    pub merges: usize,
    pub skipped_blobs: usize,
}

/// Extract tracked contour sequences from an ordered frame list.
pub fn extract_sequences(
    frames: &[Frame],
) -> Result<(Vec<TrackedSequence>, ExtractionStats), DataPrepError> {
    let mut stats = ExtractionStats {
        frames: frames.len(),
        ..Default::default()
    };
    let mut finished: Vec<TrackedSequence> = Vec::new();
    let mut active: Vec<ActiveSeq> = Vec::new();
    let mut next_id = 0usize;
    let mut prev_frame: Vec<ObservedContour> = Vec::new();

    for (t, frame) in frames.iter().enumerate() {
        let cur = observe(frame, &mut stats)?;
        if t == 0 {
            for oc in &cur {
                active.push(ActiveSeq::start(&mut next_id, 0, oc));
            }
            prev_frame = cur;
            continue;
        }
        let prev_contours: Vec<Contour> = prev_frame.iter().map(|o| o.contour.clone()).collect();
        let cur_contours: Vec<Contour> = cur.iter().map(|o| o.contour.clone()).collect();
        let events = track(&prev_contours, &cur_contours, t)?;

        let mut next_active: Vec<Option<ActiveSeq>> = vec![None; cur.len()];
        let mut taken: Vec<bool> = vec![false; active.len()];
        for ev in &events {
            match *ev {
                TrackEvent::Continue { from, to } => {
                    let mut seq = active[from].clone();
                    seq.push(&cur[to]);
                    next_active[to] = Some(seq);
                    taken[from] = true;
                }
                TrackEvent::Split { from, to } => {
                    finished.push(active[from].finish_split());
                    taken[from] = true;
                    stats.splits += 1;
                    for j in [to.0, to.1] {
                        next_active[j] = Some(ActiveSeq::start(&mut next_id, t, &cur[j]));
                    }
                }
                TrackEvent::Merge { from, to } => {
                    for i in [from.0, from.1] {
                        finished.push(active[i].finish(TerminalEvent::Merged));
                        taken[i] = true;
                    }
                    stats.merges += 1;
                    next_active[to] = Some(ActiveSeq::start(&mut next_id, t, &cur[to]));
                }
                TrackEvent::End { from } => {
                    finished.push(active[from].finish(TerminalEvent::Ends));
                    taken[from] = true;
                }
                TrackEvent::New { to } => {
                    next_active[to] = Some(ActiveSeq::start(&mut next_id, t, &cur[to]));
                }
            }
        }
        debug_assert!(taken.iter().all(|&t| t));
        active = next_active.into_iter().flatten().collect();
        prev_frame = cur;
    }

    for seq in active {
        finished.push(seq.finish(TerminalEvent::Ends));
    }
    finished.sort_by_key(|s| s.id);
    stats.sequences = finished.len();
    Ok((finished, stats))
}

#[derive(Clone)]
struct ObservedContour {
    contour: Contour,
    frame_data: SequenceFrame,
}

/// Threshold, clean up, trace, fit, and extract gradients for one frame.
/// Blobs whose fit or gradient extraction fails (e.g. touching the border)
/// are skipped and counted.
fn observe(frame: &Frame, stats: &mut ExtractionStats) -> Result<Vec<ObservedContour>, DataPrepError> {
    let threshold = otsu_threshold(frame)?;
    let mask = morph_open_close(&binarize(frame, threshold), MORPH_RADIUS);
    let mut out = Vec::new();
    for loop_pts in trace_contours(&mask) {
        let resampled = resample_closed(&loop_pts, FIT_SAMPLES);
        let fitted = fit_spline(&resampled).and_then(|(c, _)| {
            c.validate_simple()?;
            Ok(c)
        });
        let contour = match fitted {
            Ok(c) => c,
            Err(_) => {
                stats.skipped_blobs += 1;
                continue;
            }
        };
        match extract_gradient_profile(frame, &contour) {
            Ok(gradient) => {
                let center = contour.centroid();
                out.push(ObservedContour {
                    frame_data: SequenceFrame {
                        contour: contour.clone(),
                        gradient,
                        center,
                    },
                    contour,
                });
            }
            Err(DataPrepError::OutOfBounds(..)) => stats.skipped_blobs += 1,
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}

#[derive(Clone)]
struct ActiveSeq {
    id: usize,
    start_frame: usize,
    frames: Vec<SequenceFrame>,
}

impl ActiveSeq {
    fn start(next_id: &mut usize, start_frame: usize, oc: &ObservedContour) -> Self {
        let id = *next_id;
        *next_id += 1;
        ActiveSeq {
            id,
            start_frame,
            frames: vec![oc.frame_data.clone()],
        }
    }

    fn push(&mut self, oc: &ObservedContour) {
        self.frames.push(oc.frame_data.clone());
    }

    fn finish(&self, event: TerminalEvent) -> TrackedSequence {
        TrackedSequence {
            id: self.id,
            start_frame: self.start_frame,
            frames: self.frames.clone(),
            terminal_event: event,
            split_frame: None,
        }
    }

    fn finish_split(&self) -> TrackedSequence {
        TrackedSequence {
            id: self.id,
            start_frame: self.start_frame,
            frames: self.frames.clone(),
            terminal_event: TerminalEvent::Split,
            split_frame: Some(self.frames.len() - 1),
        }
    }
}
