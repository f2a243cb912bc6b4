//! Procedural drop-sequence generator with exact ground truth.
//!
//! Drops are advected teardrop blobs: larger drops move faster (speed law
//! `v = alpha * area^beta`, capped), slow drops stick, moving drops grow an
//! upslope tail whose elongation past a threshold triggers a split. Frames
//! are rendered as ramp-edged intensity blobs plus seeded noise; the clean
//! (pre-noise) render supplies ground-truth gradient profiles.

use super::{
    extract_gradient_profile, DataPrepError, Frame, SequenceFrame, TerminalEvent, TrackedSequence,
};
use crate::geometry::{fit_spline, Point};
use crate::rng::Rng;

/// Per-step centroid displacement cap; sequences faster than this are the
/// ones a capture pipeline would exclude, so the generator never emits them.
pub const MAX_STEP_DISPLACEMENT: f64 = 0.05;

/// Drops slower than this per step stick to the surface.
const STATIC_SPEED: f64 = 6e-4;

/// Drops smaller than this radius never elongate (they stay put or ride).
const MIN_ELONGATING_RADIUS: f64 = 0.03;

#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct SynthParams {
    pub n_sequences: usize,
    pub frames: usize,
    pub width: usize,
    pub height: usize,
    pub drops: usize,
    pub size_range: (f64, f64),
    pub speed_alpha: f64,
    pub speed_beta: f64,
    pub tail_elongation_rate: f64,
    pub noise_amplitude: f64,
    pub split_elongation_threshold: f64,
    /// Elongation the drops are born with (drops captured mid-evolution).
    pub initial_elongation: f64,
}

impl Default for SynthParams {
    fn default() -> Self {
        SynthParams {
            n_sequences: 4,
            frames: 60,
            width: 256,
            height: 256,
            drops: 2,
            size_range: (0.055, 0.085),
            speed_alpha: 0.25,
            speed_beta: 1.0,
            tail_elongation_rate: 0.015,
            noise_amplitude: 6.0,
            split_elongation_threshold: 0.6,
            initial_elongation: 0.0,
        }
    }
}

impl SynthParams {
    pub fn validate(&self) -> Result<(), DataPrepError> {
        let err = |m: &str| Err(DataPrepError::InvalidParams(m.into()));
        if self.n_sequences == 0 || self.frames < 2 {
            return err("need at least one sequence of at least two frames");
        }
        if self.width < 64 || self.height < 64 {
            return err("frames must be at least 64x64");
        }
        if self.drops == 0 || self.drops > 3 {
            return err("drops per sequence must be 1..=3");
        }
        let (lo, hi) = self.size_range;
        if !(0.02..=0.15).contains(&lo) || !(0.02..=0.15).contains(&hi) || lo > hi {
            return err("size_range radii must lie in [0.02, 0.15]");
        }
        if self.speed_alpha <= 0.0 || self.speed_beta < 0.0 {
            return err("speed law needs alpha > 0 and beta >= 0");
        }
        if self.tail_elongation_rate < 0.0 || self.noise_amplitude < 0.0 {
            return err("rates must be non-negative");
        }
        if !(0.2..=1.5).contains(&self.split_elongation_threshold) {
            return err("split_elongation_threshold must lie in [0.2, 1.5]");
        }
        if !(0.0..self.split_elongation_threshold).contains(&self.initial_elongation) {
            return err("initial_elongation must lie in [0, split_elongation_threshold)");
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct SynthSequence {
    pub frames: Vec<Frame>,
    pub truth: Vec<TrackedSequence>,
}

#[derive(Clone, Debug)]
struct Blob {
    center: Point,
    radius: f64,
    elongation: f64,
    seq: usize,
}

impl Blob {
    /// Teardrop radius at polar angle `phi` (tail points up, +y).
    fn rho(&self, phi: f64) -> f64 {
        let bump = (1.0 + (phi - std::f64::consts::FRAC_PI_2).cos()) / 2.0;
        self.radius * (1.0 + self.elongation * bump * bump)
    }

    fn outline(&self, n: usize) -> Vec<Point> {
        (0..n)
            .map(|k| {
                let phi =
                    std::f64::consts::FRAC_PI_2 - 2.0 * std::f64::consts::PI * k as f64 / n as f64;
                let r = self.rho(phi);
                Point::new(self.center.x + r * phi.cos(), self.center.y + r * phi.sin())
            })
            .collect()
    }

    fn area(&self) -> f64 {
        let pts = self.outline(128);
        let mut a = 0.0;
        for k in 0..pts.len() {
            let p = pts[k];
            let q = pts[(k + 1) % pts.len()];
            a += p.x * q.y - q.x * p.y;
        }
        (a / 2.0).abs()
    }

    fn max_extent(&self) -> f64 {
        self.radius * (1.0 + self.elongation)
    }

    /// Signed distance proxy: negative inside (exact radially).
    fn signed_dist(&self, p: Point) -> f64 {
        let d = p - self.center;
        let r = d.norm();
        if r < 1e-12 {
            return -self.radius;
        }
        let phi = d.y.atan2(d.x);
        r - self.rho(phi)
    }

    fn contains(&self, p: Point) -> bool {
        self.signed_dist(p) < 0.0
    }
}

struct ActiveTruth {
    seq_id: usize,
    start_frame: usize,
    frames: Vec<SequenceFrame>,
}

/// Deterministic generation of `n_sequences` drop videos plus ground truth.
pub fn synth_generate(
    params: &SynthParams,
    seed: u64,
) -> Result<Vec<SynthSequence>, DataPrepError> {
    params.validate()?;
    let base = Rng::seed_from(seed);
    (0..params.n_sequences)
        .map(|s| generate_sequence(params, base.fork(s as u64 + 1)))
        .collect()
}

fn generate_sequence(params: &SynthParams, mut rng: Rng) -> Result<SynthSequence, DataPrepError> {
    // Place drops in one lane, largest on top, so faster uphill drops can
    // catch slower ones and produce merge events.
    let mut radii: Vec<f64> = (0..params.drops)
        .map(|_| rng.range_f64(params.size_range.0, params.size_range.1))
        .collect();
    radii.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let mut blobs: Vec<Blob> = Vec::new();
    let mut truths: Vec<ActiveTruth> = Vec::new();
    let mut finished: Vec<TrackedSequence> = Vec::new();
    let mut next_seq = 0usize;
    for (i, &radius) in radii.iter().enumerate() {
        blobs.push(Blob {
            center: Point::new(
                0.5 + rng.range_f64(-0.08, 0.08),
                0.80 - 0.17 * i as f64 + rng.range_f64(-0.02, 0.02),
            ),
            radius,
            elongation: params.initial_elongation,
            seq: next_seq,
        });
        truths.push(ActiveTruth {
            seq_id: next_seq,
            start_frame: 0,
            frames: Vec::new(),
        });
        next_seq += 1;
    }

    let mut frames = Vec::with_capacity(params.frames);
    for t in 0..params.frames {
        // Record truth against the clean render, then emit the noisy frame.
        let clean = render(params, &blobs, t);
        for blob in &blobs {
            let (contour, _) = fit_spline(&blob.outline(256))?;
            let gradient = extract_gradient_profile(&clean, &contour)?;
            let center = contour.centroid();
            truths[blob.seq]
                .frames
                .push(SequenceFrame {
                    contour,
                    gradient,
                    center,
                });
        }
        frames.push(add_noise(clean, params.noise_amplitude, &mut rng));

        if t + 1 == params.frames {
            break;
        }
        advance(params, t + 1, &mut blobs, &mut truths, &mut finished, &mut next_seq);
        if blobs.is_empty() {
            break;
        }
    }

    for truth in truths.drain(..) {
        finished.push(TrackedSequence {
            id: truth.seq_id,
            start_frame: truth.start_frame,
            frames: truth.frames,
            terminal_event: TerminalEvent::Ends,
            split_frame: None,
        });
    }
    finished.sort_by_key(|s| s.id);
    finished.retain(|s| !s.frames.is_empty());
    Ok(SynthSequence {
        frames,
        truth: finished,
    })
}

fn advance(
    params: &SynthParams,
    next_frame: usize,
    blobs: &mut Vec<Blob>,
    truths: &mut Vec<ActiveTruth>,
    finished: &mut Vec<TrackedSequence>,
    next_seq: &mut usize,
) {
    // Motion: larger area, faster slide; slow drops stick and stop shaping.
    for blob in blobs.iter_mut() {
        let mut v = params.speed_alpha * blob.area().powf(params.speed_beta);
        v = v.min(MAX_STEP_DISPLACEMENT);
        if v < STATIC_SPEED {
            v = 0.0;
        }
        blob.center.y -= v;
        if v > 0.0 && blob.radius >= MIN_ELONGATING_RADIUS {
            // Necking runs away as the drop approaches pinch-off.
            let progress = blob.elongation / params.split_elongation_threshold;
            blob.elongation += params.tail_elongation_rate * (1.0 + 2.0 * progress * progress);
        }
    }

    let close_truth = |truths: &mut Vec<ActiveTruth>,
                       finished: &mut Vec<TrackedSequence>,
                       seq: usize,
                       event: TerminalEvent| {
        let t = &mut truths[seq];
        let split_frame = (event == TerminalEvent::Split).then(|| t.frames.len() - 1);
        finished.push(TrackedSequence {
            id: t.seq_id,
            start_frame: t.start_frame,
            frames: std::mem::take(&mut t.frames),
            terminal_event: event,
            split_frame,
        });
    };

    // Leaving the view: remove before the blob reaches the border margin.
    let margin = 0.04;
    let mut k = 0;
    while k < blobs.len() {
        if blobs[k].center.y - blobs[k].max_extent() < margin {
            close_truth(truths, finished, blobs[k].seq, TerminalEvent::LeavesView);
            blobs.remove(k);
        } else {
            k += 1;
        }
    }

    // Splits: elongation past the threshold pinches off a tail droplet.
    let mut k = 0;
    while k < blobs.len() {
        if blobs[k].elongation >= params.split_elongation_threshold {
            let parent = blobs.remove(k);
            close_truth(truths, finished, parent.seq, TerminalEvent::Split);
            let main = Blob {
                center: parent.center + Point::new(0.0, -0.15 * parent.radius),
                radius: 0.8 * parent.radius,
                elongation: 0.0,
                seq: *next_seq,
            };
            let tail_r = 0.35 * parent.radius;
            let tail = Blob {
                center: parent.center
                    + Point::new(0.0, parent.radius * (1.0 + parent.elongation) - tail_r),
                radius: tail_r,
                elongation: 0.0,
                seq: *next_seq + 1,
            };
            for _ in 0..2 {
                truths.push(ActiveTruth {
                    seq_id: *next_seq,
                    start_frame: next_frame,
                    frames: Vec::new(),
                });
                *next_seq += 1;
            }
            blobs.insert(k, tail);
            blobs.insert(k, main);
            k += 2;
        } else {
            k += 1;
        }
    }

    // Merges: first outline contact wins, checked in ascending pair order.
    'merge: loop {
        for i in 0..blobs.len() {
            for j in i + 1..blobs.len() {
                if blobs_touch(&blobs[i], &blobs[j]) {
                    let b = blobs.remove(j);
                    let a = blobs.remove(i);
                    close_truth(truths, finished, a.seq, TerminalEvent::Merged);
                    close_truth(truths, finished, b.seq, TerminalEvent::Merged);
                    let (aa, ab) = (a.area(), b.area());
                    let merged = Blob {
                        center: Point::new(
                            (a.center.x * aa + b.center.x * ab) / (aa + ab),
                            (a.center.y * aa + b.center.y * ab) / (aa + ab),
                        ),
                        radius: ((aa + ab) / std::f64::consts::PI).sqrt(),
                        elongation: 0.0,
                        seq: *next_seq,
                    };
                    truths.push(ActiveTruth {
                        seq_id: *next_seq,
                        start_frame: next_frame,
                        frames: Vec::new(),
                    });
                    *next_seq += 1;
                    blobs.insert(i, merged);
                    continue 'merge;
                }
            }
        }
        break;
    }
}

fn blobs_touch(a: &Blob, b: &Blob) -> bool {
    let quick = a.center.dist(b.center) > a.max_extent() + b.max_extent();
    if quick {
        return false;
    }
    a.outline(64).iter().any(|p| b.contains(*p)) || b.outline(64).iter().any(|p| a.contains(*p))
}

const BACKGROUND: f64 = 12.0;
const PEAK: f64 = 235.0;

fn render(params: &SynthParams, blobs: &[Blob], timestamp: usize) -> Frame {
    let (w, h) = (params.width, params.height);
    let mut pixels = vec![BACKGROUND as u8; w * h];
    let probe = Frame::new(w, h, vec![0; w * h], 0).unwrap();
    for blob in blobs {
        let edge = 0.35 * blob.radius;
        let extent = blob.max_extent() + edge;
        let (c0, r0) = probe.scene_to_pixel(blob.center + Point::new(-extent, extent));
        let (c1, r1) = probe.scene_to_pixel(blob.center + Point::new(extent, -extent));
        let cs = c0.floor().max(0.0) as usize;
        let ce = (c1.ceil() as usize).min(w - 1);
        let rs = r0.floor().max(0.0) as usize;
        let re = (r1.ceil() as usize).min(h - 1);
        for row in rs..=re {
            for col in cs..=ce {
                let p = probe.pixel_to_scene(col as f64, row as f64);
                let d = blob.signed_dist(p);
                if d < 0.0 {
                    let ramp = (-d / edge).min(1.0);
                    let val = BACKGROUND + (PEAK - BACKGROUND) * ramp;
                    let cell = &mut pixels[row * w + col];
                    *cell = (*cell).max(val.round() as u8);
                }
            }
        }
    }
    Frame::new(w, h, pixels, timestamp).unwrap()
}

fn add_noise(frame: Frame, amplitude: f64, rng: &mut Rng) -> Frame {
    if amplitude == 0.0 {
        return frame;
    }
    let (w, h, t) = (frame.width(), frame.height(), frame.timestamp);
    let pixels = frame
        .pixels()
        .iter()
        .map(|&p| {
            let n = rng.range_f64(-amplitude, amplitude);
            (p as f64 + n).clamp(0.0, 255.0).round() as u8
        })
        .collect();
    Frame::new(w, h, pixels, t).unwrap()
}
