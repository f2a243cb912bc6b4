//! Per-frame image operations: Otsu thresholding, disc morphology, Sobel
//! gradients, and PGM input/output.

use super::{DataPrepError, Frame};
use crate::geometry::Point;
use std::io::{self, Read, Write};

/// Binary foreground mask.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Mask {
    pub width: usize,
    pub height: usize,
    bits: Vec<bool>,
}

impl Mask {
    pub fn new(width: usize, height: usize) -> Self {
        Mask {
            width,
            height,
            bits: vec![false; width * height],
        }
    }

    pub fn get(&self, col: usize, row: usize) -> bool {
        self.bits[row * self.width + col]
    }

    pub fn set(&mut self, col: usize, row: usize, v: bool) {
        self.bits[row * self.width + col] = v;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }
}

/// Threshold maximizing the between-class variance of the 256-bin histogram.
/// Foreground is every pixel with intensity strictly above the threshold.
/// Ties break to the lowest threshold.
pub fn otsu_threshold(frame: &Frame) -> Result<u8, DataPrepError> {
    let mut hist = [0u64; 256];
    for &p in frame.pixels() {
        hist[p as usize] += 1;
    }
    if hist.iter().filter(|&&c| c > 0).count() < 2 {
        return Err(DataPrepError::UniformImage);
    }
    let total = frame.pixels().len() as f64;
    let total_sum: f64 = hist
        .iter()
        .enumerate()
        .map(|(i, &c)| i as f64 * c as f64)
        .sum();

    let mut best_t = 0u8;
    let mut best_var = f64::NEG_INFINITY;
    let mut w0 = 0.0;
    let mut s0 = 0.0;
    for t in 0..255usize {
        w0 += hist[t] as f64;
        s0 += t as f64 * hist[t] as f64;
        let w1 = total - w0;
        if w0 == 0.0 || w1 == 0.0 {
            continue;
        }
        let mu0 = s0 / w0;
        let mu1 = (total_sum - s0) / w1;
        let var = w0 / total * (w1 / total) * (mu0 - mu1) * (mu0 - mu1);
        if var > best_var {
            best_var = var;
            best_t = t as u8;
        }
    }
    Ok(best_t)
}

/// Foreground mask of pixels with intensity strictly above the threshold.
pub fn binarize(frame: &Frame, threshold: u8) -> Mask {
    let mut m = Mask::new(frame.width(), frame.height());
    for row in 0..frame.height() {
        for col in 0..frame.width() {
            m.set(col, row, frame.get(col, row) > threshold);
        }
    }
    m
}

/// Morphological opening then closing with a disc structuring element.
pub fn morph_open_close(mask: &Mask, radius: usize) -> Mask {
    if radius == 0 {
        return mask.clone();
    }
    let disc = disc_offsets(radius);
    let eroded = erode(mask, &disc);
    let opened = dilate(&eroded, &disc);
    let dilated = dilate(&opened, &disc);
    erode(&dilated, &disc)
}

fn disc_offsets(radius: usize) -> Vec<(isize, isize)> {
    let r = radius as isize;
    let mut out = Vec::new();
    for dy in -r..=r {
        for dx in -r..=r {
            if dx * dx + dy * dy <= r * r {
                out.push((dx, dy));
            }
        }
    }
    out
}

fn erode(mask: &Mask, disc: &[(isize, isize)]) -> Mask {
    let mut out = Mask::new(mask.width, mask.height);
    for row in 0..mask.height {
        for col in 0..mask.width {
            let all = disc.iter().all(|&(dx, dy)| {
                let c = col as isize + dx;
                let r = row as isize + dy;
                c >= 0
                    && r >= 0
                    && (c as usize) < mask.width
                    && (r as usize) < mask.height
                    && mask.get(c as usize, r as usize)
            });
            out.set(col, row, all);
        }
    }
    out
}

fn dilate(mask: &Mask, disc: &[(isize, isize)]) -> Mask {
    let mut out = Mask::new(mask.width, mask.height);
    for row in 0..mask.height {
        for col in 0..mask.width {
            let any = disc.iter().any(|&(dx, dy)| {
                let c = col as isize + dx;
                let r = row as isize + dy;
                c >= 0
                    && r >= 0
                    && (c as usize) < mask.width
                    && (r as usize) < mask.height
                    && mask.get(c as usize, r as usize)
            });
            out.set(col, row, any);
        }
    }
    out
}

/// Color-field gradient at a scene point: 3x3 Sobel with 1/8 normalization on
/// the pixel grid, bilinearly interpolated, returned in scene axes (y-up) in
/// intensity units per pixel.
pub fn sobel_at(frame: &Frame, p: Point) -> Result<Point, DataPrepError> {
    let (cf, rf) = frame.scene_to_pixel(p);
    // Bilinear corners need a full 3x3 neighborhood each.
    let c0 = cf.floor();
    let r0 = rf.floor();
    if c0 < 1.0
        || r0 < 1.0
        || c0 + 1.0 > (frame.width() - 2) as f64
        || r0 + 1.0 > (frame.height() - 2) as f64
    {
        return Err(DataPrepError::OutOfBounds(p.x, p.y));
    }
    let fc = cf - c0;
    let fr = rf - r0;
    let mut gx = 0.0;
    let mut gy = 0.0;
    for (dc, dr, w) in [
        (0.0, 0.0, (1.0 - fc) * (1.0 - fr)),
        (1.0, 0.0, fc * (1.0 - fr)),
        (0.0, 1.0, (1.0 - fc) * fr),
        (1.0, 1.0, fc * fr),
    ] {
        let (sx, sy) = sobel_pixel(frame, (c0 + dc) as usize, (r0 + dr) as usize);
        gx += w * sx;
        gy += w * sy;
    }
    // Image rows grow downward; flip to the scene's y-up axis.
    Ok(Point::new(gx, -gy))
}

fn sobel_pixel(frame: &Frame, col: usize, row: usize) -> (f64, f64) {
    let v = |dc: isize, dr: isize| -> f64 {
        frame.get(
            (col as isize + dc) as usize,
            (row as isize + dr) as usize,
        ) as f64
    };
    let gx = (v(1, -1) + 2.0 * v(1, 0) + v(1, 1)) - (v(-1, -1) + 2.0 * v(-1, 0) + v(-1, 1));
    let gy = (v(-1, 1) + 2.0 * v(0, 1) + v(1, 1)) - (v(-1, -1) + 2.0 * v(0, -1) + v(1, -1));
    (gx / 8.0, gy / 8.0)
}

/// Write an 8-bit binary PGM (P5).
pub fn write_pgm8<W: Write>(w: &mut W, frame: &Frame) -> io::Result<()> {
    write!(w, "P5\n{} {}\n255\n", frame.width(), frame.height())?;
    w.write_all(frame.pixels())
}

/// Read an 8-bit binary PGM (P5) into a frame with the given timestamp.
pub fn read_pgm8<R: Read>(r: &mut R, timestamp: usize) -> Result<Frame, DataPrepError> {
    let mut data = Vec::new();
    r.read_to_end(&mut data)?;
    let (width, height, maxval, offset) = parse_pgm_header(&data)?;
    if maxval != 255 {
        return Err(DataPrepError::InvalidFrame(format!(
            "expected 8-bit PGM, maxval {maxval}"
        )));
    }
    let need = width * height;
    if data.len() < offset + need {
        return Err(DataPrepError::InvalidFrame("truncated PGM payload".into()));
    }
    Frame::new(
        width,
        height,
        data[offset..offset + need].to_vec(),
        timestamp,
    )
}

/// Write a 16-bit big-endian PGM (P5), used for terrain height fields.
pub fn write_pgm16<W: Write>(w: &mut W, width: usize, height: usize, values: &[u16]) -> io::Result<()> {
    assert_eq!(values.len(), width * height);
    write!(w, "P5\n{width} {height}\n65535\n")?;
    for v in values {
        w.write_all(&v.to_be_bytes())?;
    }
    Ok(())
}

pub fn read_pgm16<R: Read>(r: &mut R) -> Result<(usize, usize, Vec<u16>), DataPrepError> {
    let mut data = Vec::new();
    r.read_to_end(&mut data)?;
    let (width, height, maxval, offset) = parse_pgm_header(&data)?;
    if maxval != 65535 {
        return Err(DataPrepError::InvalidFrame(format!(
            "expected 16-bit PGM, maxval {maxval}"
        )));
    }
    let need = width * height * 2;
    if data.len() < offset + need {
        return Err(DataPrepError::InvalidFrame("truncated PGM payload".into()));
    }
    let values = data[offset..offset + need]
        .chunks_exact(2)
        .map(|b| u16::from_be_bytes([b[0], b[1]]))
        .collect();
    Ok((width, height, values))
}

fn parse_pgm_header(data: &[u8]) -> Result<(usize, usize, usize, usize), DataPrepError> {
    let mut fields = Vec::new();
    let mut pos = 0;
    while fields.len() < 4 && pos < data.len() {
        // Skip whitespace and comment lines.
        while pos < data.len() && (data[pos].is_ascii_whitespace() || data[pos] == b'#') {
            if data[pos] == b'#' {
                while pos < data.len() && data[pos] != b'\n' {
                    pos += 1;
                }
            } else {
                pos += 1;
            }
        }
        let start = pos;
        while pos < data.len() && !data[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start < pos {
            fields.push(std::str::from_utf8(&data[start..pos]).map_err(|_| {
                DataPrepError::InvalidFrame("non-utf8 PGM header".into())
            })?);
        }
    }
    if fields.len() < 4 || fields[0] != "P5" {
        return Err(DataPrepError::InvalidFrame("not a binary PGM".into()));
    }
    let width: usize = fields[1]
        .parse()
        .map_err(|_| DataPrepError::InvalidFrame("bad width".into()))?;
    let height: usize = fields[2]
        .parse()
        .map_err(|_| DataPrepError::InvalidFrame("bad height".into()))?;
    let maxval: usize = fields[3]
        .parse()
        .map_err(|_| DataPrepError::InvalidFrame("bad maxval".into()))?;
    // Exactly one whitespace byte separates the header from the payload.
    Ok((width, height, maxval, pos + 1))
}
