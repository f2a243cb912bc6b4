//! Contour file format: header line `contour v1`, then 52 lines of
//! `x y` decimal pairs printed with 17 significant digits.

use super::{Contour, Point, CONTROL_POINTS};
use std::io::{self, BufRead, Write};

pub const CONTOUR_FORMAT: &str = "contour v1";

pub fn write_contour<W: Write>(w: &mut W, contour: &Contour) -> io::Result<()> {
    writeln!(w, "{CONTOUR_FORMAT}")?;
    for p in contour.control_points() {
        writeln!(w, "{:.16e} {:.16e}", p.x, p.y)?;
    }
    Ok(())
}

pub fn read_contour<R: BufRead>(r: &mut R) -> io::Result<Contour> {
    let mut header = String::new();
    r.read_line(&mut header)?;
    if header.trim_end() != CONTOUR_FORMAT {
        return Err(io::Error::new(
            io::ErrorKind::InvalidData,
            format!("expected header '{CONTOUR_FORMAT}', got '{}'", header.trim_end()),
        ));
    }
    let mut pts = Vec::with_capacity(CONTROL_POINTS);
    for line in r.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let mut it = line.split_whitespace();
        let x = parse_f64(it.next())?;
        let y = parse_f64(it.next())?;
        pts.push(Point::new(x, y));
    }
    Contour::new(pts).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e.to_string()))
}

fn parse_f64(tok: Option<&str>) -> io::Result<f64> {
    tok.ok_or_else(|| io::Error::new(io::ErrorKind::InvalidData, "missing coordinate"))?
        .parse::<f64>()
        .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e.to_string()))
}

pub fn save_contour(path: &std::path::Path, contour: &Contour) -> io::Result<()> {
    let mut buf = Vec::new();
    write_contour(&mut buf, contour)?;
    std::fs::write(path, buf)
}

pub fn load_contour(path: &std::path::Path) -> io::Result<Contour> {
    let data = std::fs::read(path)?;
    read_contour(&mut io::BufReader::new(&data[..]))
}
