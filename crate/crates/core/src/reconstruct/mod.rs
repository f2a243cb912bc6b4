//! Interior shape recovery: solve the biharmonic color-field problem on the
//! drop footprint with contour-gradient boundary data, convert to a
//! volume-tracked height field, smooth, and export a triangle mesh.
//!
//! The color field obeys `∇⁴c = 0` inside the footprint with `c = 0` on the
//! boundary band and an inward-normal slope given by the gradient profile,
//! realized first order through ghost values `c_ghost = c_band − h·g`.

mod mesh;
mod solve;

#[cfg(test)]
mod tests;

pub use mesh::{color_field_pgm, export_mesh, save_mesh, write_mesh, TriangleMesh};
pub use solve::solve_biharmonic;

use crate::dataprep::GradientProfile;
use crate::geometry::{Contour, GeometryError, Point, DENSE_SAMPLES};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ReconstructError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("contour violates the 3-cell grid margin")]
    MarginViolation,
    #[error("contour covers only {0} interior cells (need at least 4)")]
    ContourTooSmall(usize),
    #[error("solver did not reach tolerance in {iterations} iterations (residual {residual:.3e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("linear system is singular")]
    SingularSystem,
    #[error("color field has no positive mass to carry the volume")]
    DegenerateField,
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Regular solver grid in scene units; cell (i, j) has its center at
/// `origin + ((i+0.5)h, (j+0.5)h)` with j increasing along +y.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct GridSpec {
    pub nx: usize,
    pub ny: usize,
    pub h: f64,
    pub origin: Point,
}

impl GridSpec {
    pub fn new(nx: usize, ny: usize, h: f64, origin: Point) -> Result<Self, ReconstructError> {
        if nx < 8 || ny < 8 {
            return Err(ReconstructError::InvalidGrid(format!(
                "grid must be at least 8x8, got {nx}x{ny}"
            )));
        }
        if !(h > 0.0) {
            return Err(ReconstructError::InvalidGrid(format!("cell size {h}")));
        }
        Ok(GridSpec { nx, ny, h, origin })
    }

    /// Tight bounding grid: 4-cell margin, at least 96 cells across the
    /// contour's larger extent, capped at 256 cells per side.
    pub fn fit_to_contour(contour: &Contour) -> Result<Self, ReconstructError> {
        let pts = contour.dense_samples();
        let (mut x0, mut x1, mut y0, mut y1) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
        for p in &pts {
            x0 = x0.min(p.x);
            x1 = x1.max(p.x);
            y0 = y0.min(p.y);
            y1 = y1.max(p.y);
        }
        let extent = (x1 - x0).max(y1 - y0);
        if !(extent > 0.0) {
            return Err(ReconstructError::InvalidGrid("degenerate contour".into()));
        }
        let mut h = extent / 96.0;
        let cells = |span: f64, h: f64| (span / h).ceil() as usize + 8;
        let (mut nx, mut ny) = (cells(x1 - x0, h), cells(y1 - y0, h));
        let largest = nx.max(ny);
        if largest > 256 {
            h *= largest as f64 / 256.0;
            nx = cells(x1 - x0, h);
            ny = cells(y1 - y0, h);
        }
        let origin = Point::new(x0 - 4.0 * h, y0 - 4.0 * h);
        GridSpec::new(nx.max(8), ny.max(8), h, origin)
    }

    pub fn cell_count(&self) -> usize {
        self.nx * self.ny
    }

    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    pub fn center(&self, i: usize, j: usize) -> Point {
        Point::new(
            self.origin.x + (i as f64 + 0.5) * self.h,
            self.origin.y + (j as f64 + 0.5) * self.h,
        )
    }
}

/// Cell classification over the footprint.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum CellClass {
    Exterior,
    /// Interior cell with at least one exterior 4-neighbor; Dirichlet data
    /// lives here.
    Band,
    /// Interior cell with a fully interior 4-neighborhood; the unknowns.
    Interior,
}

/// Discretized boundary-value problem.
#[derive(Clone, Debug)]
pub struct ReconstructionProblem {
    pub grid: GridSpec,
    pub cells: Vec<CellClass>,
    /// Dirichlet color value per band cell (zero elsewhere).
    pub dirichlet: Vec<f64>,
    /// Inward-normal gradient magnitude per band cell (zero elsewhere).
    pub neumann: Vec<f64>,
    /// First-order ghost closure per exterior cell the stencil can reach:
    /// anchored at the nearest true-boundary point, `c = d - s*g` with `s`
    /// the outward distance. Zero for unreachable exterior cells.
    pub ghost: Vec<f64>,
}

impl ReconstructionProblem {
    /// Classify cells by containment and attach boundary data from the
    /// gradient profile (nearest-arc interpolation of the 52 magnitudes).
    /// Production boundaries use zero Dirichlet color.
    pub fn rasterize(
        contour: &Contour,
        profile: &GradientProfile,
        grid: GridSpec,
    ) -> Result<Self, ReconstructError> {
        let dense = contour.dense_samples();
        let (mut x0, mut x1, mut y0, mut y1) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
        for p in &dense {
            x0 = x0.min(p.x);
            x1 = x1.max(p.x);
            y0 = y0.min(p.y);
            y1 = y1.max(p.y);
        }
        let margin = 3.0 * grid.h;
        if x0 < grid.origin.x + margin
            || y0 < grid.origin.y + margin
            || x1 > grid.origin.x + grid.nx as f64 * grid.h - margin
            || y1 > grid.origin.y + grid.ny as f64 * grid.h - margin
        {
            return Err(ReconstructError::MarginViolation);
        }
        Self::from_mask(
            grid,
            |p| contour.contains(p),
            |_| 0.0,
            |p| profile.interpolate(nearest_arc_index(&dense, p)),
            |p| nearest_boundary_point(&dense, p),
        )
    }

    /// Build a problem from arbitrary mask and boundary functions; `project`
    /// maps a point to its closest point on the true boundary. Used by
    /// rasterize and directly by manufactured-solution tests.
    pub fn from_mask(
        grid: GridSpec,
        inside: impl Fn(Point) -> bool,
        dirichlet: impl Fn(Point) -> f64,
        neumann: impl Fn(Point) -> f64,
        project: impl Fn(Point) -> Point,
    ) -> Result<Self, ReconstructError> {
        let mut interior = vec![false; grid.cell_count()];
        for j in 0..grid.ny {
            for i in 0..grid.nx {
                interior[grid.index(i, j)] = inside(grid.center(i, j));
            }
        }
        let mut cells = vec![CellClass::Exterior; grid.cell_count()];
        let mut n_interior = 0usize;
        for j in 0..grid.ny {
            for i in 0..grid.nx {
                let idx = grid.index(i, j);
                if !interior[idx] {
                    continue;
                }
                n_interior += 1;
                if i < 3 || j < 3 || i + 3 >= grid.nx || j + 3 >= grid.ny {
                    return Err(ReconstructError::MarginViolation);
                }
                let boundary = !interior[grid.index(i - 1, j)]
                    || !interior[grid.index(i + 1, j)]
                    || !interior[grid.index(i, j - 1)]
                    || !interior[grid.index(i, j + 1)];
                cells[idx] = if boundary {
                    CellClass::Band
                } else {
                    CellClass::Interior
                };
            }
        }
        if n_interior < 4 {
            return Err(ReconstructError::ContourTooSmall(n_interior));
        }
        let mut d = vec![0.0; grid.cell_count()];
        let mut g = vec![0.0; grid.cell_count()];
        for j in 0..grid.ny {
            for i in 0..grid.nx {
                let idx = grid.index(i, j);
                if cells[idx] == CellClass::Band {
                    let p = grid.center(i, j);
                    d[idx] = dirichlet(p);
                    g[idx] = neumann(p);
                }
            }
        }
        // Ghost closure for every exterior cell within stencil reach of a
        // strict-interior cell.
        let mut ghost = vec![0.0; grid.cell_count()];
        let mut needs_ghost = vec![false; grid.cell_count()];
        let reach: [(isize, isize); 8] = [
            (1, 1),
            (1, -1),
            (-1, 1),
            (-1, -1),
            (2, 0),
            (-2, 0),
            (0, 2),
            (0, -2),
        ];
        for j in 0..grid.ny {
            for i in 0..grid.nx {
                if cells[grid.index(i, j)] != CellClass::Interior {
                    continue;
                }
                for (di, dj) in reach {
                    let (qi, qj) = (i as isize + di, j as isize + dj);
                    let qidx = grid.index(qi as usize, qj as usize);
                    if cells[qidx] == CellClass::Exterior {
                        needs_ghost[qidx] = true;
                    }
                }
            }
        }
        // First-order closure along the outward normal: anchor at the
        // nearest true-boundary point and walk the actual outward distance.
        for j in 0..grid.ny {
            for i in 0..grid.nx {
                let idx = grid.index(i, j);
                if !needs_ghost[idx] {
                    continue;
                }
                let p = grid.center(i, j);
                let foot = project(p);
                ghost[idx] = dirichlet(foot) - p.dist(foot) * neumann(foot);
            }
        }
        Ok(ReconstructionProblem {
            grid,
            cells,
            dirichlet: d,
            neumann: g,
            ghost,
        })
    }

    pub fn interior_count(&self) -> usize {
        self.cells
            .iter()
            .filter(|&&c| c != CellClass::Exterior)
            .count()
    }
}

/// Fractional control-point index of the dense sample nearest to `p`.
fn nearest_arc_index(dense: &[Point], p: Point) -> f64 {
    let mut best = (f64::MAX, 0usize);
    for (k, q) in dense.iter().enumerate() {
        let d = q.dist(p);
        if d < best.0 {
            best = (d, k);
        }
    }
    best.1 as f64 * crate::geometry::CONTROL_POINTS as f64 / DENSE_SAMPLES as f64
}

/// Closest point on the dense contour polyline to `p`.
fn nearest_boundary_point(dense: &[Point], p: Point) -> Point {
    let n = dense.len();
    let mut best = (f64::MAX, p);
    for k in 0..n {
        let a = dense[k];
        let b = dense[(k + 1) % n];
        let ab = b - a;
        let len2 = ab.dot(ab);
        let foot = if len2 == 0.0 {
            a
        } else {
            let t = ((p - a).dot(ab) / len2).clamp(0.0, 1.0);
            a + ab.scale(t)
        };
        let d = p.dist(foot);
        if d < best.0 {
            best = (d, foot);
        }
    }
    best.1
}

/// Solved color field over the grid (zero outside the footprint).
#[derive(Clone, Debug)]
pub struct ColorField {
    pub grid: GridSpec,
    pub cells: Vec<CellClass>,
    pub values: Vec<f64>,
    pub iterations: usize,
    pub residual: f64,
}

/// Per-cell liquid thickness with an explicitly tracked volume.
#[derive(Clone, Debug)]
pub struct HeightField {
    pub grid: GridSpec,
    pub cells: Vec<CellClass>,
    pub values: Vec<f64>,
    pub volume: f64,
}

impl HeightField {
    pub fn integral(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.grid.h * self.grid.h
    }
}

/// Scale the color field so the summed cell volume equals `volume` exactly.
/// Small negative interior colors are clamped to zero first.
pub fn color_to_height(c: &ColorField, volume: f64) -> Result<HeightField, ReconstructError> {
    let mut values: Vec<f64> = c
        .values
        .iter()
        .zip(&c.cells)
        .map(|(&v, &cls)| {
            if cls == CellClass::Exterior {
                0.0
            } else {
                v.max(0.0)
            }
        })
        .collect();
    if volume == 0.0 {
        values.iter_mut().for_each(|v| *v = 0.0);
        return Ok(HeightField {
            grid: c.grid,
            cells: c.cells.clone(),
            values,
            volume: 0.0,
        });
    }
    let sum = values.iter().sum::<f64>() * c.grid.h * c.grid.h;
    if sum <= 0.0 {
        return Err(ReconstructError::DegenerateField);
    }
    let scale = volume / sum;
    values.iter_mut().for_each(|v| *v *= scale);
    Ok(HeightField {
        grid: c.grid,
        cells: c.cells.clone(),
        values,
        volume,
    })
}

/// `iters` passes of 5-point averaging over strict-interior cells with the
/// band pinned at zero, then a rescale restoring the tracked volume exactly.
pub fn smooth(hf: &HeightField, iters: usize) -> HeightField {
    if iters == 0 {
        return hf.clone();
    }
    let mut values = hf.values.clone();
    let grid = hf.grid;
    for _ in 0..iters {
        let prev = values.clone();
        for j in 1..grid.ny - 1 {
            for i in 1..grid.nx - 1 {
                let idx = grid.index(i, j);
                if hf.cells[idx] != CellClass::Interior {
                    continue;
                }
                values[idx] = (prev[idx]
                    + prev[grid.index(i - 1, j)]
                    + prev[grid.index(i + 1, j)]
                    + prev[grid.index(i, j - 1)]
                    + prev[grid.index(i, j + 1)])
                    / 5.0;
            }
        }
    }
    let sum = values.iter().sum::<f64>() * grid.h * grid.h;
    if sum > 0.0 && hf.volume > 0.0 {
        let scale = hf.volume / sum;
        values.iter_mut().for_each(|v| *v *= scale);
    }
    HeightField {
        grid,
        cells: hf.cells.clone(),
        values,
        volume: hf.volume,
    }
}

/// Terrain elevation sampled under mesh vertices.
pub trait TerrainSource {
    fn z_at(&self, p: Point) -> f64;
}

impl<F: Fn(Point) -> f64> TerrainSource for F {
    fn z_at(&self, p: Point) -> f64 {
        self(p)
    }
}
