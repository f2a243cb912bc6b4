//! Triangle-mesh export of a height field, optionally draped on a terrain.

use super::{CellClass, ColorField, HeightField, ReconstructError, TerrainSource};
use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

/// Indexed triangle mesh in scene units.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TriangleMesh {
    pub vertices: Vec<[f64; 3]>,
    pub triangles: Vec<[usize; 3]>,
}

/// Build the drop surface mesh: one vertex per footprint cell plus a skirt
/// ring of exterior cells (8-connected), two triangles per quad that touches
/// the footprint. Ring vertices sit on the terrain; footprint vertices add
/// the liquid height. Winding is counter-clockwise seen from +z.
pub fn export_mesh(hf: &HeightField, terrain: Option<&dyn TerrainSource>) -> TriangleMesh {
    let grid = hf.grid;
    let in_omega =
        |i: usize, j: usize| -> bool { hf.cells[grid.index(i, j)] != CellClass::Exterior };
    let mut vertex_id = vec![usize::MAX; grid.cell_count()];
    let mut mesh = TriangleMesh::default();

    let mut wants_vertex = vec![false; grid.cell_count()];
    for j in 0..grid.ny {
        for i in 0..grid.nx {
            if !in_omega(i, j) {
                continue;
            }
            wants_vertex[grid.index(i, j)] = true;
            for dj in -1isize..=1 {
                for di in -1isize..=1 {
                    let (qi, qj) = (i as isize + di, j as isize + dj);
                    if qi >= 0 && qj >= 0 && (qi as usize) < grid.nx && (qj as usize) < grid.ny {
                        wants_vertex[grid.index(qi as usize, qj as usize)] = true;
                    }
                }
            }
        }
    }
    for j in 0..grid.ny {
        for i in 0..grid.nx {
            let idx = grid.index(i, j);
            if !wants_vertex[idx] {
                continue;
            }
            let p = grid.center(i, j);
            let base = terrain.map_or(0.0, |t| t.z_at(p));
            vertex_id[idx] = mesh.vertices.len();
            mesh.vertices.push([p.x, p.y, base + hf.values[idx]]);
        }
    }

    for j in 0..grid.ny.saturating_sub(1) {
        for i in 0..grid.nx.saturating_sub(1) {
            let quad = [
                grid.index(i, j),
                grid.index(i + 1, j),
                grid.index(i + 1, j + 1),
                grid.index(i, j + 1),
            ];
            if quad.iter().any(|&q| vertex_id[q] == usize::MAX) {
                continue;
            }
            if !quad.iter().any(|&q| hf.cells[q] != CellClass::Exterior) {
                continue;
            }
            let [v00, v10, v11, v01] = quad.map(|q| vertex_id[q]);
            mesh.triangles.push([v00, v10, v11]);
            mesh.triangles.push([v00, v11, v01]);
        }
    }
    mesh
}

/// Write OBJ `v`/`f` records with 9 significant digits.
pub fn write_mesh<W: Write>(w: &mut W, mesh: &TriangleMesh) -> std::io::Result<()> {
    let mut s = String::new();
    for v in &mesh.vertices {
        let _ = writeln!(s, "v {:.8e} {:.8e} {:.8e}", v[0], v[1], v[2]);
    }
    for t in &mesh.triangles {
        let _ = writeln!(s, "f {} {} {}", t[0] + 1, t[1] + 1, t[2] + 1);
    }
    w.write_all(s.as_bytes())
}

pub fn save_mesh(path: &Path, mesh: &TriangleMesh) -> std::io::Result<()> {
    let mut buf = Vec::new();
    write_mesh(&mut buf, mesh)?;
    std::fs::write(path, buf)
}

/// Debug dump of a color field as an 8-bit PGM, normalized to its maximum.
pub fn color_field_pgm(c: &ColorField) -> Result<Vec<u8>, ReconstructError> {
    let max = c.values.iter().cloned().fold(0.0f64, f64::max);
    let scale = if max > 0.0 { 255.0 / max } else { 0.0 };
    let mut out = Vec::new();
    write!(out, "P5\n{} {}\n255\n", c.grid.nx, c.grid.ny)?;
    // Image rows run top-down; the grid's j axis runs bottom-up.
    for j in (0..c.grid.ny).rev() {
        for i in 0..c.grid.nx {
            let v = (c.values[c.grid.index(i, j)].max(0.0) * scale).round() as u8;
            out.push(v);
        }
    }
    Ok(out)
}
