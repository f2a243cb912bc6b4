//! 13-point biharmonic stencil assembly and a Jacobi-preconditioned
//! conjugate-gradient solve.

use super::{CellClass, ColorField, ReconstructError, ReconstructionProblem};

/// Stencil offsets and weights for the discrete bilaplacian (h⁴ scaled out;
/// the system is homogeneous so the factor cancels).
const STENCIL: [(isize, isize, f64); 13] = [
    (0, 0, 20.0),
    (1, 0, -8.0),
    (-1, 0, -8.0),
    (0, 1, -8.0),
    (0, -1, -8.0),
    (1, 1, 2.0),
    (1, -1, 2.0),
    (-1, 1, 2.0),
    (-1, -1, 2.0),
    (2, 0, 1.0),
    (-2, 0, 1.0),
    (0, 2, 1.0),
    (0, -2, 1.0),
];

/// Solve for the strict-interior color values.
///
/// Band cells carry their Dirichlet value; exterior cells reached by the
/// stencil take the first-order ghost value `c = dirichlet − h·g` of their
/// nearest band cell. Iterates to a relative residual of `tol`.
pub fn solve_biharmonic(
    problem: &ReconstructionProblem,
    tol: f64,
    max_iter: usize,
) -> Result<ColorField, ReconstructError> {
    let grid = problem.grid;
    let n_cells = grid.cell_count();

    let mut unknown_of_cell = vec![usize::MAX; n_cells];
    let mut unknowns = Vec::new();
    for j in 0..grid.ny {
        for i in 0..grid.nx {
            let idx = grid.index(i, j);
            if problem.cells[idx] == CellClass::Interior {
                unknown_of_cell[idx] = unknowns.len();
                unknowns.push((i, j));
            }
        }
    }
    let n = unknowns.len();
    if n == 0 {
        // Nothing to solve; the field is the Dirichlet band itself.
        return Ok(ColorField {
            grid,
            cells: problem.cells.clone(),
            values: problem.dirichlet.clone(),
            iterations: 0,
            residual: 0.0,
        });
    }

    // Known value of a stencil cell outside the unknown set: Dirichlet on
    // the band, precomputed first-order closure on ghosts. The 3-cell margin
    // keeps the stencil inside the grid.
    let known_value = |i: isize, j: isize| -> f64 {
        let idx = grid.index(i as usize, j as usize);
        match problem.cells[idx] {
            CellClass::Band => problem.dirichlet[idx],
            CellClass::Exterior => problem.ghost[idx],
            CellClass::Interior => unreachable!("interior cells are unknowns"),
        }
    };

    // CSR assembly; rows in unknown order, columns ascending.
    let mut row_ptr = Vec::with_capacity(n + 1);
    let mut cols = Vec::new();
    let mut vals = Vec::new();
    let mut rhs = vec![0.0; n];
    row_ptr.push(0);
    for (row, &(i, j)) in unknowns.iter().enumerate() {
        let mut entries: Vec<(usize, f64)> = Vec::with_capacity(13);
        for &(di, dj, w) in &STENCIL {
            let (qi, qj) = (i as isize + di, j as isize + dj);
            let in_grid =
                qi >= 0 && qj >= 0 && (qi as usize) < grid.nx && (qj as usize) < grid.ny;
            let unknown = if in_grid {
                unknown_of_cell[grid.index(qi as usize, qj as usize)]
            } else {
                usize::MAX
            };
            if unknown != usize::MAX {
                entries.push((unknown, w));
            } else {
                rhs[row] -= w * known_value(qi, qj);
            }
        }
        entries.sort_by_key(|e| e.0);
        for (c, v) in entries {
            cols.push(c);
            vals.push(v);
        }
        row_ptr.push(cols.len());
    }

    let matvec = |x: &[f64], y: &mut [f64]| {
        for row in 0..n {
            let mut acc = 0.0;
            for k in row_ptr[row]..row_ptr[row + 1] {
                acc += vals[k] * x[cols[k]];
            }
            y[row] = acc;
        }
    };

    // Jacobi preconditioner from the assembled diagonal.
    let mut inv_diag = vec![0.0; n];
    for row in 0..n {
        for k in row_ptr[row]..row_ptr[row + 1] {
            if cols[k] == row {
                if vals[k] <= 0.0 {
                    return Err(ReconstructError::SingularSystem);
                }
                inv_diag[row] = 1.0 / vals[k];
            }
        }
    }

    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let rhs_norm = norm(&rhs);
    let mut x = vec![0.0; n];
    if rhs_norm == 0.0 {
        return Ok(finish(problem, &unknowns, x, 0, 0.0));
    }

    let mut r = rhs.clone();
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(r, d)| r * d).collect();
    let mut p = z.clone();
    let mut rz: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
    let mut ap = vec![0.0; n];
    for iter in 0..max_iter {
        matvec(&p, &mut ap);
        let pap: f64 = p.iter().zip(&ap).map(|(a, b)| a * b).sum();
        if !(pap > 0.0) {
            return Err(ReconstructError::SingularSystem);
        }
        let alpha = rz / pap;
        for k in 0..n {
            x[k] += alpha * p[k];
            r[k] -= alpha * ap[k];
        }
        let res = norm(&r);
        if res <= tol * rhs_norm {
            return Ok(finish(problem, &unknowns, x, iter + 1, res / rhs_norm));
        }
        for k in 0..n {
            z[k] = r[k] * inv_diag[k];
        }
        let rz_new: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
        let beta = rz_new / rz;
        rz = rz_new;
        for k in 0..n {
            p[k] = z[k] + beta * p[k];
        }
    }
    Err(ReconstructError::NoConvergence {
        iterations: max_iter,
        residual: norm(&r) / rhs_norm,
    })
}

fn finish(
    problem: &ReconstructionProblem,
    unknowns: &[(usize, usize)],
    x: Vec<f64>,
    iterations: usize,
    residual: f64,
) -> ColorField {
    let grid = problem.grid;
    let mut values = vec![0.0; grid.cell_count()];
    for j in 0..grid.ny {
        for i in 0..grid.nx {
            let idx = grid.index(i, j);
            if problem.cells[idx] == CellClass::Band {
                values[idx] = problem.dirichlet[idx];
            }
        }
    }
    for (row, &(i, j)) in unknowns.iter().enumerate() {
        values[grid.index(i, j)] = x[row];
    }
    ColorField {
        grid,
        cells: problem.cells.clone(),
        values,
        iterations,
        residual,
    }
}
