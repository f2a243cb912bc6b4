use super::mesh::{export_mesh, save_mesh, TriangleMesh};
use super::*;
use crate::dataprep::GradientProfile;
use crate::geometry::{fit_spline, shapes::circle_outline, Point};
use std::collections::BTreeMap;

const DISC_CENTER: Point = Point { x: 0.5, y: 0.5 };

fn unit_grid(n: usize) -> GridSpec {
    GridSpec::new(n, n, 1.0 / n as f64, Point::new(0.0, 0.0)).unwrap()
}

fn disc_normal(p: Point) -> Point {
    let inward = DISC_CENTER - p;
    inward.scale(1.0 / inward.norm())
}

fn disc_project(radius: f64) -> impl Fn(Point) -> Point {
    move |p: Point| {
        let out = p - DISC_CENTER;
        DISC_CENTER + out.scale(radius / out.norm())
    }
}

fn disc_problem(
    n: usize,
    radius: f64,
    dirichlet: impl Fn(Point) -> f64,
    neumann: impl Fn(Point) -> f64,
) -> ReconstructionProblem {
    ReconstructionProblem::from_mask(
        unit_grid(n),
        |p| p.dist(DISC_CENTER) < radius,
        dirichlet,
        neumann,
        disc_project(radius),
    )
    .unwrap()
}

#[test]
fn rasterize_interior_count_matches_area() {
    let (contour, _) = fit_spline(&circle_outline(DISC_CENTER, 0.25, 256)).unwrap();
    let grid = unit_grid(64);
    let problem =
        ReconstructionProblem::rasterize(&contour, &GradientProfile::zeros(), grid).unwrap();
    let count = problem.interior_count() as f64;
    let want = std::f64::consts::PI * 0.0625 / (grid.h * grid.h);
    assert!(
        (count - want).abs() / want < 0.03,
        "interior {count} vs analytic {want}"
    );
}

#[test]
fn rasterize_rejects_margin_violation() {
    let (contour, _) = fit_spline(&circle_outline(Point::new(0.1, 0.5), 0.12, 256)).unwrap();
    let grid = unit_grid(32);
    assert!(matches!(
        ReconstructionProblem::rasterize(&contour, &GradientProfile::zeros(), grid),
        Err(ReconstructError::MarginViolation)
    ));
}

#[test]
fn rasterize_uniform_profile_gives_uniform_neumann() {
    let (contour, _) = fit_spline(&circle_outline(DISC_CENTER, 0.2, 256)).unwrap();
    let profile = GradientProfile::new(vec![3.5; 52]).unwrap();
    let problem =
        ReconstructionProblem::rasterize(&contour, &profile, unit_grid(64)).unwrap();
    for (idx, &cls) in problem.cells.iter().enumerate() {
        if cls == CellClass::Band {
            assert_eq!(problem.neumann[idx], 3.5);
        }
    }
}

#[test]
fn rasterize_rejects_tiny_contour() {
    let grid = unit_grid(64);
    let err =
        ReconstructionProblem::from_mask(grid, |_| false, |_| 0.0, |_| 0.0, |p| p)
            .unwrap_err();
    assert!(matches!(err, ReconstructError::ContourTooSmall(_)));
}

#[test]
fn zero_data_solves_to_zero_in_zero_iterations() {
    let problem = disc_problem(64, 0.3, |_| 0.0, |_| 0.0);
    let c = solve_biharmonic(&problem, 1e-8, 10_000).unwrap();
    assert_eq!(c.iterations, 0);
    assert_eq!(c.residual, 0.0);
    assert!(c.values.iter().all(|&v| v == 0.0));
}

fn manufactured_error(n: usize, c_star: impl Fn(Point) -> f64, grad: impl Fn(Point) -> Point) -> f64 {
    let radius = 0.35;
    let problem = disc_problem(
        n,
        radius,
        &c_star,
        |p| grad(p).dot(disc_normal(p)),
    );
    let solved = solve_biharmonic(&problem, 1e-9, 40 * n * n).unwrap();
    let mut max_err = 0.0f64;
    let mut max_ref = 0.0f64;
    for j in 0..problem.grid.ny {
        for i in 0..problem.grid.nx {
            let idx = problem.grid.index(i, j);
            if problem.cells[idx] == CellClass::Interior {
                let want = c_star(problem.grid.center(i, j));
                max_err = max_err.max((solved.values[idx] - want).abs());
                max_ref = max_ref.max(want.abs());
            }
        }
    }
    max_err / max_ref
}

#[test]
fn manufactured_cubic_solution_at_h128() {
    let rel = manufactured_error(
        128,
        |p| p.x.powi(3) + p.y.powi(3),
        |p| Point::new(3.0 * p.x * p.x, 3.0 * p.y * p.y),
    );
    assert!(rel < 0.05, "relative error {rel}");
}

#[test]
fn solver_honors_residual_contract() {
    let problem = disc_problem(48, 0.3, |_| 0.0, |_| 3.0);
    for tol in [1e-6, 1e-9] {
        let c = solve_biharmonic(&problem, tol, 48 * 48 * 40).unwrap();
        assert!(c.residual <= tol, "residual {} above tol {tol}", c.residual);
        assert!(c.iterations > 0);
    }
}

#[test]
fn manufactured_harmonic_solution_converges_with_h() {
    let errs: Vec<f64> = [32usize, 64]
        .iter()
        .map(|&n| {
            manufactured_error(
                n,
                |p| p.x * p.x - p.y * p.y,
                |p| Point::new(2.0 * p.x, -2.0 * p.y),
            )
        })
        .collect();
    assert!(
        errs[1] < errs[0],
        "error must decrease with h: {errs:?}"
    );
}

#[test]
fn symmetric_problem_gives_symmetric_field() {
    // Mirror symmetry about the horizontal axis through the disc center.
    let n = 64;
    let problem = disc_problem(n, 0.3, |_| 0.0, |_| 2.0);
    let c = solve_biharmonic(&problem, 1e-10, 40 * n * n).unwrap();
    let grid = problem.grid;
    for j in 0..grid.ny / 2 {
        let j_mirror = grid.ny - 1 - j;
        for i in 0..grid.nx {
            let a = c.values[grid.index(i, j)];
            let b = c.values[grid.index(i, j_mirror)];
            assert!(
                (a - b).abs() < 1e-8,
                "asymmetry {} at ({i},{j})",
                (a - b).abs()
            );
        }
    }
}

#[test]
fn stronger_head_gradient_pulls_peak_toward_head() {
    // Head at the bottom of the disc (flow direction -y).
    let n = 96;
    let head = Point::new(0.5, 0.5 - 0.3);
    let tail = Point::new(0.5, 0.5 + 0.3);
    let problem = disc_problem(n, 0.3, |_| 0.0, |p| {
        // 3x stronger slope at the head than the tail.
        let t = ((p.y - head.y) / 0.6).clamp(0.0, 1.0);
        3.0 - 2.0 * t
    });
    let c = solve_biharmonic(&problem, 1e-9, 40 * n * n).unwrap();
    let grid = problem.grid;
    let mut best = (f64::MIN, Point::new(0.0, 0.0));
    for j in 0..grid.ny {
        for i in 0..grid.nx {
            let idx = grid.index(i, j);
            if problem.cells[idx] != CellClass::Exterior && c.values[idx] > best.0 {
                best = (c.values[idx], grid.center(i, j));
            }
        }
    }
    assert!(
        best.1.dist(head) < best.1.dist(tail),
        "peak {:?} should sit closer to the head",
        best.1
    );
}

fn toy_field(n: usize, fill: impl Fn(Point) -> f64) -> ColorField {
    let problem = disc_problem(n, 0.3, |_| 0.0, |_| 0.0);
    let values: Vec<f64> = (0..problem.grid.cell_count())
        .map(|idx| {
            if problem.cells[idx] == CellClass::Interior {
                let i = idx % problem.grid.nx;
                let j = idx / problem.grid.nx;
                fill(problem.grid.center(i, j))
            } else {
                0.0
            }
        })
        .collect();
    ColorField {
        grid: problem.grid,
        cells: problem.cells,
        values,
        iterations: 0,
        residual: 0.0,
    }
}

#[test]
fn height_conversion_scales_to_exact_volume() {
    let c = toy_field(32, |_| 1.0);
    let sum = c.values.iter().sum::<f64>() * c.grid.h * c.grid.h;
    assert!(sum > 0.0);
    let hf = color_to_height(&c, 0.5).unwrap();
    assert!((hf.integral() - 0.5).abs() < 1e-12);
    // Uniform field: scale factor is volume / integral everywhere.
    let idx = c
        .values
        .iter()
        .position(|&v| v > 0.0)
        .unwrap();
    assert!((hf.values[idx] - 0.5 / sum).abs() < 1e-12);
}

#[test]
fn zero_volume_zeroes_the_field() {
    let c = toy_field(32, |_| 1.0);
    let hf = color_to_height(&c, 0.0).unwrap();
    assert!(hf.values.iter().all(|&v| v == 0.0));
    assert_eq!(hf.volume, 0.0);
}

#[test]
fn empty_color_field_is_degenerate() {
    let c = toy_field(32, |_| 0.0);
    assert!(matches!(
        color_to_height(&c, 0.5),
        Err(ReconstructError::DegenerateField)
    ));
}

#[test]
fn smooth_zero_iters_is_identity() {
    let c = toy_field(32, |p| 1.0 + p.x);
    let hf = color_to_height(&c, 0.3).unwrap();
    let out = smooth(&hf, 0);
    assert_eq!(out.values, hf.values);
}

#[test]
fn smooth_preserves_volume_exactly() {
    let mut rng = crate::rng::Rng::seed_from(17);
    for _ in 0..5 {
        let offset = rng.range_f64(0.2, 2.0);
        let c = toy_field(48, |p| offset + (13.0 * p.x).sin().abs() + p.y);
        let volume = rng.range_f64(0.01, 2.0);
        let hf = color_to_height(&c, volume).unwrap();
        for iters in [1, 3, 7] {
            let out = smooth(&hf, iters);
            assert!(
                (out.integral() - volume).abs() / volume < 1e-12,
                "volume drift {}",
                (out.integral() - volume).abs()
            );
        }
    }
}

#[test]
fn smooth_flattens_a_spike() {
    let mut c = toy_field(32, |_| 0.0);
    // Put a spike on some strict-interior cell.
    let spike_idx = c
        .cells
        .iter()
        .enumerate()
        .find(|(idx, &cls)| {
            cls == CellClass::Interior && {
                let i = idx % c.grid.nx;
                let j = idx / c.grid.nx;
                // Demand a fully strict neighborhood so neighbors rise.
                [(i - 1, j), (i + 1, j), (i, j - 1), (i, j + 1)]
                    .iter()
                    .all(|&(a, b)| c.cells[c.grid.index(a, b)] == CellClass::Interior)
            }
        })
        .map(|(idx, _)| idx)
        .unwrap();
    c.values[spike_idx] = 10.0;
    let hf = HeightField {
        grid: c.grid,
        cells: c.cells.clone(),
        values: c.values.clone(),
        volume: c.values.iter().sum::<f64>() * c.grid.h * c.grid.h,
    };
    let out = smooth(&hf, 1);
    // Rescaling restores total volume, so compare shape ratios instead.
    let max_before = 10.0;
    let max_after = out.values.iter().cloned().fold(0.0f64, f64::max);
    let total_after = out.integral();
    assert!((total_after - hf.volume).abs() < 1e-12);
    assert!(max_after < max_before);
    let i = spike_idx % c.grid.nx;
    let j = spike_idx / c.grid.nx;
    for (a, b) in [(i - 1, j), (i + 1, j), (i, j - 1), (i, j + 1)] {
        assert!(out.values[c.grid.index(a, b)] > 0.0);
    }
}

/// Euler and edge-sharing checks for a mesh that should be a disk.
fn check_watertight(mesh: &TriangleMesh, ring_z: impl Fn(&[f64; 3]) -> bool) {
    let mut edge_count: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    for t in &mesh.triangles {
        for (a, b) in [(t[0], t[1]), (t[1], t[2]), (t[2], t[0])] {
            let key = (a.min(b), a.max(b));
            *edge_count.entry(key).or_insert(0) += 1;
        }
    }
    let v = mesh.vertices.len() as isize;
    let e = edge_count.len() as isize;
    let f = mesh.triangles.len() as isize;
    assert_eq!(v - e + f, 1, "disk Euler characteristic");
    for (&(a, b), &count) in &edge_count {
        assert!(count <= 2, "edge shared by more than two triangles");
        if count == 1 {
            assert!(
                ring_z(&mesh.vertices[a]) && ring_z(&mesh.vertices[b]),
                "open edge off the terrain ring"
            );
        }
    }
}

fn block_heightfield() -> HeightField {
    // A 3x3 interior block: center cell strict, 8 surrounding band cells.
    let grid = GridSpec::new(9, 9, 0.1, Point::new(0.0, 0.0)).unwrap();
    let mut cells = vec![CellClass::Exterior; grid.cell_count()];
    let mut values = vec![0.0; grid.cell_count()];
    for j in 3..6 {
        for i in 3..6 {
            cells[grid.index(i, j)] = if i == 4 && j == 4 {
                CellClass::Interior
            } else {
                CellClass::Band
            };
        }
    }
    values[grid.index(4, 4)] = 0.25;
    HeightField {
        grid,
        cells,
        values,
        volume: 0.25 * 0.01,
    }
}

#[test]
fn mesh_of_block_is_watertight() {
    let hf = block_heightfield();
    let mesh = export_mesh(&hf, None);
    // 3x3 footprint plus its 16-cell skirt ring: a full 5x5 vertex patch.
    assert_eq!(mesh.vertices.len(), 25);
    assert_eq!(mesh.triangles.len(), 32);
    check_watertight(&mesh, |v| v[2] == 0.0);
}

#[test]
fn mesh_on_flat_terrain_equals_heights() {
    let hf = block_heightfield();
    let mesh = export_mesh(&hf, None);
    let max_z = mesh.vertices.iter().map(|v| v[2]).fold(f64::MIN, f64::max);
    assert_eq!(max_z, 0.25);
}

#[test]
fn mesh_drapes_on_terrain() {
    let hf = block_heightfield();
    let terrain = |p: Point| 2.0 + p.x;
    let mesh = export_mesh(&hf, Some(&terrain));
    for v in &mesh.vertices {
        assert!(v[2] >= 2.0);
    }
    let flat = export_mesh(&hf, None);
    for (a, b) in mesh.vertices.iter().zip(&flat.vertices) {
        assert!((a[2] - (b[2] + 2.0 + a[0])).abs() < 1e-12);
    }
}

#[test]
fn mesh_export_is_byte_identical() {
    let hf = block_heightfield();
    let mesh = export_mesh(&hf, None);
    let dir = std::env::temp_dir().join("dropflow_mesh_test");
    std::fs::create_dir_all(&dir).unwrap();
    let p1 = dir.join("a.obj");
    let p2 = dir.join("b.obj");
    save_mesh(&p1, &mesh).unwrap();
    save_mesh(&p2, &mesh).unwrap();
    assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
    let text = std::fs::read_to_string(&p1).unwrap();
    assert!(text.starts_with("v "));
    assert!(text.contains("\nf "));
}

#[test]
fn pgm_dump_has_header_and_payload() {
    let c = toy_field(32, |_| 1.0);
    let bytes = color_field_pgm(&c).unwrap();
    assert!(bytes.starts_with(b"P5\n32 32\n255\n"));
    assert_eq!(bytes.len(), 13 + 32 * 32);
}
