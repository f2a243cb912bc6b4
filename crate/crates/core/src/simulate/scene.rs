//! Scene configuration, terrain, and the per-step orchestration loop.

use super::{
    find_split_pair, init_drop, merge_drops, predict_breakage, split_drop, step_drop, DropState,
    InitDatabase, ModelSet, SimulateError,
};
use crate::dataprep::read_pgm16;
use crate::geometry::{io::load_contour, Point, SplitConfig};
use crate::neural::io::load_model;
use crate::reconstruct::{
    color_to_height, export_mesh, smooth, GridSpec, ReconstructionProblem, TerrainSource,
};
use std::path::{Path, PathBuf};

/// Terrain under the drops: an inclined plane (flat in surface-local
/// coordinates) or a height field with spatially varying slope.
#[derive(Clone, Debug)]
pub enum Terrain {
    Plane { theta_deg: f64 },
    Field(TerrainField),
}

impl Terrain {
    pub fn z_at(&self, p: Point) -> f64 {
        match self {
            Terrain::Plane { .. } => 0.0,
            Terrain::Field(f) => f.z_at(p),
        }
    }

    pub fn incline_deg(&self, p: Point) -> f64 {
        match self {
            Terrain::Plane { theta_deg } => *theta_deg,
            Terrain::Field(f) => f.incline_deg(p),
        }
    }
}

impl TerrainSource for Terrain {
    fn z_at(&self, p: Point) -> f64 {
        Terrain::z_at(self, p)
    }
}

/// Height-field terrain over the unit domain: 16-bit PGM elevations scaled
/// by `z_scale`, cell spacing `h`.
#[derive(Clone, Debug)]
pub struct TerrainField {
    pub nx: usize,
    pub ny: usize,
    pub h: f64,
    pub z_scale: f64,
    values: Vec<f64>,
}

#[derive(Debug, serde::Serialize, serde::Deserialize)]
pub struct TerrainMeta {
    pub h: f64,
    pub z_scale: f64,
}

impl TerrainField {
    pub fn from_values(
        nx: usize,
        ny: usize,
        h: f64,
        z_scale: f64,
        values: Vec<f64>,
    ) -> Result<Self, SimulateError> {
        if values.len() != nx * ny || nx < 2 || ny < 2 {
            return Err(SimulateError::InvalidScene("bad terrain dimensions".into()));
        }
        Ok(TerrainField {
            nx,
            ny,
            h,
            z_scale,
            values,
        })
    }

    pub fn load(pgm_path: &Path, meta_path: &Path) -> Result<Self, SimulateError> {
        let data = std::fs::read(pgm_path)?;
        let (w, h_px, raw) = read_pgm16(&mut &data[..])?;
        let meta: TerrainMeta = serde_json::from_str(&std::fs::read_to_string(meta_path)?)
            .map_err(|e| SimulateError::InvalidScene(format!("bad terrain meta: {e}")))?;
        // PGM rows run top-down; grid j runs bottom-up.
        let mut values = vec![0.0; w * h_px];
        for row in 0..h_px {
            for col in 0..w {
                values[(h_px - 1 - row) * w + col] =
                    raw[row * w + col] as f64 / 65535.0 * meta.z_scale;
            }
        }
        TerrainField::from_values(w, h_px, meta.h, meta.z_scale, values)
    }

    fn sample(&self, i: isize, j: isize) -> f64 {
        let i = i.clamp(0, self.nx as isize - 1) as usize;
        let j = j.clamp(0, self.ny as isize - 1) as usize;
        self.values[j * self.nx + i]
    }

    pub fn z_at(&self, p: Point) -> f64 {
        let fi = (p.x / self.h - 0.5).clamp(0.0, (self.nx - 1) as f64);
        let fj = (p.y / self.h - 0.5).clamp(0.0, (self.ny - 1) as f64);
        let (i0, j0) = (fi.floor() as isize, fj.floor() as isize);
        let (di, dj) = (fi - i0 as f64, fj - j0 as f64);
        self.sample(i0, j0) * (1.0 - di) * (1.0 - dj)
            + self.sample(i0 + 1, j0) * di * (1.0 - dj)
            + self.sample(i0, j0 + 1) * (1.0 - di) * dj
            + self.sample(i0 + 1, j0 + 1) * di * dj
    }

    /// Local surface slope angle from central differences.
    pub fn incline_deg(&self, p: Point) -> f64 {
        let fi = (p.x / self.h - 0.5).clamp(0.0, (self.nx - 1) as f64);
        let fj = (p.y / self.h - 0.5).clamp(0.0, (self.ny - 1) as f64);
        let (i, j) = (fi.round() as isize, fj.round() as isize);
        let gx = (self.sample(i + 1, j) - self.sample(i - 1, j)) / (2.0 * self.h);
        let gy = (self.sample(i, j + 1) - self.sample(i, j - 1)) / (2.0 * self.h);
        (gx * gx + gy * gy).sqrt().atan().to_degrees()
    }
}

#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerrainSpec {
    Plane { theta_deg: f64 },
    Heightfield { pgm: PathBuf, meta: PathBuf },
}

#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
pub struct DropSpec {
    pub contour: PathBuf,
    pub volume: f64,
}

#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
pub struct ModelPaths {
    pub contour: PathBuf,
    pub gradient: PathBuf,
    pub breakage: PathBuf,
}

fn default_min_separation() -> usize {
    SplitConfig::default().min_separation()
}

fn default_split_delta() -> f64 {
    SplitConfig::default().delta()
}

/// Scene description; JSON document consumed by the simulator.
#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
pub struct SceneConfig {
    pub terrain: TerrainSpec,
    pub drops: Vec<DropSpec>,
    pub models: ModelPaths,
    pub init_db: PathBuf,
    pub k: usize,
    pub dt: f64,
    pub steps: usize,
    pub seed: u64,
    #[serde(default = "default_split_delta")]
    pub split_delta: f64,
    #[serde(default = "default_min_separation")]
    pub min_separation: usize,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

impl SceneConfig {
    pub fn validate(&self) -> Result<(), SimulateError> {
        if let TerrainSpec::Plane { theta_deg } = self.terrain {
            if !(theta_deg > 0.0 && theta_deg <= 90.0) {
                return Err(SimulateError::InvalidScene(format!(
                    "plane incline must lie in (0, 90], got {theta_deg}"
                )));
            }
        }
        if self.drops.is_empty() {
            return Err(SimulateError::InvalidScene("scene has no drops".into()));
        }
        if self.drops.iter().any(|d| !(d.volume > 0.0)) {
            return Err(SimulateError::InvalidScene(
                "drop volumes must be positive".into(),
            ));
        }
        if self.steps < 1 {
            return Err(SimulateError::InvalidScene("steps must be >= 1".into()));
        }
        if !(self.dt > 0.0) {
            return Err(SimulateError::InvalidScene("dt must be positive".into()));
        }
        if self.k < 1 {
            return Err(SimulateError::InvalidScene("k must be >= 1".into()));
        }
        SplitConfig::new(self.split_delta, self.min_separation)
            .map_err(|e| SimulateError::InvalidScene(e.to_string()))?;
        Ok(())
    }

    pub fn from_file(path: &Path) -> Result<Self, SimulateError> {
        let cfg: SceneConfig = serde_json::from_str(&std::fs::read_to_string(path)?)
            .map_err(|e| SimulateError::InvalidScene(format!("bad scene config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// One trajectory log row.
#[derive(Clone, Debug)]
pub struct TrajectoryRow {
    pub step: usize,
    pub drop: usize,
    pub center: Point,
    pub area: f64,
    pub volume: f64,
    pub event: &'static str,
}

/// Live simulation state.
pub struct Scene {
    pub drops: Vec<DropState>,
    pub models: ModelSet,
    pub terrain: Terrain,
    pub k: usize,
    pub dt: f64,
    pub split_cfg: SplitConfig,
    step_index: usize,
    next_id: usize,
    trajectory: Vec<TrajectoryRow>,
}

impl Scene {
    pub fn new(
        models: ModelSet,
        terrain: Terrain,
        k: usize,
        dt: f64,
        split_cfg: SplitConfig,
    ) -> Scene {
        Scene {
            drops: Vec::new(),
            models,
            terrain,
            k,
            dt,
            split_cfg,
            step_index: 0,
            next_id: 0,
            trajectory: Vec::new(),
        }
    }

    /// Load a scene (models, init database, terrain, drops) from its config.
    pub fn from_config(cfg: &SceneConfig) -> Result<Scene, SimulateError> {
        cfg.validate()?;
        let models = ModelSet::new(
            load_model(&cfg.models.contour)?,
            load_model(&cfg.models.gradient)?,
            load_model(&cfg.models.breakage)?,
        )?;
        let terrain = match &cfg.terrain {
            TerrainSpec::Plane { theta_deg } => Terrain::Plane {
                theta_deg: *theta_deg,
            },
            TerrainSpec::Heightfield { pgm, meta } => {
                Terrain::Field(TerrainField::load(pgm, meta)?)
            }
        };
        let db = InitDatabase::from_json(&std::fs::read_to_string(&cfg.init_db)?)?;
        let split_cfg = SplitConfig::new(cfg.split_delta, cfg.min_separation)
            .map_err(|e| SimulateError::InvalidScene(e.to_string()))?;
        let mut scene = Scene::new(models, terrain, cfg.k, cfg.dt, split_cfg);
        for spec in &cfg.drops {
            let contour = load_contour(&spec.contour)?;
            scene.add_drop(contour, spec.volume, &db)?;
        }
        Ok(scene)
    }

    pub fn add_drop(
        &mut self,
        contour: crate::geometry::Contour,
        volume: f64,
        db: &InitDatabase,
    ) -> Result<usize, SimulateError> {
        let id = self.next_id;
        self.next_id += 1;
        let drop = init_drop(id, contour, volume, db, self.k)?;
        self.drops.push(drop);
        self.log(id, "born");
        Ok(id)
    }

    /// Insert a pre-built drop (used by scripted scenarios and tests).
    pub fn add_drop_state(&mut self, mut drop: DropState) -> usize {
        let id = self.next_id;
        self.next_id += 1;
        drop.id = id;
        self.drops.push(drop);
        self.log(id, "born");
        id
    }

    pub fn live_drops(&self) -> impl Iterator<Item = &DropState> {
        self.drops.iter().filter(|d| d.alive)
    }

    pub fn step_index(&self) -> usize {
        self.step_index
    }

    pub fn total_volume(&self) -> f64 {
        self.live_drops().map(|d| d.volume).sum()
    }

    pub fn trajectory(&self) -> &[TrajectoryRow] {
        &self.trajectory
    }

    fn log(&mut self, drop: usize, event: &'static str) {
        let d = self.drops.iter().find(|d| d.id == drop).unwrap();
        let newest = d.newest();
        self.trajectory.push(TrajectoryRow {
            step: self.step_index,
            drop,
            center: newest.center,
            area: newest.contour.signed_sample_area().abs(),
            volume: d.volume,
            event,
        });
    }

    /// Mean terrain incline over the cells under a drop's footprint.
    fn theta_avg(&self, drop: &DropState) -> f64 {
        match &self.terrain {
            Terrain::Plane { theta_deg } => *theta_deg,
            Terrain::Field(f) => {
                let contour = &drop.newest().contour;
                let dense = contour.dense_samples();
                let (mut x0, mut x1, mut y0, mut y1) =
                    (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
                for p in &dense {
                    x0 = x0.min(p.x);
                    x1 = x1.max(p.x);
                    y0 = y0.min(p.y);
                    y1 = y1.max(p.y);
                }
                let mut sum = 0.0;
                let mut count = 0usize;
                let i0 = (x0 / f.h).floor().max(0.0) as usize;
                let i1 = ((x1 / f.h).ceil() as usize).min(f.nx - 1);
                let j0 = (y0 / f.h).floor().max(0.0) as usize;
                let j1 = ((y1 / f.h).ceil() as usize).min(f.ny - 1);
                for j in j0..=j1 {
                    for i in i0..=i1 {
                        let p = Point::new((i as f64 + 0.5) * f.h, (j as f64 + 0.5) * f.h);
                        if contour.contains(p) {
                            sum += f.incline_deg(p);
                            count += 1;
                        }
                    }
                }
                if count == 0 {
                    f.incline_deg(drop.newest().center)
                } else {
                    sum / count as f64
                }
            }
        }
    }

    /// Advance every live drop one step: predict, split where the classifier
    /// fires and a valid neck exists, then merge overlapping pairs greedily
    /// in ascending id order. Per-drop failures flag the drop dead without
    /// halting the others.
    pub fn step(&mut self) -> Result<(), SimulateError> {
        self.step_index += 1;
        self.drops.sort_by_key(|d| d.id);

        // Prediction.
        let ids: Vec<usize> = self.live_drops().map(|d| d.id).collect();
        for id in &ids {
            let idx = self.drops.iter().position(|d| d.id == *id).unwrap();
            let theta = self.theta_avg(&self.drops[idx]);
            let mut drop = self.drops[idx].clone();
            match step_drop(&mut drop, &self.models, theta) {
                Ok(()) => {
                    self.drops[idx] = drop;
                    self.log(*id, "");
                }
                Err(SimulateError::NonFinitePrediction { .. }) => {
                    self.drops[idx].alive = false;
                    self.log(*id, "failed");
                }
                Err(e) => return Err(e),
            }
        }

        // Splitting.
        for id in &ids {
            let idx = self.drops.iter().position(|d| d.id == *id).unwrap();
            if !self.drops[idx].alive {
                continue;
            }
            if !predict_breakage(&self.drops[idx], &self.models.breakage)? {
                continue;
            }
            let pair = match find_split_pair(&self.drops[idx].newest().contour, &self.split_cfg) {
                Ok(p) => p,
                Err(SimulateError::NoValidPair) => continue,
                Err(e) => return Err(e),
            };
            let child_ids = (self.next_id, self.next_id + 1);
            match split_drop(&self.drops[idx], pair, child_ids) {
                Ok((a, b)) => {
                    self.next_id += 2;
                    self.drops[idx].alive = false;
                    self.log(*id, "split");
                    self.drops.push(a);
                    self.drops.push(b);
                    self.log(child_ids.0, "born");
                    self.log(child_ids.1, "born");
                }
                // A bad neck cancels the split for this step.
                Err(SimulateError::DegenerateChild | SimulateError::Geometry(_)) => continue,
                Err(e) => return Err(e),
            }
        }

        // Merging, single pass in ascending (id_a, id_b) order. Disjoint
        // bounding boxes rule a pair out before the dense-sample test, which
        // keeps crowded scenes close to linear cost.
        let mut live: Vec<usize> = self.live_drops().map(|d| d.id).collect();
        live.sort_unstable();
        let boxes: std::collections::BTreeMap<usize, [f64; 4]> = live
            .iter()
            .map(|&id| {
                let d = self.drops.iter().find(|d| d.id == id).unwrap();
                let pts = d.newest().contour.dense_samples();
                let mut bb = [f64::MAX, f64::MIN, f64::MAX, f64::MIN];
                for p in &pts {
                    bb[0] = bb[0].min(p.x);
                    bb[1] = bb[1].max(p.x);
                    bb[2] = bb[2].min(p.y);
                    bb[3] = bb[3].max(p.y);
                }
                (id, bb)
            })
            .collect();
        let disjoint = |a: &[f64; 4], b: &[f64; 4]| {
            let eps = 1e-6;
            a[1] + eps < b[0] || b[1] + eps < a[0] || a[3] + eps < b[2] || b[3] + eps < a[2]
        };
        let mut consumed: Vec<usize> = Vec::new();
        for ai in 0..live.len() {
            if consumed.contains(&live[ai]) {
                continue;
            }
            for bi in ai + 1..live.len() {
                if consumed.contains(&live[ai]) || consumed.contains(&live[bi]) {
                    continue;
                }
                if disjoint(&boxes[&live[ai]], &boxes[&live[bi]]) {
                    continue;
                }
                let a_idx = self.drops.iter().position(|d| d.id == live[ai]).unwrap();
                let b_idx = self.drops.iter().position(|d| d.id == live[bi]).unwrap();
                let (o1, o2) = self.drops[a_idx]
                    .newest()
                    .contour
                    .overlap_samples(&self.drops[b_idx].newest().contour);
                if o1.is_empty() && o2.is_empty() {
                    continue;
                }
                let new_id = self.next_id;
                match merge_drops(&self.drops[a_idx], &self.drops[b_idx], new_id, self.k) {
                    Ok(merged) => {
                        self.next_id += 1;
                        self.drops[a_idx].alive = false;
                        self.drops[b_idx].alive = false;
                        consumed.push(live[ai]);
                        consumed.push(live[bi]);
                        self.log(live[ai], "merged");
                        self.log(live[bi], "merged");
                        self.drops.push(merged);
                        self.log(new_id, "born");
                    }
                    // Ambiguous outlines defer the merge one step.
                    Err(SimulateError::StitchFailure | SimulateError::Geometry(_)) => continue,
                    Err(e) => return Err(e),
                }
            }
        }
        Ok(())
    }

    /// Reconstruct and export one mesh per live drop for the current step.
    pub fn export_step_meshes(&self, out_dir: &Path) -> Result<Vec<PathBuf>, SimulateError> {
        std::fs::create_dir_all(out_dir)?;
        let mut written = Vec::new();
        for drop in self.live_drops() {
            let newest = drop.newest();
            let grid = GridSpec::fit_to_contour(&newest.contour)?;
            let problem =
                ReconstructionProblem::rasterize(&newest.contour, &newest.gradient, grid)?;
            let n = problem.interior_count().max(1);
            let color = crate::reconstruct::solve_biharmonic(&problem, 1e-8, 10 * n)?;
            let heights = smooth(&color_to_height(&color, drop.volume)?, 3);
            let mesh = export_mesh(&heights, Some(&self.terrain));
            let path = out_dir.join(format!(
                "step_{:05}_drop_{:03}.obj",
                self.step_index, drop.id
            ));
            crate::reconstruct::save_mesh(&path, &mesh)?;
            written.push(path);
        }
        Ok(written)
    }

    /// Trajectory log as CSV.
    pub fn trajectory_csv(&self) -> String {
        let mut s = String::from("step,drop,center_x,center_y,area,volume,event\n");
        for row in &self.trajectory {
            s.push_str(&format!(
                "{},{},{:.9e},{:.9e},{:.9e},{:.9e},{}\n",
                row.step, row.drop, row.center.x, row.center.y, row.area, row.volume, row.event
            ));
        }
        s
    }
}
