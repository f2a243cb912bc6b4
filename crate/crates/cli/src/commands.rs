//! Implementations of the six subcommands.

use crate::{
    CliError, EvalArgs, PrepArgs, ReconstructArgs, SimulateArgs, SynthArgs, TrainArgs,
};
use dropflow::dataprep::{
    build_dataset, dataset::TrainingSample, pipeline, read_dataset, read_pgm8,
    synth::{synth_generate, SynthParams},
    write_dataset, write_pgm8, DataPrepError, Frame, GradientProfile, TerminalEvent,
    TrackedSequence,
};
use dropflow::geometry::{io as contour_io, CONTROL_POINTS};
use dropflow::neural::{
    self, build_breakage_net, build_contour_net, build_gradient_net, near_miss_undersample,
    Loss, NetKind, NeuralError, OptimizerKind, TrainConfig, TrainItem,
};
use dropflow::reconstruct::{
    color_to_height, save_mesh, smooth, solve_biharmonic, export_mesh, GridSpec,
    ReconstructError, ReconstructionProblem,
};
use dropflow::simulate::{
    incline_scale, init_drop, predict_breakage, step_drop, InitDatabase, ModelSet, Scene,
    SceneConfig, SimulateError,
};
use std::path::{Path, PathBuf};

pub const MANIFEST_FORMAT: &str = "nd-manifest v1";
pub const TRUTH_FORMAT: &str = "nd-truth v1";
pub const GRADIENT_FORMAT: &str = "gradient v1";

// ---------------------------------------------------------------- synth

pub fn synth(args: &SynthArgs) -> Result<(), CliError> {
    let params = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| {
                CliError::config(format!("cannot read config {}: {e}", path.display()))
            })?;
            serde_json::from_str::<SynthParams>(&text)
                .map_err(|e| CliError::config(format!("bad generator config: {e}")))?
        }
        None => SynthParams::default(),
    };
    let sequences = synth_generate(&params, args.seed)
        .map_err(|e| CliError::config(format!("generator rejected parameters: {e}")))?;

    std::fs::create_dir_all(&args.out)
        .map_err(|e| CliError::config(format!("cannot create {}: {e}", args.out.display())))?;
    let mut dirs = Vec::new();
    for (s, seq) in sequences.iter().enumerate() {
        let dir_name = format!("seq_{s:03}");
        let dir = args.out.join(&dir_name);
        std::fs::create_dir_all(&dir).map_err(io_config)?;
        for frame in &seq.frames {
            let mut buf = Vec::new();
            write_pgm8(&mut buf, frame).map_err(io_config)?;
            std::fs::write(dir.join(format!("frame_{:06}.pgm", frame.timestamp)), buf)
                .map_err(io_config)?;
        }
        write_truth(&dir.join("truth.json"), &seq.truth)?;
        dirs.push(dir_name);
    }
    let manifest = serde_json::json!({
        "format": MANIFEST_FORMAT,
        "sequences": dirs,
    });
    std::fs::write(
        args.out.join("manifest.json"),
        serde_json::to_string_pretty(&manifest).unwrap(),
    )
    .map_err(io_config)?;
    println!(
        "wrote {} sequences x {} frames to {}",
        sequences.len(),
        params.frames,
        args.out.display()
    );
    Ok(())
}

fn io_config(e: std::io::Error) -> CliError {
    CliError::config(format!("io error: {e}"))
}

fn write_truth(path: &Path, truth: &[TrackedSequence]) -> Result<(), CliError> {
    let doc = serde_json::json!({
        "format": TRUTH_FORMAT,
        "sequences": truth,
    });
    std::fs::write(path, serde_json::to_string(&doc).unwrap()).map_err(io_config)
}

pub fn read_truth(path: &Path) -> Result<Vec<TrackedSequence>, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::config(format!("cannot read truth {}: {e}", path.display())))?;
    let doc: serde_json::Value = serde_json::from_str(&text)
        .map_err(|e| CliError::data(format!("bad truth file: {e}")))?;
    if doc.get("format").and_then(|v| v.as_str()) != Some(TRUTH_FORMAT) {
        return Err(CliError::data("truth file format mismatch".to_string()));
    }
    serde_json::from_value(doc.get("sequences").cloned().unwrap_or_default())
        .map_err(|e| CliError::data(format!("bad truth sequences: {e}")))
}

// ----------------------------------------------------------------- prep

pub fn prep(args: &PrepArgs) -> Result<(), CliError> {
    let frame_dirs: Vec<PathBuf> = match (&args.frames, &args.manifest) {
        (Some(dir), None) => vec![dir.clone()],
        (None, Some(manifest)) => read_manifest_dirs(manifest)?,
        _ => {
            return Err(CliError::config(
                "exactly one of --frames or --manifest is required",
            ))
        }
    };

    let mut all_sequences: Vec<TrackedSequence> = Vec::new();
    let mut splits = 0usize;
    let mut merges = 0usize;
    let mut skipped_blobs = 0usize;
    for dir in &frame_dirs {
        let frames = load_frames(dir)?;
        if frames.is_empty() {
            return Err(CliError::data(format!(
                "no frame_*.pgm files in {}",
                dir.display()
            )));
        }
        let (mut sequences, stats) = pipeline::extract_sequences(&frames).map_err(|e| match e {
            DataPrepError::AmbiguousTopology { .. } => CliError::data(e.to_string()),
            other => CliError::data(other.to_string()),
        })?;
        splits += stats.splits;
        merges += stats.merges;
        skipped_blobs += stats.skipped_blobs;
        let base = all_sequences.len();
        for s in sequences.iter_mut() {
            s.id += base;
        }
        all_sequences.extend(sequences);
    }

    let (samples, skipped_short) = build_dataset(&all_sequences, args.k)
        .map_err(|e| CliError::data(e.to_string()))?;
    if samples.is_empty() {
        eprintln!("warning: no sequence is longer than K+1; dataset is empty");
    }
    let mut buf = Vec::new();
    write_dataset(&mut buf, args.k, &samples).map_err(|e| CliError::data(e.to_string()))?;
    std::fs::write(&args.out, buf).map_err(io_config)?;

    let db = InitDatabase::from_sequences(&all_sequences);
    let db_path = args.out.with_extension("initdb.json");
    std::fs::write(&db_path, db.to_json()).map_err(io_config)?;

    println!(
        "sequences: {} (splits: {splits}, merges: {merges}); samples: {}; \
         skipped short sequences: {skipped_short}; skipped blobs: {skipped_blobs}",
        all_sequences.len(),
        samples.len()
    );
    println!(
        "dataset: {}; init database: {} ({} entries)",
        args.out.display(),
        db_path.display(),
        db.len()
    );
    Ok(())
}

fn read_manifest_dirs(manifest: &Path) -> Result<Vec<PathBuf>, CliError> {
    let text = std::fs::read_to_string(manifest).map_err(|e| {
        CliError::config(format!("cannot read manifest {}: {e}", manifest.display()))
    })?;
    let doc: serde_json::Value = serde_json::from_str(&text)
        .map_err(|e| CliError::config(format!("bad manifest: {e}")))?;
    if doc.get("format").and_then(|v| v.as_str()) != Some(MANIFEST_FORMAT) {
        return Err(CliError::config("manifest format mismatch"));
    }
    let base = manifest.parent().unwrap_or(Path::new("."));
    Ok(doc
        .get("sequences")
        .and_then(|v| v.as_array())
        .map(|a| {
            a.iter()
                .filter_map(|v| v.as_str())
                .map(|s| base.join(s))
                .collect()
        })
        .unwrap_or_default())
}

fn load_frames(dir: &Path) -> Result<Vec<Frame>, CliError> {
    let mut names: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| CliError::config(format!("cannot read {}: {e}", dir.display())))?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.starts_with("frame_") && n.ends_with(".pgm"))
        })
        .collect();
    names.sort();
    names
        .iter()
        .enumerate()
        .map(|(t, path)| {
            let data = std::fs::read(path).map_err(io_config)?;
            read_pgm8(&mut &data[..], t).map_err(|e| CliError::data(e.to_string()))
        })
        .collect()
}

// ---------------------------------------------------------------- train

pub fn train(args: &TrainArgs) -> Result<(), CliError> {
    let net = NetKind::parse(&args.net).expect("clap vets the net name");
    let text = std::fs::read(&args.dataset).map_err(|e| {
        CliError::config(format!("cannot read dataset {}: {e}", args.dataset.display()))
    })?;
    let (header, samples) = read_dataset(&mut &text[..]).map_err(|e| CliError::data(e.to_string()))?;

    let (mut model, items) = match net {
        NetKind::Contour => (build_contour_net(args.seed), contour_items(&samples)),
        NetKind::Gradient => {
            let (items, scale) = gradient_items(&samples, header.k);
            let mut m = build_gradient_net(args.seed);
            m.io_scale = scale;
            (m, items)
        }
        NetKind::Breakage => {
            let (items, pos, neg, scale) = breakage_items(&samples)?;
            println!("breakage balance: {pos} positives, {neg} negatives after near-miss");
            let mut m = build_breakage_net(args.seed);
            m.io_scale = scale;
            (m, items)
        }
    };
    if items.is_empty() {
        return Err(CliError::data(
            "dataset yields no training items for this net",
        ));
    }

    let cfg = TrainConfig {
        epochs: args.epochs,
        batch_size: args.batch,
        lr: args.lr,
        lr_decay: args.decay,
        optimizer: match args.optimizer.as_str() {
            "adam" => OptimizerKind::adam_default(),
            _ => OptimizerKind::sgd_default(),
        },
        loss: match net {
            NetKind::Breakage => Loss::Bce,
            _ => Loss::Mse,
        },
        seed: args.seed,
        target_loss: args.target_loss,
    };
    let report = neural::train(&mut model, &items, &cfg).map_err(|e| match e {
        NeuralError::NonFiniteLoss { .. } => CliError::training(e.to_string()),
        other => CliError::training(other.to_string()),
    })?;

    neural::io::save_model(&args.out, &model).map_err(|e| CliError::training(e.to_string()))?;
    let mut csv = String::from("epoch,loss\n");
    for (i, loss) in report.loss_curve.iter().enumerate() {
        csv.push_str(&format!("{},{:.9e}\n", i, loss));
    }
    let loss_path = args.out.with_extension("loss.csv");
    std::fs::write(&loss_path, csv).map_err(io_config)?;
    println!(
        "trained {} net on {} items for {} epochs (final loss {}); model: {}",
        net.as_str(),
        items.len(),
        report.epochs_run,
        report
            .loss_curve
            .last()
            .map_or("n/a".to_string(), |l| format!("{l:.6e}")),
        args.out.display()
    );
    Ok(())
}

/// Split a 106-feature step into the contour net's three branches.
fn step_branches(step: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    (
        step[..CONTROL_POINTS].to_vec(),
        step[CONTROL_POINTS..2 * CONTROL_POINTS].to_vec(),
        step[2 * CONTROL_POINTS..].to_vec(),
    )
}

pub fn contour_items(samples: &[TrainingSample]) -> Vec<TrainItem> {
    samples
        .iter()
        .map(|s| {
            let mut xs = Vec::new();
            let mut ys = Vec::new();
            let mut centers = Vec::new();
            for step in &s.inputs {
                let (x, y, c) = step_branches(step);
                xs.push(x);
                ys.push(y);
                centers.push(c);
            }
            TrainItem {
                branches: vec![xs, ys, centers],
                target: s.target.clone(),
            }
        })
        .collect()
}

/// Gradient sequences are reassembled by chaining grad_target values across
/// consecutive windows of each source sequence; a window starting at t0 has
/// its input gradients available once t0 >= K. Features are scaled to unit
/// order and the scale is recorded on the model.
pub fn gradient_items(samples: &[TrainingSample], k: usize) -> (Vec<TrainItem>, f64) {
    use std::collections::BTreeMap;
    let mut by_seq: BTreeMap<usize, BTreeMap<usize, &TrainingSample>> = BTreeMap::new();
    for s in samples {
        by_seq.entry(s.seq_id).or_default().insert(s.t0, s);
    }
    let mut max_abs = 0.0f64;
    let mut raw_items = Vec::new();
    for windows in by_seq.values() {
        for (&t0, target_sample) in windows.iter() {
            if t0 < k {
                continue;
            }
            // Inputs: gradients at steps t0..t0+k, i.e. grad_target of
            // windows t0-k..t0.
            let inputs: Option<Vec<Vec<f64>>> = (t0 - k..t0)
                .map(|w| windows.get(&w).map(|s| s.grad_target.clone()))
                .collect();
            let Some(inputs) = inputs else { continue };
            for v in inputs.iter().flatten().chain(&target_sample.grad_target) {
                max_abs = max_abs.max(v.abs());
            }
            raw_items.push((inputs, target_sample.grad_target.clone()));
        }
    }
    let scale = neural::feature_scale(max_abs);
    let items = raw_items
        .into_iter()
        .map(|(inputs, target)| TrainItem {
            branches: vec![inputs
                .into_iter()
                .map(|step| step.into_iter().map(|v| v * scale).collect())
                .collect()],
            target: target.into_iter().map(|v| v * scale).collect(),
        })
        .collect();
    (items, scale)
}

/// Breakage items: the target contour recentered by its own mean, balanced
/// with NearMiss-1 undersampling. Features are scaled to unit order; the
/// scale is returned for the model's io_scale.
pub fn breakage_items(
    samples: &[TrainingSample],
) -> Result<(Vec<TrainItem>, usize, usize, f64), CliError> {
    let features: Vec<Vec<f64>> = samples.iter().map(|s| breakage_features(&s.target)).collect();
    let labels: Vec<bool> = samples.iter().map(|s| s.breakage).collect();
    let selected = near_miss_undersample(&features, &labels, 1.0)
        .map_err(|e| CliError::data(e.to_string()))?;
    let max_abs = selected
        .iter()
        .flat_map(|&i| features[i].iter())
        .fold(0.0f64, |m, v| m.max(v.abs()));
    let scale = neural::feature_scale(max_abs);
    let pos = selected.iter().filter(|&&i| labels[i]).count();
    let neg = selected.len() - pos;
    let items = selected
        .iter()
        .map(|&i| TrainItem {
            branches: vec![vec![features[i].iter().map(|v| v * scale).collect()]],
            target: vec![if labels[i] { 1.0 } else { 0.0 }],
        })
        .collect();
    Ok((items, pos, neg, scale))
}

/// Mean-center the 104 coordinate features of a 106-feature step.
pub fn breakage_features(step: &[f64]) -> Vec<f64> {
    let xs = &step[..CONTROL_POINTS];
    let ys = &step[CONTROL_POINTS..2 * CONTROL_POINTS];
    let mx = xs.iter().sum::<f64>() / CONTROL_POINTS as f64;
    let my = ys.iter().sum::<f64>() / CONTROL_POINTS as f64;
    xs.iter()
        .map(|x| x - mx)
        .chain(ys.iter().map(|y| y - my))
        .collect()
}

// ------------------------------------------------------------- simulate

pub fn simulate(args: &SimulateArgs) -> Result<(), CliError> {
    let mut cfg = SceneConfig::from_file(&args.scene).map_err(scene_err)?;
    if let Some(out) = &args.out {
        cfg.output_dir = Some(out.clone());
    }
    let steps = cfg.steps;
    let mut scene = Scene::from_config(&cfg).map_err(scene_err)?;
    for step in 0..steps {
        let started = std::time::Instant::now();
        scene.step().map_err(scene_err)?;
        let live = scene.live_drops().count();
        let elapsed = started.elapsed().as_secs_f64();
        eprintln!(
            "step {:>4}: {live} drops, {:.3}s ({:.4}s per drop)",
            step + 1,
            elapsed,
            elapsed / live.max(1) as f64
        );
        if let Some(out) = &cfg.output_dir {
            scene.export_step_meshes(out).map_err(scene_err)?;
        }
    }
    if let Some(out) = &cfg.output_dir {
        std::fs::create_dir_all(out).map_err(io_config)?;
        std::fs::write(out.join("trajectory.csv"), scene.trajectory_csv())
            .map_err(io_config)?;
        println!("trajectory: {}", out.join("trajectory.csv").display());
    }
    println!(
        "simulated {steps} steps; {} live drops, total volume {:.6e}",
        scene.live_drops().count(),
        scene.total_volume()
    );
    Ok(())
}

fn scene_err(e: SimulateError) -> CliError {
    CliError::scene(e.to_string())
}

// ---------------------------------------------------------- reconstruct

pub fn reconstruct(args: &ReconstructArgs) -> Result<(), CliError> {
    let contour = contour_io::load_contour(&args.contour).map_err(|e| {
        CliError::config(format!("cannot load contour {}: {e}", args.contour.display()))
    })?;
    let profile = read_gradient_file(&args.gradient)?;
    let grid = GridSpec::fit_to_contour(&contour).map_err(|e| CliError::data(e.to_string()))?;
    let problem = ReconstructionProblem::rasterize(&contour, &profile, grid)
        .map_err(|e| CliError::data(e.to_string()))?;
    let n = problem.interior_count().max(1);
    let color = solve_biharmonic(&problem, 1e-8, 10 * n)
        .map_err(|e| CliError::data(e.to_string()))?;
    let heights = match color_to_height(&color, args.volume) {
        Ok(hf) => smooth(&hf, 3),
        Err(ReconstructError::DegenerateField) => {
            eprintln!("warning: color field carries no volume; writing a flat mesh");
            let zero = color_to_height(&color, 0.0).map_err(|e| CliError::data(e.to_string()))?;
            smooth(&zero, 0)
        }
        Err(e) => return Err(CliError::data(e.to_string())),
    };
    let mesh = export_mesh(&heights, None);
    save_mesh(&args.out, &mesh).map_err(io_config)?;
    println!(
        "mesh: {} ({} vertices, {} triangles, {} solver iterations)",
        args.out.display(),
        mesh.vertices.len(),
        mesh.triangles.len(),
        color.iterations
    );
    Ok(())
}

pub fn read_gradient_file(path: &Path) -> Result<GradientProfile, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        CliError::config(format!("cannot read gradient {}: {e}", path.display()))
    })?;
    let mut lines = text.lines();
    if lines.next().map(str::trim_end) != Some(GRADIENT_FORMAT) {
        return Err(CliError::data(format!(
            "expected header '{GRADIENT_FORMAT}' in {}",
            path.display()
        )));
    }
    let mags: Vec<f64> = lines
        .filter(|l| !l.trim().is_empty())
        .map(|l| l.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|e| CliError::data(format!("bad gradient value: {e}")))?;
    GradientProfile::new(mags).map_err(|e| CliError::data(e.to_string()))
}

// ----------------------------------------------------------------- eval

pub fn eval(args: &EvalArgs) -> Result<(), CliError> {
    let cfg = SceneConfig::from_file(&args.scene).map_err(scene_err)?;
    let truth = read_truth(&args.truth)?;
    let seq = truth
        .get(args.seq)
        .ok_or_else(|| CliError::data(format!("truth has no sequence {}", args.seq)))?;
    if seq.frames.is_empty() {
        return Err(CliError::data("evaluation sequence is empty"));
    }
    let models = ModelSet::new(
        neural::io::load_model(&cfg.models.contour).map_err(|e| CliError::scene(e.to_string()))?,
        neural::io::load_model(&cfg.models.gradient).map_err(|e| CliError::scene(e.to_string()))?,
        neural::io::load_model(&cfg.models.breakage).map_err(|e| CliError::scene(e.to_string()))?,
    )
    .map_err(scene_err)?;
    let db = match &args.db {
        Some(path) => InitDatabase::from_json(
            &std::fs::read_to_string(path).map_err(io_config)?,
        )
        .map_err(scene_err)?,
        None => {
            // Hold the evaluated sequence out of its own lookup set.
            let others: Vec<TrackedSequence> = truth
                .iter()
                .enumerate()
                .filter(|(i, _)| *i != args.seq)
                .map(|(_, s)| s.clone())
                .collect();
            if others.is_empty() {
                InitDatabase::from_sequences(&truth)
            } else {
                InitDatabase::from_sequences(&others)
            }
        }
    };
    let theta = match &cfg.terrain {
        dropflow::simulate::scene::TerrainSpec::Plane { theta_deg } => *theta_deg,
        _ => 30.0,
    };
    let _ = incline_scale(theta).map_err(scene_err)?;

    let first = &seq.frames[0];
    let volume = first.contour.enclosed_area().map_err(|e| CliError::data(e.to_string()))? * 0.05;
    let mut drop =
        init_drop(0, first.contour.clone(), volume, &db, cfg.k).map_err(scene_err)?;

    let steps = args.steps.min(seq.frames.len() - 1);
    let mut csv = String::from("step,drop,err,event\n");
    let mut errs = Vec::new();
    let mut predicted_splits = Vec::new();
    for step in 1..=steps {
        step_drop(&mut drop, &models, theta).map_err(scene_err)?;
        let truth_frame = &seq.frames[step];
        let got = drop.newest().contour.control_points();
        let want = truth_frame.contour.control_points();
        let err: f64 = got
            .iter()
            .zip(want)
            .map(|(a, b)| a.dist(*b))
            .sum::<f64>()
            / CONTROL_POINTS as f64;
        errs.push(err);
        let fired = predict_breakage(&drop, &models.breakage).map_err(scene_err)?;
        if fired {
            predicted_splits.push(step);
        }
        csv.push_str(&format!(
            "{step},0,{err:.9e},{}\n",
            if fired { "split" } else { "" }
        ));
    }

    // Event scoring against the truth split (if any), with a +-5 window.
    let truth_splits: Vec<usize> = (seq.terminal_event == TerminalEvent::Split)
        .then(|| seq.split_frame.unwrap())
        .into_iter()
        .collect();
    let window = 5usize;
    let matched_truth = truth_splits
        .iter()
        .filter(|&&t| predicted_splits.iter().any(|&p| p.abs_diff(t) <= window))
        .count();
    let matched_pred = predicted_splits
        .iter()
        .filter(|&&p| truth_splits.iter().any(|&t| p.abs_diff(t) <= window))
        .count();
    let recall = if truth_splits.is_empty() {
        1.0
    } else {
        matched_truth as f64 / truth_splits.len() as f64
    };
    let precision = if predicted_splits.is_empty() {
        if truth_splits.is_empty() {
            1.0
        } else {
            0.0
        }
    } else {
        matched_pred as f64 / predicted_splits.len() as f64
    };
    let mean_err = errs.iter().sum::<f64>() / errs.len().max(1) as f64;

    std::fs::write(&args.out, csv).map_err(io_config)?;
    println!(
        "evaluated {steps} steps: mean control-point error {mean_err:.6e}, \
         split precision {precision:.2}, recall {recall:.2}"
    );
    Ok(())
}
