use dropflow::dataprep::{build_dataset, pipeline, synth::{synth_generate, SynthParams}, TerminalEvent};
use dropflow::neural::{build_breakage_net, build_contour_net, feature_scale, near_miss_undersample, Loss, OptimizerKind, TrainConfig, TrainItem};
use dropflow::simulate::{init_drop, predict_breakage, step_drop, InitDatabase, ModelSet};
use dropflow::geometry::CONTROL_POINTS;

fn zeroed(mut m: dropflow::neural::Model) -> dropflow::neural::Model {
    let z = vec![0.0; m.param_count()];
    m.set_params_flat(&z).unwrap();
    m
}

#[test]
fn dbg8() {
    let t0 = std::time::Instant::now();
    let params = SynthParams {
        n_sequences: 3, frames: 10, drops: 1, width: 128, height: 128,
        size_range: (0.07, 0.08), tail_elongation_rate: 0.12,
        split_elongation_threshold: 0.66, noise_amplitude: 0.0,
        ..Default::default()
    };
    let train_seqs = synth_generate(&params, 900).unwrap();
    let split_holdout = synth_generate(&SynthParams {
        n_sequences: 1, initial_elongation: 0.2, ..params.clone()
    }, 901).unwrap();
    let smooth_holdout = synth_generate(&SynthParams {
        n_sequences: 1, frames: 24, tail_elongation_rate: 0.02,
        split_elongation_threshold: 1.4, ..params.clone()
    }, 902).unwrap();
    let k = 3;
    let mut sequences = Vec::new();
    for s in &train_seqs {
        let (mut e, _) = pipeline::extract_sequences(&s.frames).unwrap();
        let b = sequences.len();
        for x in e.iter_mut() { x.id += b; }
        sequences.extend(e);
    }
    let (samples, _) = build_dataset(&sequences, k).unwrap();
    eprintln!("samples: {}, positives: {}", samples.len(), samples.iter().filter(|s| s.breakage).count());

    // breakage training with io_scale
    let feats: Vec<Vec<f64>> = samples.iter().map(|s| {
        let xs = &s.target[..52]; let ys = &s.target[52..104];
        let mx = xs.iter().sum::<f64>() / 52.0;
        let my = ys.iter().sum::<f64>() / 52.0;
        xs.iter().map(|x| x - mx).chain(ys.iter().map(|y| y - my)).collect()
    }).collect();
    let labels: Vec<bool> = samples.iter().map(|s| s.breakage).collect();
    let sel = near_miss_undersample(&feats, &labels, 1.0).unwrap();
    let max_abs = sel.iter().flat_map(|&i| feats[i].iter()).fold(0.0f64, |m, v| m.max(v.abs()));
    let scale = feature_scale(max_abs);
    eprintln!("balanced set: {}, feature scale {scale}", sel.len());
    let items: Vec<TrainItem> = sel.iter().map(|&i| TrainItem {
        branches: vec![vec![feats[i].iter().map(|v| v * scale).collect()]],
        target: vec![f64::from(labels[i] as u8)],
    }).collect();
    let mut bnet = build_breakage_net(12);
    bnet.io_scale = scale;
    let rep = dropflow::neural::train(&mut bnet, &items, &TrainConfig {
        epochs: 800, batch_size: items.len(), lr: 1e-3, lr_decay: 0.0,
        optimizer: OptimizerKind::adam_default(), loss: Loss::Bce, seed: 6,
        target_loss: Some(0.05),
    }).unwrap();
    eprintln!("breakage: {} epochs, loss {:.3e}", rep.epochs_run, rep.loss_curve.last().unwrap());

    // contour training
    let citems: Vec<TrainItem> = samples.iter().map(|s| {
        let mut xs = Vec::new(); let mut ys = Vec::new(); let mut cs = Vec::new();
        for step in &s.inputs {
            xs.push(step[..52].to_vec()); ys.push(step[52..104].to_vec()); cs.push(step[104..].to_vec());
        }
        TrainItem { branches: vec![xs, ys, cs], target: s.target.clone() }
    }).collect();
    let mut cnet = build_contour_net(11);
    let rep = dropflow::neural::train(&mut cnet, &citems, &TrainConfig {
        epochs: 140, batch_size: 8, lr: 2e-3, lr_decay: 0.0,
        optimizer: OptimizerKind::adam_default(), loss: Loss::Mse, seed: 5,
        target_loss: Some(1e-5),
    }).unwrap();
    eprintln!("contour: {} epochs, loss {:.3e}, elapsed {:.1?}", rep.epochs_run, rep.loss_curve.last().unwrap(), t0.elapsed());

    let db = InitDatabase::from_sequences(&sequences);
    let models = ModelSet::new(cnet, zeroed(dropflow::neural::build_gradient_net(0)), bnet).unwrap();

    // error rollout on smooth holdout
    let truth = &smooth_holdout[0].truth[0];
    eprintln!("smooth holdout len {}", truth.frames.len());
    let mut drop = init_drop(0, truth.frames[0].contour.clone(), 0.001, &db, k).unwrap();
    let mut errs = Vec::new();
    for step in 1..=20.min(truth.frames.len() - 1) {
        step_drop(&mut drop, &models, 30.0).unwrap();
        let got = drop.newest().contour.control_points();
        let want = truth.frames[step].contour.control_points();
        errs.push(got.iter().zip(want).map(|(a, b)| a.dist(*b)).sum::<f64>() / CONTROL_POINTS as f64);
    }
    eprintln!("smooth rollout mean err {:.4e} over {} steps", errs.iter().sum::<f64>() / errs.len() as f64, errs.len());

    // recall rollout on splitting holdout
    let truth = &split_holdout[0].truth[0];
    eprintln!("split holdout len {}, split {:?} event {:?}", truth.frames.len(), truth.split_frame, truth.terminal_event);
    let mut drop = init_drop(0, truth.frames[0].contour.clone(), 0.001, &db, k).unwrap();
    let mut fires = Vec::new();
    for step in 1..=16 {
        step_drop(&mut drop, &models, 30.0).unwrap();
        if predict_breakage(&drop, &models.breakage).unwrap() {
            fires.push(step);
        }
    }
    eprintln!("fires at {:?}", fires);
    eprintln!("total {:.1?}", t0.elapsed());
}
