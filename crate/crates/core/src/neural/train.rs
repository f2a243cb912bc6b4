//! Seeded mini-batch training loop.

use super::graph::Model;
use super::optim::OptimizerState;
use super::{NeuralError, TrainConfig};
use crate::rng::Rng;

/// One training item: per-branch input sequences plus the target vector.
#[derive(Clone, Debug)]
pub struct TrainItem {
    pub branches: Vec<Vec<Vec<f64>>>,
    pub target: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct TrainReport {
    /// Mean loss per epoch, in order.
    pub loss_curve: Vec<f64>,
    /// Epochs actually run (early stop may cut the schedule short).
    pub epochs_run: usize,
}

/// Train a model in place and report the per-epoch loss curve.
///
/// Batch order is reshuffled every epoch from the seeded stream; dropout
/// masks come from the same stream, so a fixed seed reproduces the final
/// weights bit for bit.
pub fn train(
    model: &mut Model,
    items: &[TrainItem],
    cfg: &TrainConfig,
) -> Result<TrainReport, NeuralError> {
    cfg.validate()?;
    if items.is_empty() {
        return Err(NeuralError::EmptyDataset);
    }
    model.validate()?;
    let mut rng = Rng::seed_from(cfg.seed);
    let mut params = model.params_flat();
    let mut opt = OptimizerState::new(cfg.optimizer, &params);
    let mut curve = Vec::with_capacity(cfg.epochs);

    let mut order: Vec<usize> = (0..items.len()).collect();
    for epoch in 0..cfg.epochs {
        rng.shuffle(&mut order);
        let mut epoch_loss = 0.0;
        for (batch_idx, batch) in order.chunks(cfg.batch_size).enumerate() {
            model.set_params_flat(&params)?;
            let mut grad_sum = vec![0.0; params.len()];
            let mut batch_loss = 0.0;
            for &s in batch {
                let item = &items[s];
                let (pred, cache) = model.forward_cached(&item.branches, Some(&mut rng))?;
                let (loss, dloss) = cfg.loss.eval(&pred, &item.target);
                batch_loss += loss;
                let g = model.backward(&cache, &dloss)?;
                for (acc, gv) in grad_sum.iter_mut().zip(&g) {
                    *acc += gv;
                }
            }
            let inv = 1.0 / batch.len() as f64;
            for g in grad_sum.iter_mut() {
                *g *= inv;
            }
            batch_loss *= inv;
            if !batch_loss.is_finite() {
                return Err(NeuralError::NonFiniteLoss {
                    epoch,
                    batch: batch_idx,
                });
            }
            epoch_loss += batch_loss * batch.len() as f64;
            opt.step(&mut params, &grad_sum, cfg.lr, cfg.lr_decay)?;
        }
        epoch_loss /= items.len() as f64;
        curve.push(epoch_loss);
        if cfg.target_loss.is_some_and(|t| epoch_loss < t) {
            break;
        }
    }
    opt.finalize(&mut params);
    model.set_params_flat(&params)?;
    Ok(TrainReport {
        epochs_run: curve.len(),
        loss_curve: curve,
    })
}
