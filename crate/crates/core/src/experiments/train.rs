use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{ExperimentError, NnError};
use crate::nn::{AdamConfig, AdamState, Network, Tensor};
use crate::par::{ordered_map, Execution};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs without a validation improvement before stopping.
    pub patience: usize,
    pub adam: AdamConfig,
    #[serde(default)]
    pub execution: Execution,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { batch_size: 8, max_epochs: 200, patience: 10, adam: AdamConfig::default(), execution: Execution::Parallel }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), ExperimentError> {
        if self.batch_size == 0 {
            return Err(ExperimentError::Config("batch_size must be at least 1".into()));
        }
        if !(self.adam.learning_rate > 0.0) {
            return Err(ExperimentError::Config(format!("learning rate {} must be positive", self.adam.learning_rate)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLoss {
    pub epoch: usize,
    /// Mean per-sample loss seen during the epoch; epoch 0 is the untrained
    /// network evaluated on the whole training set.
    pub train_loss: f64,
    pub val_loss: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingHistory {
    pub epochs: Vec<EpochLoss>,
    /// Epoch whose parameters were kept (0 = initial weights).
    pub best_epoch: usize,
    pub stopped_early: bool,
}

/// Source of `(input, target)` pairs addressed by sample index.
pub trait Samples: Sync {
    fn input(&self, index: usize) -> Result<Tensor, NnError>;
    fn target(&self, index: usize) -> &[f64];
}

fn mean_loss(net: &Network, data: &dyn Samples, idx: &[usize], exec: Execution) -> Result<f64, ExperimentError> {
    let losses = ordered_map(exec, idx.len(), |j| net.loss(&data.input(idx[j])?, data.target(idx[j])));
    let mut sum = 0.0;
    for l in losses {
        sum += l?;
    }
    Ok(sum / idx.len().max(1) as f64)
}

/// Minibatch Adam on MSE with early stopping on the validation loss (the
/// training loss when `validation` is empty). The best parameters seen are
/// restored before returning. Per-sample gradients may be computed in
/// parallel but are always summed in batch order.
pub fn train_network(
    net: &mut Network,
    data: &dyn Samples,
    train: &[usize],
    validation: &[usize],
    cfg: &TrainConfig,
    seed: u64,
) -> Result<TrainingHistory, ExperimentError> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(ExperimentError::Config("empty training set".into()));
    }
    let exec = cfg.execution;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut adam = AdamState::new(net.num_params(), cfg.adam);
    let monitor = |net: &Network| -> Result<Option<f64>, ExperimentError> {
        if validation.is_empty() {
            Ok(None)
        } else {
            mean_loss(net, data, validation, exec).map(Some)
        }
    };
    let initial = EpochLoss { epoch: 0, train_loss: mean_loss(net, data, train, exec)?, val_loss: monitor(net)? };
    let score = |e: &EpochLoss| e.val_loss.unwrap_or(e.train_loss);
    let mut best = (score(&initial), 0usize, net.params.clone());
    let mut history = TrainingHistory { epochs: vec![initial], best_epoch: 0, stopped_early: false };
    let mut order = train.to_vec();
    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let results = ordered_map(exec, batch.len(), |j| net.loss_and_grad(&data.input(batch[j])?, data.target(batch[j])));
            let mut grad = vec![0.0; net.num_params()];
            for r in results {
                let (loss, g) = r?;
                loss_sum += loss;
                for (a, b) in grad.iter_mut().zip(&g) {
                    *a += b;
                }
            }
            let scale = 1.0 / batch.len() as f64;
            grad.iter_mut().for_each(|g| *g *= scale);
            if adam.step(&mut net.params, &grad).is_err() {
                return Err(ExperimentError::Diverged { epoch });
            }
        }
        let record = EpochLoss { epoch, train_loss: loss_sum / train.len() as f64, val_loss: monitor(net)? };
        if !record.train_loss.is_finite() || record.val_loss.is_some_and(|v| !v.is_finite()) {
            return Err(ExperimentError::Diverged { epoch });
        }
        log::debug!("epoch {epoch}: train {:.6e} val {:?}", record.train_loss, record.val_loss);
        let s = score(&record);
        history.epochs.push(record);
        if s < best.0 {
            best = (s, epoch, net.params.clone());
        } else if epoch - best.1 >= cfg.patience {
            history.stopped_early = true;
            break;
        }
    }
    history.best_epoch = best.1;
    net.params = best.2;
    Ok(history)
}
