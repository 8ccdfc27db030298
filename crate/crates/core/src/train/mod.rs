//! Adam training of the network on clean/distorted pairs.

mod adam;
mod check;
mod state;

use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::degrade::ImagePair;
use crate::engine::Tensor;
use crate::metrics::{composite_loss, composite_loss_grad, LossConfig, SsimParams};
use crate::unet::{backward, forward, infer, save_weights, ModelWeights};
use crate::{Error, Result};

pub use adam::{adam_update, AdamConfig, AdamState};
pub use check::network_gradient_check;
pub use state::{load_state, save_state, TrainState, STATE_MAGIC, STATE_VERSION};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub alpha: f64,
    pub seed: u64,
    /// Save every this many epochs (and after the last); 0 disables.
    pub checkpoint_every: usize,
    /// Side length every training image must have.
    pub image_size: usize,
    pub checkpoint_dir: Option<PathBuf>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            batch_size: 4,
            epochs: 10,
            alpha: 0.80,
            seed: 0,
            checkpoint_every: 1,
            image_size: 64,
            checkpoint_dir: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!("learning_rate must be positive, got {}", self.learning_rate)));
        }
        if !(0.0..1.0).contains(&self.adam_beta1) || !(0.0..1.0).contains(&self.adam_beta2) {
            return Err(Error::Config("Adam betas must lie in [0, 1)".into()));
        }
        if !(self.adam_eps > 0.0) {
            return Err(Error::Config("adam_eps must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if self.image_size == 0 {
            return Err(Error::Config("image_size must be positive".into()));
        }
        LossConfig::new(self.alpha).map(|_| ())
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            beta1: self.adam_beta1,
            beta2: self.adam_beta2,
            eps: self.adam_eps,
        }
    }

    fn loss(&self) -> LossConfig {
        LossConfig { alpha: self.alpha }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub epoch: usize,
    pub step: u64,
    pub loss: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Total optimizer steps at the end of the epoch.
    pub step: u64,
    /// Mean of the epoch's step losses.
    pub train_loss: f64,
    /// Mean loss over the validation pairs, if any.
    pub val_loss: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct LossHistory {
    pub steps: Vec<StepRecord>,
    pub epochs: Vec<EpochRecord>,
}

fn write_csv<R: Serialize>(rows: &[R], header: &[&str], path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(path)?;
    w.write_record(header)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

impl LossHistory {
    /// Columns `epoch, step, train_loss, val_loss`.
    pub fn write_epochs_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        write_csv(&self.epochs, &["epoch", "step", "train_loss", "val_loss"], path.as_ref())
    }

    /// Columns `epoch, step, loss`.
    pub fn write_steps_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        write_csv(&self.steps, &["epoch", "step", "loss"], path.as_ref())
    }

    pub fn step_losses(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.loss).collect()
    }
}

/// Result of a training run.
#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub weights: ModelWeights<f32>,
    pub history: LossHistory,
    pub state: TrainState,
}

/// Path of the weights saved after `epoch`; the optimizer sidecar uses the
/// same stem with extension `udas`.
pub fn checkpoint_path(dir: &Path, epoch: usize) -> PathBuf {
    dir.join(format!("epoch_{epoch:04}.udae"))
}

pub fn state_path(dir: &Path, epoch: usize) -> PathBuf {
    dir.join(format!("epoch_{epoch:04}.udas"))
}

/// Visiting order for `epoch` (1-based): a permutation seeded by the run
/// seed on a per-epoch stream, so resumed runs see the same order.
pub fn epoch_order(seed: u64, epoch: usize, n: usize) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(epoch as u64);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    order
}

fn stack_pairs(pairs: &[ImagePair], idx: &[usize]) -> Result<(Tensor, Tensor)> {
    let distorted: Vec<&Tensor> = idx.iter().map(|&i| &pairs[i].distorted).collect();
    let clean: Vec<&Tensor> = idx.iter().map(|&i| &pairs[i].clean).collect();
    Ok((Tensor::stack(&distorted)?, Tensor::stack(&clean)?))
}

fn check_pairs(pairs: &[ImagePair], cfg: &TrainConfig, what: &str) -> Result<()> {
    let want = [1, 3, cfg.image_size, cfg.image_size];
    for p in pairs {
        if p.clean.shape().dims() != want || p.distorted.shape().dims() != want {
            return Err(Error::Config(format!(
                "{what} pair {} is {} / {}, expected image_size {}",
                p.id,
                p.clean.shape(),
                p.distorted.shape(),
                cfg.image_size
            )));
        }
    }
    Ok(())
}

/// Mean composite loss of the model over `pairs`, in batches of `batch_size`.
pub fn mean_loss(weights: &ModelWeights<f32>, pairs: &[ImagePair], cfg: &TrainConfig) -> Result<Option<f64>> {
    if pairs.is_empty() {
        return Ok(None);
    }
    let idx: Vec<usize> = (0..pairs.len()).collect();
    let mut total = 0.0;
    for chunk in idx.chunks(cfg.batch_size) {
        let (input, target) = stack_pairs(pairs, chunk)?;
        let out = infer(weights, &input)?;
        let loss = composite_loss(&out, &target, &cfg.loss(), &SsimParams::default())?;
        total += loss.value * chunk.len() as f64;
    }
    Ok(Some(total / pairs.len() as f64))
}

/// Trains from scratch for `cfg.epochs` epochs.
pub fn train(
    weights: ModelWeights<f32>,
    train_pairs: &[ImagePair],
    val_pairs: &[ImagePair],
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    let state = TrainState::new(&weights);
    train_from(weights, state, train_pairs, val_pairs, cfg)
}

/// Continues a run after `state.epoch` completed epochs up to `cfg.epochs`.
pub fn train_from(
    mut weights: ModelWeights<f32>,
    mut state: TrainState,
    train_pairs: &[ImagePair],
    val_pairs: &[ImagePair],
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    weights.validate()?;
    if train_pairs.is_empty() {
        return Err(Error::Empty("training set".into()));
    }
    check_pairs(train_pairs, cfg, "training")?;
    check_pairs(val_pairs, cfg, "validation")?;
    if !cfg.image_size.is_multiple_of(weights.config.size_multiple()) {
        return Err(Error::Indivisible {
            op: "train",
            shape: [1, 3, cfg.image_size, cfg.image_size].into(),
            divisor: weights.config.size_multiple(),
        });
    }
    let (adam, loss_cfg, ssim) = (cfg.adam(), cfg.loss(), SsimParams::default());
    let mut history = LossHistory::default();
    for epoch in state.epoch + 1..=cfg.epochs {
        let order = epoch_order(cfg.seed, epoch, train_pairs.len());
        let mut epoch_sum = 0.0;
        let mut batches = 0usize;
        for batch in order.chunks(cfg.batch_size) {
            let (input, target) = stack_pairs(train_pairs, batch)?;
            let fwd = forward(&weights, &input, true)?;
            let (loss, grad) = composite_loss_grad(&fwd.output, &target, &loss_cfg, &ssim)?;
            let step = state.adam.step + 1;
            if !loss.value.is_finite() {
                return Err(Error::NonFinite(format!(
                    "loss {} at epoch {epoch} step {step}; layer norms {:?}",
                    loss.value,
                    weights.layer_norms()
                )));
            }
            let grads = backward(&weights, fwd.tape.as_ref(), &grad)?;
            adam_update(&mut weights, &grads, &mut state.adam, &adam)?;
            if !weights.is_finite() {
                return Err(Error::NonFinite(format!(
                    "parameters after epoch {epoch} step {step}; layer norms {:?}",
                    weights.layer_norms()
                )));
            }
            history.steps.push(StepRecord {
                epoch,
                step,
                loss: loss.value,
            });
            epoch_sum += loss.value;
            batches += 1;
        }
        state.epoch = epoch;
        let record = EpochRecord {
            epoch,
            step: state.adam.step,
            train_loss: epoch_sum / batches as f64,
            val_loss: mean_loss(&weights, val_pairs, cfg)?,
        };
        log::info!(
            "epoch {epoch}/{}: train {:.5}, val {}",
            cfg.epochs,
            record.train_loss,
            record.val_loss.map_or("-".to_string(), |v| format!("{v:.5}"))
        );
        history.epochs.push(record);
        if let Some(dir) = &cfg.checkpoint_dir {
            if cfg.checkpoint_every > 0 && (epoch % cfg.checkpoint_every == 0 || epoch == cfg.epochs) {
                save_weights(&weights, checkpoint_path(dir, epoch))?;
                save_state(&state, state_path(dir, epoch))?;
            }
        }
    }
    Ok(TrainOutcome {
        weights,
        history,
        state,
    })
}
