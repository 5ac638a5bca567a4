//! Batch-size-1 training loop with Adam, a two-phase learning rate,
//! per-epoch checkpoints and resumption.

use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::data::{AugmentConfig, Dataset, SamplePair};
use crate::error::{Error, Result};
use crate::model::{pad_to_multiple, BitNetConfig, BitNetModel, Checkpoint, TrainState, Variant};
use crate::ops::l1_loss;
use crate::optim::{AdamConfig, AdamState};
use crate::tensor::{Shape, Tensor};

pub const LOSS_LOG: &str = "loss.log";
pub const LATEST_CHECKPOINT: &str = "latest.ckpt";

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub model: BitNetConfig,
    pub augment: AugmentConfig,
    pub target_bits: u8,
    pub epochs: usize,
    /// Learning rate of the first phase; the second phase uses a tenth.
    pub lr: f64,
    /// Seed for the Xavier-initialized layers.
    pub init_seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            model: BitNetConfig::default(),
            augment: AugmentConfig::default(),
            target_bits: 8,
            epochs: 100,
            lr: 1e-4,
            init_seed: 10_000,
        }
    }
}

impl TrainConfig {
    /// First epoch (0-based) trained at the reduced rate: `floor(0.75 E)`,
    /// but never the very first epoch.
    pub fn decay_epoch(&self) -> usize {
        (self.epochs * 3 / 4).max(1)
    }

    pub fn lr_for_epoch(&self, epoch: usize) -> f64 {
        if epoch < self.decay_epoch() {
            self.lr
        } else {
            self.lr / 10.0
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.augment.validate()?;
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be positive".into()));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!(
                "learning rate must be positive, got {}",
                self.lr
            )));
        }
        Ok(())
    }
}

/// One line of the loss log.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepRecord {
    /// 1-based optimizer step.
    pub step: u64,
    /// 1-based epoch.
    pub epoch: u64,
    pub loss: f64,
    pub lr: f64,
}

impl StepRecord {
    pub fn log_line(&self) -> String {
        format!(
            "{},{},{:.9e},{:e}",
            self.step, self.epoch, self.loss, self.lr
        )
    }
}

/// `(input, target)` in the layout the network consumes.
fn network_tensors(model: &BitNetModel, pair: &SamplePair) -> Result<(Tensor, Tensor)> {
    let cfg = model.config();
    let input = pair.network_input(cfg.use_bit_info);
    match cfg.variant {
        Variant::Rgb => Ok((input, pair.target.clone())),
        Variant::Chan if pair.image_channels() == 1 => Ok((input, pair.target.clone())),
        Variant::Chan => {
            let s = pair.target.shape();
            let target = pair
                .target
                .clone()
                .reshape(Shape::new(s.n * s.c, 1, s.h, s.w))?;
            Ok((model.chan_batch(&input)?, target))
        }
    }
}

/// Loss and parameter gradients for one sample. The input is reflect-padded
/// to the network alignment; the loss covers the original region only.
pub fn loss_and_grads(
    model: &BitNetModel,
    pair: &SamplePair,
) -> Result<(f64, crate::model::ModelGrads)> {
    let (input, target) = network_tensors(model, pair)?;
    let (padded, spec) = pad_to_multiple(&input, model.config().alignment());
    let (out, trace) = model.forward_train(&padded)?;
    let pred = crate::model::crop(&out, spec)?;
    let (loss, grad) = l1_loss(&pred, &target)?;
    let s = out.shape();
    let grad = crate::model::zero_extend(&grad, s.h, s.w);
    Ok((loss, model.backward(&trace, &grad)?))
}

pub struct Trainer {
    config: TrainConfig,
    model: BitNetModel,
    adam: AdamState,
    dataset: Dataset,
    step: u64,
    epoch: u64,
}

impl Trainer {
    pub fn new(config: TrainConfig, dataset: Dataset) -> Result<Self> {
        config.validate()?;
        let model = BitNetModel::build(config.model.clone(), config.init_seed)?;
        let adam = AdamState::new(model.param_lens(), AdamConfig::default());
        Ok(Trainer {
            config,
            model,
            adam,
            dataset,
            step: 0,
            epoch: 0,
        })
    }

    /// Continues from a training checkpoint. The dataset must be built with
    /// the same source and augmentation settings as the original run.
    pub fn resume(
        config: TrainConfig,
        mut dataset: Dataset,
        checkpoint: Checkpoint,
    ) -> Result<Self> {
        config.validate()?;
        let state = checkpoint
            .train
            .ok_or_else(|| Error::Config("checkpoint holds no training state".into()))?;
        if checkpoint.model.config() != &config.model {
            return Err(Error::Config(
                "checkpoint architecture differs from the configured one".into(),
            ));
        }
        dataset.restore_rng(&state.rng_state);
        Ok(Trainer {
            config,
            model: checkpoint.model,
            adam: state.adam,
            dataset,
            step: state.step,
            epoch: state.epoch,
        })
    }

    pub fn model(&self) -> &BitNetModel {
        &self.model
    }

    pub fn into_model(self) -> BitNetModel {
        self.model
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn epochs_done(&self) -> u64 {
        self.epoch
    }

    pub fn dataset_warnings(&self) -> usize {
        self.dataset.warnings()
    }

    /// One Adam update on one sample; returns the loss before the update.
    pub fn train_step(&mut self, pair: &SamplePair, lr: f64) -> Result<f64> {
        let (loss, grads) = loss_and_grads(&self.model, pair)?;
        if !loss.is_finite() {
            return Err(Error::NonFinite("training loss"));
        }
        self.adam
            .step(&mut self.model.params_mut(), &grads.slices(), lr)?;
        self.step += 1;
        Ok(loss)
    }

    /// One pass over the dataset.
    pub fn run_epoch(&mut self) -> Result<Vec<StepRecord>> {
        let lr = self.config.lr_for_epoch(self.epoch as usize);
        let epoch = self.epoch + 1;
        let pairs: Vec<SamplePair> = self.dataset.epoch().collect();
        if pairs.is_empty() {
            return Err(Error::Precondition(
                "no usable training images in this epoch".into(),
            ));
        }
        let mut records = Vec::with_capacity(pairs.len());
        for pair in &pairs {
            let loss = self.train_step(pair, lr)?;
            records.push(StepRecord {
                step: self.step,
                epoch,
                loss,
                lr,
            });
        }
        self.epoch = epoch;
        Ok(records)
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            model: self.model.clone(),
            train: Some(TrainState {
                step: self.step,
                epoch: self.epoch,
                rng_state: self.dataset.rng_state(),
                adam: self.adam.clone(),
            }),
        }
    }

    /// Trains the remaining epochs. After each epoch the loss lines are
    /// appended to `out_dir/loss.log` and the state is written to
    /// `ckpt_epochNNNN.ckpt` and `latest.ckpt`. A fresh run truncates the log.
    pub fn fit(&mut self, out_dir: impl AsRef<Path>) -> Result<Vec<StepRecord>> {
        let out_dir = out_dir.as_ref();
        fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
        let log_path = out_dir.join(LOSS_LOG);
        let mut log = OpenOptions::new()
            .create(true)
            .write(true)
            .append(self.step > 0)
            .truncate(self.step == 0)
            .open(&log_path)
            .map_err(|e| Error::io(&log_path, e))?;

        let mut all = Vec::new();
        while (self.epoch as usize) < self.config.epochs {
            let records = self.run_epoch()?;
            let mut text = String::new();
            for r in &records {
                text.push_str(&r.log_line());
                text.push('\n');
            }
            log.write_all(text.as_bytes())
                .map_err(|e| Error::io(&log_path, e))?;
            log.flush().map_err(|e| Error::io(&log_path, e))?;

            let ck = self.checkpoint();
            ck.save(epoch_checkpoint_path(out_dir, self.epoch))?;
            ck.save(out_dir.join(LATEST_CHECKPOINT))?;
            let mean = records.iter().map(|r| r.loss).sum::<f64>() / records.len() as f64;
            log::info!(
                "epoch {}/{}: {} steps, mean loss {mean:.6}, lr {:e}",
                self.epoch,
                self.config.epochs,
                records.len(),
                records[0].lr
            );
            all.extend(records);
        }
        Ok(all)
    }
}

pub fn epoch_checkpoint_path(out_dir: &Path, epoch: u64) -> PathBuf {
    out_dir.join(format!("ckpt_epoch{epoch:04}.ckpt"))
}
