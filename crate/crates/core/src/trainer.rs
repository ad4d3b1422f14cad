//! Deterministic mini-batch training with two optimizer groups.
//!
//! Each batch is scored once. The constants optimizer steps on the mean of
//! the sharpness and mutual-elimination terms first, then the main optimizer
//! steps on the mean classification loss.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::counterfactual::{CMode, CParams, InferenceMode};
use crate::data::{class_stats, Dataset, Sample};
use crate::error::{Error, Result};
use crate::eval::evaluate;
use crate::losses::{LossBreakdown, LossTerm};
use crate::model::{Gradients, ModelDims, ModelParams};
use crate::optim::{AdamConfig, ParamGroup};
use crate::par::map_ordered;

/// Published class weights for (positive, neutral, negative).
pub const PUBLISHED_CLASS_WEIGHTS: [f64; 3] = [1.68, 9.3, 3.36];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lr_main: f64,
    pub lr_c: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub class_weights: Vec<f64>,
    pub c_mode: CMode,
    pub hidden_dim: usize,
    pub weight_decay: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    /// Learning rate for pre-trained encoders. Unused by the branch scorers;
    /// carried for feature pipelines that fine-tune their encoders.
    pub lr_encoder: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr_main: 3e-3,
            lr_c: 1e-5,
            epochs: 20,
            batch_size: 16,
            seed: 0,
            class_weights: PUBLISHED_CLASS_WEIGHTS.to_vec(),
            c_mode: CMode::Nonuniform,
            hidden_dim: 32,
            weight_decay: 0.0,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            lr_encoder: 5e-6,
        }
    }
}

impl TrainConfig {
    pub const PRESETS: [&'static str; 2] = ["appendix-b", "synthetic"];

    /// Named presets. `appendix-b` is the published protocol; `synthetic`
    /// raises the main learning rate for the small scorers on the synthetic
    /// benchmark.
    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "appendix-b" => Ok(Self::default()),
            "synthetic" => Ok(TrainConfig { lr_main: 1e-2, ..Self::default() }),
            other => Err(Error::config("preset", format!("unknown preset `{other}`"))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lr_main > 0.0 && self.lr_main.is_finite()) {
            return Err(Error::config("lr_main", "must be positive"));
        }
        if !(self.lr_c > 0.0 && self.lr_c.is_finite()) {
            return Err(Error::config("lr_c", "must be positive"));
        }
        if self.epochs < 1 {
            return Err(Error::config("epochs", "must be at least 1"));
        }
        if self.batch_size < 1 {
            return Err(Error::config("batch_size", "must be at least 1"));
        }
        if self.class_weights.iter().any(|w| !(*w > 0.0 && w.is_finite())) {
            return Err(Error::config("class_weights", "weights must be positive"));
        }
        if !(self.weight_decay >= 0.0) {
            return Err(Error::config("weight_decay", "must be non-negative"));
        }
        if !(0.0..1.0).contains(&self.adam_beta1) || !(0.0..1.0).contains(&self.adam_beta2) {
            return Err(Error::config("adam_beta", "betas must lie in [0, 1)"));
        }
        if !(self.adam_eps > 0.0) {
            return Err(Error::config("adam_eps", "must be positive"));
        }
        Ok(())
    }

    fn adam(&self, lr: f64) -> AdamConfig {
        AdamConfig {
            lr,
            beta1: self.adam_beta1,
            beta2: self.adam_beta2,
            eps: self.adam_eps,
            weight_decay: self.weight_decay,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModeAccuracy {
    pub mode: InferenceMode,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Per-sample mean of every loss term over the epoch.
    pub train_loss: LossBreakdown,
    pub val_accuracy: Vec<ModeAccuracy>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
}

impl TrainHistory {
    /// One JSON object per epoch, newline-terminated.
    pub fn to_jsonl(&self) -> String {
        self.epochs
            .iter()
            .map(|e| serde_json::to_string(e).expect("epoch record serializes") + "\n")
            .collect()
    }
}

/// Which optimizer groups a step is allowed to update.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StepGroups {
    pub c: bool,
    pub main: bool,
}

impl StepGroups {
    pub const BOTH: StepGroups = StepGroups { c: true, main: true };
    pub const C_ONLY: StepGroups = StepGroups { c: true, main: false };
    pub const MAIN_ONLY: StepGroups = StepGroups { c: false, main: true };
}

/// Model plus the two optimizer groups.
#[derive(Debug, Clone)]
pub struct Trainer {
    pub model: ModelParams,
    pub config: TrainConfig,
    main_opt: ParamGroup,
    c_opt: ParamGroup,
}

impl Trainer {
    pub fn new(model: ModelParams, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        if config.class_weights.len() != model.dims.num_classes {
            return Err(Error::DimMismatch {
                what: "class weights",
                expected: model.dims.num_classes,
                got: config.class_weights.len(),
            });
        }
        let main_opt = ParamGroup::new(
            config.adam(config.lr_main),
            &[model.text.weights.len(), model.image.weights.len(), model.joint.weights.len()],
        );
        let c_opt = ParamGroup::new(config.adam(config.lr_c), &[model.c.values.len()]);
        Ok(Trainer { model, config, main_opt, c_opt })
    }

    /// Initializes a model for `train_set` according to `config`.
    pub fn for_dataset(config: TrainConfig, train_set: &Dataset) -> Result<Self> {
        config.validate()?;
        if train_set.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let dims = ModelDims::from_header(&train_set.header, config.hidden_dim);
        let model_seed = config.seed;
        let seeds = crate::model::Seeds::derive(model_seed);
        let freqs = class_stats(train_set)?.frequencies;
        let c = CParams::for_mode(config.c_mode, dims.num_classes, seeds.c, Some(&freqs))?;
        Self::new(ModelParams::init(dims, c, model_seed)?, config)
    }

    /// Scores a batch, steps the enabled groups and returns the batch's
    /// summed per-sample losses (computed before the update).
    pub fn step_batch(&mut self, batch: &[&Sample], groups: StepGroups) -> Result<LossBreakdown> {
        if batch.is_empty() {
            return Ok(LossBreakdown::default());
        }
        let model = &self.model;
        let weights = &self.config.class_weights;
        let per_sample = map_ordered(batch, |s| model.sample_gradients(s, weights, &LossTerm::ALL));
        let mut sum_loss = LossBreakdown::default();
        let mut grad = Gradients::zeros_like(model);
        let scale = 1.0 / batch.len() as f64;
        for r in per_sample {
            let (l, g) = r?;
            sum_loss.accumulate(&l, 1.0);
            grad.add_scaled(&g, scale);
        }

        if groups.c && self.model.c.mode.is_learnable() {
            self.c_opt.step(&mut [&mut self.model.c.values], &[&grad.c]);
        }
        if groups.main {
            let m = &mut self.model;
            self.main_opt.step(
                &mut [&mut m.text.weights, &mut m.image.weights, &mut m.joint.weights],
                &[&grad.text, &grad.image, &grad.joint],
            );
        }
        Ok(sum_loss)
    }

    /// Runs one epoch over `data` in a shuffled order drawn from `rng`.
    pub fn run_epoch(&mut self, data: &Dataset, rng: &mut ChaCha8Rng) -> Result<LossBreakdown> {
        let mut order: Vec<usize> = (0..data.len()).collect();
        order.shuffle(rng);
        let mut total = LossBreakdown::default();
        for chunk in order.chunks(self.config.batch_size) {
            let batch: Vec<&Sample> = chunk.iter().map(|&i| &data.samples[i]).collect();
            let l = self.step_batch(&batch, StepGroups::BOTH)?;
            total.accumulate(&l, 1.0);
        }
        let mut mean = LossBreakdown::default();
        mean.accumulate(&total, 1.0 / data.len() as f64);
        Ok(mean)
    }
}

/// Trains from scratch. Validation accuracy for every inference mode is
/// recorded after each epoch when `val_set` is non-empty.
pub fn train(config: &TrainConfig, train_set: &Dataset, val_set: &Dataset) -> Result<(ModelParams, TrainHistory)> {
    if !val_set.is_empty() && train_set.header != val_set.header {
        return Err(Error::InvalidInput("train and validation headers differ".into()));
    }
    let mut trainer = Trainer::for_dataset(config.clone(), train_set)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5348_5546_464c_4531);
    let mut history = TrainHistory::default();
    for epoch in 1..=config.epochs {
        let train_loss = trainer.run_epoch(train_set, &mut rng)?;
        let val_accuracy = if val_set.is_empty() {
            Vec::new()
        } else {
            evaluate(&trainer.model, val_set, &InferenceMode::ALL)?
                .modes
                .iter()
                .map(|m| ModeAccuracy { mode: m.mode, accuracy: m.accuracy })
                .collect()
        };
        history.epochs.push(EpochRecord { epoch, train_loss, val_accuracy });
    }
    Ok((trainer.model, history))
}
