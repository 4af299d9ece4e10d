use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::metrics::{micro_f1, predict_labels};
use super::Dataset;
use crate::autodiff::{adam_step, Adam, Tape};
use crate::error::{Error, Result};
use crate::graph::DenseMatrix;
use crate::models::{build_logits, class_weights, loss, ForwardMode, GraphOperators, ModelConfig, ModelParams};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hyper {
    pub lr: f64,
    pub max_epochs: usize,
    pub min_epochs: usize,
    pub patience: usize,
    pub l2: f64,
}

impl Default for Hyper {
    fn default() -> Self {
        Self {
            lr: 1e-2,
            max_epochs: 2000,
            min_epochs: 50,
            patience: 30,
            l2: 5e-4,
        }
    }
}

impl Hyper {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Invalid(format!("learning rate {} must be positive", self.lr)));
        }
        if !(self.l2 >= 0.0 && self.l2.is_finite()) {
            return Err(Error::Invalid(format!("l2 {} must be non-negative", self.l2)));
        }
        if self.max_epochs == 0 || self.patience == 0 {
            return Err(Error::Invalid("max_epochs and patience must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScheduleStep {
    Improved,
    Waiting,
    /// Patience ran out; learning rate and patience were halved.
    Decayed,
    /// Patience ran out twice in a row.
    Stop,
}

/// Early stopping on validation loss. When `patience` epochs pass without a
/// strict improvement (and at least `min_epochs` have run), the learning rate
/// and patience are halved; a second exhaustion with no improvement in
/// between stops training.
#[derive(Debug, Clone, PartialEq)]
pub struct PatienceSchedule {
    lr: f64,
    patience: usize,
    min_epochs: usize,
    best: f64,
    waited: usize,
    exhausted: bool,
}

impl PatienceSchedule {
    pub fn new(hyper: &Hyper) -> Self {
        Self {
            lr: hyper.lr,
            patience: hyper.patience,
            min_epochs: hyper.min_epochs,
            best: f64::INFINITY,
            waited: 0,
            exhausted: false,
        }
    }

    pub fn lr(&self) -> f64 {
        self.lr
    }

    pub fn patience(&self) -> usize {
        self.patience
    }

    pub fn best(&self) -> f64 {
        self.best
    }

    /// Feeds the validation loss of 1-based `epoch`.
    pub fn observe(&mut self, epoch: usize, val_loss: f64) -> ScheduleStep {
        if val_loss < self.best {
            self.best = val_loss;
            self.waited = 0;
            self.exhausted = false;
            return ScheduleStep::Improved;
        }
        self.waited += 1;
        if self.waited < self.patience || epoch < self.min_epochs {
            return ScheduleStep::Waiting;
        }
        if self.exhausted {
            return ScheduleStep::Stop;
        }
        self.exhausted = true;
        self.lr /= 2.0;
        self.patience = self.patience.div_ceil(2);
        self.waited = 0;
        ScheduleStep::Decayed
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    /// Loss of the dropout pass that produced this epoch's update.
    pub train_loss: f64,
    pub val_loss: f64,
    pub train_micro_f1: f64,
    pub val_micro_f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub model: ModelConfig,
    pub hyper: Hyper,
    pub seed: u64,
    pub epochs: Vec<EpochRecord>,
    /// Epoch whose parameters are returned.
    pub best_epoch: usize,
    pub epoch_stopped: usize,
    pub test_micro_f1: Option<f64>,
    /// Not serialized, so reports of identical runs are byte-identical.
    #[serde(skip)]
    pub wall_clock_secs: f64,
}

fn check_masks(n: usize, train: &[bool], val: &[bool]) -> Result<()> {
    if train.len() != n || val.len() != n {
        return Err(Error::shape(
            "train",
            format!("masks of length {}/{} for {n} nodes", train.len(), val.len()),
        ));
    }
    if let Some(i) = (0..n).find(|&i| train[i] && val[i]) {
        return Err(Error::Invalid(format!("node {i} is in both the train and validation masks")));
    }
    if !train.iter().any(|&b| b) {
        return Err(Error::EmptyMask("train"));
    }
    if !val.iter().any(|&b| b) {
        return Err(Error::EmptyMask("validation"));
    }
    Ok(())
}

fn check_dims(cfg: &ModelConfig, ds: &Dataset) -> Result<()> {
    if cfg.input_dim != ds.num_features() || cfg.label_dim != ds.num_labels() || cfg.multilabel != ds.multilabel() {
        return Err(Error::Invalid(format!(
            "model expects F={} L={} multilabel={}, dataset {} has F={} L={} multilabel={}",
            cfg.input_dim,
            cfg.label_dim,
            cfg.multilabel,
            ds.name(),
            ds.num_features(),
            ds.num_labels(),
            ds.multilabel()
        )));
    }
    Ok(())
}

/// Evaluation-mode logits of `params` on the whole graph.
pub fn predict_logits(cfg: &ModelConfig, params: &ModelParams, ops: &GraphOperators, ds: &Dataset) -> Result<DenseMatrix> {
    crate::models::logits(cfg, params, ops.propagation(cfg.kind), &ds.features)
}

/// Micro-F1 of `params` on the masked nodes.
pub fn evaluate(cfg: &ModelConfig, params: &ModelParams, ops: &GraphOperators, ds: &Dataset, mask: &[bool]) -> Result<f64> {
    let logits = predict_logits(cfg, params, ops, ds)?;
    micro_f1(&predict_labels(&logits, cfg.multilabel), &ds.labels, mask)
}

/// Full-batch training with Adam and the patience schedule. Returns the
/// parameters of the epoch with the lowest validation loss.
///
/// Validation nodes never enter the gradient: the loss is masked to
/// `train_mask`, and the two masks must be disjoint.
pub fn train(
    cfg: &ModelConfig,
    ds: &Dataset,
    ops: &GraphOperators,
    train_mask: &[bool],
    val_mask: &[bool],
    hyper: &Hyper,
    seed: u64,
) -> Result<(ModelParams, TrainReport)> {
    let start = Instant::now();
    cfg.validate()?;
    hyper.validate()?;
    check_dims(cfg, ds)?;
    check_masks(ds.num_nodes(), train_mask, val_mask)?;
    let weights = class_weights(&ds.labels, train_mask)?;
    let prop = ops.propagation(cfg.kind);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = ModelParams::init(cfg, &mut rng)?;
    let mut schedule = PatienceSchedule::new(hyper);
    let mut best = params.clone();
    let mut best_epoch = 0;
    let mut epochs = Vec::new();

    for epoch in 1..=hyper.max_epochs {
        let lr = schedule.lr();
        let train_loss = {
            let mut tape = Tape::new();
            let x = tape.constant(ds.features.clone());
            let mut mode = ForwardMode::Train(&mut rng);
            let z = build_logits(&mut tape, cfg, params.params(), prop, x, &mut mode)?;
            let l = loss(&mut tape, cfg, z, &ds.labels, train_mask, &weights)?;
            let value = tape.value(l).get(0, 0);
            if !value.is_finite() {
                return Err(Error::NonFinite(format!("training loss {value} at epoch {epoch}")));
            }
            params.params_mut().zero_grad();
            tape.backward(l, params.params_mut())?;
            value
        };
        let adam = Adam {
            lr,
            l2: hyper.l2,
            ..Adam::default()
        };
        for p in params.params_mut().iter_mut() {
            adam_step(p, &adam);
        }

        let mut tape = Tape::inference();
        let x = tape.constant(ds.features.clone());
        let z = build_logits(&mut tape, cfg, params.params(), prop, x, &mut ForwardMode::Eval)?;
        let vl = loss(&mut tape, cfg, z, &ds.labels, val_mask, &weights)?;
        let val_loss = tape.value(vl).get(0, 0);
        if !val_loss.is_finite() {
            return Err(Error::NonFinite(format!("validation loss {val_loss} at epoch {epoch}")));
        }
        let pred = predict_labels(tape.value(z), cfg.multilabel);
        epochs.push(EpochRecord {
            epoch,
            lr,
            train_loss,
            val_loss,
            train_micro_f1: micro_f1(&pred, &ds.labels, train_mask)?,
            val_micro_f1: micro_f1(&pred, &ds.labels, val_mask)?,
        });

        match schedule.observe(epoch, val_loss) {
            ScheduleStep::Improved => {
                best.clone_from(&params);
                best_epoch = epoch;
            }
            ScheduleStep::Stop => break,
            ScheduleStep::Waiting | ScheduleStep::Decayed => {}
        }
    }

    let report = TrainReport {
        model: cfg.clone(),
        hyper: *hyper,
        seed,
        epoch_stopped: epochs.len(),
        epochs,
        best_epoch,
        test_micro_f1: None,
        wall_clock_secs: start.elapsed().as_secs_f64(),
    };
    Ok((best, report))
}
