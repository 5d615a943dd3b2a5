use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::checkpoint;
use super::metrics::{ConfusionMatrix, Metrics, MetricsRow};
use super::optim::{AdamConfig, AdamState};
use crate::autodiff::Tape;
use crate::dataset::{make_batches, Batch};
use crate::error::{Error, Result};
use crate::nn::Model;
use crate::preprocess::ProcessedSample;
use crate::tensor::Scalar;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub checkpoint_every: usize,
    pub eval_every: usize,
    /// Epoch whose weights become `final.ckpt`; the last epoch if unset.
    pub final_epoch: Option<usize>,
    pub adam: AdamConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 500,
            batch_size: 64,
            seed: 0,
            checkpoint_every: 50,
            eval_every: 1,
            final_epoch: None,
            adam: AdamConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 || self.checkpoint_every == 0 || self.eval_every == 0 {
            return Err(Error::Config(
                "epochs, batch_size, checkpoint_every and eval_every must be at least 1".into(),
            ));
        }
        if let Some(e) = self.final_epoch {
            if e == 0 || e > self.epochs {
                return Err(Error::Config(format!("final_epoch {e} is outside 1..={}", self.epochs)));
            }
        }
        self.adam.validate()
    }

    /// Shuffle seed for one epoch's batches.
    pub fn epoch_seed(&self, epoch: usize) -> u64 {
        self.seed ^ (epoch as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochStats {
    pub loss: f64,
    pub accuracy: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    pub loss: f64,
    pub accuracy: f64,
    pub confusion: ConfusionMatrix,
}

/// Index of the largest score; the lowest index wins ties.
pub fn argmax<T: Scalar>(row: &[T]) -> usize {
    let mut best = 0;
    for (k, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = k;
        }
    }
    best
}

/// One pass over `batches` in training mode: forward, cross-entropy,
/// backward and an Adam step per batch. Loss and accuracy are averaged over
/// samples as seen during the pass.
pub fn train_epoch<T: Scalar>(
    model: &mut Model<T>,
    batches: &[Batch<T>],
    state: &mut AdamState<T>,
) -> Result<EpochStats> {
    if batches.is_empty() {
        return Err(Error::Empty("no training batches"));
    }
    model.train();
    let names: Vec<String> = model.named_parameters().into_iter().map(|(n, _)| n).collect();
    let (mut loss_sum, mut correct, mut seen) = (0.0, 0usize, 0usize);
    for batch in batches {
        let mut tape = Tape::new();
        let input = tape.constant(batch.inputs.clone());
        let forward = model.forward(&mut tape, input)?;
        let loss = tape.cross_entropy(forward.logits, &batch.labels)?;
        let loss_value = tape.data(loss)[0].as_f64();
        if !loss_value.is_finite() {
            return Err(Error::NonFinite(format!("training loss ({loss_value})")));
        }
        tape.backward(loss)?;

        let classes = tape.shape(forward.logits)[1];
        for (row, &label) in tape.data(forward.logits).chunks(classes).zip(&batch.labels) {
            correct += usize::from(argmax(row) == label);
        }
        loss_sum += loss_value * batch.len() as f64;
        seen += batch.len();

        let grads: Vec<Option<&[T]>> = forward.params.iter().map(|&p| tape.grad(p)).collect();
        state.step(&mut model.parameters_mut(), &grads, &names)?;
        // the tape (and every gradient on it) is dropped here
    }
    Ok(EpochStats {
        loss: loss_sum / seen as f64,
        accuracy: correct as f64 / seen as f64,
    })
}

/// Evaluation-mode pass; the model's mode is restored afterwards.
pub fn evaluate<T: Scalar>(model: &mut Model<T>, batches: &[Batch<T>]) -> Result<Evaluation> {
    let was_training = model.is_training();
    model.eval();
    let result = (|| {
        let mut confusion = ConfusionMatrix::new(model.spec().class_count);
        let mut loss_sum = 0.0;
        for batch in batches {
            let mut tape = Tape::new();
            let input = tape.constant(batch.inputs.clone());
            let forward = model.forward(&mut tape, input)?;
            let loss = tape.cross_entropy(forward.logits, &batch.labels)?;
            loss_sum += tape.data(loss)[0].as_f64() * batch.len() as f64;
            let classes = tape.shape(forward.logits)[1];
            for (row, &label) in tape.data(forward.logits).chunks(classes).zip(&batch.labels) {
                confusion.record(label, argmax(row))?;
            }
        }
        let total = confusion.total();
        Ok(Evaluation {
            loss: if total == 0 { 0.0 } else { loss_sum / total as f64 },
            accuracy: confusion.accuracy(),
            confusion,
        })
    })();
    model.set_training(was_training);
    result
}

#[derive(Clone, Debug)]
pub struct FitOutcome {
    pub metrics: Metrics,
    /// Last test-set evaluation, if a test set was given.
    pub test: Option<Evaluation>,
    pub checkpoints: Vec<PathBuf>,
}

/// Full training run.
///
/// Each epoch trains on freshly shuffled batches, then logs an
/// evaluation-mode pass over the training set (so logged numbers match what
/// a reloaded checkpoint reports) and, every `eval_every` epochs, over the
/// test set. With `out_dir`, `metrics.csv` is rewritten after every epoch and
/// checkpoints go to `checkpoints/epoch_NNNN.ckpt` plus `final.ckpt`.
pub fn fit<T: Scalar>(
    model: &mut Model<T>,
    train: &[ProcessedSample],
    test: Option<&[ProcessedSample]>,
    config: &TrainConfig,
    out_dir: Option<&Path>,
    mut on_epoch: impl FnMut(&MetricsRow),
) -> Result<FitOutcome> {
    config.validate()?;
    if train.is_empty() {
        return Err(Error::Empty("training set"));
    }
    let test = test.filter(|t| !t.is_empty());
    let train_eval: Vec<Batch<T>> = make_batches(train, config.batch_size, None)?;
    let test_eval: Option<Vec<Batch<T>>> =
        test.map(|t| make_batches(t, config.batch_size, None)).transpose()?;

    let ckpt_dir = out_dir.map(|d| d.join("checkpoints"));
    if let Some(dir) = &ckpt_dir {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let final_epoch = config.final_epoch.unwrap_or(config.epochs);

    let mut state = AdamState::new(config.adam, &model.parameters());
    let mut metrics = Metrics::default();
    let mut last_test = None;
    let mut checkpoints = Vec::new();
    for epoch in 1..=config.epochs {
        let batches = make_batches(train, config.batch_size, Some(config.epoch_seed(epoch)))?;
        train_epoch(model, &batches, &mut state)?;
        let train_stats = evaluate(model, &train_eval)?;
        let test_stats = match &test_eval {
            Some(b) if epoch % config.eval_every == 0 => Some(evaluate(model, b)?),
            _ => None,
        };
        let row = MetricsRow {
            epoch,
            train_loss: train_stats.loss,
            train_acc: train_stats.accuracy,
            test_loss: test_stats.as_ref().map(|e| e.loss),
            test_acc: test_stats.as_ref().map(|e| e.accuracy),
        };
        on_epoch(&row);
        metrics.push(row);
        if test_stats.is_some() {
            last_test = test_stats;
        }

        if let (Some(out), Some(dir)) = (out_dir, &ckpt_dir) {
            metrics.save_csv(&out.join("metrics.csv"))?;
            if epoch % config.checkpoint_every == 0 {
                let path = dir.join(format!("epoch_{epoch:04}.ckpt"));
                checkpoint::save(model, &path)?;
                checkpoints.push(path);
            }
            if epoch == final_epoch {
                let path = out.join("final.ckpt");
                checkpoint::save(model, &path)?;
                checkpoints.push(path);
            }
        }
    }
    if let (Some(out), Some(test_eval)) = (out_dir, &test_eval) {
        // make sure the confusion matrix reflects the final weights
        let final_test = match &last_test {
            Some(_) if config.epochs % config.eval_every == 0 => last_test.clone().expect("checked"),
            _ => evaluate(model, test_eval)?,
        };
        final_test.confusion.save_csv(&out.join("confusion_matrix.csv"))?;
        last_test = Some(final_test);
    }
    Ok(FitOutcome { metrics, test: last_test, checkpoints })
}
