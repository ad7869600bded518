//! Training loop: deterministic batching, per-epoch validation, and
//! best-validation-accuracy checkpointing.

use crate::checkpoint::{save_checkpoint, CheckpointMeta};
use crate::config::{ResolvedOptimizer, RunConfig};
use crate::ensemble::VariantId;
use crate::error::{Error, Result};
use crate::evalkit::ConfusionMatrix;
use crate::model::FgvrModel;
use crate::numerics::Tensor;
use crate::optim::{zero_grads, Optimizer};
use crate::rng::{derive_rng_indexed, fnv1a64, splitmix64};
use crate::synthdata::{load_split, read_corpus_spec, DatasetSpec, LabeledSample};
use rand::seq::SliceRandom;
use std::io::Write;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_accuracy: f64,
}

#[derive(Debug)]
pub struct TrainOutcome {
    pub checkpoint_path: PathBuf,
    pub log_path: PathBuf,
    pub history: Vec<EpochStats>,
    pub best_val_accuracy: f64,
    pub best_epoch: usize,
}

/// Ensemble members train from distinct streams of the run seed.
pub fn model_init_seed(seed: u64, variant: VariantId) -> u64 {
    splitmix64(seed ^ fnv1a64(variant.label().as_bytes()))
}

/// The corpus a command operates on must match the config it was given.
pub fn corpus_matches_config(corpus_spec: &DatasetSpec, config: &RunConfig) -> Result<()> {
    if corpus_spec.classes != config.dataset.classes {
        return Err(Error::Config(format!(
            "classes: corpus has {:?}, config wants {:?}",
            corpus_spec.classes, config.dataset.classes
        )));
    }
    if corpus_spec.image_size != config.dataset.image_size {
        return Err(Error::Config(format!(
            "image_size: corpus has {}, config wants {}",
            corpus_spec.image_size, config.dataset.image_size
        )));
    }
    Ok(())
}

pub struct PreparedSample {
    pub id: String,
    pub image: Tensor,
    pub label: usize,
}

pub fn prepare(samples: &[LabeledSample]) -> Vec<PreparedSample> {
    samples
        .iter()
        .map(|s| PreparedSample {
            id: s.id.clone(),
            image: s.image.to_tensor(),
            label: s.label,
        })
        .collect()
}

/// Mean total loss and final-head accuracy over a prepared set, evaluated
/// in batches without touching gradients.
pub fn evaluate_loss_accuracy(
    model: &FgvrModel,
    samples: &[PreparedSample],
    batch_size: usize,
) -> Result<(f64, f64)> {
    let mut loss_sum = 0.0f64;
    let mut hits = 0usize;
    for chunk in samples.chunks(batch_size) {
        let images: Vec<Tensor> = chunk.iter().map(|s| s.image.clone()).collect();
        let labels: Vec<usize> = chunk.iter().map(|s| s.label).collect();
        let (loss, logits) = model.batch_loss(&images, &labels)?;
        loss_sum += loss.item() as f64 * chunk.len() as f64;
        let rows = logits.to_vec();
        let classes = model.config().num_classes;
        for (i, &label) in labels.iter().enumerate() {
            if crate::numerics::argmax(&rows[i * classes..(i + 1) * classes]) == label {
                hits += 1;
            }
        }
    }
    let n = samples.len() as f64;
    Ok((loss_sum / n, hits as f64 / n))
}

/// Confusion matrix plus per-sample predictions for a prepared set.
pub fn evaluate_predictions(
    model: &FgvrModel,
    samples: &[PreparedSample],
) -> Result<(ConfusionMatrix, Vec<(String, usize, Vec<f32>)>)> {
    let mut cm = ConfusionMatrix::new(model.config().num_classes);
    let mut rows = Vec::with_capacity(samples.len());
    for s in samples {
        let (pred, probs) = model.predict(&s.image)?;
        cm.accumulate(s.label, pred)?;
        rows.push((s.id.clone(), pred, probs));
    }
    Ok((cm, rows))
}

/// Trains one variant on the corpus and writes `<variant>.ckpt` plus
/// `<variant>_log.csv` (epoch, train loss, val loss, val accuracy; flushed
/// every epoch) under `out_dir`. The checkpoint keeps the epoch with the
/// best validation accuracy.
pub fn train_variant(
    config: &RunConfig,
    variant: VariantId,
    corpus_dir: &Path,
    out_dir: &Path,
) -> Result<TrainOutcome> {
    config.validate()?;
    corpus_matches_config(&read_corpus_spec(corpus_dir)?, config)?;

    let train_set = prepare(&load_split(corpus_dir, "train")?);
    let val_set = prepare(&load_split(corpus_dir, "val")?);
    if train_set.is_empty() || val_set.is_empty() {
        return Err(Error::Config("corpus: empty train or val split".into()));
    }

    let resolved = config.resolve(variant)?;
    let model = FgvrModel::init(
        resolved.model.clone(),
        model_init_seed(config.seed, variant),
    )?;
    let params = model.params();
    let mut optimizer = match &resolved.optimizer {
        ResolvedOptimizer::Sgd(state) => Optimizer::sgd(state.clone(), &params),
        ResolvedOptimizer::Lion(state) => Optimizer::lion(state.clone(), &params)?,
    };

    std::fs::create_dir_all(out_dir)?;
    let log_path = out_dir.join(format!("{}_log.csv", variant.label()));
    let mut log = std::fs::File::create(&log_path)?;
    writeln!(log, "epoch,train_loss,val_loss,val_accuracy")?;
    log.flush()?;

    let batch = config.train.batch_size;
    let mut history = Vec::with_capacity(config.train.epochs);
    let mut best: Option<(usize, f64, Vec<Vec<f32>>)> = None;

    for epoch in 1..=config.train.epochs {
        let mut order: Vec<usize> = (0..train_set.len()).collect();
        let mut rng = derive_rng_indexed(
            config.seed,
            &format!("shuffle/{}", variant.label()),
            epoch as u64,
        );
        order.shuffle(&mut rng);

        let mut loss_sum = 0.0f64;
        for chunk in order.chunks(batch) {
            let images: Vec<Tensor> = chunk.iter().map(|&i| train_set[i].image.clone()).collect();
            let labels: Vec<usize> = chunk.iter().map(|&i| train_set[i].label).collect();
            zero_grads(&params);
            let (loss, _) = model.batch_loss(&images, &labels)?;
            loss.backward()?;
            optimizer.step(&params)?;
            loss_sum += loss.item() as f64 * chunk.len() as f64;
        }
        zero_grads(&params);

        let train_loss = loss_sum / train_set.len() as f64;
        let (val_loss, val_accuracy) = evaluate_loss_accuracy(&model, &val_set, batch)?;
        history.push(EpochStats {
            epoch,
            train_loss,
            val_loss,
            val_accuracy,
        });
        writeln!(log, "{epoch},{train_loss},{val_loss},{val_accuracy}")?;
        log.flush()?;

        let improved = best.as_ref().map_or(true, |(_, acc, _)| val_accuracy > *acc);
        if improved {
            let snapshot = params.iter().map(|(_, p)| p.to_vec()).collect();
            best = Some((epoch, val_accuracy, snapshot));
        }
    }

    let (best_epoch, best_val_accuracy) = match &best {
        Some((epoch, acc, snapshot)) => {
            for ((_, p), data) in params.iter().zip(snapshot) {
                p.set_data(data)?;
            }
            (*epoch, *acc)
        }
        None => (0, 0.0),
    };

    let (final_train_loss, final_val_loss) = history
        .last()
        .map(|s| (s.train_loss as f32, s.val_loss as f32))
        .unwrap_or((0.0, 0.0));
    let meta = CheckpointMeta {
        variant: variant.label().to_string(),
        epoch: best_epoch as u32,
        seed: config.seed,
        final_train_loss,
        final_val_loss,
        best_val_accuracy: best_val_accuracy as f32,
    };
    let checkpoint_path = out_dir.join(format!("{}.ckpt", variant.label()));
    save_checkpoint(&checkpoint_path, &meta, &config.to_toml()?, &params)?;

    Ok(TrainOutcome {
        checkpoint_path,
        log_path,
        history,
        best_val_accuracy,
        best_epoch,
    })
}
