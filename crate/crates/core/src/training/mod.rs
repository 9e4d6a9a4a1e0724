//! Objective, optimizer loop, synthetic data and checkpoints.

mod checkpoint;
mod dataset;
mod gradcheck;
mod optim;
mod synth;

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use ligbind_tensor::{ParamStore, Tape, Tensor, Var};

use crate::encoder::ModelConfig;
use crate::error::{Error, Result};
use crate::evaluation::{pearson, rmse};
use crate::model::{numerical, Model, Prepared};
use crate::physics::PhysicsConfig;

pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointMeta, ModelCheckpoint, StoredTensor, SCHEMA_VERSION};
pub use dataset::{
    manifest_path, read_clusters, read_complex, ClusterSpec, Dataset, Entry, ManifestEntry, Split, CLUSTERS_FILE,
    MANIFEST_FILE,
};
pub use gradcheck::{end_to_end_check, GRAD_CHECK_SEEDS};
pub use optim::{clip_global_norm, global_norm, Adam, PlateauSchedule, ADAM_BETA1, ADAM_BETA2, ADAM_EPS};
pub use synth::{gen_synthetic, oracle_label, SynthConfig, Synthetic, SIGMA_STAR};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub lr_decay_factor: f64,
    pub lr_min: f64,
    pub plateau_patience: usize,
    pub max_epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub w_data: f64,
    pub w_physics: f64,
    /// Drop `L_p` from the optimized objective (it is still reported).
    pub disable_physics_loss: bool,
    /// Divide batch sums by the batch size.
    pub mean_reduction: bool,
    /// Global gradient-norm cap; `null` disables clipping.
    pub grad_clip: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            lr_decay_factor: 0.6,
            lr_min: 1e-6,
            plateau_patience: 20,
            max_epochs: 300,
            batch_size: 8,
            seed: 0,
            w_data: 1.0,
            w_physics: 1.0,
            disable_physics_loss: false,
            mean_reduction: false,
            grad_clip: Some(10.0),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Config(m.into()));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return fail("learning_rate must be positive");
        }
        if !(self.lr_decay_factor > 0.0 && self.lr_decay_factor < 1.0) {
            return fail("lr_decay_factor must lie in (0, 1)");
        }
        if !(self.lr_min > 0.0) {
            return fail("lr_min must be positive");
        }
        if self.plateau_patience == 0 {
            return fail("plateau_patience must be at least 1");
        }
        if self.batch_size == 0 {
            return fail("batch_size must be at least 1");
        }
        if !(self.w_data >= 0.0 && self.w_physics >= 0.0) {
            return fail("loss weights must be non-negative");
        }
        if let Some(c) = self.grad_clip {
            if !(c > 0.0) {
                return fail("grad_clip must be positive");
            }
        }
        Ok(())
    }

    /// Weight actually applied to `L_p`.
    pub fn physics_weight(&self) -> f64 {
        if self.disable_physics_loss {
            0.0
        } else {
            self.w_physics
        }
    }
}

/// `L_d = Σ (y − ŷ)²`.
pub fn loss_data(predictions: &[f64], labels: &[f64]) -> Result<f64> {
    if predictions.len() != labels.len() {
        return Err(Error::LengthMismatch(predictions.len(), labels.len()));
    }
    if predictions.is_empty() {
        return Err(Error::TooFewSamples { needed: 1, got: 0 });
    }
    Ok(predictions.iter().zip(labels).map(|(p, y)| (y - p) * (y - p)).sum())
}

/// Per-batch objective values and parameter gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchLoss {
    pub total: f64,
    pub data: f64,
    pub physics: f64,
    pub grads: Vec<Tensor>,
}

/// Tape handles of one item's objective.
#[derive(Debug, Clone, Copy)]
pub struct ItemObjective {
    /// `(y − ŷ)²`, unweighted.
    pub data: Var,
    /// `L_p`, unweighted.
    pub physics: Var,
    /// `w_d·(y − ŷ)² + w_p·L_p`.
    pub total: Var,
}

/// Records one item's weighted objective on `tape`, reading parameters from
/// `store`.
pub fn item_objective(
    model: &Model,
    tape: &mut Tape,
    store: &ParamStore,
    p: &Prepared,
    label: f64,
    w_data: f64,
    w_physics: f64,
) -> Result<ItemObjective> {
    let f = model.forward(tape, store, p)?;
    let y = tape.constant(Tensor::scalar(label));
    let err = tape.sub(f.prediction, y)?;
    let data = tape.square(err)?;
    let wld = tape.scale(data, w_data)?;
    let wlp = tape.scale(f.residual, w_physics)?;
    let total = tape.add(wld, wlp)?;
    Ok(ItemObjective { data, physics: f.residual, total })
}

/// `w_d·L_d + w_p·L_p` over `batch`, with gradients for every parameter of
/// `model`. Items are evaluated in parallel; gradients are summed in batch
/// order, so the result does not depend on scheduling.
pub fn loss_total(model: &Model, batch: &[&Prepared], cfg: &TrainConfig) -> Result<BatchLoss> {
    if batch.is_empty() {
        return Err(Error::TooFewSamples { needed: 1, got: 0 });
    }
    let norm = if cfg.mean_reduction { 1.0 / batch.len() as f64 } else { 1.0 };
    let (wd, wp) = (cfg.w_data * norm, cfg.physics_weight() * norm);
    let items: Vec<Result<(f64, f64, f64, Vec<Tensor>)>> = batch
        .par_iter()
        .map(|p| {
            let y = p
                .affinity
                .ok_or_else(|| Error::Dataset(format!("complex `{}` has no affinity label", p.id)))?;
            let mut tape = Tape::new();
            let terms = item_objective(model, &mut tape, &model.store, p, y, wd, wp).map_err(|e| numerical(&p.id, e))?;
            let (ld, lp, total) = (terms.data, terms.physics, terms.total);
            let value = tape.value(total).item();
            if !value.is_finite() {
                return Err(Error::NonFiniteLoss { complex_id: p.id.clone() });
            }
            let grads = tape
                .backward(total)
                .map_err(|e| numerical(&p.id, e.into()))?
                .for_params(&model.store);
            Ok((value, tape.value(ld).item(), tape.value(lp).item(), grads))
        })
        .collect();
    let mut out = BatchLoss {
        total: 0.0,
        data: 0.0,
        physics: 0.0,
        grads: model.store.zeros_like(),
    };
    for item in items {
        let (t, d, p, g) = item?;
        out.total += t;
        out.data += d;
        out.physics += p;
        for (acc, gi) in out.grads.iter_mut().zip(&g) {
            for (a, b) in acc.data_mut().iter_mut().zip(gi.data()) {
                *a += b;
            }
        }
    }
    Ok(out)
}

/// One row of the training history.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Learning rate used during the epoch.
    pub lr: f64,
    /// Optimized objective summed over the epoch's batches.
    pub loss_total: f64,
    pub loss_data: f64,
    /// Always reported, even when excluded from the objective.
    pub loss_physics: f64,
    pub val_rmse: f64,
    pub val_pearson: Option<f64>,
}

pub const HISTORY_HEADER: &str = "epoch,lr,loss_total,loss_data,loss_physics,val_rmse,val_pearson";

pub fn format_history(rows: &[EpochRecord]) -> String {
    let mut s = String::from(HISTORY_HEADER);
    s.push('\n');
    for r in rows {
        let pearson = r.val_pearson.map(|v| v.to_string()).unwrap_or_default();
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{}",
            r.epoch, r.lr, r.loss_total, r.loss_data, r.loss_physics, r.val_rmse, pearson
        );
    }
    s
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters from the epoch with the lowest validation loss.
    pub model: Model,
    pub checkpoint: ModelCheckpoint,
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
}

/// Predictions for prepared complexes, in input order.
pub fn predict_all(model: &Model, items: &[Prepared]) -> Result<Vec<f64>> {
    items.par_iter().map(|p| model.predict_prepared(p)).collect()
}

/// Trains from a fresh initialization seeded by `cfg.seed`.
///
/// The plateau schedule and best-checkpoint selection use the validation
/// split's squared-error sum, evaluated after every epoch; without a
/// validation split the training split stands in.
pub fn train(data: &Dataset, cfg: &TrainConfig, model_cfg: ModelConfig, physics: PhysicsConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    let model = Model::new(model_cfg, physics, cfg.seed)?;
    train_model(model, data, cfg)
}

/// Trains starting from the given parameters.
pub fn train_model(model: Model, data: &Dataset, cfg: &TrainConfig) -> Result<TrainOutcome> {
    train_model_logged(model, data, cfg, &mut |_| {})
}

/// [`train_model`] with a callback invoked after every epoch.
pub fn train_model_logged(
    mut model: Model,
    data: &Dataset,
    cfg: &TrainConfig,
    log: &mut dyn FnMut(&EpochRecord),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let prepare = |cs: Vec<&crate::complex::Complex>| -> Result<Vec<Prepared>> {
        cs.into_iter().map(|c| model.prepare(c).map_err(|e| numerical(&c.id, e))).collect()
    };
    let train_set = prepare(data.split(Split::Train))?;
    if train_set.is_empty() {
        return Err(Error::Dataset("training split is empty".into()));
    }
    let val_owned = prepare(data.split(Split::Validation))?;
    let val_set = if val_owned.is_empty() { &train_set } else { &val_owned };
    let val_labels: Vec<f64> = val_set.iter().map(|p| p.affinity.expect("labeled")).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x005e_ed0f_5417_u64);
    let mut adam = Adam::new(&model.store);
    let mut schedule = PlateauSchedule::new(cfg.learning_rate, cfg.lr_decay_factor, cfg.lr_min, cfg.plateau_patience);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut history = Vec::with_capacity(cfg.max_epochs);
    let mut best: Option<(f64, usize, Model)> = None;

    for epoch in 1..=cfg.max_epochs {
        let lr = schedule.lr;
        order.shuffle(&mut rng);
        let (mut lt, mut ld, mut lp) = (0.0, 0.0, 0.0);
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<&Prepared> = chunk.iter().map(|&i| &train_set[i]).collect();
            let mut b = loss_total(&model, &batch, cfg)?;
            lt += b.total;
            ld += b.data;
            lp += b.physics;
            if let Some(c) = cfg.grad_clip {
                clip_global_norm(&mut b.grads, c);
            }
            adam.update(&mut model.store, &b.grads, lr)?;
        }
        let preds = predict_all(&model, val_set)?;
        let val_loss = loss_data(&preds, &val_labels)?;
        if !val_loss.is_finite() {
            return Err(Error::NonFiniteLoss { complex_id: "<validation>".into() });
        }
        history.push(EpochRecord {
            epoch,
            lr,
            loss_total: lt,
            loss_data: ld,
            loss_physics: lp,
            val_rmse: rmse(&val_labels, &preds)?,
            val_pearson: pearson(&val_labels, &preds).ok(),
        });
        log(history.last().expect("just pushed"));
        if best.as_ref().is_none_or(|b| val_loss < b.0) {
            best = Some((val_loss, epoch, model.clone()));
        }
        schedule.observe(val_loss);
    }

    let (val_loss, best_epoch, best_model) = match best {
        Some(b) => b,
        None => {
            let preds = predict_all(&model, val_set)?;
            (loss_data(&preds, &val_labels)?, 0, model)
        }
    };
    let meta = CheckpointMeta {
        epoch: best_epoch,
        seed: cfg.seed,
        train_loss: history.get(best_epoch.wrapping_sub(1)).map(|r| r.loss_total),
        validation_loss: Some(val_loss),
    };
    Ok(TrainOutcome {
        checkpoint: ModelCheckpoint::from_model(&best_model, meta),
        model: best_model,
        history,
        best_epoch,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn data_loss_arithmetic() {
        assert_eq!(loss_data(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(loss_data(&[3.0], &[0.0]).unwrap(), 9.0);
        assert_eq!(loss_data(&[0.0, 4.0], &[1.0, 2.0]).unwrap(), 5.0);
        assert!(matches!(loss_data(&[1.0], &[1.0, 2.0]), Err(Error::LengthMismatch(1, 2))));
    }

    #[test]
    fn config_checks() {
        assert!(TrainConfig::default().validate().is_ok());
        for bad in [
            TrainConfig { lr_decay_factor: 1.0, ..Default::default() },
            TrainConfig { lr_min: 0.0, ..Default::default() },
            TrainConfig { plateau_patience: 0, ..Default::default() },
        ] {
            assert!(matches!(bad.validate(), Err(Error::Config(_))));
        }
        let off = TrainConfig { disable_physics_loss: true, ..Default::default() };
        assert_eq!(off.physics_weight(), 0.0);
    }

    #[test]
    fn history_csv_layout() {
        let rows = [EpochRecord {
            epoch: 1,
            lr: 0.001,
            loss_total: 2.5,
            loss_data: 2.0,
            loss_physics: 0.5,
            val_rmse: 0.25,
            val_pearson: None,
        }];
        assert_eq!(format_history(&rows), format!("{HISTORY_HEADER}\n1,0.001,2.5,2,0.5,0.25,\n"));
    }
}
