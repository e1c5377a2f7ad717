use std::fmt::Write as _;

use rayon::prelude::*;

use crate::datakit::Dataset;
use crate::error::{Error, Result};
use crate::hypergraph::TileBag;
use crate::numkit::{derive_seed, Rng};

use super::metrics::{compute_metrics, Metrics};
use super::model::BagModel;
use super::optim::{adam_step, lr_schedule, AdamState};
use super::TrainConfig;

/// Scan seed for bag `index` during epoch `epoch`; scans are redrawn every
/// epoch.
pub fn train_scan_seed(seed: u64, epoch: usize, index: usize) -> u64 {
    derive_seed(
        derive_seed(seed, "epoch", epoch as u64),
        "bag",
        index as u64,
    )
}

/// Fixed scan seed for evaluating bag `index`.
pub fn eval_scan_seed(seed: u64, index: usize) -> u64 {
    derive_seed(seed, "eval", index as u64)
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val: Metrics,
    pub lr: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct History {
    pub epochs: Vec<EpochRecord>,
}

impl History {
    pub const HEADER: &'static str = "epoch,train_loss,val_acc,val_auc,val_f1,lr";

    /// One line per epoch; an undefined AUC is left empty.
    pub fn to_csv(&self) -> String {
        let mut s = format!("{}\n", Self::HEADER);
        for r in &self.epochs {
            let auc = r.val.auc.map(|a| a.to_string()).unwrap_or_default();
            let _ = writeln!(
                s,
                "{},{},{},{},{},{}",
                r.epoch, r.train_loss, r.val.acc, auc, r.val.macro_f1, r.lr
            );
        }
        s
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome<M> {
    /// Parameters at the epoch with the best validation score.
    pub best: M,
    pub best_epoch: usize,
    pub last: M,
    pub history: History,
    pub steps: usize,
}

/// Validation AUC, falling back to accuracy when AUC is undefined.
fn selection_score(m: &Metrics) -> f64 {
    m.auc.unwrap_or(m.acc)
}

fn prepare_all<M: BagModel>(model: &M, bags: &[TileBag]) -> Result<Vec<M::Prepared>> {
    bags.par_iter().map(|b| model.prepare(b)).collect()
}

fn evaluate_prepared<M: BagModel>(
    model: &M,
    bags: &[TileBag],
    prepared: &[M::Prepared],
    seed: u64,
) -> Result<Metrics> {
    let scores: Vec<Vec<f64>> = bags
        .par_iter()
        .zip(prepared)
        .enumerate()
        .map(|(i, (b, p))| model.logits(b, p, eval_scan_seed(seed, i)))
        .collect::<Result<_>>()?;
    let labels: Vec<usize> = bags.iter().map(|b| b.label).collect();
    if let Some(&y) = labels.iter().find(|&&y| y >= model.n_classes()) {
        return Err(Error::Data(format!(
            "label {y} out of range for {} classes",
            model.n_classes()
        )));
    }
    Ok(compute_metrics(&scores, &labels, model.n_classes()))
}

/// Metrics of `model` on `bags` with scans fixed by `seed`.
pub fn evaluate<M: BagModel>(model: &M, bags: &[TileBag], seed: u64) -> Result<Metrics> {
    if bags.is_empty() {
        return Err(Error::Data("cannot evaluate an empty split".into()));
    }
    let prepared = prepare_all(model, bags)?;
    evaluate_prepared(model, bags, &prepared, seed)
}

pub fn train<M: BagModel>(init: M, data: &Dataset, cfg: &TrainConfig) -> Result<TrainOutcome<M>> {
    train_with(init, data, cfg, |_| {})
}

/// Mini-batch training with gradient averaging over the bags of a batch.
/// Bags in a batch run concurrently; their gradients are summed in batch
/// order so results do not depend on scheduling. `on_epoch` sees every
/// record as soon as it is complete.
pub fn train_with<M: BagModel>(
    init: M,
    data: &Dataset,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainOutcome<M>> {
    cfg.validate()?;
    if data.train.is_empty() {
        return Err(Error::Data("training split is empty".into()));
    }
    if data.val.is_empty() {
        return Err(Error::Data("validation split is empty".into()));
    }
    let mut model = init;
    let train_prep = prepare_all(&model, &data.train)?;
    let val_prep = prepare_all(&model, &data.val)?;
    let mut state = AdamState::new(&model);
    let mut history = History::default();
    let mut best: Option<(f64, usize, M)> = None;
    let mut steps = 0;

    for epoch in 0..cfg.epochs {
        let lr = lr_schedule(epoch, cfg);
        let mut order: Vec<usize> = (0..data.train.len()).collect();
        Rng::new(derive_seed(cfg.seed, "shuffle", epoch as u64)).shuffle(&mut order);
        let mut loss_sum = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let results: Vec<Result<(f64, M)>> = batch
                .par_iter()
                .map(|&i| {
                    model.loss_and_grad(
                        &data.train[i],
                        &train_prep[i],
                        train_scan_seed(cfg.seed, epoch, i),
                    )
                })
                .collect();
            let mut grads = model.zeros_like();
            for (&i, r) in batch.iter().zip(results) {
                let (loss, g) = r?;
                if !loss.is_finite() {
                    return Err(Error::NonFinite(format!(
                        "training loss {loss} on bag {} at epoch {epoch}, step {steps}",
                        data.train[i].id
                    )));
                }
                loss_sum += loss;
                grads.add_assign(&g);
            }
            grads.scale_all(1.0 / batch.len() as f64);
            adam_step(&mut model, &grads, &mut state, lr, cfg.weight_decay);
            model.project();
            steps += 1;
        }
        let val = evaluate_prepared(&model, &data.val, &val_prep, cfg.seed)?;
        let score = selection_score(&val);
        if best.as_ref().is_none_or(|(s, _, _)| score > *s) {
            best = Some((score, epoch, model.clone()));
        }
        let record = EpochRecord {
            epoch,
            train_loss: loss_sum / data.train.len() as f64,
            val,
            lr,
        };
        on_epoch(&record);
        history.epochs.push(record);
    }
    let (_, best_epoch, best) = best.expect("at least one epoch");
    Ok(TrainOutcome {
        best,
        best_epoch,
        last: model,
        history,
        steps,
    })
}
