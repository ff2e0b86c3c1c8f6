//! Mini-batch SGD with momentum on softmax cross-entropy.
//!
//! Per-sample gradients may be computed on several threads, but they are
//! always summed in sample order, so a given seed gives the same trace
//! for any thread count.

use std::time::Instant;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::config::TrainSettings;
use super::model::{argmax, Model};
use super::params::Grads;
use super::skeleton::SkeletonSequence;
use crate::error::{Error, Result};

/// A labelled example as seen by the model.
pub type Example = (SkeletonSequence, usize);

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub loss: f64,
    pub train_accuracy: f64,
    pub eval_accuracy: Option<f64>,
    pub seconds: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct TrainTrace {
    pub epochs: Vec<EpochMetrics>,
}

impl TrainTrace {
    pub fn final_train_accuracy(&self) -> Option<f64> {
        self.epochs.last().map(|e| e.train_accuracy)
    }
}

/// SGD state: velocity buffers and the shuffling generator.
pub struct Trainer {
    settings: TrainSettings,
    velocity: Option<Grads>,
    rng: ChaCha8Rng,
    pool: rayon::ThreadPool,
}

impl Trainer {
    pub fn new(settings: TrainSettings) -> Result<Self> {
        if settings.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        if !(settings.lr >= 0.0) || !(0.0..1.0).contains(&settings.momentum) {
            return Err(Error::Config("need lr ≥ 0 and 0 ≤ momentum < 1".into()));
        }
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(settings.threads.max(1))
            .build()
            .map_err(|e| Error::Config(e.to_string()))?;
        // shuffling stream kept apart from the initialisation stream
        let rng = ChaCha8Rng::seed_from_u64(settings.seed ^ 0x5eed_5eed_5eed_5eed);
        Ok(Trainer {
            settings,
            velocity: None,
            rng,
            pool,
        })
    }

    /// One pass over `data`; returns mean loss and training accuracy.
    pub fn epoch(&mut self, model: &mut Model, data: &[Example]) -> Result<(f64, f64)> {
        let mut order: Vec<usize> = (0..data.len()).collect();
        order.shuffle(&mut self.rng);
        let mut total_loss = 0.0;
        let mut correct = 0usize;
        for batch in order.chunks(self.settings.batch_size) {
            let results: Vec<Result<(f64, Grads, usize)>> = self.pool.install(|| {
                batch
                    .par_iter()
                    .map(|&i| {
                        let (x, y) = &data[i];
                        let (loss, grads, logits) = model.loss_and_grads(x, *y)?;
                        Ok((loss, grads, argmax(logits.view())))
                    })
                    .collect()
            });
            let mut sum: Option<Grads> = None;
            for (r, &i) in results.into_iter().zip(batch) {
                let (loss, grads, pred) = r?;
                if !loss.is_finite() {
                    return Err(Error::NonFinite(format!("loss {loss} on sample {i}")));
                }
                total_loss += loss;
                correct += usize::from(pred == data[i].1);
                match &mut sum {
                    Some(s) => s.add_assign(&grads),
                    None => sum = Some(grads),
                }
            }
            let mut g = sum.expect("non-empty batch");
            g.scale(1.0 / batch.len() as f64);
            self.step(model, g)?;
        }
        let n = data.len().max(1) as f64;
        Ok((total_loss / n, correct as f64 / n))
    }

    fn step(&mut self, model: &mut Model, mut g: Grads) -> Result<()> {
        let norm = g.norm();
        if !norm.is_finite() {
            return Err(Error::NonFinite(format!("gradient norm {norm}")));
        }
        if self.settings.grad_clip > 0.0 && norm > self.settings.grad_clip {
            g.scale(self.settings.grad_clip / norm);
        }
        let mu = self.settings.momentum;
        let lr = self.settings.lr;
        let velocity = self
            .velocity
            .get_or_insert_with(|| model.params().zeros_like());
        for ((v, gb), w) in velocity
            .0
            .iter_mut()
            .zip(&g.0)
            .zip(model.params_mut().values_mut())
        {
            v.zip_mut_with(gb, |v, &gv| *v = mu * *v + gv);
            w.zip_mut_with(v, |w, &vv| *w -= lr * vv);
        }
        Ok(())
    }
}

/// Trains for `settings.epochs` epochs, optionally scoring `eval` after
/// each one.
pub fn train(
    model: &mut Model,
    data: &[Example],
    settings: &TrainSettings,
    eval: Option<&[Example]>,
) -> Result<TrainTrace> {
    let mut trainer = Trainer::new(settings.clone())?;
    let mut trace = TrainTrace::default();
    for epoch in 1..=settings.epochs {
        let start = Instant::now();
        let (loss, train_accuracy) = trainer.epoch(model, data)?;
        let seconds = start.elapsed().as_secs_f64();
        let eval_accuracy = match eval {
            Some(set) => Some(accuracy(model, set, settings.threads)?),
            None => None,
        };
        trace.epochs.push(EpochMetrics {
            epoch,
            loss,
            train_accuracy,
            eval_accuracy,
            seconds,
        });
    }
    Ok(trace)
}

/// Predictions for every example.
pub fn predict_all(model: &Model, data: &[Example], threads: usize) -> Result<Vec<usize>> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| Error::Config(e.to_string()))?;
    pool.install(|| data.par_iter().map(|(x, _)| model.predict(x)).collect())
}

pub fn accuracy(model: &Model, data: &[Example], threads: usize) -> Result<f64> {
    if data.is_empty() {
        return Ok(0.0);
    }
    let preds = predict_all(model, data, threads)?;
    let correct = preds.iter().zip(data).filter(|(p, (_, y))| *p == y).count();
    Ok(correct as f64 / data.len() as f64)
}

/// `classes × classes` counts, rows true class, columns prediction.
pub fn confusion_matrix(
    model: &Model,
    data: &[Example],
    classes: usize,
    threads: usize,
) -> Result<Array2<usize>> {
    let preds = predict_all(model, data, threads)?;
    let mut m = Array2::zeros((classes, classes));
    for (p, (_, y)) in preds.iter().zip(data) {
        if *y < classes && *p < classes {
            m[[*y, *p]] += 1;
        }
    }
    Ok(m)
}
