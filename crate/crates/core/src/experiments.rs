//! Gradient checks and the robustness and efficiency studies shared by the
//! CLI and the acceptance suite.

use std::time::Instant;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::data::{perturb_skeleton, upsample_skeleton, PerturbMode};
use crate::error::Result;
use crate::lie_basis::LyndonBasis;
use crate::logsig_layer::{logsig_sequence, logsig_sequence_backward, SegmentPartition};
use crate::neural::train::{accuracy, Trainer};
use crate::neural::{
    softmax_cross_entropy, CellKind, Example, Model, ModelConfig, TrainSettings, Variant,
};
use crate::signature::TimedPath;

/// Seed for sample `i` of a study seeded with `seed`.
pub fn sample_seed(seed: u64, i: usize) -> u64 {
    seed.wrapping_mul(0x9e37_79b9_7f4a_7c15)
        .wrapping_add(i as u64)
}

// ---------------------------------------------------------------------------
// gradient checks

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GradcheckCase {
    pub width: usize,
    pub degree: usize,
    pub segments: usize,
    pub samples: usize,
    pub rel_err: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GradcheckReport {
    pub cases: Vec<GradcheckCase>,
    pub max_rel_err: f64,
}

/// Fixed or randomly drawn layer shape for each trial.
#[derive(Clone, Debug, PartialEq)]
pub struct GradcheckSettings {
    pub trials: usize,
    pub width: Option<usize>,
    pub degree: Option<usize>,
    pub segments: Option<usize>,
    pub seed: u64,
}

fn random_path(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Result<TimedPath> {
    let mut t = rng.random_range(-1.0..1.0);
    let times = (0..n)
        .map(|_| {
            let cur = t;
            t += rng.random_range(0.1..1.0);
            cur
        })
        .collect();
    let points = Array2::from_shape_fn((n, d), |_| rng.random_range(-1.0..1.0));
    TimedPath::new(times, points)
}

/// Central differences of `Σ upstream · logsig_sequence` with respect to
/// every sample coordinate, against the analytic backward pass. The error
/// of a case is `max |fd − an| / max |an|`.
pub fn layer_gradcheck(settings: &GradcheckSettings) -> Result<GradcheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(settings.seed);
    let mut cases = Vec::with_capacity(settings.trials);
    let h = 1e-6;
    for _ in 0..settings.trials {
        let d = settings.width.unwrap_or_else(|| rng.random_range(1..=4));
        let m = settings.degree.unwrap_or_else(|| rng.random_range(1..=4));
        let segments = settings.segments.unwrap_or_else(|| rng.random_range(1..=4));
        let n = rng.random_range(2..=8);
        let path = random_path(&mut rng, n, d)?;
        let basis = LyndonBasis::new(d, m)?;
        let partition = SegmentPartition::for_path(&path, segments)?;
        let upstream =
            Array2::from_shape_fn((segments, basis.len()), |_| rng.random_range(-1.0..1.0));
        let analytic = logsig_sequence_backward(&path, &partition, m, &basis, upstream.view())?;
        let objective = |p: &TimedPath| -> Result<f64> {
            let out = logsig_sequence(p, &partition, m, &basis)?;
            Ok((&out.values() * &upstream).sum())
        };
        let mut err: f64 = 0.0;
        for i in 0..n {
            for c in 0..d {
                let shifted = |delta: f64| -> Result<f64> {
                    let (times, mut pts) = path.clone().into_parts();
                    pts[[i, c]] += delta;
                    objective(&TimedPath::new(times, pts)?)
                };
                let fd = (shifted(h)? - shifted(-h)?) / (2.0 * h);
                err = err.max((fd - analytic[[i, c]]).abs());
            }
        }
        let scale = analytic
            .iter()
            .fold(0.0f64, |a, v| a.max(v.abs()))
            .max(1e-12);
        cases.push(GradcheckCase {
            width: d,
            degree: m,
            segments,
            samples: n,
            rel_err: err / scale,
        });
    }
    let max_rel_err = cases.iter().fold(0.0f64, |a, c| a.max(c.rel_err));
    Ok(GradcheckReport { cases, max_rel_err })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ModelGradcheckCase {
    pub variant: String,
    pub cell: String,
    pub rel_err: f64,
}

/// Directional-derivative checks of the loss of random small models: the
/// analytic `∇L · v` against `(L(θ + hv) − L(θ − hv)) / 2h` for a random
/// unit direction `v`. The error is `|fd − an| / max(|fd|, |an|, 1e-8)`.
pub fn model_gradcheck(trials: usize, seed: u64) -> Result<Vec<ModelGradcheckCase>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let variants = [
        Variant::ElLogsigRnn,
        Variant::GcnLogsigRnn,
        Variant::Stacked2,
        Variant::FrameRnn,
    ];
    let mut out = Vec::with_capacity(trials);
    for trial in 0..trials {
        let variant = variants[trial % variants.len()];
        let cell = if rng.random_bool(0.5) {
            CellKind::Lstm
        } else {
            CellKind::Vanilla
        };
        let joints = rng.random_range(1..=3);
        let coords = rng.random_range(1..=3);
        let config = ModelConfig {
            variant,
            degree: rng.random_range(1..=3),
            segments: rng.random_range(1..=4),
            segments2: rng.random_range(1..=3),
            joints,
            coords,
            embed_hidden: rng.random_range(1..=4),
            embed_dim: rng.random_range(1..=3),
            gcn_dim: rng.random_range(1..=3),
            gcn_dim2: rng.random_range(1..=2),
            hidden: rng.random_range(1..=5),
            output_dim: rng.random_range(1..=4),
            cell,
            classes: rng.random_range(2..=4),
            accumulative: rng.random_bool(0.5),
            time_channel: rng.random_bool(0.7),
            start_points: rng.random_bool(0.7),
        };
        let mut adjacency = Array2::zeros((joints, joints));
        for a in 0..joints {
            for b in a + 1..joints {
                if rng.random_bool(0.5) {
                    adjacency[[a, b]] = 1.0;
                    adjacency[[b, a]] = 1.0;
                }
            }
        }
        let model = Model::new(config.clone(), Some(adjacency), rng.random())?;
        let n = rng.random_range(2..=10);
        let path = random_path(&mut rng, n, joints * coords)?;
        let (times, flat) = path.into_parts();
        let frames = flat
            .to_shape((n, joints, coords))
            .expect("element count preserved")
            .into_owned();
        let x = crate::neural::SkeletonSequence::new(times, frames, None)?;
        let label = rng.random_range(0..config.classes);

        let (_, grads, _) = model.loss_and_grads(&x, label)?;
        let direction: Vec<Array2<f64>> = model
            .params()
            .values()
            .iter()
            .map(|b| b.mapv(|_| rng.random_range(-1.0..1.0)))
            .collect();
        let norm = direction
            .iter()
            .map(|b| b.iter().map(|v| v * v).sum::<f64>())
            .sum::<f64>()
            .sqrt();
        let analytic: f64 = grads
            .blocks()
            .iter()
            .zip(&direction)
            .map(|(g, v)| (g * v).sum())
            .sum::<f64>()
            / norm;
        let h = 1e-5;
        let loss_at = |step: f64| -> Result<f64> {
            let mut m = model.clone();
            for (w, v) in m.params_mut().values_mut().iter_mut().zip(&direction) {
                w.scaled_add(step / norm, v);
            }
            Ok(softmax_cross_entropy(m.forward(&x)?.view(), label)?.0)
        };
        let fd = (loss_at(h)? - loss_at(-h)?) / (2.0 * h);
        let rel_err = (fd - analytic).abs() / fd.abs().max(analytic.abs()).max(1e-8);
        out.push(ModelGradcheckCase {
            variant: variant.to_string(),
            cell: cell.to_string(),
            rel_err,
        });
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// studies

/// The embedding Logsig-LSTM used for the planar synthetic set.
pub fn logsig_config(classes: usize, joints: usize, coords: usize) -> ModelConfig {
    ModelConfig {
        variant: Variant::ElLogsigRnn,
        degree: 2,
        segments: 4,
        joints,
        coords,
        classes,
        cell: CellKind::Lstm,
        ..ModelConfig::default()
    }
}

/// The frame-level LSTM baseline with the same recurrent width.
pub fn baseline_config(classes: usize, joints: usize, coords: usize) -> ModelConfig {
    ModelConfig {
        variant: Variant::FrameRnn,
        ..logsig_config(classes, joints, coords)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RobustnessRow {
    pub rate: f64,
    pub accuracy: Vec<f64>,
}

/// Accuracy of each model on `data` with every sample perturbed at each
/// rate. Sample `i` uses the same perturbation seed for every model.
pub fn robustness(
    models: &[&Model],
    data: &[Example],
    mode: PerturbMode,
    rates: &[f64],
    seed: u64,
    threads: usize,
) -> Result<Vec<RobustnessRow>> {
    let mut rows = Vec::with_capacity(rates.len());
    for &rate in rates {
        let perturbed: Vec<Example> = data
            .iter()
            .enumerate()
            .map(|(i, (x, y))| Ok((perturb_skeleton(x, mode, rate, sample_seed(seed, i))?, *y)))
            .collect::<Result<_>>()?;
        let accuracy = models
            .iter()
            .map(|m| accuracy(m, &perturbed, threads))
            .collect::<Result<Vec<f64>>>()?;
        rows.push(RobustnessRow { rate, accuracy });
    }
    Ok(rows)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BenchRow {
    pub factor: usize,
    pub mean_len: f64,
    /// Median epoch seconds per model, warm-up epoch excluded.
    pub epoch_seconds: Vec<f64>,
    pub accuracy: Vec<f64>,
}

fn upsample_all(data: &[Example], k: usize) -> Result<Vec<Example>> {
    data.iter()
        .map(|(x, y)| Ok((upsample_skeleton(x, k)?, *y)))
        .collect()
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// For each upsampling factor, trains a fresh copy of every config for one
/// warm-up epoch plus `timed_epochs` timed epochs on the upsampled training
/// set, then scores it on the upsampled test set.
pub fn bench(
    configs: &[ModelConfig],
    train: &[Example],
    test: &[Example],
    factors: &[usize],
    settings: &TrainSettings,
    timed_epochs: usize,
) -> Result<Vec<BenchRow>> {
    let mut rows = Vec::with_capacity(factors.len());
    for &k in factors {
        let train_k = upsample_all(train, k)?;
        let test_k = upsample_all(test, k)?;
        let mean_len =
            train_k.iter().map(|(x, _)| x.len() as f64).sum::<f64>() / train_k.len().max(1) as f64;
        let mut epoch_seconds = Vec::with_capacity(configs.len());
        let mut accs = Vec::with_capacity(configs.len());
        for config in configs {
            let mut model = Model::new(config.clone(), None, settings.seed)?;
            let mut trainer = Trainer::new(settings.clone())?;
            trainer.epoch(&mut model, &train_k)?;
            let mut times = Vec::with_capacity(timed_epochs);
            for _ in 0..timed_epochs {
                let start = Instant::now();
                trainer.epoch(&mut model, &train_k)?;
                times.push(start.elapsed().as_secs_f64());
            }
            epoch_seconds.push(median(times));
            accs.push(accuracy(&model, &test_k, settings.threads)?);
        }
        rows.push(BenchRow {
            factor: k,
            mean_len,
            epoch_seconds,
            accuracy: accs,
        });
    }
    Ok(rows)
}
