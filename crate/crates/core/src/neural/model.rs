//! PT-Logsig-RNN models: path transformation, log-signature sequence layer
//! and recurrent classifier, with reverse-mode gradients for every weight.
//!
//! The recurrent network is unrolled over the `N` partition segments, never
//! over the raw frames, so the sequence entering it is `N × (d_ls + c)`
//! whatever the input length.

use ndarray::{s, Array1, Array2, Array3, ArrayView1, ArrayView2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::{ModelConfig, Variant};
use super::layers::{
    accumulative_backward, accumulative_layer, add_start_points, add_start_points_backward,
    gcn_backward, gcn_forward, normalized_adjacency, time_incorporated_layer, Embedding,
    EmbeddingCache, Linear,
};
use super::params::{Grads, ParamId, ParamStore};
use super::rnn::{RnnCache, RnnCell};
use super::skeleton::{validate_adjacency, SkeletonSequence};
use crate::error::{Error, Result};
use crate::lie_basis::logsig_dim;
use crate::logsig_layer::{LogSignatureLayer, SegmentPartition};

/// Time-incorporation, log-signature layer, start points, recurrent cell
/// and output map `o_t = V h_t`, applied to one path.
#[derive(Clone, Debug)]
struct LogsigRnnBlock {
    time_channel: bool,
    start_points: bool,
    segments: usize,
    layer: LogSignatureLayer,
    rnn: RnnCell,
    out: Linear,
}

#[derive(Clone, Debug)]
struct BlockCache {
    times: Vec<f64>,
    path: Array2<f64>,
    partition: SegmentPartition,
    rnn: RnnCache,
}

impl LogsigRnnBlock {
    fn new(
        store: &mut ParamStore,
        name: &str,
        config: &ModelConfig,
        input_width: usize,
        segments: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        let path_width = input_width + usize::from(config.time_channel);
        let rnn_input = Self::rnn_input_width(config, path_width);
        Ok(LogsigRnnBlock {
            time_channel: config.time_channel,
            start_points: config.start_points,
            segments,
            layer: LogSignatureLayer::new(path_width, config.degree)?,
            rnn: RnnCell::new(
                store,
                &format!("{name}.rnn"),
                config.cell,
                rnn_input,
                config.hidden,
                rng,
            ),
            out: Linear::new(
                store,
                &format!("{name}.out"),
                config.hidden,
                config.output_dim,
                rng,
            ),
        })
    }

    fn rnn_input_width(config: &ModelConfig, path_width: usize) -> usize {
        logsig_dim(path_width, config.degree) + if config.start_points { path_width } else { 0 }
    }

    /// The `N × (d_ls [+ c])` matrix fed to the recurrent cell.
    fn rnn_input(
        &self,
        times: &[f64],
        points: ArrayView2<'_, f64>,
    ) -> Result<(Array2<f64>, Array2<f64>, SegmentPartition)> {
        let path = if self.time_channel {
            time_incorporated_layer(points, times)?
        } else {
            points.to_owned()
        };
        let partition = partition_for(times, self.segments)?;
        let logsigs = self
            .layer
            .forward_raw(times, path.view(), &partition)?
            .into_inner();
        let input = if self.start_points {
            add_start_points(logsigs.view(), times, path.view(), &partition)?
        } else {
            logsigs
        };
        debug_assert_eq!(input.nrows(), self.segments);
        Ok((input, path, partition))
    }

    fn forward(
        &self,
        params: &ParamStore,
        times: &[f64],
        points: ArrayView2<'_, f64>,
    ) -> Result<(Array2<f64>, BlockCache)> {
        let (input, path, partition) = self.rnn_input(times, points)?;
        let rnn = self.rnn.forward(params, input.view())?;
        let outputs = self.out.forward(params, rnn.outputs());
        Ok((
            outputs,
            BlockCache {
                times: times.to_vec(),
                path,
                partition,
                rnn,
            },
        ))
    }

    fn backward(
        &self,
        params: &ParamStore,
        cache: &BlockCache,
        grad_outputs: ArrayView2<'_, f64>,
        grads: &mut Grads,
    ) -> Result<Array2<f64>> {
        let g_hidden = self
            .out
            .backward(params, cache.rnn.outputs(), grad_outputs, grads);
        let g_input = self
            .rnn
            .backward(params, &cache.rnn, g_hidden.view(), grads);
        let mut g_path = Array2::zeros(cache.path.dim());
        let g_logsig = if self.start_points {
            add_start_points_backward(
                g_input.view(),
                self.layer.output_dim(),
                &cache.times,
                &cache.partition,
                &mut g_path,
            )
        } else {
            g_input
        };
        g_path += &self.layer.backward_raw(
            &cache.times,
            cache.path.view(),
            &cache.partition,
            g_logsig.view(),
        )?;
        Ok(if self.time_channel {
            g_path.slice(s![.., 1..]).to_owned()
        } else {
            g_path
        })
    }
}

/// Uniform partition over the sample's own time span.
fn partition_for(times: &[f64], segments: usize) -> Result<SegmentPartition> {
    let start = times[0];
    let end = times[times.len() - 1];
    if times.len() > 1 {
        SegmentPartition::uniform(start, end, segments)
    } else {
        SegmentPartition::uniform(start, start + 1.0, segments)
    }
}

/// Joint `j` of an `n × F × c` tensor as an `n × c` path.
fn joint_path(x: &Array3<f64>, j: usize) -> Array2<f64> {
    x.index_axis(Axis(1), j).to_owned()
}

#[derive(Clone, Debug)]
struct GraphStage {
    theta: ParamId,
    block: LogsigRnnBlock,
}

#[derive(Clone, Debug)]
enum Architecture {
    El {
        embed: Embedding,
        block: LogsigRnnBlock,
        head: Linear,
    },
    Graph {
        stages: Vec<GraphStage>,
        head: Linear,
    },
    Frame {
        rnn: RnnCell,
        out: Linear,
        head: Linear,
    },
}

/// A PT-Logsig-RNN (or the frame-level baseline) with its weights.
#[derive(Clone, Debug)]
pub struct Model {
    config: ModelConfig,
    params: ParamStore,
    arch: Architecture,
    adjacency: Array2<f64>,
    norm_adj: Array2<f64>,
}

struct GraphStageCache {
    input: Array3<f64>,
    blocks: Vec<BlockCache>,
}

enum TraceKind {
    El {
        embed: EmbeddingCache,
        block: BlockCache,
        features: Array1<f64>,
    },
    Graph {
        stages: Vec<GraphStageCache>,
        features: Array1<f64>,
        last_step: usize,
    },
    Frame {
        rnn: RnnCache,
        features: Array1<f64>,
    },
}

/// Forward intermediates of one sample.
pub struct Trace {
    kind: TraceKind,
    logits: Array1<f64>,
}

impl Trace {
    pub fn logits(&self) -> ArrayView1<'_, f64> {
        self.logits.view()
    }
}

impl Model {
    /// Builds a model with freshly initialised weights. `adjacency` is used
    /// by the graph variants; without one the joints are unconnected.
    pub fn new(config: ModelConfig, adjacency: Option<Array2<f64>>, seed: u64) -> Result<Self> {
        config.validate()?;
        let f = config.joints;
        let adjacency = adjacency.unwrap_or_else(|| Array2::zeros((f, f)));
        validate_adjacency(adjacency.view(), f)?;
        let norm_adj = normalized_adjacency(adjacency.view());
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamStore::new();
        let arch = match config.variant {
            Variant::ElLogsigRnn => {
                let embed = Embedding::new(
                    &mut params,
                    config.joints,
                    config.coords,
                    config.embed_hidden,
                    config.embed_dim,
                    &mut rng,
                );
                let block = LogsigRnnBlock::new(
                    &mut params,
                    "block",
                    &config,
                    config.embed_dim,
                    config.segments,
                    &mut rng,
                )?;
                let head = Linear::new(
                    &mut params,
                    "head",
                    config.output_dim,
                    config.classes,
                    &mut rng,
                );
                Architecture::El { embed, block, head }
            }
            Variant::GcnLogsigRnn | Variant::Stacked2 => {
                let mut stages = Vec::new();
                let theta = params.weight("gcn.theta", config.coords, config.gcn_dim, &mut rng);
                let block = LogsigRnnBlock::new(
                    &mut params,
                    "block",
                    &config,
                    config.gcn_dim,
                    config.segments,
                    &mut rng,
                )?;
                stages.push(GraphStage { theta, block });
                if config.variant == Variant::Stacked2 {
                    let theta =
                        params.weight("gcn2.theta", config.output_dim, config.gcn_dim2, &mut rng);
                    let block = LogsigRnnBlock::new(
                        &mut params,
                        "block2",
                        &config,
                        config.gcn_dim2,
                        config.segments2,
                        &mut rng,
                    )?;
                    stages.push(GraphStage { theta, block });
                }
                let head = Linear::new(
                    &mut params,
                    "head",
                    config.output_dim,
                    config.classes,
                    &mut rng,
                );
                Architecture::Graph { stages, head }
            }
            Variant::FrameRnn => {
                let rnn = RnnCell::new(
                    &mut params,
                    "rnn",
                    config.cell,
                    config.joints * config.coords,
                    config.hidden,
                    &mut rng,
                );
                let out = Linear::new(
                    &mut params,
                    "out",
                    config.hidden,
                    config.output_dim,
                    &mut rng,
                );
                let head = Linear::new(
                    &mut params,
                    "head",
                    config.output_dim,
                    config.classes,
                    &mut rng,
                );
                Architecture::Frame { rnn, out, head }
            }
        };
        Ok(Model {
            config,
            params,
            arch,
            adjacency,
            norm_adj,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    pub fn adjacency(&self) -> ArrayView2<'_, f64> {
        self.adjacency.view()
    }

    fn check_input(&self, x: &SkeletonSequence) -> Result<()> {
        if x.joints() != self.config.joints || x.coords() != self.config.coords {
            return Err(Error::Dimension(format!(
                "model expects {} joints × {} coords, sample has {} × {}",
                self.config.joints,
                self.config.coords,
                x.joints(),
                x.coords()
            )));
        }
        Ok(())
    }

    /// Class logits.
    pub fn forward(&self, x: &SkeletonSequence) -> Result<Array1<f64>> {
        Ok(self.trace(x)?.logits)
    }

    /// Predicted class.
    pub fn predict(&self, x: &SkeletonSequence) -> Result<usize> {
        Ok(argmax(self.forward(x)?.view()))
    }

    /// Inputs of the (first-stage) recurrent cell: one matrix for the
    /// embedding variant, one per joint for the graph variants, the raw
    /// frames for the baseline.
    pub fn rnn_inputs(&self, x: &SkeletonSequence) -> Result<Vec<Array2<f64>>> {
        self.check_input(x)?;
        match &self.arch {
            Architecture::El { embed, block, .. } => {
                let path = self.embedded_path(embed, x)?.0;
                Ok(vec![block.rnn_input(x.times(), path.view())?.0])
            }
            Architecture::Graph { stages, .. } => {
                let theta = self.params.get(stages[0].theta);
                let g = gcn_forward(x.frames(), self.norm_adj.view(), theta.view())?;
                (0..g.dim().1)
                    .map(|j| {
                        Ok(stages[0]
                            .block
                            .rnn_input(x.times(), joint_path(&g, j).view())?
                            .0)
                    })
                    .collect()
            }
            Architecture::Frame { .. } => Ok(vec![x.flat_frames()]),
        }
    }

    fn embedded_path(
        &self,
        embed: &Embedding,
        x: &SkeletonSequence,
    ) -> Result<(Array2<f64>, EmbeddingCache)> {
        let (e, cache) = embed.forward(&self.params, x.frames())?;
        let path = if self.config.accumulative {
            accumulative_layer(e.view())
        } else {
            e
        };
        Ok((path, cache))
    }

    /// Forward pass keeping what the backward pass needs.
    pub fn trace(&self, x: &SkeletonSequence) -> Result<Trace> {
        self.check_input(x)?;
        let p = &self.params;
        match &self.arch {
            Architecture::El { embed, block, head } => {
                let (path, embed_cache) = self.embedded_path(embed, x)?;
                let (outputs, block_cache) = block.forward(p, x.times(), path.view())?;
                let features = outputs.row(outputs.nrows() - 1).to_owned();
                let logits = head_forward(head, p, features.view());
                Ok(Trace {
                    kind: TraceKind::El {
                        embed: embed_cache,
                        block: block_cache,
                        features,
                    },
                    logits,
                })
            }
            Architecture::Graph { stages, head } => {
                let mut input = x.frames().to_owned();
                let mut times = x.times().to_vec();
                let mut caches = Vec::with_capacity(stages.len());
                let mut outputs = Array3::zeros((0, 0, 0));
                for stage in stages {
                    let g = gcn_forward(
                        input.view(),
                        self.norm_adj.view(),
                        p.get(stage.theta).view(),
                    )?;
                    let f = g.dim().1;
                    let mut blocks = Vec::with_capacity(f);
                    outputs = Array3::zeros((stage.block.segments, f, self.config.output_dim));
                    for j in 0..f {
                        let (o, cache) =
                            stage.block.forward(p, &times, joint_path(&g, j).view())?;
                        outputs.index_axis_mut(Axis(1), j).assign(&o);
                        blocks.push(cache);
                    }
                    caches.push(GraphStageCache {
                        input: std::mem::replace(&mut input, outputs.clone()),
                        blocks,
                    });
                    // the next stage sees one frame per segment
                    times = (0..stage.block.segments).map(|k| k as f64).collect();
                }
                let last = outputs.dim().0 - 1;
                let features = outputs
                    .index_axis(Axis(0), last)
                    .mean_axis(Axis(0))
                    .expect("joints");
                let logits = head_forward(head, p, features.view());
                Ok(Trace {
                    kind: TraceKind::Graph {
                        stages: caches,
                        features,
                        last_step: last,
                    },
                    logits,
                })
            }
            Architecture::Frame { rnn, out, head } => {
                let cache = rnn.forward(p, x.flat_frames().view())?;
                let hs = cache.outputs();
                let last = hs.slice(s![hs.nrows() - 1..hs.nrows(), ..]);
                let features = out.forward(p, last).row(0).to_owned();
                let logits = head_forward(head, p, features.view());
                Ok(Trace {
                    kind: TraceKind::Frame {
                        rnn: cache,
                        features,
                    },
                    logits,
                })
            }
        }
    }

    /// Parameter gradients of `Σ grad_logits · logits`.
    pub fn backward(&self, trace: &Trace, grad_logits: ArrayView1<'_, f64>) -> Result<Grads> {
        let p = &self.params;
        let mut grads = p.zeros_like();
        match (&self.arch, &trace.kind) {
            (
                Architecture::El { embed, block, head },
                TraceKind::El {
                    embed: ec,
                    block: bc,
                    features,
                },
            ) => {
                let g_feat = head_backward(head, p, features.view(), grad_logits, &mut grads);
                let mut g_out = Array2::zeros((block.segments, self.config.output_dim));
                g_out.row_mut(block.segments - 1).assign(&g_feat);
                let g_path = block.backward(p, bc, g_out.view(), &mut grads)?;
                let g_embed = if self.config.accumulative {
                    accumulative_backward(g_path.view())
                } else {
                    g_path
                };
                embed.backward(p, ec, g_embed.view(), &mut grads);
            }
            (
                Architecture::Graph { stages, head },
                TraceKind::Graph {
                    stages: caches,
                    features,
                    last_step,
                },
            ) => {
                let g_feat = head_backward(head, p, features.view(), grad_logits, &mut grads);
                let f = self.config.joints;
                let last_stage = stages.last().expect("at least one stage");
                let mut g_outputs =
                    Array3::zeros((last_stage.block.segments, f, self.config.output_dim));
                for j in 0..f {
                    g_outputs
                        .slice_mut(s![*last_step, j, ..])
                        .assign(&(&g_feat / f as f64));
                }
                for (stage, cache) in stages.iter().zip(caches).rev() {
                    let theta = p.get(stage.theta);
                    let n = cache.input.dim().0;
                    let mut g_conv = Array3::zeros((n, f, theta.ncols()));
                    for (j, bc) in cache.blocks.iter().enumerate() {
                        let g_o = g_outputs.index_axis(Axis(1), j);
                        let g_path = stage.block.backward(p, bc, g_o, &mut grads)?;
                        g_conv.index_axis_mut(Axis(1), j).assign(&g_path);
                    }
                    let (g_input, g_theta) = gcn_backward(
                        cache.input.view(),
                        self.norm_adj.view(),
                        theta.view(),
                        g_conv.view(),
                    );
                    *grads.get_mut(stage.theta) += &g_theta;
                    g_outputs = g_input;
                }
            }
            (Architecture::Frame { rnn, out, head }, TraceKind::Frame { rnn: rc, features }) => {
                let g_feat = head_backward(head, p, features.view(), grad_logits, &mut grads);
                let hs = rc.outputs();
                let steps = hs.nrows();
                let last = hs.slice(s![steps - 1..steps, ..]);
                let g_last = out.backward(p, last, g_feat.insert_axis(Axis(0)).view(), &mut grads);
                let mut g_hidden = Array2::zeros(hs.dim());
                g_hidden.row_mut(steps - 1).assign(&g_last.row(0));
                rnn.backward(p, rc, g_hidden.view(), &mut grads);
            }
            _ => return Err(Error::Config("trace does not belong to this model".into())),
        }
        Ok(grads)
    }

    /// Loss and parameter gradients for one labelled sample.
    pub fn loss_and_grads(
        &self,
        x: &SkeletonSequence,
        label: usize,
    ) -> Result<(f64, Grads, Array1<f64>)> {
        let trace = self.trace(x)?;
        let (loss, g) = softmax_cross_entropy(trace.logits.view(), label)?;
        let grads = self.backward(&trace, g.view())?;
        Ok((loss, grads, trace.logits))
    }
}

fn head_forward(head: &Linear, p: &ParamStore, features: ArrayView1<'_, f64>) -> Array1<f64> {
    head.forward(p, features.insert_axis(Axis(0)))
        .row(0)
        .to_owned()
}

fn head_backward(
    head: &Linear,
    p: &ParamStore,
    features: ArrayView1<'_, f64>,
    grad: ArrayView1<'_, f64>,
    grads: &mut Grads,
) -> Array1<f64> {
    head.backward(
        p,
        features.insert_axis(Axis(0)),
        grad.insert_axis(Axis(0)),
        grads,
    )
    .row(0)
    .to_owned()
}

pub fn argmax(v: ArrayView1<'_, f64>) -> usize {
    v.iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &x)| {
            if x > bv {
                (i, x)
            } else {
                (bi, bv)
            }
        })
        .0
}

pub fn softmax(logits: ArrayView1<'_, f64>) -> Array1<f64> {
    let max = logits.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
    let e = logits.mapv(|v| (v - max).exp());
    let z = e.sum();
    e / z
}

/// Cross-entropy of the softmax and its gradient with respect to the logits.
pub fn softmax_cross_entropy(
    logits: ArrayView1<'_, f64>,
    label: usize,
) -> Result<(f64, Array1<f64>)> {
    if label >= logits.len() {
        return Err(Error::Range(format!(
            "label {label} with {} classes",
            logits.len()
        )));
    }
    let p = softmax(logits);
    let loss = -p[label].max(f64::MIN_POSITIVE).ln();
    let mut g = p;
    g[label] -= 1.0;
    Ok((loss, g))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::rnn::CellKind;
    use ndarray::array;

    fn sample(n: usize, joints: usize, coords: usize, seed: u64) -> SkeletonSequence {
        let frames = Array3::from_shape_fn((n, joints, coords), |(t, j, c)| {
            ((t as f64 * 0.7 + j as f64 * 1.3 + c as f64 * 0.4 + seed as f64).sin()) * 0.8
        });
        let times = (0..n)
            .map(|t| t as f64 * 0.5 + (t as f64 * 0.3).sin() * 0.1)
            .collect();
        SkeletonSequence::new(times, frames, None).unwrap()
    }

    fn small(variant: Variant, cell: CellKind) -> ModelConfig {
        ModelConfig {
            variant,
            degree: 2,
            segments: 3,
            segments2: 2,
            joints: 3,
            coords: 2,
            embed_hidden: 3,
            embed_dim: 2,
            gcn_dim: 2,
            gcn_dim2: 2,
            hidden: 4,
            output_dim: 3,
            cell,
            classes: 3,
            accumulative: true,
            time_channel: true,
            start_points: true,
        }
    }

    #[test]
    fn softmax_sums_to_one() {
        let p = softmax(array![1.0, -2.0, 30.0, 0.5].view());
        assert!((p.sum() - 1.0).abs() <= 1e-12);
        let (loss, g) = softmax_cross_entropy(array![0.0, 0.0].view(), 1).unwrap();
        assert!((loss - 2f64.ln()).abs() < 1e-15);
        assert_eq!(g, array![0.5, -0.5]);
        assert!(softmax_cross_entropy(array![0.0].view(), 1).is_err());
    }

    #[test]
    fn rnn_input_length_is_segment_count() {
        let cfg = small(Variant::ElLogsigRnn, CellKind::Lstm);
        let model = Model::new(cfg.clone(), None, 1).unwrap();
        for n in [2, 8, 33] {
            let inputs = model.rnn_inputs(&sample(n, 3, 2, 0)).unwrap();
            assert_eq!(inputs.len(), 1);
            // path width 3 (two embedded + time): 3 + 3 log-signature, 3 start point columns
            assert_eq!(inputs[0].dim(), (cfg.segments, 6 + 3));
        }
    }

    #[test]
    fn end_to_end_gradients() {
        let adjacency = array![[0.0, 1.0, 0.0], [1.0, 0.0, 1.0], [0.0, 1.0, 0.0]];
        for variant in [
            Variant::ElLogsigRnn,
            Variant::GcnLogsigRnn,
            Variant::Stacked2,
            Variant::FrameRnn,
        ] {
            for cell in [CellKind::Vanilla, CellKind::Lstm] {
                let cfg = small(variant, cell);
                let model = Model::new(cfg, Some(adjacency.clone()), 7).unwrap();
                let x = sample(9, 3, 2, 2);
                let label = 1;
                let (_, grads, _) = model.loss_and_grads(&x, label).unwrap();
                let h = 1e-6;
                for (b, block) in model.params().values().iter().enumerate() {
                    for i in 0..block.len() {
                        let eval = |delta: f64| {
                            let mut m = model.clone();
                            m.params_mut().values_mut()[b].as_slice_mut().unwrap()[i] += delta;
                            let logits = m.forward(&x).unwrap();
                            softmax_cross_entropy(logits.view(), label).unwrap().0
                        };
                        let fd = (eval(h) - eval(-h)) / (2.0 * h);
                        let an = grads.blocks()[b].as_slice().unwrap()[i];
                        // absolute floor: central differences resolve about 1e-10 here
                        let err = (fd - an).abs() / fd.abs().max(an.abs()).max(1e-5);
                        assert!(
                            err <= 1e-4,
                            "{variant:?}/{cell:?} {}[{i}]: fd {fd} analytic {an}",
                            model.params().names()[b]
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn single_joint_graph_model_matches_linear_feature_path() {
        let mut cfg = small(Variant::GcnLogsigRnn, CellKind::Vanilla);
        cfg.joints = 1;
        let model = Model::new(cfg, None, 3).unwrap();
        let x = sample(6, 1, 2, 1);
        let theta = model.params().values()[0].clone();
        let path = x.flat_frames().dot(&theta);
        let inputs = model.rnn_inputs(&x).unwrap();
        let LogsigRnnBlockRef(block) = block_of(&model);
        let expected = block.rnn_input(x.times(), path.view()).unwrap().0;
        assert_eq!(inputs[0], expected);
    }

    struct LogsigRnnBlockRef<'a>(&'a LogsigRnnBlock);

    fn block_of(model: &Model) -> LogsigRnnBlockRef<'_> {
        match &model.arch {
            Architecture::Graph { stages, .. } => LogsigRnnBlockRef(&stages[0].block),
            Architecture::El { block, .. } => LogsigRnnBlockRef(block),
            Architecture::Frame { .. } => panic!("no block"),
        }
    }
}
