//! Path transformation layers and their adjoints.

use ndarray::{s, Array2, Array3, ArrayView2, ArrayView3, Axis};
use rand::Rng;

use super::params::{Grads, ParamId, ParamStore};
use crate::error::{Error, Result};
use crate::logsig_layer::{knot_scatter, knot_value, AlignedTimes, SegmentPartition};

/// Affine map `y = x Wᵀ + b` applied row-wise.
#[derive(Clone, Copy, Debug)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
}

impl Linear {
    pub(crate) fn new<R: Rng>(
        store: &mut ParamStore,
        name: &str,
        inputs: usize,
        outputs: usize,
        rng: &mut R,
    ) -> Self {
        Linear {
            weight: store.weight(&format!("{name}.weight"), outputs, inputs, rng),
            bias: store.bias(&format!("{name}.bias"), outputs),
        }
    }

    pub fn forward(&self, params: &ParamStore, x: ArrayView2<'_, f64>) -> Array2<f64> {
        let mut y = x.dot(&params.get(self.weight).t());
        y += &params.get(self.bias).row(0);
        y
    }

    /// Accumulates parameter gradients and returns `∂/∂x`.
    pub fn backward(
        &self,
        params: &ParamStore,
        x: ArrayView2<'_, f64>,
        grad_out: ArrayView2<'_, f64>,
        grads: &mut Grads,
    ) -> Array2<f64> {
        *grads.get_mut(self.weight) += &grad_out.t().dot(&x);
        let mut gb = grads.get_mut(self.bias).row_mut(0);
        gb += &grad_out.sum_axis(Axis(0));
        grad_out.dot(params.get(self.weight))
    }
}

/// Embedding layer: a pointwise map `D → c₁` shared by all joints and
/// frames, then a joint-mixing map `F·c₁ → d_el` shared by all frames.
#[derive(Clone, Copy, Debug)]
pub struct Embedding {
    pub pointwise: Linear,
    pub mixing: Linear,
    joints: usize,
    hidden: usize,
}

/// Intermediates of [`Embedding::forward`].
#[derive(Clone, Debug)]
pub struct EmbeddingCache {
    input: Array2<f64>,
    hidden: Array2<f64>,
}

impl Embedding {
    pub(crate) fn new<R: Rng>(
        store: &mut ParamStore,
        joints: usize,
        coords: usize,
        hidden: usize,
        out: usize,
        rng: &mut R,
    ) -> Self {
        Embedding {
            pointwise: Linear::new(store, "embed.pointwise", coords, hidden, rng),
            mixing: Linear::new(store, "embed.mixing", joints * hidden, out, rng),
            joints,
            hidden,
        }
    }

    pub fn forward(
        &self,
        params: &ParamStore,
        frames: ArrayView3<'_, f64>,
    ) -> Result<(Array2<f64>, EmbeddingCache)> {
        let (n, f, d) = frames.dim();
        if f != self.joints || d != params.get(self.pointwise.weight).ncols() {
            return Err(Error::Dimension(format!(
                "embedding expects {} joints × {} coords, got {f} × {d}",
                self.joints,
                params.get(self.pointwise.weight).ncols()
            )));
        }
        let input = frames
            .to_shape((n * f, d))
            .expect("element count preserved")
            .into_owned();
        let hidden = self
            .pointwise
            .forward(params, input.view())
            .to_shape((n, f * self.hidden))
            .expect("element count preserved")
            .into_owned();
        let out = self.mixing.forward(params, hidden.view());
        Ok((out, EmbeddingCache { input, hidden }))
    }

    /// Parameter gradients only; the raw input needs none.
    pub fn backward(
        &self,
        params: &ParamStore,
        cache: &EmbeddingCache,
        grad_out: ArrayView2<'_, f64>,
        grads: &mut Grads,
    ) {
        let g_hidden = self
            .mixing
            .backward(params, cache.hidden.view(), grad_out, grads);
        let rows = cache.input.nrows();
        let g_hidden = g_hidden
            .to_shape((rows, self.hidden))
            .expect("element count preserved")
            .into_owned();
        self.pointwise
            .backward(params, cache.input.view(), g_hidden.view(), grads);
    }
}

/// Running sums `Y_i = Σ_{j≤i} X_j` down the rows.
pub fn accumulative_layer(seq: ArrayView2<'_, f64>) -> Array2<f64> {
    let mut out = seq.to_owned();
    for i in 1..out.nrows() {
        let (prev, mut rest) = out.view_mut().split_at(Axis(0), i);
        let mut row = rest.row_mut(0);
        row += &prev.row(i - 1);
    }
    out
}

/// Adjoint of [`accumulative_layer`]: reverse running sums.
pub fn accumulative_backward(grad: ArrayView2<'_, f64>) -> Array2<f64> {
    let mut out = grad.to_owned();
    for i in (0..out.nrows().saturating_sub(1)).rev() {
        let (mut head, tail) = out.view_mut().split_at(Axis(0), i + 1);
        let mut row = head.row_mut(i);
        row += &tail.row(0);
    }
    out
}

/// Prepends the normalised time `(t_i - t_1) / (t_n - t_1)`; a single
/// sample gets time channel 0.
pub fn time_incorporated_layer(seq: ArrayView2<'_, f64>, times: &[f64]) -> Result<Array2<f64>> {
    let (n, c) = seq.dim();
    if times.len() != n {
        return Err(Error::Dimension(format!(
            "{} timestamps for {n} rows",
            times.len()
        )));
    }
    let mut out = Array2::zeros((n, c + 1));
    let span = times[n - 1] - times[0];
    for (i, &t) in times.iter().enumerate() {
        out[[i, 0]] = if n > 1 { (t - times[0]) / span } else { 0.0 };
    }
    out.slice_mut(s![.., 1..]).assign(&seq);
    Ok(out)
}

/// Appends to row `k` of `logsigs` the path value at the start `u_k` of
/// segment `k`.
pub fn add_start_points(
    logsigs: ArrayView2<'_, f64>,
    times: &[f64],
    points: ArrayView2<'_, f64>,
    partition: &SegmentPartition,
) -> Result<Array2<f64>> {
    let (segments, width) = logsigs.dim();
    if segments != partition.segments() || times.len() != points.nrows() || times.is_empty() {
        return Err(Error::Dimension(format!(
            "{segments} log-signature rows for {} segments, {} timestamps for {} points",
            partition.segments(),
            times.len(),
            points.nrows()
        )));
    }
    let c = points.ncols();
    let aligned = AlignedTimes::new(times, partition);
    let mut out = Array2::zeros((segments, width + c));
    out.slice_mut(s![.., ..width]).assign(&logsigs);
    let mut value = vec![0.0; c];
    for (k, &u) in partition.boundaries()[..segments].iter().enumerate() {
        knot_value(points, aligned.locate(u), &mut value);
        for (j, v) in value.iter().enumerate() {
            out[[k, width + j]] = *v;
        }
    }
    Ok(out)
}

/// Splits the gradient of [`add_start_points`]: returns the log-signature
/// part and accumulates the start-point part into `grad_points`.
pub(crate) fn add_start_points_backward(
    grad: ArrayView2<'_, f64>,
    width: usize,
    times: &[f64],
    partition: &SegmentPartition,
    grad_points: &mut Array2<f64>,
) -> Array2<f64> {
    let aligned = AlignedTimes::new(times, partition);
    let segments = partition.segments();
    for (k, &u) in partition.boundaries()[..segments].iter().enumerate() {
        let g: Vec<f64> = grad.row(k).slice(s![width..]).to_vec();
        knot_scatter(grad_points, aligned.locate(u), &g);
    }
    grad.slice(s![.., ..width]).to_owned()
}

/// `Γ^{-1/2} (A + I) Γ^{-1/2}` with `Γ` the degree matrix of `A + I`.
pub fn normalized_adjacency(adjacency: ArrayView2<'_, f64>) -> Array2<f64> {
    let f = adjacency.nrows();
    let mut a = adjacency.to_owned();
    for i in 0..f {
        a[[i, i]] += 1.0;
    }
    let inv_sqrt: Vec<f64> = a.rows().into_iter().map(|r| 1.0 / r.sum().sqrt()).collect();
    Array2::from_shape_fn((f, f), |(i, j)| inv_sqrt[i] * a[[i, j]] * inv_sqrt[j])
}

/// Per frame `Â X_t θ`, the same `Â` and `θ` at every frame.
pub fn gcn_forward(
    frames: ArrayView3<'_, f64>,
    norm_adj: ArrayView2<'_, f64>,
    theta: ArrayView2<'_, f64>,
) -> Result<Array3<f64>> {
    let (n, f, d) = frames.dim();
    if norm_adj.dim() != (f, f) || theta.nrows() != d {
        return Err(Error::Dimension(format!(
            "graph convolution on {f} joints × {d} coords with adjacency {:?} and weight {:?}",
            norm_adj.dim(),
            theta.dim()
        )));
    }
    let mut out = Array3::zeros((n, f, theta.ncols()));
    for t in 0..n {
        let mixed = norm_adj.dot(&frames.index_axis(Axis(0), t));
        out.index_axis_mut(Axis(0), t).assign(&mixed.dot(&theta));
    }
    Ok(out)
}

/// Adjoint of [`gcn_forward`]; `Â` is symmetric. Returns `(∂/∂X, ∂/∂θ)`.
pub(crate) fn gcn_backward(
    frames: ArrayView3<'_, f64>,
    norm_adj: ArrayView2<'_, f64>,
    theta: ArrayView2<'_, f64>,
    grad_out: ArrayView3<'_, f64>,
) -> (Array3<f64>, Array2<f64>) {
    let (n, f, d) = frames.dim();
    let mut g_frames = Array3::zeros((n, f, d));
    let mut g_theta = Array2::zeros(theta.dim());
    for t in 0..n {
        let g = grad_out.index_axis(Axis(0), t);
        let mixed = norm_adj.dot(&frames.index_axis(Axis(0), t));
        g_theta += &mixed.t().dot(&g);
        g_frames
            .index_axis_mut(Axis(0), t)
            .assign(&norm_adj.t().dot(&g.dot(&theta.t())));
    }
    (g_frames, g_theta)
}
