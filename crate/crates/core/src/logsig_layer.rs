//! The log-signature sequence layer.
//!
//! A stream is cut at the boundaries of a [`SegmentPartition`] and each piece
//! is summarised by its truncated log-signature, giving an `N × d_ls` matrix
//! whatever the number of samples. The layer has no parameters. Its backward
//! pass runs reverse mode through increments, segment exponentials, the
//! running Chen product, the logarithm and the Lyndon projection.
//!
//! The path's time axis is mapped affinely onto `[u_0, u_N]` before cutting.
//! Partition boundaries that fall between samples become interpolated knots,
//! so their gradient is shared by the two neighbouring samples.

use ndarray::{Array2, ArrayView2};

use crate::error::{Error, Result};
use crate::lie_basis::LyndonBasis;
use crate::signature::TimedPath;
use crate::tensor_algebra::{self, TruncatedTensor};

/// Boundaries `u_0 < u_1 < ... < u_N`.
#[derive(Clone, Debug, PartialEq)]
pub struct SegmentPartition {
    boundaries: Vec<f64>,
}

impl SegmentPartition {
    pub fn new(boundaries: Vec<f64>) -> Result<Self> {
        if boundaries.len() < 2 {
            return Err(Error::Domain(
                "a partition needs at least one segment".into(),
            ));
        }
        if boundaries.iter().any(|u| !u.is_finite())
            || boundaries.windows(2).any(|w| !(w[1] > w[0]))
        {
            return Err(Error::Domain(
                "partition boundaries must be finite and strictly increasing".into(),
            ));
        }
        Ok(SegmentPartition { boundaries })
    }

    /// `segments` equal pieces of `[start, end]`.
    pub fn uniform(start: f64, end: f64, segments: usize) -> Result<Self> {
        if segments == 0 {
            return Err(Error::Domain("number of segments must be positive".into()));
        }
        let width = end - start;
        let mut b: Vec<f64> = (0..=segments)
            .map(|k| start + width * k as f64 / segments as f64)
            .collect();
        b[segments] = end;
        Self::new(b)
    }

    /// The default partition: uniform over the path's own time span.
    pub fn for_path(path: &TimedPath, segments: usize) -> Result<Self> {
        let (a, b) = if path.len() > 1 {
            (path.start_time(), path.end_time())
        } else {
            (path.start_time(), path.start_time() + 1.0)
        };
        Self::uniform(a, b, segments)
    }

    pub fn boundaries(&self) -> &[f64] {
        &self.boundaries
    }

    pub fn segments(&self) -> usize {
        self.boundaries.len() - 1
    }

    pub fn start(&self) -> f64 {
        self.boundaries[0]
    }

    pub fn end(&self) -> f64 {
        self.boundaries[self.boundaries.len() - 1]
    }
}

/// Output of the layer: row `k` is the log-signature over `[u_k, u_{k+1}]`.
#[derive(Clone, Debug, PartialEq)]
pub struct LogsigSequence {
    values: Array2<f64>,
}

impl LogsigSequence {
    pub fn values(&self) -> ArrayView2<'_, f64> {
        self.values.view()
    }

    pub fn into_inner(self) -> Array2<f64> {
        self.values
    }

    pub fn segments(&self) -> usize {
        self.values.nrows()
    }

    pub fn width(&self) -> usize {
        self.values.ncols()
    }
}

/// A point of a sub-path: `(1-α) x_i + α x_j`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) struct Knot {
    pub i: usize,
    pub j: usize,
    pub alpha: f64,
}

/// Path sample times mapped affinely onto the partition span.
pub(crate) struct AlignedTimes {
    times: Vec<f64>,
}

impl AlignedTimes {
    pub fn new(times: &[f64], partition: &SegmentPartition) -> Self {
        let n = times.len();
        if n == 1 {
            return AlignedTimes {
                times: vec![partition.start()],
            };
        }
        let (t0, t1) = (times[0], times[n - 1]);
        let (u0, u1) = (partition.start(), partition.end());
        let scale = (u1 - u0) / (t1 - t0);
        let mut aligned: Vec<f64> = times.iter().map(|&t| u0 + (t - t0) * scale).collect();
        aligned[0] = u0;
        aligned[n - 1] = u1;
        AlignedTimes { times: aligned }
    }

    pub fn locate(&self, u: f64) -> Knot {
        let times = &self.times;
        let n = times.len();
        if n == 1 || u <= times[0] {
            return Knot {
                i: 0,
                j: 0,
                alpha: 0.0,
            };
        }
        if u >= times[n - 1] {
            return Knot {
                i: n - 1,
                j: n - 1,
                alpha: 0.0,
            };
        }
        let j = times.partition_point(|&s| s <= u);
        let i = j - 1;
        if times[i] == u {
            return Knot {
                i,
                j: i,
                alpha: 0.0,
            };
        }
        Knot {
            i,
            j,
            alpha: (u - times[i]) / (times[j] - times[i]),
        }
    }

    /// Knots of the sub-path on `[a, b]`.
    pub fn segment_knots(&self, a: f64, b: f64) -> Vec<Knot> {
        let mut knots = vec![self.locate(a)];
        for (i, &t) in self.times.iter().enumerate() {
            if t > a && t < b {
                knots.push(Knot {
                    i,
                    j: i,
                    alpha: 0.0,
                });
            }
        }
        knots.push(self.locate(b));
        knots
    }
}

pub(crate) fn knot_value(points: ArrayView2<'_, f64>, k: Knot, out: &mut [f64]) {
    for (c, o) in out.iter_mut().enumerate() {
        *o = if k.alpha == 0.0 {
            points[[k.i, c]]
        } else {
            (1.0 - k.alpha) * points[[k.i, c]] + k.alpha * points[[k.j, c]]
        };
    }
}

pub(crate) fn knot_scatter(grad: &mut Array2<f64>, k: Knot, g: &[f64]) {
    for (c, &v) in g.iter().enumerate() {
        if k.alpha == 0.0 {
            grad[[k.i, c]] += v;
        } else {
            grad[[k.i, c]] += (1.0 - k.alpha) * v;
            grad[[k.j, c]] += k.alpha * v;
        }
    }
}

fn knot_increments(points: ArrayView2<'_, f64>, knots: &[Knot]) -> Vec<Vec<f64>> {
    let d = points.ncols();
    let mut prev = vec![0.0; d];
    let mut cur = vec![0.0; d];
    knot_value(points, knots[0], &mut prev);
    let mut out = Vec::with_capacity(knots.len() - 1);
    for &k in &knots[1..] {
        knot_value(points, k, &mut cur);
        out.push(cur.iter().zip(&prev).map(|(a, b)| a - b).collect());
        std::mem::swap(&mut prev, &mut cur);
    }
    out
}

/// Parameter-free log-signature sequence layer of a fixed width and degree.
#[derive(Clone, Debug)]
pub struct LogSignatureLayer {
    basis: LyndonBasis,
}

impl LogSignatureLayer {
    pub fn new(width: usize, depth: usize) -> Result<Self> {
        Ok(LogSignatureLayer {
            basis: LyndonBasis::new(width, depth)?,
        })
    }

    pub fn from_basis(basis: LyndonBasis) -> Self {
        LogSignatureLayer { basis }
    }

    pub fn basis(&self) -> &LyndonBasis {
        &self.basis
    }

    pub fn width(&self) -> usize {
        self.basis.width()
    }

    pub fn depth(&self) -> usize {
        self.basis.depth()
    }

    /// Number of output columns.
    pub fn output_dim(&self) -> usize {
        self.basis.len()
    }

    fn check_path(&self, dim: usize, n: usize) -> Result<()> {
        if n == 0 {
            return Err(Error::Domain("empty path".into()));
        }
        if dim != self.width() {
            return Err(Error::Dimension(format!(
                "path dimension {dim} but layer width {}",
                self.width()
            )));
        }
        Ok(())
    }

    pub fn forward(
        &self,
        path: &TimedPath,
        partition: &SegmentPartition,
    ) -> Result<LogsigSequence> {
        self.forward_raw(path.times(), path.points(), partition)
    }

    pub(crate) fn forward_raw(
        &self,
        times: &[f64],
        points: ArrayView2<'_, f64>,
        partition: &SegmentPartition,
    ) -> Result<LogsigSequence> {
        self.check_path(points.ncols(), points.nrows())?;
        let segments = partition.segments();
        let mut values = Array2::zeros((segments, self.output_dim()));
        if points.nrows() == 1 {
            return Ok(LogsigSequence { values });
        }
        let aligned = AlignedTimes::new(times, partition);
        let (d, m) = (self.width(), self.depth());
        let bounds = partition.boundaries();
        let mut coords = vec![0.0; self.output_dim()];
        for k in 0..segments {
            let knots = aligned.segment_knots(bounds[k], bounds[k + 1]);
            let mut sig = TruncatedTensor::unit(d, m);
            for delta in knot_increments(points, &knots) {
                if delta.iter().any(|&v| v != 0.0) {
                    sig.mul_exp_increment(&delta);
                }
            }
            let log = sig.log()?;
            self.basis.project_unchecked(&log, &mut coords);
            values
                .row_mut(k)
                .assign(&ndarray::ArrayView1::from(&coords));
        }
        Ok(LogsigSequence { values })
    }

    /// `∂F/∂x` for every sample given `∂F/∂l` for every output row.
    pub fn backward(
        &self,
        path: &TimedPath,
        partition: &SegmentPartition,
        upstream: ArrayView2<'_, f64>,
    ) -> Result<Array2<f64>> {
        self.backward_raw(path.times(), path.points(), partition, upstream)
    }

    pub(crate) fn backward_raw(
        &self,
        times: &[f64],
        points: ArrayView2<'_, f64>,
        partition: &SegmentPartition,
        upstream: ArrayView2<'_, f64>,
    ) -> Result<Array2<f64>> {
        self.check_path(points.ncols(), points.nrows())?;
        let expected = (partition.segments(), self.output_dim());
        if upstream.dim() != expected {
            return Err(Error::Dimension(format!(
                "upstream gradient is {:?}, forward output is {:?}",
                upstream.dim(),
                expected
            )));
        }
        let (d, m) = (self.width(), self.depth());
        let mut grad = Array2::zeros(points.dim());
        if points.nrows() == 1 {
            return Ok(grad);
        }
        let aligned = AlignedTimes::new(times, partition);
        let bounds = partition.boundaries();
        for k in 0..partition.segments() {
            let row = upstream.row(k);
            if row.iter().all(|&g| g == 0.0) {
                continue;
            }
            let knots = aligned.segment_knots(bounds[k], bounds[k + 1]);
            let increments = knot_increments(points, &knots);

            let exps: Vec<TruncatedTensor> = increments
                .iter()
                .map(|v| TruncatedTensor::exp_of_vector(m, v))
                .collect();
            let mut prefix = Vec::with_capacity(exps.len() + 1);
            prefix.push(TruncatedTensor::unit(d, m));
            for e in &exps {
                let next = prefix.last().unwrap().mul(e)?;
                prefix.push(next);
            }

            let mut grad_log = TruncatedTensor::zero(d, m);
            let row: Vec<f64> = row.iter().copied().collect();
            self.basis.project_adjoint(&row, &mut grad_log);
            let mut grad_sig = tensor_algebra::log_backward(prefix.last().unwrap(), &grad_log);

            let mut grad_knots = vec![vec![0.0; d]; knots.len()];
            for s in (0..exps.len()).rev() {
                let mut grad_prev = TruncatedTensor::zero(d, m);
                let mut grad_exp = TruncatedTensor::zero(d, m);
                tensor_algebra::mul_backward(
                    &prefix[s],
                    &exps[s],
                    &grad_sig,
                    &mut grad_prev,
                    &mut grad_exp,
                );
                let mut grad_delta = vec![0.0; d];
                tensor_algebra::exp_of_vector_backward(
                    &increments[s],
                    &exps[s],
                    &grad_exp,
                    &mut grad_delta,
                );
                for c in 0..d {
                    grad_knots[s + 1][c] += grad_delta[c];
                    grad_knots[s][c] -= grad_delta[c];
                }
                grad_sig = grad_prev;
            }
            for (knot, g) in knots.iter().zip(&grad_knots) {
                knot_scatter(&mut grad, *knot, g);
            }
        }
        Ok(grad)
    }
}

/// Forward pass of the layer with an explicit basis.
pub fn logsig_sequence(
    path: &TimedPath,
    partition: &SegmentPartition,
    depth: usize,
    basis: &LyndonBasis,
) -> Result<LogsigSequence> {
    check_basis(depth, basis)?;
    LogSignatureLayer::from_basis(basis.clone()).forward(path, partition)
}

/// Backward pass of the layer with an explicit basis.
pub fn logsig_sequence_backward(
    path: &TimedPath,
    partition: &SegmentPartition,
    depth: usize,
    basis: &LyndonBasis,
    upstream: ArrayView2<'_, f64>,
) -> Result<Array2<f64>> {
    check_basis(depth, basis)?;
    LogSignatureLayer::from_basis(basis.clone()).backward(path, partition, upstream)
}

fn check_basis(depth: usize, basis: &LyndonBasis) -> Result<()> {
    if depth < 1 {
        return Err(Error::Domain("truncation degree must be at least 1".into()));
    }
    if basis.depth() != depth {
        return Err(Error::Dimension(format!(
            "basis depth {} but degree {depth} requested",
            basis.depth()
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn l_path() -> TimedPath {
        TimedPath::from_points(array![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0]]).unwrap()
    }

    #[test]
    fn partition_validation() {
        assert!(SegmentPartition::new(vec![0.0]).is_err());
        assert!(SegmentPartition::new(vec![0.0, 0.0]).is_err());
        assert!(SegmentPartition::uniform(0.0, 1.0, 0).is_err());
        let p = SegmentPartition::uniform(0.0, 1.0, 4).unwrap();
        assert_eq!(p.boundaries(), &[0.0, 0.25, 0.5, 0.75, 1.0]);
    }

    #[test]
    fn degree_one_rows_are_increments() {
        let p =
            TimedPath::new(vec![0.0, 1.0, 3.0, 4.0], array![[0.0], [1.0], [5.0], [2.0]]).unwrap();
        let layer = LogSignatureLayer::new(1, 1).unwrap();
        let part = SegmentPartition::for_path(&p, 2).unwrap();
        let out = layer.forward(&p, &part).unwrap();
        // X(2) = 3 by interpolation between t=1 and t=3
        assert_eq!(out.values(), array![[3.0], [-1.0]]);
    }

    #[test]
    fn constant_path_gives_zero_rows() {
        let p = TimedPath::from_points(array![[1.0, 1.0], [1.0, 1.0], [1.0, 1.0]]).unwrap();
        let layer = LogSignatureLayer::new(2, 3).unwrap();
        let out = layer
            .forward(&p, &SegmentPartition::for_path(&p, 3).unwrap())
            .unwrap();
        assert!(out.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn l_path_split_at_corner() {
        let layer = LogSignatureLayer::new(2, 2).unwrap();
        let p = l_path();
        let out = layer
            .forward(&p, &SegmentPartition::for_path(&p, 2).unwrap())
            .unwrap();
        assert_eq!(out.values(), array![[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]);
        let whole = layer
            .forward(&p, &SegmentPartition::for_path(&p, 1).unwrap())
            .unwrap();
        assert_eq!(whole.values(), array![[1.0, 1.0, 0.5]]);
    }

    #[test]
    fn shorter_path_is_rescaled_to_partition() {
        let layer = LogSignatureLayer::new(2, 2).unwrap();
        let p = l_path();
        let part = SegmentPartition::uniform(0.0, 10.0, 2).unwrap();
        let out = layer.forward(&p, &part).unwrap();
        assert_eq!(out.values(), array![[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]);
    }

    #[test]
    fn single_sample_path() {
        let layer = LogSignatureLayer::new(2, 2).unwrap();
        let p = TimedPath::from_points(array![[0.5, 0.5]]).unwrap();
        let part = SegmentPartition::for_path(&p, 3).unwrap();
        assert_eq!(layer.forward(&p, &part).unwrap().values().dim(), (3, 3));
        let g = layer
            .backward(&p, &part, Array2::ones((3, 3)).view())
            .unwrap();
        assert_eq!(g, Array2::<f64>::zeros((1, 2)));
    }

    #[test]
    fn zero_upstream_gives_zero_gradient() {
        let layer = LogSignatureLayer::new(2, 3).unwrap();
        let p = l_path();
        let part = SegmentPartition::for_path(&p, 2).unwrap();
        let g = layer
            .backward(&p, &part, Array2::zeros((2, 5)).view())
            .unwrap();
        assert!(g.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn degree_one_gradient_is_endpoint_difference() {
        let layer = LogSignatureLayer::new(2, 1).unwrap();
        let p = TimedPath::from_points(array![[0.0, 0.0], [0.3, 1.0], [2.0, -1.0], [1.0, 1.0]])
            .unwrap();
        let part = SegmentPartition::for_path(&p, 1).unwrap();
        let g = layer
            .backward(&p, &part, Array2::ones((1, 2)).view())
            .unwrap();
        assert_eq!(g, array![[-1.0, -1.0], [0.0, 0.0], [0.0, 0.0], [1.0, 1.0]]);
    }

    #[test]
    fn upstream_shape_is_checked() {
        let layer = LogSignatureLayer::new(2, 2).unwrap();
        let p = l_path();
        let part = SegmentPartition::for_path(&p, 2).unwrap();
        assert!(matches!(
            layer.backward(&p, &part, Array2::zeros((3, 3)).view()),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn width_mismatch_is_rejected() {
        let layer = LogSignatureLayer::new(3, 2).unwrap();
        let p = l_path();
        assert!(layer
            .forward(&p, &SegmentPartition::for_path(&p, 1).unwrap())
            .is_err());
        let basis = LyndonBasis::new(2, 3).unwrap();
        assert!(
            logsig_sequence(&p, &SegmentPartition::for_path(&p, 1).unwrap(), 2, &basis).is_err()
        );
    }
}
