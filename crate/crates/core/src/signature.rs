//! Signatures and log-signatures of piecewise-linear paths.

use ndarray::{Array2, ArrayView2, Axis};

use crate::error::{Error, Result};
use crate::lie_basis::{LieCoordinates, LyndonBasis};
use crate::tensor_algebra::TruncatedTensor;

/// A stream of `d`-dimensional samples at strictly increasing times,
/// read as its continuous piecewise-linear interpolant.
#[derive(Clone, Debug, PartialEq)]
pub struct TimedPath {
    times: Vec<f64>,
    points: Array2<f64>,
}

impl TimedPath {
    pub fn new(times: Vec<f64>, points: Array2<f64>) -> Result<Self> {
        if times.is_empty() {
            return Err(Error::Domain("a path needs at least one sample".into()));
        }
        if points.nrows() != times.len() {
            return Err(Error::Dimension(format!(
                "{} timestamps but {} point rows",
                times.len(),
                points.nrows()
            )));
        }
        if points.ncols() == 0 {
            return Err(Error::Dimension(
                "points must have at least one column".into(),
            ));
        }
        if let Some(i) = times.windows(2).position(|w| !(w[1] > w[0])) {
            return Err(Error::Domain(format!(
                "timestamps must be strictly increasing (t[{}]={} , t[{}]={})",
                i,
                times[i],
                i + 1,
                times[i + 1]
            )));
        }
        if times.iter().any(|t| !t.is_finite()) || points.iter().any(|x| !x.is_finite()) {
            return Err(Error::Domain("path contains non-finite values".into()));
        }
        Ok(TimedPath { times, points })
    }

    /// Samples at times `0, 1, ..., n-1`.
    pub fn from_points(points: Array2<f64>) -> Result<Self> {
        let times = (0..points.nrows()).map(|i| i as f64).collect();
        Self::new(times, points)
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.points.ncols()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn points(&self) -> ArrayView2<'_, f64> {
        self.points.view()
    }

    pub fn start_time(&self) -> f64 {
        self.times[0]
    }

    pub fn end_time(&self) -> f64 {
        self.times[self.times.len() - 1]
    }

    pub fn into_parts(self) -> (Vec<f64>, Array2<f64>) {
        (self.times, self.points)
    }

    /// Interpolation weights at time `t`: `(i, j, α)` with value
    /// `(1-α) x_i + α x_j`. Clamps to the end samples.
    pub fn locate(&self, t: f64) -> (usize, usize, f64) {
        let n = self.times.len();
        if n == 1 || t <= self.times[0] {
            return (0, 0, 0.0);
        }
        if t >= self.times[n - 1] {
            return (n - 1, n - 1, 0.0);
        }
        let j = self.times.partition_point(|&s| s <= t);
        let i = j - 1;
        if self.times[i] == t {
            return (i, i, 0.0);
        }
        let alpha = (t - self.times[i]) / (self.times[j] - self.times[i]);
        (i, j, alpha)
    }

    /// Interpolated value at time `t` (clamped to the sampled span).
    pub fn value_at(&self, t: f64) -> Vec<f64> {
        let (i, j, a) = self.locate(t);
        let xi = self.points.row(i);
        let xj = self.points.row(j);
        xi.iter()
            .zip(xj.iter())
            .map(|(p, q)| (1.0 - a) * p + a * q)
            .collect()
    }

    /// The sub-path on `[a, b]`: every sample inside plus interpolated end
    /// points where `a` or `b` is not a sample time.
    pub fn restrict(&self, a: f64, b: f64) -> Result<TimedPath> {
        if !(a < b) || a < self.start_time() || b > self.end_time() {
            return Err(Error::Range(format!(
                "[{a}, {b}] is not a sub-interval of [{}, {}]",
                self.start_time(),
                self.end_time()
            )));
        }
        let mut times = Vec::new();
        let mut rows: Vec<f64> = Vec::new();
        if !self.times.contains(&a) {
            times.push(a);
            rows.extend(self.value_at(a));
        }
        for (i, &t) in self.times.iter().enumerate() {
            if t >= a && t <= b {
                times.push(t);
                rows.extend(self.points.row(i).iter());
            }
        }
        if !self.times.contains(&b) {
            times.push(b);
            rows.extend(self.value_at(b));
        }
        let n = times.len();
        let points = Array2::from_shape_vec((n, self.dim()), rows)
            .map_err(|e| Error::Dimension(e.to_string()))?;
        TimedPath::new(times, points)
    }

    /// Same curve traversed backwards.
    pub fn reversed(&self) -> TimedPath {
        let end = self.end_time();
        let start = self.start_time();
        let times = self.times.iter().rev().map(|t| start + end - t).collect();
        let mut points = self.points.clone();
        points.invert_axis(Axis(0));
        TimedPath {
            times,
            points: points.as_standard_layout().to_owned(),
        }
    }

    /// Applies a time change that keeps the traversed curve.
    pub fn reparameterize(&self, change: &Reparameterization) -> Result<TimedPath> {
        match change {
            Reparameterization::Retime(new_times) => {
                TimedPath::new(new_times.clone(), self.points.clone())
            }
            Reparameterization::Refine(k) => crate::data::upsample_linear(self, *k),
        }
    }
}

/// A monotone change of time that leaves the image curve unchanged.
#[derive(Clone, Debug, PartialEq)]
pub enum Reparameterization {
    /// New strictly increasing timestamps for the same samples.
    Retime(Vec<f64>),
    /// Insert `k - 1` equally spaced collinear points on every segment.
    Refine(usize),
}

fn check_depth(depth: usize) -> Result<()> {
    if depth < 1 {
        return Err(Error::Domain("truncation degree must be at least 1".into()));
    }
    Ok(())
}

/// Signature of the polyline through the rows of `points`, by Chen's
/// identity over segments.
pub fn signature_of_points(points: ArrayView2<'_, f64>, depth: usize) -> TruncatedTensor {
    let d = points.ncols();
    let mut sig = TruncatedTensor::unit(d, depth);
    let mut delta = vec![0.0; d];
    for w in points.axis_windows(Axis(0), 2) {
        for (c, dv) in delta.iter_mut().enumerate() {
            *dv = w[[1, c]] - w[[0, c]];
        }
        if delta.iter().any(|&v| v != 0.0) {
            sig.mul_exp_increment(&delta);
        }
    }
    sig
}

/// Truncated signature; timestamps play no role beyond ordering.
pub fn signature(path: &TimedPath, depth: usize) -> Result<TruncatedTensor> {
    check_depth(depth)?;
    Ok(signature_of_points(path.points(), depth))
}

/// Log-signature in Lyndon coordinates.
pub fn log_signature(
    path: &TimedPath,
    depth: usize,
    basis: &LyndonBasis,
) -> Result<LieCoordinates> {
    check_depth(depth)?;
    if basis.width() != path.dim() || basis.depth() != depth {
        return Err(Error::Dimension(format!(
            "basis (width {}, depth {}) does not match path dimension {} at degree {depth}",
            basis.width(),
            basis.depth(),
            path.dim()
        )));
    }
    let log = signature(path, depth)?.log()?;
    basis.project(&log)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn l_path() -> TimedPath {
        TimedPath::from_points(array![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0]]).unwrap()
    }

    #[test]
    fn one_dimensional_signature() {
        let p = TimedPath::new(vec![0.3, 7.0], array![[0.0], [3.0]]).unwrap();
        let s = signature(&p, 3).unwrap();
        assert_eq!(s.as_slice(), &[1.0, 3.0, 4.5, 4.5]);
    }

    #[test]
    fn single_segment_signature() {
        let p = TimedPath::from_points(array![[0.0, 0.0], [1.0, 2.0]]).unwrap();
        let s = signature(&p, 2).unwrap();
        assert_eq!(s.level(1), &[1.0, 2.0]);
        assert_eq!(s.level(2), &[0.5, 1.0, 1.0, 2.0]);
    }

    #[test]
    fn l_path_signature_and_log_signature() {
        let s = signature(&l_path(), 2).unwrap();
        assert_eq!(s.level(2), &[0.5, 1.0, 0.0, 0.5]);
        let basis = LyndonBasis::new(2, 2).unwrap();
        let l = log_signature(&l_path(), 2, &basis).unwrap();
        assert_eq!(l.as_slice(), &[1.0, 1.0, 0.5]);
    }

    #[test]
    fn constant_path_is_trivial() {
        let basis = LyndonBasis::new(2, 3).unwrap();
        let single = TimedPath::from_points(array![[1.0, 2.0]]).unwrap();
        assert_eq!(signature(&single, 3).unwrap(), TruncatedTensor::unit(2, 3));
        let repeated = TimedPath::from_points(array![[1.0, 2.0], [1.0, 2.0], [1.0, 2.0]]).unwrap();
        assert_eq!(
            log_signature(&repeated, 3, &basis).unwrap(),
            LieCoordinates::zeros(2, 3)
        );
    }

    #[test]
    fn one_dimensional_log_signature_is_increment() {
        let basis = LyndonBasis::new(1, 3).unwrap();
        let p = TimedPath::from_points(array![[0.0], [2.0], [-1.0], [0.5]]).unwrap();
        let l = log_signature(&p, 3, &basis).unwrap();
        assert_eq!(l.as_slice(), &[0.5]);
    }

    #[test]
    fn degree_zero_is_rejected() {
        assert!(matches!(signature(&l_path(), 0), Err(Error::Domain(_))));
    }

    #[test]
    fn construction_checks() {
        assert!(TimedPath::new(vec![], Array2::zeros((0, 2))).is_err());
        assert!(TimedPath::new(vec![0.0, 0.0], Array2::zeros((2, 2))).is_err());
        assert!(TimedPath::new(vec![0.0, 1.0], Array2::zeros((3, 2))).is_err());
        assert!(TimedPath::new(vec![0.0, f64::NAN], Array2::zeros((2, 1))).is_err());
        assert!(TimedPath::new(vec![0.0, 1.0], array![[0.0], [f64::INFINITY]]).is_err());
    }

    #[test]
    fn restrict_examples() {
        let p = l_path();
        assert_eq!(p.restrict(0.0, 2.0).unwrap(), p);
        let q = TimedPath::new(vec![0.0, 1.0], array![[0.0], [2.0]]).unwrap();
        let r = q.restrict(0.0, 0.5).unwrap();
        assert_eq!(r.times(), &[0.0, 0.5]);
        assert_eq!(r.points(), array![[0.0], [1.0]]);
        assert!(matches!(q.restrict(-0.1, 0.5), Err(Error::Range(_))));
        assert!(matches!(q.restrict(0.5, 0.5), Err(Error::Range(_))));
    }

    #[test]
    fn chen_identity_at_corner() {
        let p = l_path();
        let whole = signature(&p, 3).unwrap();
        let left = signature(&p.restrict(0.0, 1.3).unwrap(), 3).unwrap();
        let right = signature(&p.restrict(1.3, 2.0).unwrap(), 3).unwrap();
        let joined = left.mul(&right).unwrap();
        assert!(joined.max_abs_diff(&whole).unwrap() < 1e-14);
    }

    #[test]
    fn reversal_cancels() {
        let p = TimedPath::from_points(array![[0.0, 0.0], [1.0, 0.5], [0.2, 1.0], [-0.3, 0.1]])
            .unwrap();
        let s = signature(&p, 4).unwrap();
        let r = signature(&p.reversed(), 4).unwrap();
        let u = s.mul(&r).unwrap();
        assert!(u.max_abs_diff(&TruncatedTensor::unit(2, 4)).unwrap() < 1e-13);
    }

    #[test]
    fn retiming_keeps_signature() {
        let p = l_path();
        let q = p
            .reparameterize(&Reparameterization::Retime(vec![0.0, 2.0, 4.0]))
            .unwrap();
        assert_eq!(signature(&p, 3).unwrap(), signature(&q, 3).unwrap());
        assert!(p
            .reparameterize(&Reparameterization::Retime(vec![0.0, 2.0, 1.0]))
            .is_err());
    }

    #[test]
    fn value_at_interpolates_and_clamps() {
        let p = TimedPath::new(vec![0.0, 2.0], array![[0.0, 4.0], [2.0, 0.0]]).unwrap();
        assert_eq!(p.value_at(0.5), vec![0.5, 3.0]);
        assert_eq!(p.value_at(-1.0), vec![0.0, 4.0]);
        assert_eq!(p.value_at(3.0), vec![2.0, 0.0]);
    }
}
