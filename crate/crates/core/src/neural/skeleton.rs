use ndarray::{Array2, Array3, ArrayView2, ArrayView3};

use crate::error::{Error, Result};
use crate::signature::TimedPath;

/// `n` frames of `F` joints with `D` coordinates each, plus an optional
/// joint adjacency (symmetric 0/1, zero diagonal).
#[derive(Clone, Debug, PartialEq)]
pub struct SkeletonSequence {
    times: Vec<f64>,
    frames: Array3<f64>,
    adjacency: Option<Array2<f64>>,
}

impl SkeletonSequence {
    pub fn new(
        times: Vec<f64>,
        frames: Array3<f64>,
        adjacency: Option<Array2<f64>>,
    ) -> Result<Self> {
        let (n, joints, coords) = frames.dim();
        if n == 0 || joints == 0 || coords == 0 {
            return Err(Error::Dimension(format!(
                "skeleton sequence must be non-empty, got {n}×{joints}×{coords}"
            )));
        }
        if times.len() != n {
            return Err(Error::Dimension(format!(
                "{} timestamps for {n} frames",
                times.len()
            )));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) || times.iter().any(|t| !t.is_finite()) {
            return Err(Error::Domain(
                "timestamps must be finite and strictly increasing".into(),
            ));
        }
        if frames.iter().any(|x| !x.is_finite()) {
            return Err(Error::Domain("frames contain non-finite values".into()));
        }
        if let Some(a) = &adjacency {
            validate_adjacency(a.view(), joints)?;
        }
        Ok(SkeletonSequence {
            times,
            frames,
            adjacency,
        })
    }

    /// A path viewed as a one-joint skeleton.
    pub fn from_path(path: &TimedPath) -> Self {
        let (n, d) = (path.len(), path.dim());
        let frames = path
            .points()
            .to_shape((n, 1, d))
            .expect("element count preserved")
            .into_owned();
        SkeletonSequence {
            times: path.times().to_vec(),
            frames,
            adjacency: None,
        }
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn joints(&self) -> usize {
        self.frames.dim().1
    }

    pub fn coords(&self) -> usize {
        self.frames.dim().2
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn frames(&self) -> ArrayView3<'_, f64> {
        self.frames.view()
    }

    pub fn adjacency(&self) -> Option<ArrayView2<'_, f64>> {
        self.adjacency.as_ref().map(|a| a.view())
    }

    /// Frames flattened to `n × (F·D)`.
    pub fn flat_frames(&self) -> Array2<f64> {
        let (n, f, d) = self.frames.dim();
        self.frames
            .to_shape((n, f * d))
            .expect("element count preserved")
            .into_owned()
    }

    /// Relabels joints: new joint `k` is old joint `perm[k]`.
    pub fn permute_joints(&self, perm: &[usize]) -> Result<Self> {
        let f = self.joints();
        let mut seen = vec![false; f];
        if perm.len() != f
            || perm
                .iter()
                .any(|&p| p >= f || std::mem::replace(&mut seen[p], true))
        {
            return Err(Error::Domain("not a permutation of the joints".into()));
        }
        let frames = self.frames.select(ndarray::Axis(1), perm);
        let adjacency = self
            .adjacency
            .as_ref()
            .map(|a| Array2::from_shape_fn((f, f), |(i, j)| a[[perm[i], perm[j]]]));
        Ok(SkeletonSequence {
            times: self.times.clone(),
            frames,
            adjacency,
        })
    }
}

pub(crate) fn validate_adjacency(a: ArrayView2<'_, f64>, joints: usize) -> Result<()> {
    if a.dim() != (joints, joints) {
        return Err(Error::Dimension(format!(
            "adjacency is {:?} for {joints} joints",
            a.dim()
        )));
    }
    for i in 0..joints {
        if a[[i, i]] != 0.0 {
            return Err(Error::Domain("adjacency must have a zero diagonal".into()));
        }
        for j in 0..joints {
            let v = a[[i, j]];
            if v != 0.0 && v != 1.0 {
                return Err(Error::Domain("adjacency entries must be 0 or 1".into()));
            }
            if v != a[[j, i]] {
                return Err(Error::Domain("adjacency must be symmetric".into()));
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn adjacency_checks() {
        let frames = Array3::zeros((2, 2, 1));
        let bad_diag = array![[1.0, 0.0], [0.0, 0.0]];
        assert!(SkeletonSequence::new(vec![0.0, 1.0], frames.clone(), Some(bad_diag)).is_err());
        let asym = array![[0.0, 1.0], [0.0, 0.0]];
        assert!(SkeletonSequence::new(vec![0.0, 1.0], frames.clone(), Some(asym)).is_err());
        let ok = array![[0.0, 1.0], [1.0, 0.0]];
        assert!(SkeletonSequence::new(vec![0.0, 1.0], frames, Some(ok)).is_ok());
    }

    #[test]
    fn path_becomes_single_joint() {
        let p = TimedPath::from_points(array![[1.0, 2.0], [3.0, 4.0]]).unwrap();
        let s = SkeletonSequence::from_path(&p);
        assert_eq!(s.joints(), 1);
        assert_eq!(s.coords(), 2);
        assert_eq!(s.flat_frames(), array![[1.0, 2.0], [3.0, 4.0]]);
    }
}
