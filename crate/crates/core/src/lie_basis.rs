//! Lyndon-word basis of the truncated free Lie algebra.
//!
//! Basis elements are ordered by length, then lexicographically; this order
//! fixes the coordinate layout of every log-signature produced by the crate.
//! Each Lyndon word `w` carries the tensor expansion of its standard
//! bracketing `P_w`, which equals `w` plus words lexicographically greater
//! than `w`. That triangularity lets [`LyndonBasis::project`] recover
//! coordinates by back-substitution.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::tensor_algebra::{TruncatedTensor, Word};

/// Dimension of the truncated tensor algebra, scalar level included.
pub fn sig_dim(width: usize, depth: usize) -> usize {
    crate::tensor_algebra::storage_len(width, depth)
}

/// Möbius function by trial division.
fn mobius(mut n: usize) -> i64 {
    let mut result = 1;
    let mut p = 2;
    while p * p <= n {
        if n % p == 0 {
            n /= p;
            if n % p == 0 {
                return 0;
            }
            result = -result;
        }
        p += 1;
    }
    if n > 1 {
        result = -result;
    }
    result
}

/// Witt's formula: dimension of the degree-`n` part of the free Lie algebra
/// on `width` generators.
pub fn witt_number(width: usize, n: usize) -> usize {
    let total: i128 = (1..=n)
        .filter(|k| n % k == 0)
        .map(|k| mobius(k) as i128 * (width as i128).pow((n / k) as u32))
        .sum();
    (total / n as i128) as usize
}

/// Dimension of the log-signature truncated at `depth`.
pub fn logsig_dim(width: usize, depth: usize) -> usize {
    (1..=depth).map(|n| witt_number(width, n)).sum()
}

/// Lyndon words of length `1..=max_len` over `width` letters, generated in
/// lexicographic order (Duval's algorithm).
fn lyndon_words(width: usize, max_len: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    if width == 0 || max_len == 0 {
        return out;
    }
    let mut w: Vec<usize> = vec![0];
    loop {
        out.push(w.clone());
        let m = w.len();
        while w.len() < max_len {
            w.push(w[w.len() % m]);
        }
        while let Some(&last) = w.last() {
            if last + 1 == width {
                w.pop();
            } else {
                break;
            }
        }
        match w.last_mut() {
            Some(last) => *last += 1,
            None => break,
        }
    }
    out
}

/// Sparse level-`k` tensor as `(index, coefficient)` pairs sorted by index.
type Sparse = Vec<(usize, f64)>;

/// One basis element.
#[derive(Clone, Debug)]
pub struct BasisElement {
    pub word: Word,
    /// Index of the word inside its level block.
    pub index: usize,
    /// Bracket expansion at level `word.len()`.
    pub expansion: Sparse,
}

/// The Lyndon basis of `L^{(M)}(R^d)`.
#[derive(Clone, Debug)]
pub struct LyndonBasis {
    width: usize,
    depth: usize,
    elements: Vec<BasisElement>,
    /// Start of each level's run in `elements`; `level_starts[k]` for `k ≥ 1`.
    level_starts: Vec<usize>,
}

impl LyndonBasis {
    pub fn new(width: usize, depth: usize) -> Result<Self> {
        if width == 0 || depth == 0 {
            return Err(Error::Domain(format!(
                "basis needs width ≥ 1 and depth ≥ 1, got ({width}, {depth})"
            )));
        }
        let mut words = lyndon_words(width, depth);
        words.sort_by(|a, b| a.len().cmp(&b.len()).then_with(|| a.cmp(b)));

        let mut lookup: HashMap<Vec<usize>, usize> = HashMap::new();
        let mut elements: Vec<BasisElement> = Vec::with_capacity(words.len());
        for letters in words {
            let word = Word::new(letters.clone());
            let expansion = if letters.len() == 1 {
                vec![(letters[0], 1.0)]
            } else {
                let split = standard_split(&letters);
                let left = &elements[lookup[&letters[..split]]];
                let right = &elements[lookup[&letters[split..]]];
                bracket(
                    &left.expansion,
                    left.word.len(),
                    &right.expansion,
                    right.word.len(),
                    width,
                )
            };
            lookup.insert(letters, elements.len());
            elements.push(BasisElement {
                index: word.index(width),
                word,
                expansion,
            });
        }

        let mut level_starts = vec![0; depth + 2];
        for k in 1..=depth + 1 {
            level_starts[k] = elements.partition_point(|e| e.word.len() < k);
        }
        Ok(LyndonBasis {
            width,
            depth,
            elements,
            level_starts,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn elements(&self) -> &[BasisElement] {
        &self.elements
    }

    pub fn words(&self) -> impl Iterator<Item = &Word> {
        self.elements.iter().map(|e| &e.word)
    }

    /// Column labels in coordinate order.
    pub fn labels(&self) -> Vec<String> {
        self.words().map(|w| w.label(self.width)).collect()
    }

    /// Range of coordinates belonging to level `k`.
    pub fn level_range(&self, k: usize) -> std::ops::Range<usize> {
        self.level_starts[k]..self.level_starts[k + 1]
    }

    fn check_tensor(&self, t: &TruncatedTensor) -> Result<()> {
        if t.width() != self.width || t.depth() != self.depth {
            return Err(Error::Dimension(format!(
                "tensor (width {}, depth {}) vs basis (width {}, depth {})",
                t.width(),
                t.depth(),
                self.width,
                self.depth
            )));
        }
        Ok(())
    }

    /// Coordinates of a Lie element, verified against its expansion.
    pub fn project(&self, t: &TruncatedTensor) -> Result<LieCoordinates> {
        self.check_tensor(t)?;
        let mut coords = vec![0.0; self.len()];
        for k in 1..=self.depth {
            let mut residual = t.level(k).to_vec();
            let scale = residual.iter().fold(1.0_f64, |m, x| m.max(x.abs()));
            self.solve_level(k, &mut residual, &mut coords);
            let worst = residual.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
            if worst > 1e-10 * scale {
                return Err(Error::NotLie {
                    level: k,
                    residual: worst,
                });
            }
        }
        if t.scalar().abs() > 1e-10 {
            return Err(Error::NotLie {
                level: 0,
                residual: t.scalar().abs(),
            });
        }
        Ok(LieCoordinates {
            width: self.width,
            depth: self.depth,
            values: coords,
        })
    }

    /// Coordinates read off Lyndon positions without the residual check.
    /// The map is linear in `t`; [`Self::project_adjoint`] is its transpose.
    pub(crate) fn project_unchecked(&self, t: &TruncatedTensor, coords: &mut [f64]) {
        for k in 1..=self.depth {
            let mut residual = t.level(k).to_vec();
            self.solve_level(k, &mut residual, coords);
        }
    }

    fn solve_level(&self, k: usize, residual: &mut [f64], coords: &mut [f64]) {
        for i in self.level_range(k) {
            let e = &self.elements[i];
            let c = residual[e.index];
            coords[i] = c;
            if c != 0.0 {
                for &(idx, coef) in &e.expansion {
                    residual[idx] -= c * coef;
                }
            }
        }
    }

    /// Transpose of [`Self::project_unchecked`]: maps a coordinate gradient
    /// to a tensor gradient supported on Lyndon positions.
    pub(crate) fn project_adjoint(&self, grad_coords: &[f64], grad_t: &mut TruncatedTensor) {
        for k in 1..=self.depth {
            let range = self.level_range(k);
            // y_w = g_w - Σ_{w'' > w} P_w[w''] y_{w''}, solved from the largest word down
            let mut y: HashMap<usize, f64> = HashMap::with_capacity(range.len());
            for i in range.clone().rev() {
                let e = &self.elements[i];
                let mut value = grad_coords[i];
                for &(idx, coef) in &e.expansion {
                    if idx != e.index {
                        if let Some(v) = y.get(&idx) {
                            value -= coef * v;
                        }
                    }
                }
                y.insert(e.index, value);
            }
            let level = grad_t.level_mut(k);
            for (idx, v) in y {
                level[idx] += v;
            }
        }
    }

    /// `Σ_w c_w P_w` as a tensor.
    pub fn expand(&self, c: &LieCoordinates) -> Result<TruncatedTensor> {
        if c.values.len() != self.len() || c.width != self.width || c.depth != self.depth {
            return Err(Error::Dimension(format!(
                "{} coordinates (width {}, depth {}) vs basis of size {} (width {}, depth {})",
                c.values.len(),
                c.width,
                c.depth,
                self.len(),
                self.width,
                self.depth
            )));
        }
        let mut t = TruncatedTensor::zero(self.width, self.depth);
        for (e, &v) in self.elements.iter().zip(&c.values) {
            let level = t.level_mut(e.word.len());
            for &(idx, coef) in &e.expansion {
                level[idx] += v * coef;
            }
        }
        Ok(t)
    }
}

/// Split point of the standard factorisation `w = uv`, `v` the longest
/// proper suffix that is Lyndon (equivalently the lexicographically smallest
/// proper suffix).
fn standard_split(w: &[usize]) -> usize {
    (1..w.len())
        .min_by(|&i, &j| w[i..].cmp(&w[j..]))
        .unwrap_or(1)
}

fn bracket(a: &Sparse, la: usize, b: &Sparse, lb: usize, width: usize) -> Sparse {
    let shift_b = width.pow(lb as u32);
    let shift_a = width.pow(la as u32);
    let mut acc: HashMap<usize, f64> = HashMap::new();
    for &(i, x) in a {
        for &(j, y) in b {
            *acc.entry(i * shift_b + j).or_insert(0.0) += x * y;
            *acc.entry(j * shift_a + i).or_insert(0.0) -= x * y;
        }
    }
    let mut out: Sparse = acc.into_iter().filter(|&(_, c)| c != 0.0).collect();
    out.sort_by_key(|&(i, _)| i);
    out
}

/// Coordinates of a Lie element in a [`LyndonBasis`].
#[derive(Clone, Debug, PartialEq)]
pub struct LieCoordinates {
    width: usize,
    depth: usize,
    values: Vec<f64>,
}

impl LieCoordinates {
    pub fn new(width: usize, depth: usize, values: Vec<f64>) -> Result<Self> {
        let expected = logsig_dim(width, depth);
        if values.len() != expected {
            return Err(Error::Dimension(format!(
                "expected {expected} log-signature coordinates, got {}",
                values.len()
            )));
        }
        Ok(LieCoordinates {
            width,
            depth,
            values,
        })
    }

    pub fn zeros(width: usize, depth: usize) -> Self {
        LieCoordinates {
            width,
            depth,
            values: vec![0.0; logsig_dim(width, depth)],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.values
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn is_lyndon_brute(w: &[usize]) -> bool {
        (1..w.len()).all(|r| {
            let mut rot = w[r..].to_vec();
            rot.extend_from_slice(&w[..r]);
            w < rot.as_slice()
        })
    }

    fn all_words(width: usize, len: usize) -> Vec<Vec<usize>> {
        (0..width.pow(len as u32))
            .map(|i| Word::from_index(i, len, width).letters().to_vec())
            .collect()
    }

    #[test]
    fn two_letters_to_degree_three() {
        let b = LyndonBasis::new(2, 3).unwrap();
        assert_eq!(b.labels(), vec!["1", "2", "12", "112", "122"]);
    }

    #[test]
    fn single_letter_alphabet() {
        let b = LyndonBasis::new(1, 3).unwrap();
        assert_eq!(b.len(), 1);
        assert_eq!(logsig_dim(1, 3), 1);
    }

    #[test]
    fn enumeration_matches_brute_force() {
        for d in 1..=3 {
            for m in 1..=5 {
                let mut brute: Vec<Vec<usize>> = (1..=m)
                    .flat_map(|len| all_words(d, len))
                    .filter(|w| is_lyndon_brute(w))
                    .collect();
                brute.sort_by(|a, b| a.len().cmp(&b.len()).then_with(|| a.cmp(b)));
                let basis = LyndonBasis::new(d, m).unwrap();
                let got: Vec<Vec<usize>> = basis.words().map(|w| w.letters().to_vec()).collect();
                assert_eq!(got, brute, "d={d} m={m}");
            }
        }
    }

    #[test]
    fn dimension_examples() {
        assert_eq!(logsig_dim(2, 1), 2);
        assert_eq!(logsig_dim(2, 3), 5);
        assert_eq!(logsig_dim(3, 2), 6);
        assert_eq!(LyndonBasis::new(3, 2).unwrap().len(), 6);
        assert_eq!(sig_dim(2, 3), 15);
        assert_eq!(sig_dim(1, 4), 5);
        assert_eq!(sig_dim(3, 2), 13);
        assert_eq!(logsig_dim(31, 2), 496);
    }

    #[test]
    fn mobius_values() {
        let expected = [1, -1, -1, 0, -1, 1, -1, 0, 0, 1, -1, 0];
        for (n, &mu) in (1..=12).zip(&expected) {
            assert_eq!(mobius(n), mu, "mu({n})");
        }
    }

    #[test]
    fn expansions_are_unitriangular() {
        let b = LyndonBasis::new(3, 4).unwrap();
        for e in b.elements() {
            let lead = e.expansion.iter().find(|&&(i, _)| i == e.index).unwrap();
            assert_eq!(lead.1, 1.0);
            for &(i, _) in &e.expansion {
                assert!(i >= e.index, "word {} has smaller term", e.word);
            }
        }
    }

    #[test]
    fn bracket_of_two_letters() {
        let b = LyndonBasis::new(2, 2).unwrap();
        let c = LieCoordinates::new(2, 2, vec![0.0, 0.0, 1.0]).unwrap();
        let t = b.expand(&c).unwrap();
        assert_eq!(t.level(2), &[0.0, 1.0, -1.0, 0.0]);
        assert_eq!(t.level(1), &[0.0, 0.0]);
    }

    #[test]
    fn zero_coordinates_expand_to_zero() {
        let b = LyndonBasis::new(3, 3).unwrap();
        let t = b.expand(&LieCoordinates::zeros(3, 3)).unwrap();
        assert_eq!(t, TruncatedTensor::zero(3, 3));
    }

    #[test]
    fn expand_rejects_wrong_length() {
        let b = LyndonBasis::new(2, 3).unwrap();
        let c = LieCoordinates::zeros(2, 2);
        assert!(matches!(b.expand(&c), Err(Error::Dimension(_))));
    }

    #[test]
    fn project_level_one() {
        let b = LyndonBasis::new(2, 3).unwrap();
        let t = TruncatedTensor::from_vector(3, &[0.25, -2.0]);
        assert_eq!(
            b.project(&t).unwrap().as_slice(),
            &[0.25, -2.0, 0.0, 0.0, 0.0]
        );
    }

    #[test]
    fn project_rejects_non_lie() {
        let b = LyndonBasis::new(2, 2).unwrap();
        let mut t = TruncatedTensor::zero(2, 2);
        t.level_mut(2)[0] = 1.0;
        assert!(matches!(b.project(&t), Err(Error::NotLie { level: 2, .. })));
    }

    #[test]
    fn expansions_have_full_rank() {
        // Gaussian elimination on the dense expansion matrix of each level.
        for (d, m) in [(2, 5), (3, 4), (4, 3)] {
            let b = LyndonBasis::new(d, m).unwrap();
            for k in 1..=m {
                let cols = d.pow(k as u32);
                let mut rows: Vec<Vec<f64>> = b
                    .level_range(k)
                    .map(|i| {
                        let mut r = vec![0.0; cols];
                        for &(idx, c) in &b.elements()[i].expansion {
                            r[idx] = c;
                        }
                        r
                    })
                    .collect();
                let n = rows.len();
                let mut rank = 0;
                for col in 0..cols {
                    let Some(p) = (rank..n).find(|&r| rows[r][col].abs() > 1e-12) else {
                        continue;
                    };
                    rows.swap(rank, p);
                    for r in 0..n {
                        if r != rank {
                            let f = rows[r][col] / rows[rank][col];
                            if f != 0.0 {
                                let pivot = rows[rank].clone();
                                for (x, y) in rows[r].iter_mut().zip(pivot) {
                                    *x -= f * y;
                                }
                            }
                        }
                    }
                    rank += 1;
                }
                assert_eq!(rank, n, "d={d} m={m} level {k}");
            }
        }
    }

    #[test]
    fn adjoint_is_transpose() {
        let b = LyndonBasis::new(3, 3).unwrap();
        let mut seed = 1u64;
        let mut next = || {
            seed = seed.wrapping_mul(6364136223846793005).wrapping_add(1);
            (seed >> 33) as f64 / (1u64 << 31) as f64 - 0.5
        };
        let mut t = TruncatedTensor::zero(3, 3);
        for x in t.as_mut_slice().iter_mut().skip(1) {
            *x = next();
        }
        let g: Vec<f64> = (0..b.len()).map(|_| next()).collect();
        let mut c = vec![0.0; b.len()];
        b.project_unchecked(&t, &mut c);
        let lhs: f64 = c.iter().zip(&g).map(|(a, b)| a * b).sum();
        let mut gt = TruncatedTensor::zero(3, 3);
        b.project_adjoint(&g, &mut gt);
        let rhs: f64 = gt
            .as_slice()
            .iter()
            .zip(t.as_slice())
            .map(|(a, b)| a * b)
            .sum();
        assert!((lhs - rhs).abs() < 1e-12);
    }
}
