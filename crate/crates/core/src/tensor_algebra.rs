//! Truncated tensor algebra over `R^d`.
//!
//! A [`TruncatedTensor`] stores levels `0..=depth` densely, level `k` as a
//! row-major block of `d^k` coefficients, so the coefficient of the word
//! `(i_1, ..., i_k)` sits at offset `i_1 d^{k-1} + ... + i_k` inside its
//! block. Every product silently discards degrees above `depth`.
//!
//! Besides the forward operations this module carries the adjoints of
//! multiplication, of the increment exponential and of the logarithm; the
//! log-signature layer chains them for its backward pass.

use std::collections::BTreeMap;
use std::fmt;

use crate::error::{Error, Result};

/// Number of coefficients in levels `0..=depth` over `width` letters.
pub fn storage_len(width: usize, depth: usize) -> usize {
    level_offset(width, depth + 1)
}

/// Offset of level `k` inside the flat storage.
fn level_offset(width: usize, k: usize) -> usize {
    if width == 1 {
        k
    } else {
        (width.pow(k as u32) - 1) / (width - 1)
    }
}

/// An element of `T^{(M)}(R^d)`.
#[derive(Clone, Debug, PartialEq)]
pub struct TruncatedTensor {
    width: usize,
    depth: usize,
    data: Vec<f64>,
}

impl TruncatedTensor {
    pub fn zero(width: usize, depth: usize) -> Self {
        assert!(width >= 1, "tensor width must be positive");
        TruncatedTensor {
            width,
            depth,
            data: vec![0.0; storage_len(width, depth)],
        }
    }

    /// The multiplicative identity.
    pub fn unit(width: usize, depth: usize) -> Self {
        let mut t = Self::zero(width, depth);
        t.data[0] = 1.0;
        t
    }

    pub fn from_vec(width: usize, depth: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 {
            return Err(Error::Domain("tensor width must be positive".into()));
        }
        let expected = storage_len(width, depth);
        if data.len() != expected {
            return Err(Error::Dimension(format!(
                "expected {expected} coefficients for width {width} depth {depth}, got {}",
                data.len()
            )));
        }
        Ok(TruncatedTensor { width, depth, data })
    }

    /// Builds a tensor with only a level-1 component.
    pub fn from_vector(depth: usize, v: &[f64]) -> Self {
        let mut t = Self::zero(v.len(), depth);
        if depth >= 1 {
            t.level_mut(1).copy_from_slice(v);
        }
        t
    }

    /// `exp(v)` for a level-1 vector `v`: level `k` is `v^{⊗k} / k!`.
    pub fn exp_of_vector(depth: usize, v: &[f64]) -> Self {
        let width = v.len();
        let mut t = Self::unit(width, depth);
        for k in 1..=depth {
            let (lower, upper) = t.data.split_at_mut(level_offset(width, k));
            let prev = &lower[level_offset(width, k - 1)..];
            let cur = &mut upper[..width.pow(k as u32)];
            let inv = 1.0 / k as f64;
            let block = prev.len();
            for (a, &va) in v.iter().enumerate() {
                let scale = va * inv;
                for (c, &p) in cur[a * block..(a + 1) * block].iter_mut().zip(prev) {
                    *c = scale * p;
                }
            }
        }
        t
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn scalar(&self) -> f64 {
        self.data[0]
    }

    pub fn level(&self, k: usize) -> &[f64] {
        let start = level_offset(self.width, k);
        &self.data[start..level_offset(self.width, k + 1)]
    }

    pub fn level_mut(&mut self, k: usize) -> &mut [f64] {
        let start = level_offset(self.width, k);
        let end = level_offset(self.width, k + 1);
        &mut self.data[start..end]
    }

    /// Coefficient of `word`; zero for words longer than the depth.
    pub fn coefficient(&self, word: &Word) -> f64 {
        if word.len() > self.depth {
            return 0.0;
        }
        self.level(word.len())[word.index(self.width)]
    }

    fn check_compatible(&self, other: &Self) -> Result<()> {
        if self.width != other.width || self.depth != other.depth {
            return Err(Error::Dimension(format!(
                "tensor (width {}, depth {}) vs (width {}, depth {})",
                self.width, self.depth, other.width, other.depth
            )));
        }
        Ok(())
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check_compatible(other)?;
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a + b)
            .collect();
        Ok(TruncatedTensor { data, ..*self })
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.check_compatible(other)?;
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a - b)
            .collect();
        Ok(TruncatedTensor { data, ..*self })
    }

    pub fn scale(&self, s: f64) -> Self {
        TruncatedTensor {
            data: self.data.iter().map(|a| a * s).collect(),
            ..*self
        }
    }

    /// Largest absolute coefficient difference.
    pub fn max_abs_diff(&self, other: &Self) -> Result<f64> {
        self.check_compatible(other)?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs())))
    }

    /// Truncated tensor product `self ⊗ other`.
    pub fn mul(&self, other: &Self) -> Result<Self> {
        self.check_compatible(other)?;
        let mut out = Self::zero(self.width, self.depth);
        mul_accumulate(self, other, &mut out);
        Ok(out)
    }

    /// In place `self ← self ⊗ exp(delta)`, evaluated level by level in
    /// Horner form so the segment exponential is never materialised.
    pub fn mul_exp_increment(&mut self, delta: &[f64]) {
        debug_assert_eq!(delta.len(), self.width);
        let d = self.width;
        let mut acc = Vec::new();
        let mut next = Vec::new();
        for k in (1..=self.depth).rev() {
            // acc = ((S_0 Δ/k + S_1) Δ/(k-1) + ... + S_{k-1}) Δ/1
            acc.clear();
            acc.push(self.data[0]);
            for i in 1..=k {
                let inv = 1.0 / (k - i + 1) as f64;
                next.clear();
                next.reserve(acc.len() * d);
                for &a in &acc {
                    let s = a * inv;
                    next.extend(delta.iter().map(|&v| s * v));
                }
                if i < k {
                    for (n, s) in next.iter_mut().zip(self.level(i)) {
                        *n += s;
                    }
                }
                std::mem::swap(&mut acc, &mut next);
            }
            for (s, a) in self.level_mut(k).iter_mut().zip(&acc) {
                *s += a;
            }
        }
    }

    /// Truncated exponential `Σ_{n≤M} a^{⊗n}/n!` of an element with zero
    /// scalar part.
    pub fn exp(&self) -> Result<Self> {
        if self.data[0] != 0.0 {
            return Err(Error::Domain(format!(
                "exp requires a zero scalar part, got {}",
                self.data[0]
            )));
        }
        // Horner: exp(a) = 1 + a(1 + a/2(1 + a/3(...)))
        let mut result = Self::unit(self.width, self.depth);
        for n in (1..=self.depth).rev() {
            let mut next = Self::unit(self.width, self.depth);
            mul_accumulate(&self.scale(1.0 / n as f64), &result, &mut next);
            result = next;
        }
        Ok(result)
    }

    /// Truncated logarithm `Σ_{n≤M} (-1)^{n-1}/n (a-1)^{⊗n}` of an element
    /// with unit scalar part.
    pub fn log(&self) -> Result<Self> {
        if self.data[0] != 1.0 {
            return Err(Error::Domain(format!(
                "log requires a unit scalar part, got {}",
                self.data[0]
            )));
        }
        Ok(log_powers(self).0)
    }
}

/// `out += a ⊗ b`, truncated at the common depth.
pub(crate) fn mul_accumulate(a: &TruncatedTensor, b: &TruncatedTensor, out: &mut TruncatedTensor) {
    let d = a.width;
    for k in 0..=a.depth {
        let out_start = level_offset(d, k);
        for i in 0..=k {
            let j = k - i;
            let la = a.level(i);
            let lb = b.level(j);
            let bl = lb.len();
            let out_level = &mut out.data[out_start..out_start + la.len() * bl];
            for (u, &x) in la.iter().enumerate() {
                if x == 0.0 {
                    continue;
                }
                for (o, &y) in out_level[u * bl..(u + 1) * bl].iter_mut().zip(lb) {
                    *o += x * y;
                }
            }
        }
    }
}

/// Adjoint of `c = a ⊗ b`: given `grad_c`, accumulates into `grad_a`
/// and `grad_b`.
pub(crate) fn mul_backward(
    a: &TruncatedTensor,
    b: &TruncatedTensor,
    grad_c: &TruncatedTensor,
    grad_a: &mut TruncatedTensor,
    grad_b: &mut TruncatedTensor,
) {
    let d = a.width;
    for k in 0..=a.depth {
        let gc = grad_c.level(k);
        for i in 0..=k {
            let j = k - i;
            let la = a.level(i);
            let lb = b.level(j);
            let bl = lb.len();
            let start_a = level_offset(d, i);
            let start_b = level_offset(d, j);
            for (u, &x) in la.iter().enumerate() {
                let row = &gc[u * bl..(u + 1) * bl];
                let mut ga = 0.0;
                for ((g, &y), gb) in row
                    .iter()
                    .zip(lb)
                    .zip(&mut grad_b.data[start_b..start_b + bl])
                {
                    ga += g * y;
                    *gb += x * g;
                }
                grad_a.data[start_a + u] += ga;
            }
        }
    }
}

/// Adjoint of [`TruncatedTensor::exp_of_vector`]: accumulates `∂/∂v` into
/// `grad_v` given the gradient with respect to `exp(v)`. `e` is the forward
/// value.
pub(crate) fn exp_of_vector_backward(
    v: &[f64],
    e: &TruncatedTensor,
    grad_e: &TruncatedTensor,
    grad_v: &mut [f64],
) {
    let d = v.len();
    let depth = e.depth;
    if depth == 0 {
        return;
    }
    let mut carry: Vec<f64> = grad_e.level(depth).to_vec();
    for k in (2..=depth).rev() {
        // E_k[a, r] = v[a] E_{k-1}[r] / k
        let prev = e.level(k - 1);
        let block = prev.len();
        let inv = 1.0 / k as f64;
        let mut g_prev = grad_e.level(k - 1).to_vec();
        for a in 0..d {
            let row = &carry[a * block..(a + 1) * block];
            let mut ga = 0.0;
            for ((g, &p), gp) in row.iter().zip(prev).zip(g_prev.iter_mut()) {
                ga += g * p;
                *gp += g * v[a] * inv;
            }
            grad_v[a] += ga * inv;
        }
        carry = g_prev;
    }
    for (gv, g) in grad_v.iter_mut().zip(&carry) {
        *gv += g;
    }
}

/// Forward logarithm keeping the powers `(a-1)^{⊗n}` needed by the adjoint.
fn log_powers(a: &TruncatedTensor) -> (TruncatedTensor, Vec<TruncatedTensor>) {
    let mut t = a.clone();
    t.data[0] = 0.0;
    let mut powers = vec![t.clone()];
    let mut result = t.clone();
    for n in 2..=a.depth {
        let mut next = TruncatedTensor::zero(a.width, a.depth);
        mul_accumulate(&powers[n - 2], &t, &mut next);
        let coef = if n % 2 == 0 { -1.0 } else { 1.0 } / n as f64;
        for (r, x) in result.data.iter_mut().zip(&next.data) {
            *r += coef * x;
        }
        powers.push(next);
    }
    (result, powers)
}

/// Adjoint of [`TruncatedTensor::log`]: returns `∂F/∂a` given `∂F/∂log(a)`.
pub(crate) fn log_backward(a: &TruncatedTensor, grad_log: &TruncatedTensor) -> TruncatedTensor {
    let (_, powers) = log_powers(a);
    let t = &powers[0];
    let (d, m) = (a.width, a.depth);
    let mut grad_t = TruncatedTensor::zero(d, m);
    // walk P_n = P_{n-1} ⊗ t from the top power down
    let mut carry = TruncatedTensor::zero(d, m);
    for n in (2..=m).rev() {
        let coef = if n % 2 == 0 { -1.0 } else { 1.0 } / n as f64;
        for (c, g) in carry.data.iter_mut().zip(&grad_log.data) {
            *c += coef * g;
        }
        let mut g_prev = TruncatedTensor::zero(d, m);
        mul_backward(&powers[n - 2], t, &carry, &mut g_prev, &mut grad_t);
        carry = g_prev;
    }
    for ((gt, c), g) in grad_t.data.iter_mut().zip(&carry.data).zip(&grad_log.data) {
        *gt += c + g;
    }
    grad_t.data[0] = 0.0;
    grad_t
}

/// A word over the alphabet `{0, ..., d-1}` (displayed one-based).
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Word(Vec<usize>);

impl Word {
    pub fn empty() -> Self {
        Word(Vec::new())
    }

    /// Word from zero-based letters.
    pub fn new(letters: Vec<usize>) -> Self {
        Word(letters)
    }

    /// Word from one-based letters, checked against the alphabet size.
    pub fn from_one_based(letters: &[usize], width: usize) -> Result<Self> {
        letters
            .iter()
            .map(|&l| {
                if (1..=width).contains(&l) {
                    Ok(l - 1)
                } else {
                    Err(Error::Range(format!("letter {l} outside 1..={width}")))
                }
            })
            .collect::<Result<Vec<_>>>()
            .map(Word)
    }

    pub fn letters(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Position of the word inside its level block.
    pub fn index(&self, width: usize) -> usize {
        self.0.iter().fold(0, |acc, &l| acc * width + l)
    }

    /// Inverse of [`Word::index`].
    pub fn from_index(mut index: usize, len: usize, width: usize) -> Self {
        let mut letters = vec![0; len];
        for slot in letters.iter_mut().rev() {
            *slot = index % width;
            index /= width;
        }
        Word(letters)
    }

    /// Label for tables: concatenated one-based letters, dot-separated
    /// when the alphabet has more than nine letters.
    pub fn label(&self, width: usize) -> String {
        let parts: Vec<String> = self.0.iter().map(|l| (l + 1).to_string()).collect();
        if width > 9 {
            parts.join(".")
        } else {
            parts.concat()
        }
    }

    /// Shuffle product, refusing results longer than `depth`.
    pub fn shuffle(&self, other: &Word, depth: usize) -> Result<ShuffleSum> {
        let total = self.len() + other.len();
        if total > depth {
            return Err(Error::Truncation { total, depth });
        }
        let mut terms = BTreeMap::new();
        let mut prefix = Vec::with_capacity(total);
        shuffle_into(&self.0, &other.0, &mut prefix, &mut terms);
        Ok(ShuffleSum(terms))
    }
}

fn shuffle_into(u: &[usize], v: &[usize], prefix: &mut Vec<usize>, out: &mut BTreeMap<Word, i64>) {
    if u.is_empty() || v.is_empty() {
        let mut w = prefix.clone();
        w.extend_from_slice(u);
        w.extend_from_slice(v);
        *out.entry(Word(w)).or_insert(0) += 1;
        return;
    }
    prefix.push(u[0]);
    shuffle_into(&u[1..], v, prefix, out);
    prefix.pop();
    prefix.push(v[0]);
    shuffle_into(u, &v[1..], prefix, out);
    prefix.pop();
}

impl fmt::Display for Word {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return f.write_str("ε");
        }
        let width = self.0.iter().max().map_or(1, |m| m + 1);
        f.write_str(&self.label(width))
    }
}

/// Formal integer combination of words.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct ShuffleSum(BTreeMap<Word, i64>);

impl ShuffleSum {
    pub fn terms(&self) -> impl Iterator<Item = (&Word, i64)> {
        self.0.iter().map(|(w, &c)| (w, c))
    }

    pub fn coefficient(&self, w: &Word) -> i64 {
        self.0.get(w).copied().unwrap_or(0)
    }

    /// Sum of all coefficients.
    pub fn mass(&self) -> i64 {
        self.0.values().sum()
    }

    /// Pairing `⟨Σ c_w w, t⟩ = Σ c_w t_w`.
    pub fn pair(&self, t: &TruncatedTensor) -> f64 {
        self.0
            .iter()
            .map(|(w, &c)| c as f64 * t.coefficient(w))
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lcg(seed: &mut u64) -> f64 {
        *seed = seed
            .wrapping_mul(6364136223846793005)
            .wrapping_add(1442695040888963407);
        ((*seed >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
    }

    fn random_tensor(width: usize, depth: usize, scalar: f64, seed: &mut u64) -> TruncatedTensor {
        let mut t = TruncatedTensor::zero(width, depth);
        for x in t.as_mut_slice() {
            *x = lcg(seed);
        }
        t.as_mut_slice()[0] = scalar;
        t
    }

    #[test]
    fn storage_matches_geometric_series() {
        for d in 2..=5usize {
            for m in 1..=6usize {
                let expected = (d.pow(m as u32 + 1) - 1) / (d - 1);
                assert_eq!(TruncatedTensor::zero(d, m).as_slice().len(), expected);
            }
        }
        assert_eq!(storage_len(1, 4), 5);
    }

    #[test]
    fn product_of_two_letters() {
        let mut a = TruncatedTensor::unit(2, 2);
        a.level_mut(1)[0] = 1.0;
        let mut b = TruncatedTensor::unit(2, 2);
        b.level_mut(1)[1] = 1.0;
        let c = a.mul(&b).unwrap();
        assert_eq!(c.level(0), &[1.0]);
        assert_eq!(c.level(1), &[1.0, 1.0]);
        assert_eq!(c.level(2), &[0.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn unit_is_identity() {
        let mut seed = 7;
        let a = random_tensor(3, 3, 0.4, &mut seed);
        let u = TruncatedTensor::unit(3, 3);
        assert_eq!(a.mul(&u).unwrap(), a);
        assert_eq!(u.mul(&a).unwrap(), a);
    }

    #[test]
    fn mul_is_associative() {
        let mut seed = 11;
        for _ in 0..20 {
            let a = random_tensor(3, 3, lcg(&mut seed), &mut seed);
            let b = random_tensor(3, 3, lcg(&mut seed), &mut seed);
            let c = random_tensor(3, 3, lcg(&mut seed), &mut seed);
            let left = a.mul(&b).unwrap().mul(&c).unwrap();
            let right = a.mul(&b.mul(&c).unwrap()).unwrap();
            assert!(left.max_abs_diff(&right).unwrap() <= 1e-12);
        }
    }

    #[test]
    fn mismatched_shapes_are_rejected() {
        let a = TruncatedTensor::unit(2, 2);
        let b = TruncatedTensor::unit(3, 2);
        let c = TruncatedTensor::unit(2, 3);
        assert!(matches!(a.mul(&b), Err(Error::Dimension(_))));
        assert!(matches!(a.mul(&c), Err(Error::Dimension(_))));
    }

    #[test]
    fn exp_of_zero_and_vector() {
        let z = TruncatedTensor::zero(2, 3);
        assert_eq!(z.exp().unwrap(), TruncatedTensor::unit(2, 3));
        let e = TruncatedTensor::from_vector(2, &[1.0, 2.0]).exp().unwrap();
        assert_eq!(e.level(1), &[1.0, 2.0]);
        assert_eq!(e.level(2), &[0.5, 1.0, 1.0, 2.0]);
        assert_eq!(TruncatedTensor::exp_of_vector(2, &[1.0, 2.0]), e);
    }

    #[test]
    fn exp_and_log_reject_wrong_scalar() {
        assert!(matches!(
            TruncatedTensor::unit(2, 2).exp(),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            TruncatedTensor::zero(2, 2).log(),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn log_of_unit_is_zero() {
        assert_eq!(
            TruncatedTensor::unit(3, 4).log().unwrap(),
            TruncatedTensor::zero(3, 4)
        );
    }

    #[test]
    fn log_of_l_path_signature() {
        let s = TruncatedTensor::exp_of_vector(2, &[1.0, 0.0])
            .mul(&TruncatedTensor::exp_of_vector(2, &[0.0, 1.0]))
            .unwrap();
        let l = s.log().unwrap();
        assert_eq!(l.level(1), &[1.0, 1.0]);
        let l2 = l.level(2);
        let expected = [0.0, 0.5, -0.5, 0.0];
        for (a, b) in l2.iter().zip(expected) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn exp_log_round_trips() {
        let mut seed = 3;
        for _ in 0..50 {
            let a = random_tensor(2, 4, 0.0, &mut seed);
            let back = a.exp().unwrap().log().unwrap();
            assert!(back.max_abs_diff(&a).unwrap() <= 1e-12);
            let g = random_tensor(2, 4, 1.0, &mut seed);
            let back = g.log().unwrap().exp().unwrap();
            assert!(back.max_abs_diff(&g).unwrap() <= 1e-12);
        }
    }

    #[test]
    fn fused_increment_matches_product() {
        let mut seed = 5;
        let s = random_tensor(3, 4, 1.0, &mut seed);
        let delta = [0.3, -0.7, 1.1];
        let mut fused = s.clone();
        fused.mul_exp_increment(&delta);
        let direct = s.mul(&TruncatedTensor::exp_of_vector(4, &delta)).unwrap();
        assert!(fused.max_abs_diff(&direct).unwrap() <= 1e-13);
    }

    #[test]
    fn shuffle_examples() {
        let one = Word::new(vec![0]);
        let two = Word::new(vec![1]);
        let s = one.shuffle(&two, 2).unwrap();
        assert_eq!(s.coefficient(&Word::new(vec![0, 1])), 1);
        assert_eq!(s.coefficient(&Word::new(vec![1, 0])), 1);
        assert_eq!(s.terms().count(), 2);

        let s = one.shuffle(&Word::empty(), 1).unwrap();
        assert_eq!(s.terms().collect::<Vec<_>>(), vec![(&one, 1)]);

        let s = Word::new(vec![0, 1])
            .shuffle(&Word::new(vec![2]), 3)
            .unwrap();
        let words: Vec<String> = s.terms().map(|(w, _)| w.label(3)).collect();
        assert_eq!(words, vec!["123", "132", "312"]);
    }

    #[test]
    fn shuffle_beyond_depth_is_an_error() {
        let u = Word::new(vec![0, 1]);
        assert!(matches!(
            u.shuffle(&u, 3),
            Err(Error::Truncation { total: 4, depth: 3 })
        ));
    }

    #[test]
    fn shuffle_mass_is_binomial() {
        let u = Word::new(vec![0, 0, 1]);
        let v = Word::new(vec![1, 0]);
        assert_eq!(u.shuffle(&v, 5).unwrap().mass(), 10);
        let s = u.shuffle(&u, 6).unwrap();
        assert_eq!(s.mass(), 20);
    }

    #[test]
    fn word_index_round_trips() {
        let w = Word::from_one_based(&[3, 1, 2], 3).unwrap();
        assert_eq!(w.index(3), 2 * 9 + 1);
        assert_eq!(Word::from_index(w.index(3), 3, 3), w);
        assert!(Word::from_one_based(&[4], 3).is_err());
    }

    fn finite_difference_check<F, G>(x: &[f64], f: F, grad: G)
    where
        F: Fn(&[f64]) -> f64,
        G: Fn(&[f64]) -> Vec<f64>,
    {
        let analytic = grad(x);
        let h = 1e-6;
        for i in 0..x.len() {
            let mut xp = x.to_vec();
            let mut xm = x.to_vec();
            xp[i] += h;
            xm[i] -= h;
            let fd = (f(&xp) - f(&xm)) / (2.0 * h);
            assert!(
                (fd - analytic[i]).abs() <= 1e-6 * (1.0 + fd.abs()),
                "component {i}: fd {fd} vs analytic {}",
                analytic[i]
            );
        }
    }

    #[test]
    fn adjoints_match_finite_differences() {
        let (d, m) = (2, 3);
        let mut seed = 21;
        let weights = random_tensor(d, m, lcg(&mut seed), &mut seed);
        let dot = |t: &TruncatedTensor| -> f64 {
            t.as_slice()
                .iter()
                .zip(weights.as_slice())
                .map(|(a, b)| a * b)
                .sum()
        };

        let v = [0.4, -0.9];
        finite_difference_check(
            &v,
            |x| dot(&TruncatedTensor::exp_of_vector(m, x)),
            |x| {
                let e = TruncatedTensor::exp_of_vector(m, x);
                let mut g = vec![0.0; d];
                exp_of_vector_backward(x, &e, &weights, &mut g);
                g
            },
        );

        let base = random_tensor(d, m, 1.0, &mut seed).scale(0.5);
        let as_tensor = |x: &[f64]| {
            let mut t = TruncatedTensor::from_vec(d, m, x.to_vec()).unwrap();
            t.as_mut_slice()[0] = 1.0;
            t
        };
        finite_difference_check(
            base.as_slice(),
            |x| dot(&as_tensor(x).log().unwrap()),
            |x| log_backward(&as_tensor(x), &weights).into_vec(),
        );

        let other = random_tensor(d, m, 0.3, &mut seed);
        finite_difference_check(
            base.as_slice(),
            |x| {
                dot(&TruncatedTensor::from_vec(d, m, x.to_vec())
                    .unwrap()
                    .mul(&other)
                    .unwrap())
            },
            |x| {
                let a = TruncatedTensor::from_vec(d, m, x.to_vec()).unwrap();
                let mut ga = TruncatedTensor::zero(d, m);
                let mut gb = TruncatedTensor::zero(d, m);
                mul_backward(&a, &other, &weights, &mut ga, &mut gb);
                ga.into_vec()
            },
        );
    }
}
