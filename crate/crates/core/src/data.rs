//! Synthetic streams, perturbations, the missing-data study and the
//! stream file format.
//!
//! # Stream files
//!
//! Line oriented text. Blank lines and lines starting with `#` are ignored.
//!
//! ```text
//! classes cw-circle ccw-circle figure-eight sweep   (optional)
//! seed 7                                            (optional)
//! path <label|-> <n> <d>
//! <t> <x_1> ... <x_d>                               (n rows)
//! skeleton <label|-> <n> <F> <D>
//! <t> <joint 1 coords> ... <joint F coords>         (n rows, F·D values)
//! adjacency <F>                                     (optional, after a skeleton)
//! <F rows of F values, 0 or 1>
//! ```
//!
//! Labels are 0-based class indices; `-` marks an unlabelled record.
//! Values are written in the shortest form that parses back to the same
//! double, so a save/load round trip is exact.

use std::f64::consts::TAU;
use std::fmt::Write as _;
use std::path::Path;

use ndarray::{Array2, Array3, ArrayView2};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::lie_basis::LyndonBasis;
use crate::neural::{Example, SkeletonSequence};
use crate::signature::{log_signature, signature, TimedPath};

/// One record of a stream file.
#[derive(Clone, Debug, PartialEq)]
pub enum Stream {
    Path(TimedPath),
    Skeleton(SkeletonSequence),
}

impl Stream {
    pub fn len(&self) -> usize {
        match self {
            Stream::Path(p) => p.len(),
            Stream::Skeleton(s) => s.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// The stream as a skeleton; a path becomes a single joint.
    pub fn to_skeleton(&self) -> SkeletonSequence {
        match self {
            Stream::Path(p) => SkeletonSequence::from_path(p),
            Stream::Skeleton(s) => s.clone(),
        }
    }

    /// The stream as a path; a skeleton is flattened to `F·D` channels.
    pub fn to_path(&self) -> Result<TimedPath> {
        match self {
            Stream::Path(p) => Ok(p.clone()),
            Stream::Skeleton(s) => TimedPath::new(s.times().to_vec(), s.flat_frames()),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LabeledStream {
    pub stream: Stream,
    pub label: Option<usize>,
}

/// Streams with optional labels, class names and the generating seed.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LabeledStreamSet {
    pub samples: Vec<LabeledStream>,
    pub class_names: Vec<String>,
    pub seed: Option<u64>,
}

impl LabeledStreamSet {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Number of classes: the declared names, or one more than the largest
    /// label.
    pub fn class_count(&self) -> usize {
        let from_labels = self
            .samples
            .iter()
            .filter_map(|s| s.label)
            .max()
            .map_or(0, |m| m + 1);
        self.class_names.len().max(from_labels)
    }

    /// All samples as model inputs. Every sample must carry a label.
    pub fn examples(&self) -> Result<Vec<Example>> {
        self.samples
            .iter()
            .enumerate()
            .map(|(i, s)| {
                let label = s
                    .label
                    .ok_or_else(|| Error::Config(format!("sample {i} has no label")))?;
                Ok((s.stream.to_skeleton(), label))
            })
            .collect()
    }

    /// Splits off the first `count` samples.
    pub fn split_at(&self, count: usize) -> (LabeledStreamSet, LabeledStreamSet) {
        let count = count.min(self.samples.len());
        let head = LabeledStreamSet {
            samples: self.samples[..count].to_vec(),
            ..self.clone_meta()
        };
        let tail = LabeledStreamSet {
            samples: self.samples[count..].to_vec(),
            ..self.clone_meta()
        };
        (head, tail)
    }

    fn clone_meta(&self) -> LabeledStreamSet {
        LabeledStreamSet {
            samples: Vec::new(),
            class_names: self.class_names.clone(),
            seed: self.seed,
        }
    }
}

// ---------------------------------------------------------------------------
// synthetic data

/// Planar shapes told apart by the order in which they are traced.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Shape {
    CircleCw,
    CircleCcw,
    FigureEight,
    Sweep,
}

impl Shape {
    pub fn name(self) -> &'static str {
        match self {
            Shape::CircleCw => "cw-circle",
            Shape::CircleCcw => "ccw-circle",
            Shape::FigureEight => "figure-eight",
            Shape::Sweep => "sweep",
        }
    }

    /// Point at curve parameter `s ∈ [0, 1]`, for a start phase `phase`.
    fn point(self, s: f64, phase: f64) -> [f64; 2] {
        let a = TAU * s + phase;
        match self {
            Shape::CircleCw => [a.cos(), -a.sin()],
            Shape::CircleCcw => [a.cos(), a.sin()],
            Shape::FigureEight => {
                let b = TAU * s;
                [b.sin(), 0.5 * (2.0 * b).sin()]
            }
            Shape::Sweep => [2.0 * s - 1.0, 0.0],
        }
    }
}

/// Which shapes to generate, one class per entry.
#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticSpec {
    pub shapes: Vec<Shape>,
    pub min_len: usize,
    pub max_len: usize,
    pub noise: f64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            shapes: vec![
                Shape::CircleCw,
                Shape::CircleCcw,
                Shape::FigureEight,
                Shape::Sweep,
            ],
            min_len: 20,
            max_len: 120,
            noise: 0.02,
        }
    }
}

/// `count` labelled 2-D paths, labels assigned round robin.
///
/// Each sample draws a length `n`, a monotone speed warp
/// `s(τ) = τ + a·sin(2πτ)/(2π)` with `|a| < 0.8`, irregular time gaps in
/// `[0.5, 1.5)`, a random start phase, a scale in `[0.8, 1.2)` and
/// Gaussian noise.
pub fn gen_synthetic(spec: &SyntheticSpec, count: usize, seed: u64) -> Result<LabeledStreamSet> {
    if spec.shapes.is_empty() {
        return Err(Error::Config("synthetic spec has no classes".into()));
    }
    if spec.min_len < 2 || spec.max_len < spec.min_len {
        return Err(Error::Config(format!(
            "invalid length range [{}, {}]",
            spec.min_len, spec.max_len
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, spec.noise).map_err(|e| Error::Config(e.to_string()))?;
    let mut samples = Vec::with_capacity(count);
    for i in 0..count {
        let label = i % spec.shapes.len();
        let shape = spec.shapes[label];
        let n = rng.random_range(spec.min_len..=spec.max_len);
        let warp = rng.random_range(-0.8..0.8);
        let phase = rng.random_range(0.0..TAU);
        let scale = rng.random_range(0.8..1.2);
        let mut times = Vec::with_capacity(n);
        let mut t = 0.0;
        for _ in 0..n {
            times.push(t);
            t += rng.random_range(0.5..1.5);
        }
        let mut points = Array2::zeros((n, 2));
        for k in 0..n {
            let tau = k as f64 / (n - 1) as f64;
            let s = tau + warp * (TAU * tau).sin() / TAU;
            let p = shape.point(s, phase);
            for c in 0..2 {
                points[[k, c]] = scale * p[c] + noise.sample(&mut rng);
            }
        }
        samples.push(LabeledStream {
            stream: Stream::Path(TimedPath::new(times, points)?),
            label: Some(label),
        });
    }
    Ok(LabeledStreamSet {
        samples,
        class_names: spec.shapes.iter().map(|s| s.name().to_string()).collect(),
        seed: Some(seed),
    })
}

// ---------------------------------------------------------------------------
// perturbations

/// Output row = `(1 − α)·x_i + α·x_j` at time `t`.
struct Row {
    i: usize,
    j: usize,
    alpha: f64,
    t: f64,
}

fn rebuild(rows: ArrayView2<'_, f64>, plan: &[Row]) -> (Vec<f64>, Array2<f64>) {
    let mut out = Array2::zeros((plan.len(), rows.ncols()));
    for (r, p) in plan.iter().enumerate() {
        for c in 0..rows.ncols() {
            out[[r, c]] = if p.alpha == 0.0 {
                rows[[p.i, c]]
            } else {
                (1.0 - p.alpha) * rows[[p.i, c]] + p.alpha * rows[[p.j, c]]
            };
        }
    }
    (plan.iter().map(|p| p.t).collect(), out)
}

fn check_rate(r: f64) -> Result<()> {
    if !(0.0..1.0).contains(&r) {
        return Err(Error::Range(format!("rate {r} outside [0, 1)")));
    }
    Ok(())
}

fn copy_row(times: &[f64], i: usize) -> Row {
    Row {
        i,
        j: i,
        alpha: 0.0,
        t: times[i],
    }
}

/// Discards `⌊r·n⌋` interior samples (at most `n − 2`), chosen uniformly.
fn drop_plan(times: &[f64], r: f64, seed: u64) -> Result<Vec<Row>> {
    check_rate(r)?;
    let n = times.len();
    let interior = n.saturating_sub(2);
    let m = ((r * n as f64).floor() as usize).min(interior);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut dropped = vec![false; n];
    for k in sample(&mut rng, interior, m) {
        dropped[k + 1] = true;
    }
    Ok((0..n)
        .filter(|&i| !dropped[i])
        .map(|i| copy_row(times, i))
        .collect())
}

/// Repeats `⌊r·n⌋` distinct frames. A repeat of frame `i` is placed
/// halfway to frame `i + 1`; a repeat of the last frame is placed a
/// quarter of the way back towards its predecessor, so the timestamps
/// stay strictly increasing.
fn insert_plan(times: &[f64], r: f64, seed: u64) -> Result<Vec<Row>> {
    check_rate(r)?;
    let n = times.len();
    let m = (r * n as f64).floor() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut repeat = vec![false; n];
    if n >= 2 {
        for k in sample(&mut rng, n, m) {
            repeat[k] = true;
        }
    }
    let mut plan = Vec::with_capacity(n + m);
    for i in 0..n {
        if i == n - 1 && repeat[i] {
            let t = times[i] - 0.25 * (times[i] - times[i - 1]);
            plan.push(Row {
                i,
                j: i,
                alpha: 0.0,
                t,
            });
        }
        plan.push(copy_row(times, i));
        if i + 1 < n && repeat[i] {
            let t = 0.5 * (times[i] + times[i + 1]);
            plan.push(Row {
                i,
                j: i,
                alpha: 0.0,
                t,
            });
        }
    }
    Ok(plan)
}

fn upsample_plan(times: &[f64], k: usize) -> Result<Vec<Row>> {
    if k < 1 {
        return Err(Error::Domain("upsampling factor must be at least 1".into()));
    }
    let n = times.len();
    let mut plan = Vec::with_capacity(k * n.saturating_sub(1) + 1);
    for i in 0..n.saturating_sub(1) {
        plan.push(copy_row(times, i));
        for s in 1..k {
            let alpha = s as f64 / k as f64;
            plan.push(Row {
                i,
                j: i + 1,
                alpha,
                t: (1.0 - alpha) * times[i] + alpha * times[i + 1],
            });
        }
    }
    plan.push(copy_row(times, n - 1));
    Ok(plan)
}

fn apply_path(p: &TimedPath, plan: &[Row]) -> Result<TimedPath> {
    let (times, points) = rebuild(p.points(), plan);
    TimedPath::new(times, points)
}

fn apply_skeleton(s: &SkeletonSequence, plan: &[Row]) -> Result<SkeletonSequence> {
    let flat = s.flat_frames();
    let (times, rows) = rebuild(flat.view(), plan);
    let frames = rows
        .to_shape((plan.len(), s.joints(), s.coords()))
        .map_err(|e| Error::Dimension(e.to_string()))?
        .into_owned();
    SkeletonSequence::new(times, frames, s.adjacency().map(|a| a.to_owned()))
}

/// Drops `⌊r·n⌋` interior samples; endpoints and surviving timestamps are
/// kept. `r` must lie in `[0, 1)`.
pub fn perturb_drop(p: &TimedPath, r: f64, seed: u64) -> Result<TimedPath> {
    apply_path(p, &drop_plan(p.times(), r, seed)?)
}

/// Repeats `⌊r·n⌋` samples in place; the traversed curve is unchanged.
pub fn perturb_insert(p: &TimedPath, r: f64, seed: u64) -> Result<TimedPath> {
    apply_path(p, &insert_plan(p.times(), r, seed)?)
}

/// Inserts `k − 1` equally spaced points, in time and space, on every
/// segment: `n → k·(n − 1) + 1`.
pub fn upsample_linear(p: &TimedPath, k: usize) -> Result<TimedPath> {
    apply_path(p, &upsample_plan(p.times(), k)?)
}

/// How a stream is perturbed frame-wise.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PerturbMode {
    Drop,
    Insert,
}

impl std::str::FromStr for PerturbMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "drop" => Ok(PerturbMode::Drop),
            "insert" => Ok(PerturbMode::Insert),
            other => Err(Error::Config(format!(
                "unknown mode {other:?}, expected drop or insert"
            ))),
        }
    }
}

impl std::fmt::Display for PerturbMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            PerturbMode::Drop => "drop",
            PerturbMode::Insert => "insert",
        })
    }
}

/// Frame-wise perturbation of a skeleton sequence.
pub fn perturb_skeleton(
    s: &SkeletonSequence,
    mode: PerturbMode,
    r: f64,
    seed: u64,
) -> Result<SkeletonSequence> {
    let plan = match mode {
        PerturbMode::Drop => drop_plan(s.times(), r, seed)?,
        PerturbMode::Insert => insert_plan(s.times(), r, seed)?,
    };
    apply_skeleton(s, &plan)
}

pub fn upsample_skeleton(s: &SkeletonSequence, k: usize) -> Result<SkeletonSequence> {
    apply_skeleton(s, &upsample_plan(s.times(), k)?)
}

/// Mean of `|a_i − b_i| / max(|a_i|, 1e-8)`. `a` is the reference, so the
/// measure is not symmetric.
pub fn mape(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Dimension(format!(
            "mape of lengths {} and {}",
            a.len(),
            b.len()
        )));
    }
    if a.is_empty() {
        return Ok(0.0);
    }
    let total: f64 = a
        .iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs() / x.abs().max(1e-8))
        .sum();
    Ok(total / a.len() as f64)
}

// ---------------------------------------------------------------------------
// missing-data study

/// A handwritten-nine-like polyline of 53 points: a counter-clockwise
/// loop of 33 points closing on itself, then a 20 point tail curving
/// down and to the left. Timestamps are `0..53`.
pub fn digit_nine() -> TimedPath {
    let mut pts = Vec::with_capacity(53);
    let (cx, cy, r) = (0.0, 1.0, 0.55);
    // loop starts at the right, goes over the top and round
    for k in 0..33 {
        let a = 0.15 + TAU * k as f64 / 32.0;
        pts.push([cx + r * a.cos(), cy + 0.9 * r * a.sin()]);
    }
    let [sx, sy] = pts[32];
    for k in 1..=20 {
        let u = k as f64 / 20.0;
        pts.push([sx - 0.25 * u * u, sy - 2.0 * u]);
    }
    let points = Array2::from_shape_fn((53, 2), |(i, c)| pts[i][c]);
    TimedPath::from_points(points).expect("valid polyline")
}

#[derive(Clone, Debug, PartialEq, serde::Serialize)]
pub struct MapeStudy {
    pub trials: usize,
    pub max_drop: usize,
    pub degree: usize,
    pub mean_logsig_mape: f64,
    pub mean_sig_mape: f64,
    pub max_logsig_mape: f64,
}

/// Drops a uniformly chosen number in `1..=max_drop` of interior points,
/// `trials` times, comparing log-signatures and signatures (without the
/// constant term) of the perturbed and original paths.
pub fn missing_data_study(
    path: &TimedPath,
    degree: usize,
    trials: usize,
    max_drop: usize,
    seed: u64,
) -> Result<MapeStudy> {
    let n = path.len();
    if max_drop == 0 || max_drop > n.saturating_sub(2) {
        return Err(Error::Range(format!(
            "max_drop {max_drop} for a path of {n} points"
        )));
    }
    let basis = LyndonBasis::new(path.dim(), degree)?;
    let ls_ref = log_signature(path, degree, &basis)?;
    let sig_ref = signature(path, degree)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut sum_ls, mut sum_sig, mut max_ls) = (0.0, 0.0, 0.0f64);
    for _ in 0..trials {
        let m = rng.random_range(1..=max_drop);
        let mut keep = vec![true; n];
        for k in sample(&mut rng, n - 2, m) {
            keep[k + 1] = false;
        }
        let plan: Vec<Row> = (0..n)
            .filter(|&i| keep[i])
            .map(|i| copy_row(path.times(), i))
            .collect();
        let q = apply_path(path, &plan)?;
        let ls = mape(
            ls_ref.as_slice(),
            log_signature(&q, degree, &basis)?.as_slice(),
        )?;
        let sg = mape(
            &sig_ref.as_slice()[1..],
            &signature(&q, degree)?.as_slice()[1..],
        )?;
        sum_ls += ls;
        sum_sig += sg;
        max_ls = max_ls.max(ls);
    }
    let t = trials.max(1) as f64;
    Ok(MapeStudy {
        trials,
        max_drop,
        degree,
        mean_logsig_mape: sum_ls / t,
        mean_sig_mape: sum_sig / t,
        max_logsig_mape: max_ls,
    })
}

// ---------------------------------------------------------------------------
// stream files

fn push_values(s: &mut String, t: f64, values: impl Iterator<Item = f64>) {
    let _ = write!(s, "{t}");
    for v in values {
        let _ = write!(s, " {v}");
    }
    s.push('\n');
}

fn label_text(label: Option<usize>) -> String {
    label.map_or_else(|| "-".to_string(), |l| l.to_string())
}

pub fn streams_to_text(set: &LabeledStreamSet) -> String {
    let mut s = String::new();
    if !set.class_names.is_empty() {
        let _ = writeln!(s, "classes {}", set.class_names.join(" "));
    }
    if let Some(seed) = set.seed {
        let _ = writeln!(s, "seed {seed}");
    }
    for sample in &set.samples {
        let label = label_text(sample.label);
        match &sample.stream {
            Stream::Path(p) => {
                let _ = writeln!(s, "path {label} {} {}", p.len(), p.dim());
                for (t, row) in p.times().iter().zip(p.points().rows()) {
                    push_values(&mut s, *t, row.iter().copied());
                }
            }
            Stream::Skeleton(sk) => {
                let _ = writeln!(
                    s,
                    "skeleton {label} {} {} {}",
                    sk.len(),
                    sk.joints(),
                    sk.coords()
                );
                let flat = sk.flat_frames();
                for (t, row) in sk.times().iter().zip(flat.rows()) {
                    push_values(&mut s, *t, row.iter().copied());
                }
                if let Some(a) = sk.adjacency() {
                    let _ = writeln!(s, "adjacency {}", a.nrows());
                    for row in a.rows() {
                        let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
                        let _ = writeln!(s, "{}", line.join(" "));
                    }
                }
            }
        }
    }
    s
}

struct Reader<'a> {
    lines: Vec<(usize, &'a str)>,
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(text: &'a str) -> Self {
        let lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
            .collect();
        Reader { lines, pos: 0 }
    }

    fn peek(&self) -> Option<(usize, &'a str)> {
        self.lines.get(self.pos).copied()
    }

    fn next(&mut self) -> Option<(usize, &'a str)> {
        let l = self.peek();
        self.pos += usize::from(l.is_some());
        l
    }

    fn last_line(&self) -> usize {
        self.lines.last().map_or(0, |l| l.0)
    }

    fn numbers(&mut self, count: usize, what: &str) -> Result<(usize, Vec<f64>)> {
        let (line, text) = self.next().ok_or_else(|| {
            Error::parse(
                self.last_line() + 1,
                format!("unexpected end of file in {what}"),
            )
        })?;
        let values = text
            .split_whitespace()
            .map(|tok| {
                tok.parse::<f64>()
                    .map_err(|_| Error::parse(line, format!("bad number {tok:?}")))
            })
            .collect::<Result<Vec<f64>>>()?;
        if values.len() != count {
            return Err(Error::parse(
                line,
                format!("{what}: expected {count} values, found {}", values.len()),
            ));
        }
        Ok((line, values))
    }

    /// `n` rows of a timestamp followed by `width` values.
    fn rows(&mut self, n: usize, width: usize) -> Result<(Vec<f64>, Vec<f64>)> {
        let mut times = Vec::with_capacity(n);
        let mut values = Vec::with_capacity(n * width);
        for _ in 0..n {
            let (line, row) = self.numbers(width + 1, "sample row")?;
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::parse(line, "non-finite value"));
            }
            if let Some(&prev) = times.last() {
                if !(row[0] > prev) {
                    return Err(Error::parse(
                        line,
                        format!("timestamp {} does not increase after {prev}", row[0]),
                    ));
                }
            }
            times.push(row[0]);
            values.extend_from_slice(&row[1..]);
        }
        Ok((times, values))
    }
}

fn header_fields<'a>(
    line: usize,
    text: &'a str,
    keyword: &str,
    count: usize,
) -> Result<Vec<&'a str>> {
    let parts: Vec<&str> = text.split_whitespace().collect();
    if parts.len() != count + 1 {
        return Err(Error::parse(
            line,
            format!("`{keyword}` header needs {count} fields"),
        ));
    }
    Ok(parts[1..].to_vec())
}

fn parse_count(line: usize, tok: &str, what: &str) -> Result<usize> {
    match tok.parse::<usize>() {
        Ok(v) if v > 0 => Ok(v),
        _ => Err(Error::parse(
            line,
            format!("{what} must be a positive integer, got {tok:?}"),
        )),
    }
}

fn parse_label(line: usize, tok: &str) -> Result<Option<usize>> {
    if tok == "-" {
        return Ok(None);
    }
    tok.parse()
        .map(Some)
        .map_err(|_| Error::parse(line, format!("bad label {tok:?}")))
}

pub fn streams_from_text(text: &str) -> Result<LabeledStreamSet> {
    let mut reader = Reader::new(text);
    let mut set = LabeledStreamSet::default();
    while let Some((line, header)) = reader.next() {
        let keyword = header.split_whitespace().next().unwrap_or("");
        match keyword {
            "classes" => {
                set.class_names = header
                    .split_whitespace()
                    .skip(1)
                    .map(str::to_string)
                    .collect();
            }
            "seed" => {
                let f = header_fields(line, header, "seed", 1)?;
                set.seed = Some(f[0].parse().map_err(|_| Error::parse(line, "bad seed"))?);
            }
            "path" => {
                let f = header_fields(line, header, "path", 3)?;
                let label = parse_label(line, f[0])?;
                let n = parse_count(line, f[1], "n")?;
                let d = parse_count(line, f[2], "d")?;
                let (times, values) = reader.rows(n, d)?;
                let points = Array2::from_shape_vec((n, d), values).expect("row count checked");
                let path =
                    TimedPath::new(times, points).map_err(|e| Error::parse(line, e.to_string()))?;
                set.samples.push(LabeledStream {
                    stream: Stream::Path(path),
                    label,
                });
            }
            "skeleton" => {
                let f = header_fields(line, header, "skeleton", 4)?;
                let label = parse_label(line, f[0])?;
                let n = parse_count(line, f[1], "n")?;
                let joints = parse_count(line, f[2], "F")?;
                let coords = parse_count(line, f[3], "D")?;
                let (times, values) = reader.rows(n, joints * coords)?;
                let frames =
                    Array3::from_shape_vec((n, joints, coords), values).expect("row count checked");
                let mut adjacency = None;
                if let Some((aline, next)) = reader.peek() {
                    if next.starts_with("adjacency") {
                        reader.next();
                        let f = header_fields(aline, next, "adjacency", 1)?;
                        let size = parse_count(aline, f[0], "F")?;
                        if size != joints {
                            return Err(Error::parse(
                                aline,
                                format!("adjacency of size {size} for {joints} joints"),
                            ));
                        }
                        let mut a = Vec::with_capacity(size * size);
                        for _ in 0..size {
                            a.extend(reader.numbers(size, "adjacency row")?.1);
                        }
                        adjacency =
                            Some(Array2::from_shape_vec((size, size), a).expect("size checked"));
                    }
                }
                let sk = SkeletonSequence::new(times, frames, adjacency)
                    .map_err(|e| Error::parse(line, e.to_string()))?;
                set.samples.push(LabeledStream {
                    stream: Stream::Skeleton(sk),
                    label,
                });
            }
            other => return Err(Error::parse(line, format!("unknown record type {other:?}"))),
        }
    }
    if !set.class_names.is_empty() {
        let k = set.class_names.len();
        if let Some((i, s)) = set
            .samples
            .iter()
            .enumerate()
            .find(|(_, s)| s.label.is_some_and(|l| l >= k))
        {
            return Err(Error::Config(format!(
                "record {i} has label {} but only {k} classes are declared",
                s.label.unwrap_or(0)
            )));
        }
    }
    Ok(set)
}

pub fn load_streams(path: &Path) -> Result<LabeledStreamSet> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    streams_from_text(&text)
}

pub fn save_streams(path: &Path, set: &LabeledStreamSet) -> Result<()> {
    std::fs::write(path, streams_to_text(set)).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn line_path(n: usize) -> TimedPath {
        let pts = Array2::from_shape_fn(
            (n, 2),
            |(i, c)| if c == 0 { i as f64 } else { (i as f64).sqrt() },
        );
        TimedPath::from_points(pts).unwrap()
    }

    #[test]
    fn empty_count_gives_empty_set() {
        let set = gen_synthetic(&SyntheticSpec::default(), 0, 1).unwrap();
        assert!(set.is_empty());
        assert_eq!(set.class_names.len(), 4);
    }

    #[test]
    fn empty_spec_is_rejected() {
        let spec = SyntheticSpec {
            shapes: vec![],
            ..SyntheticSpec::default()
        };
        assert!(gen_synthetic(&spec, 3, 1).is_err());
    }

    #[test]
    fn generation_is_deterministic() {
        let a = gen_synthetic(&SyntheticSpec::default(), 12, 4).unwrap();
        let b = gen_synthetic(&SyntheticSpec::default(), 12, 4).unwrap();
        assert_eq!(a, b);
        let c = gen_synthetic(&SyntheticSpec::default(), 12, 5).unwrap();
        assert_ne!(a, c);
        for (i, s) in a.samples.iter().enumerate() {
            assert_eq!(s.label, Some(i % 4));
            assert!((20..=120).contains(&s.stream.len()));
        }
    }

    #[test]
    fn circle_orientation_sets_area_sign() {
        let spec = SyntheticSpec {
            shapes: vec![Shape::CircleCw, Shape::CircleCcw],
            noise: 0.0,
            ..SyntheticSpec::default()
        };
        let set = gen_synthetic(&spec, 2, 9).unwrap();
        let basis = LyndonBasis::new(2, 2).unwrap();
        let area = |s: &LabeledStream| {
            let Stream::Path(p) = &s.stream else {
                unreachable!()
            };
            log_signature(p, 2, &basis).unwrap().as_slice()[2]
        };
        assert!(area(&set.samples[0]) < -1.0);
        assert!(area(&set.samples[1]) > 1.0);
    }

    #[test]
    fn drop_counts_and_endpoints() {
        let p = line_path(10);
        assert_eq!(perturb_drop(&p, 0.0, 3).unwrap(), p);
        let q = perturb_drop(&p, 0.5, 3).unwrap();
        assert_eq!(q.len(), 5);
        assert_eq!(q.times()[0], 0.0);
        assert_eq!(q.times()[4], 9.0);
        assert_eq!(q.points().row(4), p.points().row(9));
        assert!(q.times().iter().all(|t| p.times().contains(t)));
        assert!(perturb_drop(&p, 1.0, 3).is_err());
        assert!(perturb_drop(&p, -0.1, 3).is_err());
        assert_eq!(perturb_drop(&p, 0.5, 3).unwrap(), q);
    }

    #[test]
    fn insert_counts_and_invariance() {
        let p = line_path(10);
        assert_eq!(perturb_insert(&p, 0.0, 1).unwrap(), p);
        let basis = LyndonBasis::new(2, 4).unwrap();
        let reference = log_signature(&p, 4, &basis).unwrap();
        for (r, seed) in [(0.3, 1), (0.5, 2), (0.9, 3)] {
            let q = perturb_insert(&p, r, seed).unwrap();
            assert_eq!(q.len(), 10 + (r * 10.0f64).floor() as usize);
            let ls = log_signature(&q, 4, &basis).unwrap();
            for (a, b) in reference.as_slice().iter().zip(ls.as_slice()) {
                assert!((a - b).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn insert_handles_last_frame() {
        let p = line_path(3);
        for seed in 0..20 {
            let q = perturb_insert(&p, 0.99, seed).unwrap();
            assert_eq!(q.len(), 5);
            assert_eq!(q.times()[0], 0.0);
            assert_eq!(q.times()[4], 2.0);
            assert_eq!(q.points().row(4), p.points().row(2));
        }
    }

    #[test]
    fn upsample_examples() {
        let p = TimedPath::new(vec![0.0, 2.0], array![[0.0, 0.0], [2.0, 4.0]]).unwrap();
        assert_eq!(upsample_linear(&p, 1).unwrap(), p);
        let q = upsample_linear(&p, 2).unwrap();
        assert_eq!(q.times(), &[0.0, 1.0, 2.0]);
        assert_eq!(q.points().row(1), array![1.0, 2.0]);
        assert!(upsample_linear(&p, 0).is_err());
        let long = line_path(7);
        assert_eq!(upsample_linear(&long, 4).unwrap().len(), 4 * 6 + 1);
    }

    #[test]
    fn mape_examples() {
        assert_eq!(mape(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert!((mape(&[1.0, 2.0], &[1.1, 1.8]).unwrap() - 0.1).abs() < 1e-12);
        assert!(mape(&[1.0], &[1.0, 2.0]).is_err());
        // reference is the first argument
        assert!((mape(&[2.0], &[1.0]).unwrap() - 0.5).abs() < 1e-15);
        assert!((mape(&[1.0], &[2.0]).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn digit_has_53_points() {
        let p = digit_nine();
        assert_eq!(p.len(), 53);
        assert_eq!(p.dim(), 2);
    }

    #[test]
    fn stream_round_trip() {
        let mut set = gen_synthetic(&SyntheticSpec::default(), 5, 2).unwrap();
        let frames = Array3::from_shape_fn((3, 2, 3), |(t, j, c)| (t * 7 + j * 3 + c) as f64 / 7.0);
        let adj = array![[0.0, 1.0], [1.0, 0.0]];
        set.samples.push(LabeledStream {
            stream: Stream::Skeleton(
                SkeletonSequence::new(vec![0.1, 0.2, 0.35], frames, Some(adj)).unwrap(),
            ),
            label: None,
        });
        let text = streams_to_text(&set);
        assert_eq!(streams_from_text(&text).unwrap(), set);
    }

    #[test]
    fn empty_text_is_empty_set() {
        assert!(streams_from_text("").unwrap().is_empty());
        assert!(streams_from_text("# only a comment\n\n")
            .unwrap()
            .is_empty());
    }

    #[test]
    fn malformed_records_report_lines() {
        let bad_times = "path 0 3 1\n0 0\n1 1\n1 2\n";
        match streams_from_text(bad_times) {
            Err(Error::Parse { line: 4, message }) => {
                assert!(message.contains("does not increase"))
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(
            streams_from_text("path 0 2 2\n0 1 2\n1 2\n"),
            Err(Error::Parse { line: 3, .. })
        ));
        assert!(matches!(
            streams_from_text("bogus\n"),
            Err(Error::Parse { line: 1, .. })
        ));
        assert!(matches!(
            streams_from_text("path 0 3 1\n0 0\n"),
            Err(Error::Parse { .. })
        ));
        assert!(matches!(
            streams_from_text("path x 1 1\n0 0\n"),
            Err(Error::Parse { line: 1, .. })
        ));
    }
}
