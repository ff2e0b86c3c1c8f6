//! Algebraic identities of signatures and log-signatures on random paths.

use ndarray::Array2;
use proptest::prelude::*;

use logsig_core::data::{perturb_insert, upsample_linear};
use logsig_core::neural::{Model, ModelConfig, SkeletonSequence, Variant};
use logsig_core::tensor_algebra::Word;
use logsig_core::{
    log_signature, logsig_dim, logsig_sequence, logsig_sequence_backward, signature, LyndonBasis,
    Reparameterization, SegmentPartition, TimedPath, TruncatedTensor,
};

/// `‖a − b‖∞ / max(‖b‖∞, 1)`.
fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let diff = a
        .iter()
        .zip(b)
        .fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
    let scale = b.iter().fold(1.0f64, |m, y| m.max(y.abs()));
    diff / scale
}

fn build_path(d: usize, times: Vec<f64>, values: Vec<f64>) -> TimedPath {
    let n = times.len();
    let mut t = 0.0;
    let times = times
        .into_iter()
        .map(|gap| {
            t += gap;
            t
        })
        .collect();
    TimedPath::new(times, Array2::from_shape_vec((n, d), values).unwrap()).unwrap()
}

/// `(d, M, path)` with `d ≤ 4`, `M ≤ 4`, up to `max_n` samples.
fn path_case(max_n: usize) -> impl Strategy<Value = (usize, usize, TimedPath)> {
    (1usize..=4, 1usize..=4, 2usize..=max_n).prop_flat_map(|(d, m, n)| {
        (
            Just(d),
            Just(m),
            prop::collection::vec(0.05f64..1.0, n),
            prop::collection::vec(-1.0f64..1.0, n * d),
        )
            .prop_map(move |(d, m, gaps, values)| (d, m, build_path(d, gaps, values)))
    })
}

fn concat(a: &TimedPath, b: &TimedPath) -> TimedPath {
    // b is translated to start where a ends and shifted in time
    let d = a.dim();
    let n = a.len() + b.len() - 1;
    let end = a.points().row(a.len() - 1).to_owned();
    let start = b.points().row(0).to_owned();
    let shift = a.end_time() - b.start_time();
    let mut times = a.times().to_vec();
    times.extend(b.times()[1..].iter().map(|t| t + shift));
    let mut pts = Array2::zeros((n, d));
    for (i, row) in a.points().rows().into_iter().enumerate() {
        pts.row_mut(i).assign(&row);
    }
    for (i, row) in b.points().rows().into_iter().enumerate().skip(1) {
        pts.row_mut(a.len() - 1 + i).assign(&(&row - &start + &end));
    }
    TimedPath::new(times, pts).unwrap()
}

fn lie_tensor(d: usize, m: usize, values: &[f64]) -> TruncatedTensor {
    // exponent of a random group-like element: log of a random path signature
    let n = values.len() / d;
    let pts = Array2::from_shape_vec((n, d), values.to_vec()).unwrap();
    signature(&TimedPath::from_points(pts).unwrap(), m)
        .unwrap()
        .log()
        .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn chen_identity((d, m, a) in path_case(6), seed_b in prop::collection::vec(-1.0f64..1.0, 4 * 4)) {
        let b = TimedPath::from_points(
            Array2::from_shape_vec((4, d), seed_b[..4 * d].to_vec()).unwrap(),
        ).unwrap();
        let joined = signature(&concat(&a, &b), m).unwrap();
        let product = signature(&a, m).unwrap().mul(&signature(&b, m).unwrap()).unwrap();
        prop_assert!(rel_err(joined.as_slice(), product.as_slice()) <= 1e-12);
    }

    #[test]
    fn exp_log_round_trip((d, m, p) in path_case(6)) {
        let sig = signature(&p, m).unwrap();
        let back = sig.log().unwrap().exp().unwrap();
        prop_assert!(rel_err(back.as_slice(), sig.as_slice()) <= 1e-12);
        let l = lie_tensor(d, m, p.points().as_slice().unwrap());
        let again = l.exp().unwrap().log().unwrap();
        prop_assert!(rel_err(again.as_slice(), l.as_slice()) <= 1e-12);
    }

    #[test]
    fn shuffle_identity((d, m, p) in path_case(6), u_seed in 0usize..10_000, v_seed in 0usize..10_000) {
        prop_assume!(m >= 2);
        let sig = signature(&p, m).unwrap();
        let lu = 1 + u_seed % (m - 1);
        let lv = 1 + v_seed % (m - lu);
        let u = Word::from_index(u_seed % d.pow(lu as u32), lu, d);
        let v = Word::from_index(v_seed % d.pow(lv as u32), lv, d);
        let lhs = sig.coefficient(&u) * sig.coefficient(&v);
        let rhs = u.shuffle(&v, m).unwrap().pair(&sig);
        prop_assert!((lhs - rhs).abs() <= 1e-10 * lhs.abs().max(1.0));
    }

    #[test]
    fn log_signature_is_a_lie_element((d, m, p) in path_case(6)) {
        let basis = LyndonBasis::new(d, m).unwrap();
        let coords = log_signature(&p, m, &basis).unwrap();
        prop_assert_eq!(coords.as_slice().len(), logsig_dim(d, m));
        let expanded = basis.expand(&coords).unwrap();
        let direct = signature(&p, m).unwrap().log().unwrap();
        prop_assert!(rel_err(expanded.as_slice(), direct.as_slice()) <= 1e-12);
    }

    #[test]
    fn retiming_invariance((d, m, p) in path_case(8), stretch in 0.1f64..10.0, bend in 0.0f64..0.9) {
        let basis = LyndonBasis::new(d, m).unwrap();
        let reference = log_signature(&p, m, &basis).unwrap();
        // monotone map t ↦ stretch·(t + bend·sin t)
        let times: Vec<f64> = p.times().iter().map(|t| stretch * (t + bend * t.sin())).collect();
        let q = p.reparameterize(&Reparameterization::Retime(times)).unwrap();
        let moved = log_signature(&q, m, &basis).unwrap();
        prop_assert!(rel_err(moved.as_slice(), reference.as_slice()) <= 1e-12);
    }

    #[test]
    fn refinement_invariance((d, m, p) in path_case(8), k in 1usize..6, r in 0.0f64..0.95, seed in any::<u64>()) {
        let basis = LyndonBasis::new(d, m).unwrap();
        let reference = log_signature(&p, m, &basis).unwrap();
        let up = upsample_linear(&p, k).unwrap();
        prop_assert_eq!(up.len(), k * (p.len() - 1) + 1);
        prop_assert!(rel_err(log_signature(&up, m, &basis).unwrap().as_slice(), reference.as_slice()) <= 1e-12);
        let ins = perturb_insert(&p, r, seed).unwrap();
        prop_assert!(rel_err(log_signature(&ins, m, &basis).unwrap().as_slice(), reference.as_slice()) <= 1e-12);
    }

    #[test]
    fn layer_matches_finite_differences((d, m, p) in path_case(6), segments in 1usize..=4, up_seed in prop::collection::vec(-1.0f64..1.0, 4 * 100)) {
        let basis = LyndonBasis::new(d, m).unwrap();
        let partition = SegmentPartition::for_path(&p, segments).unwrap();
        let upstream = Array2::from_shape_vec((segments, basis.len()), up_seed[..segments * basis.len()].to_vec()).unwrap();
        let analytic = logsig_sequence_backward(&p, &partition, m, &basis, upstream.view()).unwrap();
        let h = 1e-6;
        let mut fd = Array2::zeros(analytic.dim());
        for i in 0..p.len() {
            for c in 0..d {
                let eval = |delta: f64| {
                    let (times, mut pts) = p.clone().into_parts();
                    pts[[i, c]] += delta;
                    let q = TimedPath::new(times, pts).unwrap();
                    (&logsig_sequence(&q, &partition, m, &basis).unwrap().values() * &upstream).sum()
                };
                fd[[i, c]] = (eval(h) - eval(-h)) / (2.0 * h);
            }
        }
        let scale = analytic.iter().fold(1e-12f64, |a, v| a.max(v.abs()));
        let err = fd.iter().zip(analytic.iter()).fold(0.0f64, |a, (x, y)| a.max((x - y).abs()));
        prop_assert!(err / scale <= 1e-5, "err {} scale {}", err, scale);
    }

    #[test]
    fn whole_interval_layer_is_log_signature((d, m, p) in path_case(8)) {
        let basis = LyndonBasis::new(d, m).unwrap();
        let partition = SegmentPartition::for_path(&p, 1).unwrap();
        let seq = logsig_sequence(&p, &partition, m, &basis).unwrap();
        let whole = log_signature(&p, m, &basis).unwrap();
        prop_assert!(rel_err(seq.values().as_slice().unwrap(), whole.as_slice()) <= 1e-12);
    }

    #[test]
    fn segments_compose_by_bch((d, m, p) in path_case(8), segments in 1usize..=4) {
        // exp of the rows multiplied in order gives back the whole signature
        let basis = LyndonBasis::new(d, m).unwrap();
        let partition = SegmentPartition::for_path(&p, segments).unwrap();
        let seq = logsig_sequence(&p, &partition, m, &basis).unwrap();
        let mut total = TruncatedTensor::unit(d, m);
        for row in seq.values().rows() {
            let coords = logsig_core::LieCoordinates::new(d, m, row.to_vec()).unwrap();
            total = total.mul(&basis.expand(&coords).unwrap().exp().unwrap()).unwrap();
        }
        let sig = signature(&p, m).unwrap();
        prop_assert!(rel_err(total.as_slice(), sig.as_slice()) <= 1e-10);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn rnn_input_shape_is_independent_of_length(n in 2usize..300, segments in 1usize..6, variant in 0usize..2) {
        let config = ModelConfig {
            variant: if variant == 0 { Variant::ElLogsigRnn } else { Variant::GcnLogsigRnn },
            segments,
            joints: 2,
            coords: 3,
            classes: 3,
            ..ModelConfig::default()
        };
        let model = Model::new(config.clone(), None, 1).unwrap();
        let frames = ndarray::Array3::from_shape_fn((n, 2, 3), |(t, j, c)| ((t + j + c) as f64 * 0.37).sin());
        let x = SkeletonSequence::new((0..n).map(|t| t as f64).collect(), frames, None).unwrap();
        let width = if variant == 0 { config.embed_dim } else { config.gcn_dim } + 1;
        for input in model.rnn_inputs(&x).unwrap() {
            prop_assert_eq!(input.dim(), (segments, logsig_dim(width, config.degree) + width));
        }
    }
}
