//! Property tests for the tensor primitives: randomized-shape gradient
//! checks, softmax normalization, concat/slice inversion.

use gsn_core::tensor::{grad_check, Axis, Matrix, ReduceKind, Tape, Tensor};
use proptest::prelude::*;

const H: f64 = 1e-5;
const TOL: f64 = 1e-5;

fn matrix_strategy(max_dim: usize) -> impl Strategy<Value = Matrix> {
    (1..=max_dim, 1..=max_dim).prop_flat_map(|(r, c)| {
        prop::collection::vec(-2.0..2.0f64, r * c)
            .prop_map(move |data| Matrix::from_vec(r, c, data).unwrap())
    })
}

/// Values quantized to a 0.1 grid plus a small per-index offset: all pairwise
/// gaps stay well above the finite-difference step, so kinked ops (max, relu)
/// are never checked across a tie.
fn spaced_matrix_strategy(max_dim: usize) -> impl Strategy<Value = Matrix> {
    (1..=max_dim, 1..=max_dim).prop_flat_map(|(r, c)| {
        prop::collection::vec(-20i32..20, r * c).prop_map(move |levels| {
            let data: Vec<f64> = levels
                .iter()
                .enumerate()
                .map(|(i, lv)| *lv as f64 * 0.1 + (i + 1) as f64 * 1e-4)
                .collect();
            Matrix::from_vec(r, c, data).unwrap()
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn matmul_gradients_random_shapes(
        (a, b) in (1usize..=16, 1usize..=16, 1usize..=16).prop_flat_map(|(m, k, n)| {
            (
                prop::collection::vec(-2.0..2.0f64, m * k)
                    .prop_map(move |d| Matrix::from_vec(m, k, d).unwrap()),
                prop::collection::vec(-2.0..2.0f64, k * n)
                    .prop_map(move |d| Matrix::from_vec(k, n, d).unwrap()),
            )
        })
    ) {
        let report = grad_check(
            |_t, ls| Ok(ls[0].matmul(&ls[1])?.tanh().sum_all()),
            &[a, b],
            H,
            TOL,
        ).unwrap();
        prop_assert!(report.passed, "max rel err {}", report.max_rel_err);
    }

    #[test]
    fn softmax_gradients_and_normalization(x in matrix_strategy(16)) {
        let weights = Matrix::from_vec(
            x.rows(),
            x.cols(),
            (0..x.len()).map(|i| (i as f64 * 0.37).sin()).collect(),
        ).unwrap();
        let report = grad_check(
            |t, ls| {
                // Weighted sum keeps the check sensitive to off-diagonal
                // Jacobian terms.
                let w = t.leaf(&weights);
                Ok(ls[0].softmax_rows().mul(&w)?.sum_all())
            },
            &[x.clone()],
            H,
            TOL,
        ).unwrap();
        prop_assert!(report.passed, "max rel err {}", report.max_rel_err);

        let tape = Tape::new();
        let y = tape.leaf(&x).softmax_rows().value();
        for r in 0..y.rows() {
            let s: f64 = (0..y.cols()).map(|c| y.get(r, c)).sum();
            prop_assert!((s - 1.0).abs() <= 1e-12, "row {r} sums to {s}");
        }
    }

    #[test]
    fn reduce_gradients_all_modes(x in spaced_matrix_strategy(16)) {
        for axis in [Axis::Rows, Axis::Cols] {
            for kind in [ReduceKind::Max, ReduceKind::Mean] {
                let report = grad_check(
                    |_t, ls| Ok(ls[0].reduce(axis, kind)?.sum_all()),
                    &[x.clone()],
                    H,
                    TOL,
                ).unwrap();
                prop_assert!(
                    report.passed,
                    "{axis:?}/{kind:?} max rel err {}",
                    report.max_rel_err
                );
            }
        }
    }

    #[test]
    fn ewise_max_gradients(
        (a, b) in (1usize..=8, 1usize..=8).prop_flat_map(|(r, c)| {
            let gen = move |salt: u64| {
                prop::collection::vec(-20i32..20, r * c).prop_map(move |levels| {
                    let data: Vec<f64> = levels
                        .iter()
                        .enumerate()
                        .map(|(i, lv)| *lv as f64 * 0.1 + (i as u64 * 7 + salt + 1) as f64 * 1e-4)
                        .collect();
                    Matrix::from_vec(r, c, data).unwrap()
                })
            };
            (gen(0), gen(3))
        })
    ) {
        let report = grad_check(
            |_t, ls| Ok(ls[0].max_ewise(&ls[1])?.sum_all()),
            &[a, b],
            H,
            TOL,
        ).unwrap();
        prop_assert!(report.passed, "max rel err {}", report.max_rel_err);
    }

    #[test]
    fn unary_gradients(x in spaced_matrix_strategy(8)) {
        let report = grad_check(
            |_t, ls| {
                let a = ls[0].tanh();
                let b = ls[0].sigmoid();
                let c = ls[0].softplus();
                let d = ls[0].relu();
                a.add(&b)?.add(&c)?.add(&d)?.sum_all().pipe_ok()
            },
            &[x],
            H,
            TOL,
        ).unwrap();
        prop_assert!(report.passed, "max rel err {}", report.max_rel_err);
    }

    #[test]
    fn concat_slice_mutual_inverses(
        (a, b, c) in (1usize..=6, 1usize..=5, 1usize..=5, 1usize..=5).prop_flat_map(|(m, d1, d2, d3)| {
            let gen = move |d: usize| prop::collection::vec(-3.0..3.0f64, m * d)
                .prop_map(move |v| Matrix::from_vec(m, d, v).unwrap());
            (gen(d1), gen(d2), gen(d3))
        })
    ) {
        let tape = Tape::new();
        let (ta, tb, tc) = (tape.leaf(&a), tape.leaf(&b), tape.leaf(&c));
        let cat = Tensor::concat_cols(&[&ta, &tb, &tc]).unwrap();
        // slice(concat) reproduces each part bit-exactly
        prop_assert_eq!(cat.slice_cols(0, a.cols()).unwrap().value(), a.clone());
        prop_assert_eq!(cat.slice_cols(a.cols(), b.cols()).unwrap().value(), b.clone());
        prop_assert_eq!(cat.slice_cols(a.cols() + b.cols(), c.cols()).unwrap().value(), c.clone());
        // concat(slices) reproduces the concatenation bit-exactly
        let s1 = cat.slice_cols(0, a.cols()).unwrap();
        let s2 = cat.slice_cols(a.cols(), b.cols()).unwrap();
        let s3 = cat.slice_cols(a.cols() + b.cols(), c.cols()).unwrap();
        let rebuilt = Tensor::concat_cols(&[&s1, &s2, &s3]).unwrap();
        prop_assert_eq!(rebuilt.value(), cat.value());
    }

    #[test]
    fn concat_rows_and_transpose_gradients(x in matrix_strategy(8)) {
        let report = grad_check(
            |_t, ls| {
                let t = ls[0].transpose();
                let back = t.transpose();
                let doubled = Tensor::concat_rows(&[&back, &ls[0]])?;
                Ok(doubled.sigmoid().sum_all())
            },
            &[x],
            H,
            TOL,
        ).unwrap();
        prop_assert!(report.passed, "max rel err {}", report.max_rel_err);
    }
}

trait PipeOk: Sized {
    fn pipe_ok(self) -> Result<Self, gsn_core::TensorError>;
}
impl PipeOk for Tensor {
    fn pipe_ok(self) -> Result<Self, gsn_core::TensorError> {
        Ok(self)
    }
}
